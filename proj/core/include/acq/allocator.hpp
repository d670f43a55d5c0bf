#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace acq {

struct Candidate {
  int quota = 1;
  double reward = 0.0;
};

struct ItemKey {
  std::uint64_t account_id = 0;
  std::uint64_t photo_id = 0;

  friend bool operator==(const ItemKey&, const ItemKey&) = default;
};

// Multiple-choice knapsack: pick exactly one candidate quota per
// (account, photo) item so that the total quota fits the creative budget.
// Candidates are stored contiguously per item, ascending by quota.
class McKpInstance {
 public:
  McKpInstance() = default;
  explicit McKpInstance(std::int64_t capacity) : capacity_(capacity) {}

  // Sorts the candidates by quota; rejects empty lists, duplicate quotas,
  // quotas outside [1, 200] and non-finite rewards.
  void AddItem(ItemKey key, std::vector<Candidate> candidates);
  void Reserve(std::size_t items, std::size_t candidates);

  std::int64_t capacity() const { return capacity_; }
  void set_capacity(std::int64_t capacity) { capacity_ = capacity; }

  std::size_t item_count() const { return keys_.size(); }
  std::size_t candidate_count() const { return candidates_.size(); }
  const ItemKey& key(std::size_t item) const { return keys_[item]; }
  std::span<const Candidate> candidates(std::size_t item) const {
    return {candidates_.data() + offsets_[item], offsets_[item + 1] - offsets_[item]};
  }

  std::int64_t MinQuotaSum() const;
  std::int64_t MaxQuotaSum() const;

  // Items in the given order, with a new capacity.
  McKpInstance Subset(std::span<const std::size_t> items, std::int64_t capacity) const;

  static McKpInstance Parse(std::string_view text);
  std::string Serialize() const;

 private:
  std::vector<ItemKey> keys_;
  std::vector<std::size_t> offsets_{0};
  std::vector<Candidate> candidates_;
  std::int64_t capacity_ = 0;
};

struct RewardSpec {
  double explore_weight = 0.0;
};

double AssembleReward(double pvalue, double explore_score, const RewardSpec& spec);

// UCB1-style optimism: mean + sqrt(2 ln(max(total, e)) / max(plays, 1)).
double UcbExploreScore(double mean_reward, double total_plays, double item_plays);

// argmax_k (reward_k - lambda * quota_k); ties go to the smallest quota.
std::size_t DecideItem(std::span<const Candidate> candidates, double lambda);

struct ParallelOptions {
  int threads = 1;
};

// Total chosen quota at lambda minus the capacity.
std::int64_t GOfLambda(const McKpInstance& instance, double lambda, ParallelOptions parallel = {});

// Lagrangian dual value: sum_i max_k (r - lambda c) + lambda C.
double DualObjective(const McKpInstance& instance, double lambda, ParallelOptions parallel = {});

struct BisectOptions {
  double tolerance = 1e-9;
  int max_iterations = 200;
  ParallelOptions parallel;
};

double BisectLambda(const McKpInstance& instance, const BisectOptions& options = {});

struct AllocationPlan {
  std::vector<std::size_t> choices;  // candidate index per item
  double dual_price = 0.0;
  double dual_bound = 0.0;  // DualObjective at dual_price
  double objective = 0.0;
  std::int64_t used_capacity = 0;
  std::int64_t capacity = 0;
  bool repair_applied = false;

  // Rule-export text: one "account photo quota" row per item plus a summary.
  std::string Serialize(const McKpInstance& instance) const;
};

// Decisions at a fixed price, then a downgrade pass while over capacity
// (smallest reward loss per freed creative first) and a greedy upgrade pass
// while capacity remains (largest gain per added creative that still fits),
// then up to 256 rounds of pairwise exchanges (one upgrade, at most one
// downgrade elsewhere) while they raise the objective.
AllocationPlan PlanAtLambda(const McKpInstance& instance, double lambda,
                            ParallelOptions parallel = {});

// Throws kInfeasible when even the smallest quotas exceed the capacity.
AllocationPlan Solve(const McKpInstance& instance, const BisectOptions& options = {});

// Bisects on a uniform item sample with proportionally scaled capacity.
double EstimateLambdaBySampling(const McKpInstance& instance, double sample_fraction,
                                double tolerance, std::uint64_t seed);
double EstimateLambdaBySampleSize(const McKpInstance& instance, std::size_t sample_items,
                                  double tolerance, std::uint64_t seed);

// Price from a fixed-size sample, decisions on the full instance.
AllocationPlan SolveBySampling(const McKpInstance& instance, std::size_t sample_items,
                               const BisectOptions& options, std::uint64_t seed);

}  // namespace acq
