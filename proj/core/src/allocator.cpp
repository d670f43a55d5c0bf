#include "acq/allocator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <queue>
#include <random>
#include <sstream>
#include <thread>

#include "acq/binning.hpp"
#include "acq/error.hpp"
#include "acq/io.hpp"

namespace acq {

// ---------------------------------------------------------------------------
// Instance

void McKpInstance::AddItem(ItemKey key, std::vector<Candidate> candidates) {
  if (candidates.empty()) Fail(ErrorKind::kInvalidArgument, "item has no candidates");
  std::sort(candidates.begin(), candidates.end(),
            [](const Candidate& a, const Candidate& b) { return a.quota < b.quota; });
  for (std::size_t k = 0; k < candidates.size(); ++k) {
    const Candidate& c = candidates[k];
    if (c.quota < kMinQuota || c.quota > kMaxQuota) {
      Fail(ErrorKind::kInvalidArgument, "quota " + std::to_string(c.quota) + " outside [1, 200]");
    }
    if (!std::isfinite(c.reward)) Fail(ErrorKind::kInvalidArgument, "reward must be finite");
    if (k > 0 && candidates[k - 1].quota == c.quota) {
      Fail(ErrorKind::kInvalidArgument, "duplicate quota within an item");
    }
  }
  keys_.push_back(key);
  candidates_.insert(candidates_.end(), candidates.begin(), candidates.end());
  offsets_.push_back(candidates_.size());
}

void McKpInstance::Reserve(std::size_t items, std::size_t candidates) {
  keys_.reserve(items);
  offsets_.reserve(items + 1);
  candidates_.reserve(candidates);
}

std::int64_t McKpInstance::MinQuotaSum() const {
  std::int64_t total = 0;
  for (std::size_t i = 0; i < item_count(); ++i) total += candidates(i).front().quota;
  return total;
}

std::int64_t McKpInstance::MaxQuotaSum() const {
  std::int64_t total = 0;
  for (std::size_t i = 0; i < item_count(); ++i) total += candidates(i).back().quota;
  return total;
}

McKpInstance McKpInstance::Subset(std::span<const std::size_t> items,
                                  std::int64_t capacity) const {
  McKpInstance out(capacity);
  std::size_t total = 0;
  for (std::size_t i : items) total += candidates(i).size();
  out.Reserve(items.size(), total);
  for (std::size_t i : items) {
    auto c = candidates(i);
    out.keys_.push_back(keys_[i]);
    out.candidates_.insert(out.candidates_.end(), c.begin(), c.end());
    out.offsets_.push_back(out.candidates_.size());
  }
  return out;
}

McKpInstance McKpInstance::Parse(std::string_view text) {
  McKpInstance instance;
  bool have_capacity = false;
  std::map<std::pair<std::uint64_t, std::uint64_t>, std::size_t> slot;
  std::vector<ItemKey> order;
  std::vector<std::vector<Candidate>> grouped;
  for (std::string_view line : io::SplitLines(text)) {
    const auto fields = io::SplitFields(line);
    if (fields.empty() || fields[0].front() == '#') continue;
    if (fields[0] == "capacity") {
      if (fields.size() != 2) Fail(ErrorKind::kSchemaMismatch, "instance: bad capacity line");
      instance.capacity_ = io::ParseInt(fields[1]);
      have_capacity = true;
      continue;
    }
    if (fields[0] == "account_id") continue;  // column header
    if (fields.size() != 4) {
      Fail(ErrorKind::kSchemaMismatch, "instance: candidate rows need 4 fields");
    }
    const ItemKey key{static_cast<std::uint64_t>(io::ParseInt(fields[0])),
                      static_cast<std::uint64_t>(io::ParseInt(fields[1]))};
    const Candidate candidate{static_cast<int>(io::ParseInt(fields[2])),
                              io::ParseDouble(fields[3])};
    auto [it, inserted] = slot.try_emplace({key.account_id, key.photo_id}, order.size());
    if (inserted) {
      order.push_back(key);
      grouped.emplace_back();
    }
    grouped[it->second].push_back(candidate);
  }
  if (!have_capacity) Fail(ErrorKind::kSchemaMismatch, "instance: missing capacity header");
  for (std::size_t i = 0; i < order.size(); ++i) instance.AddItem(order[i], std::move(grouped[i]));
  return instance;
}

std::string McKpInstance::Serialize() const {
  std::ostringstream out;
  out << "# acq-instance v1\n";
  out << "capacity " << capacity_ << '\n';
  out << "account_id photo_id quota reward\n";
  for (std::size_t i = 0; i < item_count(); ++i) {
    for (const Candidate& c : candidates(i)) {
      out << keys_[i].account_id << ' ' << keys_[i].photo_id << ' ' << c.quota << ' '
          << io::FormatDouble(c.reward) << '\n';
    }
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// Rewards and per-item decisions

double AssembleReward(double pvalue, double explore_score, const RewardSpec& spec) {
  return pvalue + spec.explore_weight * explore_score;
}

double UcbExploreScore(double mean_reward, double total_plays, double item_plays) {
  Require(item_plays >= 0.0 && total_plays >= item_plays, "ucb: need total >= item >= 0 plays");
  const double total = std::max(total_plays, std::exp(1.0));
  const double plays = std::max(item_plays, 1.0);
  return mean_reward + std::sqrt(2.0 * std::log(total) / plays);
}

std::size_t DecideItem(std::span<const Candidate> candidates, double lambda) {
  std::size_t best = 0;
  double best_value = candidates[0].reward - lambda * candidates[0].quota;
  for (std::size_t k = 1; k < candidates.size(); ++k) {
    const double value = candidates[k].reward - lambda * candidates[k].quota;
    if (value > best_value) {
      best_value = value;
      best = k;
    }
  }
  return best;
}

namespace {

// Runs body(begin, end, partial) over contiguous item ranges and folds the
// partials in range order.
template <class Acc, class Body>
Acc ParallelReduce(std::size_t n, ParallelOptions parallel, Acc init, Body body) {
  const std::size_t threads =
      static_cast<std::size_t>(std::max(1, std::min<int>(parallel.threads, 64)));
  if (threads == 1 || n < 4096) {
    Acc acc = init;
    body(std::size_t{0}, n, acc);
    return acc;
  }
  std::vector<Acc> partial(threads, init);
  std::vector<std::thread> workers;
  const std::size_t chunk = (n + threads - 1) / threads;
  for (std::size_t t = 0; t < threads; ++t) {
    const std::size_t begin = std::min(n, t * chunk);
    const std::size_t end = std::min(n, begin + chunk);
    workers.emplace_back([&, t, begin, end] { body(begin, end, partial[t]); });
  }
  for (auto& w : workers) w.join();
  Acc acc = init;
  for (const Acc& p : partial) acc += p;
  return acc;
}

}  // namespace

std::int64_t GOfLambda(const McKpInstance& instance, double lambda, ParallelOptions parallel) {
  const std::int64_t used = ParallelReduce<std::int64_t>(
      instance.item_count(), parallel, 0,
      [&](std::size_t begin, std::size_t end, std::int64_t& acc) {
        for (std::size_t i = begin; i < end; ++i) {
          auto c = instance.candidates(i);
          acc += c[DecideItem(c, lambda)].quota;
        }
      });
  return used - instance.capacity();
}

double DualObjective(const McKpInstance& instance, double lambda, ParallelOptions parallel) {
  const double sum = ParallelReduce<double>(
      instance.item_count(), parallel, 0.0,
      [&](std::size_t begin, std::size_t end, double& acc) {
        for (std::size_t i = begin; i < end; ++i) {
          auto c = instance.candidates(i);
          const Candidate& best = c[DecideItem(c, lambda)];
          acc += best.reward - lambda * best.quota;
        }
      });
  return sum + lambda * static_cast<double>(instance.capacity());
}

// ---------------------------------------------------------------------------
// Bisection on the dual price

namespace {

void CheckFeasible(const McKpInstance& instance) {
  if (instance.item_count() == 0) Fail(ErrorKind::kInvalidArgument, "instance has no items");
  const std::int64_t shortfall = instance.MinQuotaSum() - instance.capacity();
  if (shortfall > 0) {
    Fail(ErrorKind::kInfeasible, "smallest quotas exceed capacity by " +
                                     std::to_string(shortfall) + " creatives");
  }
}

}  // namespace

double BisectLambda(const McKpInstance& instance, const BisectOptions& options) {
  Require(options.tolerance > 0.0, "bisect: tolerance must be positive");
  CheckFeasible(instance);
  const auto g = [&](double lambda) { return GOfLambda(instance, lambda, options.parallel); };
  if (g(0.0) <= 0) return 0.0;

  double hi = 0.0;
  for (std::size_t i = 0; i < instance.item_count(); ++i) {
    for (const Candidate& c : instance.candidates(i)) hi = std::max(hi, c.reward / c.quota);
  }
  if (!(hi > 0.0)) hi = 1.0;
  // Ties at the max-ratio price can still favor a larger quota; widen until
  // the smallest quotas win everywhere.
  int iterations = 0;
  while (g(hi) > 0) {
    if (++iterations > options.max_iterations) {
      Fail(ErrorKind::kNumerical, "bisect: could not bracket the dual price");
    }
    hi *= 2.0;
  }
  double lo = 0.0;
  iterations = 0;
  while (hi - lo > options.tolerance) {
    if (++iterations > options.max_iterations) {
      Fail(ErrorKind::kNumerical, "bisect: iteration budget exhausted");
    }
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;  // interval at floating-point resolution
    const std::int64_t value = g(mid);
    if (value == 0) return mid;
    if (value > 0) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return hi;
}

// ---------------------------------------------------------------------------
// Repair and upgrade passes

namespace {

constexpr int kExchangeRounds = 256;
constexpr std::size_t kCoreItems = 32;
constexpr double kCoreCells = 1 << 22;

struct Move {
  double ratio;
  std::size_t item;
  std::size_t from;
  std::size_t to;
};

// Cheapest downgrade: minimal reward loss per freed creative.
bool BestDowngrade(std::span<const Candidate> c, std::size_t current, std::size_t item, Move& out) {
  bool found = false;
  for (std::size_t j = 0; j < current; ++j) {
    const double ratio =
        (c[current].reward - c[j].reward) / static_cast<double>(c[current].quota - c[j].quota);
    if (!found || ratio < out.ratio) {
      out = {ratio, item, current, j};
      found = true;
    }
  }
  return found;
}

// Best upgrade that fits: maximal positive gain per added creative.
bool BestUpgrade(std::span<const Candidate> c, std::size_t current, std::size_t item,
                 std::int64_t remaining, Move& out) {
  bool found = false;
  for (std::size_t j = current + 1; j < c.size(); ++j) {
    const std::int64_t added = c[j].quota - c[current].quota;
    if (added > remaining) break;
    const double gain = c[j].reward - c[current].reward;
    if (!(gain > 0.0)) continue;
    const double ratio = gain / static_cast<double>(added);
    if (!found || ratio > out.ratio) {
      out = {ratio, item, current, j};
      found = true;
    }
  }
  return found;
}

void RepairAndUpgrade(const McKpInstance& instance, AllocationPlan& plan) {
  const std::int64_t capacity = instance.capacity();
  if (plan.used_capacity > capacity) {
    plan.repair_applied = true;
    auto worse = [](const Move& a, const Move& b) {
      return a.ratio != b.ratio ? a.ratio > b.ratio : a.item > b.item;
    };
    std::priority_queue<Move, std::vector<Move>, decltype(worse)> heap(worse);
    Move move;
    for (std::size_t i = 0; i < instance.item_count(); ++i) {
      if (BestDowngrade(instance.candidates(i), plan.choices[i], i, move)) heap.push(move);
    }
    while (plan.used_capacity > capacity && !heap.empty()) {
      const Move top = heap.top();
      heap.pop();
      if (plan.choices[top.item] != top.from) continue;
      auto c = instance.candidates(top.item);
      plan.used_capacity -= c[top.from].quota - c[top.to].quota;
      plan.choices[top.item] = top.to;
      if (BestDowngrade(c, top.to, top.item, move)) heap.push(move);
    }
  }

  std::int64_t remaining = capacity - plan.used_capacity;
  if (remaining > 0) {
    auto lesser = [](const Move& a, const Move& b) {
      return a.ratio != b.ratio ? a.ratio < b.ratio : a.item > b.item;
    };
    std::priority_queue<Move, std::vector<Move>, decltype(lesser)> heap(lesser);
    Move move;
    for (std::size_t i = 0; i < instance.item_count(); ++i) {
      if (BestUpgrade(instance.candidates(i), plan.choices[i], i, remaining, move)) heap.push(move);
    }
    while (remaining > 0 && !heap.empty()) {
      const Move top = heap.top();
      heap.pop();
      if (plan.choices[top.item] != top.from) continue;
      auto c = instance.candidates(top.item);
      // Remaining capacity only shrinks, so a stale entry can only overstate
      // its ratio; re-evaluate and requeue.
      if (!BestUpgrade(c, top.from, top.item, remaining, move)) continue;
      if (move.to != top.to || move.ratio != top.ratio) {
        heap.push(move);
        continue;
      }
      remaining -= c[top.to].quota - c[top.from].quota;
      plan.choices[top.item] = top.to;
      if (BestUpgrade(c, top.to, top.item, remaining, move)) heap.push(move);
    }
    plan.used_capacity = capacity - remaining;
  }
}

// Two cheapest downgrades on distinct items, per freed-creative threshold.
struct CheapestPair {
  struct Entry {
    double loss = std::numeric_limits<double>::infinity();
    std::size_t item = 0;
    std::size_t to = 0;
  };
  Entry first;
  Entry second;

  void Offer(const Entry& e) {
    if (e.item == first.item && first.loss < std::numeric_limits<double>::infinity()) {
      if (e.loss < first.loss) first = e;
      return;
    }
    if (e.loss < first.loss) {
      second = first;
      first = e;
    } else if (e.loss < second.loss && e.item != first.item) {
      second = e;
    }
  }
  const Entry& Excluding(std::size_t item) const { return first.item == item ? second : first; }
};

// Pairwise exchange: upgrade one item and, if the slack is not enough,
// downgrade one other item. The best improving move is applied each round.
void ExchangePass(const McKpInstance& instance, AllocationPlan& plan, int max_rounds) {
  const std::size_t n = instance.item_count();
  if (n == 0) return;
  int span = 1;
  for (std::size_t i = 0; i < n; ++i) {
    auto c = instance.candidates(i);
    span = std::max(span, c.back().quota - c.front().quota);
  }
  std::vector<CheapestPair> cheapest(static_cast<std::size_t>(span) + 1);
  for (int round = 0; round < max_rounds; ++round) {
    const std::int64_t slack = plan.capacity - plan.used_capacity;
    std::fill(cheapest.begin(), cheapest.end(), CheapestPair{});
    for (std::size_t j = 0; j < n; ++j) {
      auto c = instance.candidates(j);
      const std::size_t cur = plan.choices[j];
      for (std::size_t k = 0; k < cur; ++k) {
        const int freed = c[cur].quota - c[k].quota;
        cheapest[freed].Offer({c[cur].reward - c[k].reward, j, k});
      }
    }
    for (int r = span - 1; r >= 1; --r) {
      cheapest[r].Offer(cheapest[r + 1].first);
      cheapest[r].Offer(cheapest[r + 1].second);
    }

    double best_gain = 1e-12;
    std::size_t up_item = n;
    std::size_t up_to = 0;
    CheapestPair::Entry down;
    bool paired = false;
    for (std::size_t i = 0; i < n; ++i) {
      auto c = instance.candidates(i);
      const std::size_t cur = plan.choices[i];
      for (std::size_t a = 0; a < c.size(); ++a) {
        const double gain = c[a].reward - c[cur].reward;
        if (!(gain > best_gain)) continue;
        const std::int64_t need = c[a].quota - c[cur].quota - slack;
        if (need <= 0) {
          best_gain = gain;
          up_item = i;
          up_to = a;
          paired = false;
          continue;
        }
        if (need > span) continue;
        const CheapestPair::Entry& e = cheapest[need].Excluding(i);
        if (gain - e.loss > best_gain) {
          best_gain = gain - e.loss;
          up_item = i;
          up_to = a;
          down = e;
          paired = true;
        }
      }
    }
    if (up_item == n) return;
    auto up = instance.candidates(up_item);
    plan.used_capacity += up[up_to].quota - up[plan.choices[up_item]].quota;
    plan.choices[up_item] = up_to;
    if (paired) {
      auto dn = instance.candidates(down.item);
      plan.used_capacity -= dn[plan.choices[down.item]].quota - dn[down.to].quota;
      plan.choices[down.item] = down.to;
    }
  }
}

// Re-solves exactly the items whose choice at the price is least settled
// (smallest score margin to their runner-up), with every other item fixed.
void CorePass(const McKpInstance& instance, double lambda, AllocationPlan& plan) {
  const std::size_t n = instance.item_count();
  std::vector<std::pair<double, std::size_t>> margins;
  for (std::size_t i = 0; i < n; ++i) {
    auto c = instance.candidates(i);
    if (c.size() < 2) continue;
    const std::size_t cur = plan.choices[i];
    const double score = c[cur].reward - lambda * c[cur].quota;
    double margin = std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < c.size(); ++a) {
      if (a != cur) margin = std::min(margin, std::abs(score - (c[a].reward - lambda * c[a].quota)));
    }
    margins.push_back({margin, i});
  }
  if (margins.empty()) return;
  const std::size_t m = std::min(margins.size(), kCoreItems);
  std::partial_sort(margins.begin(), margins.begin() + static_cast<std::ptrdiff_t>(m), margins.end());

  std::int64_t floor_use = 0;
  std::int64_t spread = 0;
  std::int64_t core_use = 0;
  for (std::size_t k = 0; k < m; ++k) {
    auto c = instance.candidates(margins[k].second);
    floor_use += c.front().quota;
    spread += c.back().quota - c.front().quota;
    core_use += c[plan.choices[margins[k].second]].quota;
  }
  const std::int64_t budget = plan.capacity - (plan.used_capacity - core_use) - floor_use;
  if (budget < 0 || static_cast<double>(std::min(budget, spread)) * m > kCoreCells) return;
  const auto width = static_cast<std::size_t>(std::min(budget, spread)) + 1;

  // best[b]: max core reward using exactly b creatives above the floor.
  const double none = -std::numeric_limits<double>::infinity();
  std::vector<double> best(width, none);
  std::vector<double> next(width);
  std::vector<std::uint32_t> pick(m * width);
  best[0] = 0.0;
  for (std::size_t k = 0; k < m; ++k) {
    auto c = instance.candidates(margins[k].second);
    std::fill(next.begin(), next.end(), none);
    for (std::size_t b = 0; b < width; ++b) {
      if (best[b] == none) continue;
      for (std::size_t a = 0; a < c.size(); ++a) {
        const std::size_t to = b + static_cast<std::size_t>(c[a].quota - c.front().quota);
        if (to >= width) break;
        if (best[b] + c[a].reward > next[to]) {
          next[to] = best[b] + c[a].reward;
          pick[k * width + to] = static_cast<std::uint32_t>(a);
        }
      }
    }
    best.swap(next);
  }
  std::size_t at = static_cast<std::size_t>(std::max_element(best.begin(), best.end()) - best.begin());
  for (std::size_t k = m; k-- > 0;) {
    const std::size_t item = margins[k].second;
    auto c = instance.candidates(item);
    const std::size_t a = pick[k * width + at];
    plan.used_capacity += c[a].quota - c[plan.choices[item]].quota;
    plan.choices[item] = a;
    at -= static_cast<std::size_t>(c[a].quota - c.front().quota);
  }
}

void Finish(const McKpInstance& instance, double lambda, AllocationPlan& plan) {
  RepairAndUpgrade(instance, plan);
  CorePass(instance, lambda, plan);
  ExchangePass(instance, plan, kExchangeRounds);
  plan.objective = 0.0;
  for (std::size_t i = 0; i < instance.item_count(); ++i) {
    plan.objective += instance.candidates(i)[plan.choices[i]].reward;
  }
}

}  // namespace

AllocationPlan PlanAtLambda(const McKpInstance& instance, double lambda,
                            ParallelOptions parallel) {
  CheckFeasible(instance);
  AllocationPlan plan;
  plan.dual_price = lambda;
  plan.capacity = instance.capacity();
  plan.choices.resize(instance.item_count());
  for (std::size_t i = 0; i < instance.item_count(); ++i) {
    auto c = instance.candidates(i);
    plan.choices[i] = DecideItem(c, lambda);
    plan.used_capacity += c[plan.choices[i]].quota;
  }
  plan.dual_bound = DualObjective(instance, lambda, parallel);
  Finish(instance, lambda, plan);
  return plan;
}

AllocationPlan Solve(const McKpInstance& instance, const BisectOptions& options) {
  const double lambda = BisectLambda(instance, options);
  return PlanAtLambda(instance, lambda, options.parallel);
}

double EstimateLambdaBySampleSize(const McKpInstance& instance, std::size_t sample_items,
                                  double tolerance, std::uint64_t seed) {
  const std::size_t n = instance.item_count();
  sample_items = std::min(sample_items, n);
  if (sample_items == 0) Fail(ErrorKind::kInvalidArgument, "sampling: empty sample");
  std::vector<std::size_t> index(n);
  for (std::size_t i = 0; i < n; ++i) index[i] = i;
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < sample_items; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(index[i], index[pick(rng)]);
  }
  index.resize(sample_items);
  std::sort(index.begin(), index.end());
  const auto scaled = static_cast<std::int64_t>(
      std::floor(static_cast<double>(instance.capacity()) * static_cast<double>(sample_items) /
                 static_cast<double>(n)));
  const McKpInstance sample = instance.Subset(index, sample_items == n ? instance.capacity() : scaled);
  BisectOptions options;
  options.tolerance = tolerance;
  return BisectLambda(sample, options);
}

double EstimateLambdaBySampling(const McKpInstance& instance, double sample_fraction,
                                double tolerance, std::uint64_t seed) {
  Require(sample_fraction > 0.0 && sample_fraction <= 1.0, "sampling: fraction must be in (0,1]");
  const auto items = static_cast<std::size_t>(
      std::llround(sample_fraction * static_cast<double>(instance.item_count())));
  return EstimateLambdaBySampleSize(instance, items, tolerance, seed);
}

AllocationPlan SolveBySampling(const McKpInstance& instance, std::size_t sample_items,
                               const BisectOptions& options, std::uint64_t seed) {
  const double lambda = EstimateLambdaBySampleSize(instance, sample_items, options.tolerance, seed);
  return PlanAtLambda(instance, lambda, options.parallel);
}

std::string AllocationPlan::Serialize(const McKpInstance& instance) const {
  std::ostringstream out;
  out << "# acq-plan v1\n";
  out << "account_id photo_id chosen_quota\n";
  for (std::size_t i = 0; i < instance.item_count(); ++i) {
    const ItemKey& key = instance.key(i);
    out << key.account_id << ' ' << key.photo_id << ' '
        << instance.candidates(i)[choices[i]].quota << '\n';
  }
  out << "# summary lambda " << io::FormatDouble(dual_price) << " objective "
      << io::FormatDouble(objective) << " used_capacity " << used_capacity << " capacity "
      << capacity << " dual_bound " << io::FormatDouble(dual_bound) << " repair_applied "
      << (repair_applied ? 1 : 0) << '\n';
  return out.str();
}

}  // namespace acq
