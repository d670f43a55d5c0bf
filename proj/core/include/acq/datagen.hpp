#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "acq/allocator.hpp"
#include "acq/binning.hpp"
#include "acq/net_math.hpp"

namespace acq {

// Synthetic photo population and cost records.
//
// Each photo has a latent saturation level A (log-normal), a curve rate tau
// and a spend propensity. Its latent cost curve is A * (1 - exp(-n / tau)),
// monotone with shrinking marginals in the creative count n. A record is zero
// with probability 1 - propensity, otherwise the curve at the served creative
// count times truncated multiplicative noise, capped at cost_cap.
//
// Default tolerance bands (100k rows): zero fraction 0.98 +- 0.005, median 0,
// overall mean within [0.4, 1.6], max on the order of 1e4.
struct SynthConfig {
  int n_accounts = 1000;
  int photos_per_account = 50;
  int records_per_photo = 1;
  double zero_rate = 0.98;
  double tail_mu = 1.0;      // log-normal location of A
  double tail_sigma = 2.0;   // log-normal scale of A
  double curve_tau = 40.0;   // median creatives to reach 63% of saturation
  double tau_spread = 0.3;   // log-normal spread of tau across photos
  double noise_std = 0.2;    // multiplicative, truncated at +-3 sd
  double cost_cap = 20000.0;
  double activity_strength = 2.0;  // logit slope of the spend propensity
  double activity_saturation_corr = 0.5;
  double feature_noise = 0.5;
  int feature_dim = 8;
  int product_vocab = 500;
  int industry1_vocab = 20;
  int industry2_vocab = 100;
  std::uint64_t seed = 20240601;

  void Validate() const;
  std::size_t row_count() const {
    return static_cast<std::size_t>(n_accounts) * photos_per_account * records_per_photo;
  }
};

struct PhotoLatent {
  ItemKey key;
  std::vector<std::int64_t> sparse_ids;  // product, first industry, second industry
  std::vector<double> dense;
  double saturation = 0.0;
  double tau = 1.0;
  double positive_prob = 0.0;

  double Curve(int creatives) const;
  // Zero-inflated expectation: positive_prob * Curve(creatives).
  double ExpectedCost(int creatives) const;
  CostRecord Features() const;
};

struct SynthDataset {
  std::vector<CostRecord> records;
  std::vector<PhotoLatent> photos;
};

// Photos for a population; `stream` selects an independent population drawn
// from the same distribution (stream 0 is the training population).
std::vector<PhotoLatent> GeneratePhotos(const SynthConfig& config, std::uint64_t stream = 0);

SynthDataset GenerateDataset(const SynthConfig& config);

// Capacity is floor(capacity_fraction * sum of the largest quotas).
McKpInstance InstanceFromRewards(std::span<const ItemKey> keys, std::span<const int> quotas,
                                 std::span<const double> rewards, double capacity_fraction);
McKpInstance InstanceFromTruth(std::span<const PhotoLatent> photos, std::span<const int> quotas,
                               double capacity_fraction, const RewardSpec& reward = {},
                               std::span<const double> explore_scores = {});

std::string SerializeDataset(const SynthConfig& config, std::span<const CostRecord> records);
std::vector<CostRecord> ParseDataset(std::string_view text);

// Deterministic seed derivation (SplitMix64 finalizer over the mixed inputs).
std::uint64_t DeriveSeed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0);

}  // namespace acq
