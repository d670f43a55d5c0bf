#include "acq/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "acq/error.hpp"
#include "acq/io.hpp"

namespace acq {

namespace {

constexpr int kSparseFields = 3;
constexpr std::uint64_t kIndustryStream = 0x9e3779b97f4a7c15ull;

std::uint64_t SplitMix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Intercept b with E_z[sigmoid(b + s z)] = target for z ~ N(0, 1).
double CalibrateIntercept(double target, double slope) {
  constexpr int kPoints = 4001;
  constexpr double kSpan = 8.0;
  std::vector<double> z(kPoints);
  std::vector<double> w(kPoints);
  double total = 0.0;
  for (int i = 0; i < kPoints; ++i) {
    z[i] = -kSpan + 2.0 * kSpan * i / (kPoints - 1);
    w[i] = std::exp(-0.5 * z[i] * z[i]);
    total += w[i];
  }
  auto mean_prob = [&](double b) {
    double acc = 0.0;
    for (int i = 0; i < kPoints; ++i) acc += w[i] * Sigmoid(b + slope * z[i]);
    return acc / total;
  };
  double lo = -60.0;
  double hi = 60.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (mean_prob(mid) < target ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

int DrawCreativeCount(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, std::log(static_cast<double>(kMaxQuota + 1)));
  const int n = static_cast<int>(std::floor(std::exp(u(rng))));
  return std::clamp(n, kMinQuota, kMaxQuota);
}

}  // namespace

std::uint64_t DeriveSeed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  return SplitMix(SplitMix(SplitMix(seed) ^ a) ^ (b * 0xd6e8feb86659fd93ull));
}

void SynthConfig::Validate() const {
  Require(n_accounts >= 1 && photos_per_account >= 1 && records_per_photo >= 1,
          "synth: population sizes must be positive");
  Require(zero_rate >= 0.0 && zero_rate < 1.0, "synth: zero_rate must be in [0, 1)");
  Require(tail_sigma > 0.0 && curve_tau > 0.0 && tau_spread >= 0.0 && noise_std >= 0.0,
          "synth: scale parameters must be positive");
  Require(cost_cap > 0.0, "synth: cost_cap must be positive");
  Require(activity_saturation_corr >= -1.0 && activity_saturation_corr <= 1.0,
          "synth: correlation must be in [-1, 1]");
  Require(feature_dim >= 0 && feature_noise >= 0.0, "synth: bad feature settings");
  Require(product_vocab >= 1 && industry1_vocab >= 1 && industry2_vocab >= 1,
          "synth: vocab sizes must be positive");
}

double PhotoLatent::Curve(int creatives) const {
  return saturation * (1.0 - std::exp(-static_cast<double>(creatives) / tau));
}

double PhotoLatent::ExpectedCost(int creatives) const { return positive_prob * Curve(creatives); }

CostRecord PhotoLatent::Features() const {
  CostRecord record;
  record.account_id = key.account_id;
  record.photo_id = key.photo_id;
  record.sparse_ids = sparse_ids;
  record.dense = dense;
  return record;
}

std::vector<PhotoLatent> GeneratePhotos(const SynthConfig& config, std::uint64_t stream) {
  config.Validate();
  const double intercept =
      CalibrateIntercept(1.0 - config.zero_rate, config.activity_strength);
  const double rho = config.activity_saturation_corr;
  const double rho_c = std::sqrt(1.0 - rho * rho);
  std::normal_distribution<double> normal(0.0, 1.0);

  // Industry effects are a property of the world, shared by every population.
  std::vector<double> industry_effect(static_cast<std::size_t>(config.industry1_vocab));
  for (int i = 0; i < config.industry1_vocab; ++i) {
    std::mt19937_64 rng(DeriveSeed(config.seed, kIndustryStream, static_cast<std::uint64_t>(i)));
    industry_effect[i] = 0.4 * normal(rng);
  }

  std::vector<PhotoLatent> photos;
  photos.reserve(static_cast<std::size_t>(config.n_accounts) * config.photos_per_account);
  for (int a = 0; a < config.n_accounts; ++a) {
    std::mt19937_64 rng(DeriveSeed(config.seed, stream + 1, static_cast<std::uint64_t>(a)));
    std::uniform_int_distribution<int> product(0, config.product_vocab - 1);
    std::uniform_int_distribution<int> industry(0, config.industry1_vocab - 1);
    std::uniform_int_distribution<int> sub_industry(0, 4);
    const int product_id = product(rng);
    const int industry1 = industry(rng);
    const int industry2 = (industry1 * 5 + sub_industry(rng)) % config.industry2_vocab;
    const double account_effect = 0.5 * normal(rng);
    const std::uint64_t account_id = stream * 1000000000ull + static_cast<std::uint64_t>(a) + 1;

    for (int p = 0; p < config.photos_per_account; ++p) {
      PhotoLatent photo;
      photo.key = {account_id, account_id * 10000ull + static_cast<std::uint64_t>(p)};
      photo.sparse_ids = {product_id, industry1, industry2};
      // Unit-variance activity factor: industry (0.16) + account (0.25) + photo (0.59).
      const double activity =
          industry_effect[industry1] + account_effect + std::sqrt(0.59) * normal(rng);
      const double saturation_z = rho * activity + rho_c * normal(rng);
      const double tau_z = normal(rng);
      photo.saturation = std::exp(config.tail_mu + config.tail_sigma * saturation_z);
      photo.tau = config.curve_tau * std::exp(config.tau_spread * tau_z);
      photo.positive_prob =
          config.zero_rate == 0.0 ? 1.0 : Sigmoid(intercept + config.activity_strength * activity);
      photo.dense.resize(static_cast<std::size_t>(config.feature_dim));
      for (int k = 0; k < config.feature_dim; ++k) {
        double signal = 0.0;
        switch (k % 4) {
          case 0: signal = activity; break;
          case 1: signal = saturation_z; break;
          case 2: signal = 0.5 * (activity + saturation_z); break;
          case 3: signal = tau_z; break;
        }
        photo.dense[k] = signal + config.feature_noise * normal(rng);
      }
      photos.push_back(std::move(photo));
    }
  }
  return photos;
}

SynthDataset GenerateDataset(const SynthConfig& config) {
  SynthDataset out;
  out.photos = GeneratePhotos(config, 0);
  out.records.reserve(config.row_count());
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  for (std::size_t i = 0; i < out.photos.size(); ++i) {
    const PhotoLatent& photo = out.photos[i];
    std::mt19937_64 rng(DeriveSeed(config.seed, 0xda7a, i));
    for (int r = 0; r < config.records_per_photo; ++r) {
      CostRecord record = photo.Features();
      record.creative_count = DrawCreativeCount(rng);
      const double u = uniform(rng);
      const double eps = std::clamp(normal(rng), -3.0, 3.0);
      if (u < photo.positive_prob) {
        const double noisy = photo.Curve(record.creative_count) * (1.0 + config.noise_std * eps);
        record.cost = std::min(config.cost_cap, std::max(0.0, noisy));
      }
      out.records.push_back(std::move(record));
    }
  }
  return out;
}

McKpInstance InstanceFromRewards(std::span<const ItemKey> keys, std::span<const int> quotas,
                                 std::span<const double> rewards, double capacity_fraction) {
  Require(!quotas.empty(), "instance: no candidate quotas");
  Require(rewards.size() == keys.size() * quotas.size(), "instance: reward matrix shape mismatch");
  Require(capacity_fraction > 0.0 && capacity_fraction <= 1.0,
          "instance: capacity_fraction must be in (0, 1]");
  McKpInstance instance;
  instance.Reserve(keys.size(), rewards.size());
  std::int64_t max_sum = 0;
  const int max_quota = *std::max_element(quotas.begin(), quotas.end());
  for (std::size_t i = 0; i < keys.size(); ++i) {
    std::vector<Candidate> candidates(quotas.size());
    for (std::size_t k = 0; k < quotas.size(); ++k) {
      candidates[k] = {quotas[k], rewards[i * quotas.size() + k]};
    }
    instance.AddItem(keys[i], std::move(candidates));
    max_sum += max_quota;
  }
  instance.set_capacity(
      static_cast<std::int64_t>(std::floor(capacity_fraction * static_cast<double>(max_sum))));
  return instance;
}

McKpInstance InstanceFromTruth(std::span<const PhotoLatent> photos, std::span<const int> quotas,
                               double capacity_fraction, const RewardSpec& reward,
                               std::span<const double> explore_scores) {
  Require(explore_scores.empty() || explore_scores.size() == photos.size() * quotas.size(),
          "instance: explore score matrix shape mismatch");
  std::vector<ItemKey> keys;
  keys.reserve(photos.size());
  std::vector<double> rewards;
  rewards.reserve(photos.size() * quotas.size());
  for (std::size_t i = 0; i < photos.size(); ++i) {
    keys.push_back(photos[i].key);
    for (std::size_t k = 0; k < quotas.size(); ++k) {
      const double explore = explore_scores.empty() ? 0.0 : explore_scores[i * quotas.size() + k];
      rewards.push_back(AssembleReward(photos[i].ExpectedCost(quotas[k]), explore, reward));
    }
  }
  return InstanceFromRewards(keys, quotas, rewards, capacity_fraction);
}

std::string SerializeDataset(const SynthConfig& config, std::span<const CostRecord> records) {
  std::ostringstream out;
  const std::size_t dense = records.empty() ? 0 : records.front().dense.size();
  out << "# acq-dataset v1 seed " << config.seed << " sparse " << kSparseFields << " dense "
      << dense << " rows " << records.size() << '\n';
  out << "account_id photo_id creative_count cost";
  for (int i = 0; i < kSparseFields; ++i) out << " sparse_" << i;
  for (std::size_t i = 0; i < dense; ++i) out << " dense_" << i;
  out << '\n';
  for (const CostRecord& r : records) {
    out << r.account_id << ' ' << r.photo_id << ' ' << r.creative_count << ' '
        << io::FormatDouble(r.cost);
    for (std::int64_t id : r.sparse_ids) out << ' ' << id;
    for (double v : r.dense) out << ' ' << io::FormatDouble(v);
    out << '\n';
  }
  return out.str();
}

std::vector<CostRecord> ParseDataset(std::string_view text) {
  const auto lines = io::SplitLines(text);
  if (lines.empty()) Fail(ErrorKind::kSchemaMismatch, "dataset: empty file");
  const auto header = io::SplitFields(lines[0]);
  if (header.size() < 10 || header[0] != "#" || header[1] != "acq-dataset" ||
      header[2] != "v1" || header[5] != "sparse" || header[7] != "dense") {
    Fail(ErrorKind::kSchemaMismatch, "dataset: unrecognized header");
  }
  const auto sparse = static_cast<std::size_t>(io::ParseInt(header[6]));
  const auto dense = static_cast<std::size_t>(io::ParseInt(header[8]));
  std::vector<CostRecord> records;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto f = io::SplitFields(lines[i]);
    if (f.empty() || f[0] == "account_id") continue;
    if (f.size() != 4 + sparse + dense) {
      Fail(ErrorKind::kSchemaMismatch, "dataset: row " + std::to_string(i) + " has wrong width");
    }
    CostRecord r;
    r.account_id = static_cast<std::uint64_t>(io::ParseInt(f[0]));
    r.photo_id = static_cast<std::uint64_t>(io::ParseInt(f[1]));
    r.creative_count = static_cast<int>(io::ParseInt(f[2]));
    r.cost = io::ParseDouble(f[3]);
    for (std::size_t k = 0; k < sparse; ++k) r.sparse_ids.push_back(io::ParseInt(f[4 + k]));
    for (std::size_t k = 0; k < dense; ++k) r.dense.push_back(io::ParseDouble(f[4 + sparse + k]));
    records.push_back(std::move(r));
  }
  return records;
}

}  // namespace acq
