#include "acq/metrics.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <vector>

#include "acq/error.hpp"
#include "json.hpp"

namespace acq {

double Auc(std::span<const double> scores, std::span<const int> labels) {
  Require(scores.size() == labels.size(), "auc: scores and labels differ in length");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double positive_rank_sum = 0.0;
  std::size_t positives = 0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    // Ranks i+1..j share their average.
    const double rank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]] != 0) {
        positive_rank_sum += rank;
        ++positives;
      }
    }
    i = j;
  }
  const std::size_t negatives = n - positives;
  if (positives == 0 || negatives == 0) {
    Fail(ErrorKind::kUndefinedSignal, "auc: both classes are required");
  }
  const double p = static_cast<double>(positives);
  return (positive_rank_sum - p * (p + 1.0) / 2.0) / (p * static_cast<double>(negatives));
}

double Pauc(std::span<const double> scores, std::span<const double> costs) {
  Require(scores.size() == costs.size(), "pauc: scores and costs differ in length");
  std::vector<double> positive_costs;
  std::vector<double> positive_scores;
  for (std::size_t i = 0; i < costs.size(); ++i) {
    if (costs[i] > 0.0) {
      positive_costs.push_back(costs[i]);
      positive_scores.push_back(scores[i]);
    }
  }
  if (positive_costs.size() < 2) {
    Fail(ErrorKind::kUndefinedSignal, "pauc: fewer than two positive-cost samples");
  }
  std::vector<double> sorted = positive_costs;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t m = sorted.size();
  const double median = m % 2 == 1 ? sorted[m / 2] : 0.5 * (sorted[m / 2 - 1] + sorted[m / 2]);
  std::vector<int> labels(m);
  for (std::size_t i = 0; i < m; ++i) labels[i] = positive_costs[i] > median ? 1 : 0;
  return Auc(positive_scores, labels);
}

double Gauc(std::span<const double> scores, std::span<const int> labels,
            std::span<const std::uint64_t> account_ids, std::span<const double> costs) {
  Require(scores.size() == labels.size() && scores.size() == account_ids.size() &&
              scores.size() == costs.size(),
          "gauc: input lengths differ");
  std::map<std::uint64_t, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < scores.size(); ++i) groups[account_ids[i]].push_back(i);
  double weighted = 0.0;
  double total_weight = 0.0;
  for (const auto& [account, members] : groups) {
    double weight = 0.0;
    std::size_t positives = 0;
    std::vector<double> s;
    std::vector<int> l;
    for (std::size_t i : members) {
      weight += costs[i];
      positives += labels[i] != 0 ? 1 : 0;
      s.push_back(scores[i]);
      l.push_back(labels[i]);
    }
    if (positives == 0 || positives == members.size() || !(weight > 0.0)) continue;
    weighted += weight * Auc(s, l);
    total_weight += weight;
  }
  if (!(total_weight > 0.0)) {
    Fail(ErrorKind::kUndefinedSignal, "gauc: no account has both classes and positive cost");
  }
  return weighted / total_weight;
}

double Mse(std::span<const double> predictions, std::span<const double> actuals) {
  Require(predictions.size() == actuals.size(), "mse: lengths differ");
  Require(!predictions.empty(), "mse: empty input");
  double total = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const double d = actuals[i] - predictions[i];
    total += d * d;
  }
  return total / static_cast<double>(predictions.size());
}

namespace {

template <class F>
std::optional<double> TryMetric(F&& f) {
  try {
    return f();
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::kUndefinedSignal) throw;
    return std::nullopt;
  }
}

}  // namespace

MetricsReport Evaluate(std::string label, std::span<const double> scores,
                       std::span<const double> predictions, std::span<const double> costs,
                       std::span<const std::uint64_t> account_ids) {
  MetricsReport report;
  report.label = std::move(label);
  report.n = costs.size();
  std::vector<int> labels(costs.size());
  for (std::size_t i = 0; i < costs.size(); ++i) {
    labels[i] = costs[i] > 0.0 ? 1 : 0;
    report.n_pos += static_cast<std::size_t>(labels[i]);
  }
  report.auc = TryMetric([&] { return Auc(scores, labels); });
  report.mse = Mse(predictions, costs);
  report.pauc = TryMetric([&] { return Pauc(scores, costs); });
  report.gauc = TryMetric([&] { return Gauc(scores, labels, account_ids, costs); });
  return report;
}

std::string MetricsReport::ToJsonLine() const {
  nlohmann::ordered_json j;
  j["label"] = label;
  auto put = [&](const char* key, const std::optional<double>& v) {
    if (v) {
      j[key] = *v;
    } else {
      j[key] = nullptr;
    }
  };
  put("auc", auc);
  j["mse"] = mse;
  put("pauc", pauc);
  put("gauc", gauc);
  j["n"] = n;
  j["n_pos"] = n_pos;
  return j.dump();
}

}  // namespace acq
