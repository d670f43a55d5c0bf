#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>

namespace acq {

// Probability that a random positive outranks a random negative; ties count
// one half. Throws kUndefinedSignal unless both classes are present.
double Auc(std::span<const double> scores, std::span<const int> labels);

// AUC among positive-cost samples only, with the positive class defined as
// cost above the median positive cost.
double Pauc(std::span<const double> scores, std::span<const double> costs);

// Per-account AUC averaged with weights equal to each account's total cost.
// Accounts with one class or zero total cost are skipped.
double Gauc(std::span<const double> scores, std::span<const int> labels,
            std::span<const std::uint64_t> account_ids, std::span<const double> costs);

double Mse(std::span<const double> predictions, std::span<const double> actuals);

struct MetricsReport {
  std::string label;
  std::optional<double> auc;
  double mse = 0.0;
  std::optional<double> pauc;
  std::optional<double> gauc;
  std::size_t n = 0;
  std::size_t n_pos = 0;

  std::string ToJsonLine() const;
};

// Zero-vs-positive evaluation: labels are cost > 0. Undefined metrics are
// reported as absent rather than failing the whole report.
MetricsReport Evaluate(std::string label, std::span<const double> scores,
                       std::span<const double> predictions, std::span<const double> costs,
                       std::span<const std::uint64_t> account_ids);

}  // namespace acq
