#pragma once

#include <span>

#include "acq/tree.hpp"

namespace acq {

// Weights of the multi-task objective:
//   alpha1 * path cross-entropy + alpha2 * leaf-distribution std
//   + alpha3 * squared error + lipschitz_weight * Lipschitz penalty.
struct LossSpec {
  double alpha1 = 1.0;
  double alpha2 = 1.0;
  double alpha3 = 0.2;
  double lipschitz_weight = 0.0;

  void Validate() const;

  // Squared-error-only objective used by the plain regression control.
  static LossSpec RegressionOnly() { return LossSpec{0.0, 0.0, 1.0, 0.0}; }
};

// Binary cross-entropy summed over the classifiers on the path to the leaf
// that owns `cost`; classifiers off that path are masked out.
double MaskedPathCrossEntropy(const UnbalancedCostTree& tree, std::span<const double> left_probs,
                              double cost);

// Standard deviation of the cost under the leaf distribution induced by the
// classifier outputs.
double UncertaintyLoss(const UnbalancedCostTree& tree, std::span<const double> left_probs);

double RegressionLoss(double predicted, double actual);

double TotalLoss(double path_ce, double uncertainty, double regression, double penalty,
                 const LossSpec& spec);

}  // namespace acq
