#include "acq/losses.hpp"

#include <cmath>

namespace acq {

void LossSpec::Validate() const {
  for (double w : {alpha1, alpha2, alpha3, lipschitz_weight}) {
    if (!std::isfinite(w) || w < 0.0) {
      Fail(ErrorKind::kInvalidArgument, "loss weights must be finite and non-negative");
    }
  }
}

double MaskedPathCrossEntropy(const UnbalancedCostTree& tree, std::span<const double> left_probs,
                              double cost) {
  Require(static_cast<int>(left_probs.size()) == tree.classifier_count(),
          "expected one probability per classifier");
  const PathSpec path = tree.PathLabels(tree.AssignLeaf(cost));
  double loss = 0.0;
  for (const PathStep& step : path.steps) {
    const double p = left_probs[step.classifier];
    if (!(p >= 0.0 && p <= 1.0)) Fail(ErrorKind::kInvalidArgument, "probability outside [0,1]");
    loss -= step.branch == Branch::kLeft ? std::log(p) : std::log1p(-p);
  }
  return loss;
}

double UncertaintyLoss(const UnbalancedCostTree& tree, std::span<const double> left_probs) {
  return tree.ExpectedCostStd(tree.LeafDistribution(left_probs));
}

double RegressionLoss(double predicted, double actual) {
  const double diff = actual - predicted;
  return diff * diff;
}

double TotalLoss(double path_ce, double uncertainty, double regression, double penalty,
                 const LossSpec& spec) {
  return spec.alpha1 * path_ce + spec.alpha2 * uncertainty + spec.alpha3 * regression +
         spec.lipschitz_weight * penalty;
}

}  // namespace acq
