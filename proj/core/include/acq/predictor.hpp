#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "acq/binning.hpp"
#include "acq/losses.hpp"
#include "acq/net_math.hpp"
#include "acq/tree.hpp"

namespace acq {

struct ForwardResult {
  std::vector<double> classifier_probs;  // left-branch probability per tree classifier
  std::vector<double> composed_costs;    // one per creative bin, in cost units
  double selected_cost = 0.0;            // composed_costs at the record's bin
  int bin = 0;
};

// Shared rectifier trunk over embedded sparse ids and dense features, with one
// sigmoid head per tree classifier and one regression head per creative bin.
// The regression heads are composed according to the variant so that the
// per-bin costs are monotone (kMonotonic) or monotone with shrinking slopes
// (kSubmodular) for any parameter values.
class PropertyHeadNet {
 public:
  PropertyHeadNet(NetConfig config, std::uint64_t seed);

  static PropertyHeadNet Zeros(NetConfig config);

  const NetConfig& config() const { return config_; }
  NetParams<double>& params() { return params_; }
  const NetParams<double>& params() const { return params_; }

  ForwardResult Forward(const CostRecord& record) const;

  // Composed cost at the quota's bin, floored at zero. The record's own
  // creative count and cost are ignored.
  double PredictPvalue(const UnbalancedCostTree& tree, const CostRecord& features,
                       int quota) const;
  std::vector<double> PredictPvalues(const UnbalancedCostTree& tree, const CostRecord& features,
                                     std::span<const int> quotas) const;

  // E[C | x] under the tree's leaf distribution.
  double PredictExpectedCost(const UnbalancedCostTree& tree, const CostRecord& features) const;

  // Binary dump bound to the checksum of the tree the net was trained with.
  std::vector<std::uint8_t> Serialize(std::uint64_t tree_checksum) const;
  static PropertyHeadNet Deserialize(std::span<const std::uint8_t> bytes,
                                     const UnbalancedCostTree& tree);

 private:
  PropertyHeadNet(NetConfig config, NetParams<double> params);

  NetConfig config_;
  NetParams<double> params_;
};

// Gradient of the full objective (weighted data terms plus weighted Lipschitz
// penalty) for one record, without dropout. Throws kNonFinite naming the first
// offending parameter.
NetParams<double> Backward(const PropertyHeadNet& net, const UnbalancedCostTree& tree,
                           const CostRecord& record, const LossSpec& spec,
                           double* loss = nullptr);

void CheckFinite(const NetParams<double>& grad);

std::vector<double> MonotonicCompose(std::span<const double> raw);
std::vector<double> SubmodularCompose(std::span<const double> raw, const CreativeBinning& bins);
// Per-unit slopes of the submodular composition; entry 0 is unused (0).
std::vector<double> SubmodularSlopes(std::span<const double> raw);

double SpectralNorm(const Matrix<double>& m, PowerIterationOptions options = {});
double LipschitzPenalty(const PropertyHeadNet& net);

}  // namespace acq
