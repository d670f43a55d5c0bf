#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "acq/losses.hpp"
#include "acq/predictor.hpp"
#include "acq/tree.hpp"

namespace acq {

// Adam with global gradient-norm clipping and inverted dropout on the trunk.
struct TrainConfig {
  int epochs = 8;
  int batch_size = 256;
  double learning_rate = 2e-3;
  std::uint64_t seed = 7;
  double clip_norm = 5.0;
  double dropout_rate = 0.2;
  int eval_batch_size = 8196;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void Validate() const;
};

struct TrainResult {
  std::vector<double> epoch_losses;  // mean total loss per epoch, training mode
};

TrainResult Train(PropertyHeadNet& net, const UnbalancedCostTree& tree,
                  std::span<const CostRecord> dataset, const TrainConfig& config,
                  const LossSpec& spec);

// Scores for evaluation, computed in chunks of eval_batch_size.
struct Predictions {
  std::vector<double> expected_cost;  // tree-distribution mean
  std::vector<double> selected_cost;  // composed head at the record's bin, floored at 0
};

Predictions PredictAll(const PropertyHeadNet& net, const UnbalancedCostTree& tree,
                       std::span<const CostRecord> records, int eval_batch_size = 8196);

}  // namespace acq
