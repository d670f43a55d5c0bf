#include "acq/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

namespace acq {

void TrainConfig::Validate() const {
  Require(epochs >= 1, "train: epochs must be positive");
  Require(batch_size >= 1, "train: batch_size must be positive");
  Require(eval_batch_size >= 1, "train: eval_batch_size must be positive");
  Require(learning_rate > 0.0 && std::isfinite(learning_rate),
          "train: learning_rate must be positive");
  Require(clip_norm > 0.0, "train: clip_norm must be positive");
  Require(dropout_rate >= 0.0 && dropout_rate < 1.0, "train: dropout_rate must be in [0,1)");
  Require(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0,
          "train: Adam betas must be in [0,1)");
}

namespace {

class Adam {
 public:
  Adam(const NetParams<double>& like, const TrainConfig& config)
      : first_(like.ZerosLike()), second_(like.ZerosLike()), config_(config) {}

  void Step(NetParams<double>& params, NetParams<double>& grad) {
    ++steps_;
    const double correction1 = 1.0 - std::pow(config_.beta1, steps_);
    const double correction2 = 1.0 - std::pow(config_.beta2, steps_);
    const double step = config_.learning_rate * std::sqrt(correction2) / correction1;
    std::vector<std::span<double>> p_blocks, g_blocks, m_blocks, v_blocks;
    auto collect = [](std::vector<std::span<double>>& out) {
      return [&out](const std::string&, std::span<double> b) { out.push_back(b); };
    };
    params.ForEachBlock(collect(p_blocks));
    grad.ForEachBlock(collect(g_blocks));
    first_.ForEachBlock(collect(m_blocks));
    second_.ForEachBlock(collect(v_blocks));
    for (std::size_t b = 0; b < p_blocks.size(); ++b) {
      auto p = p_blocks[b];
      auto g = g_blocks[b];
      auto m = m_blocks[b];
      auto v = v_blocks[b];
      for (std::size_t i = 0; i < p.size(); ++i) {
        m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g[i];
        v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g[i] * g[i];
        p[i] -= step * m[i] / (std::sqrt(v[i]) + config_.epsilon);
      }
    }
  }

 private:
  NetParams<double> first_;
  NetParams<double> second_;
  const TrainConfig& config_;
  int steps_ = 0;
};

double GlobalNorm(const NetParams<double>& grad) {
  double total = 0.0;
  grad.ForEachBlock([&](const std::string&, std::span<const double> block) {
    for (double g : block) total += g * g;
  });
  return std::sqrt(total);
}

void Scale(NetParams<double>& grad, double factor) {
  grad.ForEachBlock([&](const std::string&, std::span<double> block) {
    for (double& g : block) g *= factor;
  });
}

}  // namespace

TrainResult Train(PropertyHeadNet& net, const UnbalancedCostTree& tree,
                  std::span<const CostRecord> dataset, const TrainConfig& config,
                  const LossSpec& spec) {
  config.Validate();
  spec.Validate();
  Require(!dataset.empty(), "train: empty dataset");
  if (tree.classifier_count() != net.config().classifier_count) {
    Fail(ErrorKind::kSchemaMismatch, "train: network classifier heads do not match the tree");
  }

  std::mt19937_64 rng(config.seed);
  Adam adam(net.params(), config);
  NetParams<double> grad = net.params().ZerosLike();
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);
  ForwardTrace<double> trace;
  TrainResult result;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end =
          std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      const double inv = 1.0 / static_cast<double>(end - start);
      Scale(grad, 0.0);
      double batch_loss = 0.0;
      for (std::size_t k = start; k < end; ++k) {
        const CostRecord& record = dataset[order[k]];
        RunForward(net.params(), net.config(), record, trace,
                   DropoutState{&rng, config.dropout_rate});
        const LossTerms<double> terms = AccumulateRecordGradient(
            net.params(), net.config(), tree, record, spec, trace, inv, grad);
        batch_loss += WeightedLoss(terms, spec);
      }
      double penalty = 0.0;
      if (spec.lipschitz_weight != 0.0 && !net.params().trunk.empty()) {
        penalty = AccumulatePenaltyGradient(net.params(), spec.lipschitz_weight, grad);
      }
      const double total = batch_loss + static_cast<double>(end - start) * spec.lipschitz_weight * penalty;
      if (!std::isfinite(total)) {
        Fail(ErrorKind::kNonFinite, "train: non-finite loss at epoch " + std::to_string(epoch) +
                                        ", batch starting at row " + std::to_string(start));
      }
      CheckFinite(grad);
      const double norm = GlobalNorm(grad);
      if (norm > config.clip_norm) Scale(grad, config.clip_norm / norm);
      adam.Step(net.params(), grad);
      epoch_loss += total;
    }
    result.epoch_losses.push_back(epoch_loss / static_cast<double>(dataset.size()));
  }
  return result;
}

Predictions PredictAll(const PropertyHeadNet& net, const UnbalancedCostTree& tree,
                       std::span<const CostRecord> records, int eval_batch_size) {
  Require(eval_batch_size >= 1, "predict: eval_batch_size must be positive");
  if (tree.classifier_count() != net.config().classifier_count) {
    Fail(ErrorKind::kSchemaMismatch, "predict: network classifier heads do not match the tree");
  }
  Predictions out;
  out.expected_cost.resize(records.size());
  out.selected_cost.resize(records.size());
  ForwardTrace<double> trace;
  std::vector<double> leaf_probs(static_cast<std::size_t>(tree.leaf_count()));
  const std::size_t chunk = static_cast<std::size_t>(eval_batch_size);
  for (std::size_t start = 0; start < records.size(); start += chunk) {
    const std::size_t end = std::min(records.size(), start + chunk);
    for (std::size_t i = start; i < end; ++i) {
      RunForward(net.params(), net.config(), records[i], trace);
      tree.LeafMasses<double>(std::span<const double>(trace.probs.data(), trace.probs.size()),
                              leaf_probs);
      double expected = 0.0;
      for (std::size_t l = 0; l < leaf_probs.size(); ++l) {
        expected += leaf_probs[l] * tree.node(tree.leaf_ids()[l]).leaf_value;
      }
      out.expected_cost[i] = expected;
      out.selected_cost[i] = std::max(0.0, net.config().cost_scale * trace.composed[trace.bin]);
    }
  }
  return out;
}

}  // namespace acq
