#pragma once

// Scalar-generic kernels behind PropertyHeadNet. The library instantiates
// them at double; tests also run them at long double to get finite-difference
// references well below double round-off.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "acq/binning.hpp"
#include "acq/error.hpp"
#include "acq/losses.hpp"
#include "acq/tree.hpp"

namespace acq {

template <class T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <class T>
using Vector = Eigen::Matrix<T, Eigen::Dynamic, 1>;

enum class Variant { kControl, kMonotonic, kSubmodular };

std::string_view VariantName(Variant variant);
Variant ParseVariant(std::string_view name);

// One training row: photo features, the creative count it was served with,
// and the realized cost.
struct CostRecord {
  std::uint64_t account_id = 0;
  std::uint64_t photo_id = 0;
  std::vector<std::int64_t> sparse_ids;
  std::vector<double> dense;
  int creative_count = 1;
  double cost = 0.0;
};

struct NetConfig {
  int sparse_fields = 3;
  int vocab = 10009;
  int embedding_width = 8;
  int dense_dim = 8;
  std::vector<int> hidden = {64, 64};
  int classifier_count = 0;
  Variant variant = Variant::kSubmodular;
  CreativeBinning bins = CreativeBinning::Default();
  // Unit of the regression heads and of the loss terms: costs are divided by
  // it inside the loss, and composed outputs are multiplied by it on export.
  double cost_scale = 1.0;

  int input_dim() const { return sparse_fields * embedding_width + dense_dim; }
  int trunk_output_dim() const { return hidden.empty() ? input_dim() : hidden.back(); }
  void Validate() const;
};

template <class T>
struct DenseLayer {
  Matrix<T> weight;
  Vector<T> bias;
};

template <class T>
struct NetParams {
  std::vector<Matrix<T>> embeddings;  // embedding_width x vocab, one per sparse field
  std::vector<DenseLayer<T>> trunk;
  DenseLayer<T> classifier;  // classifier_count x trunk_output_dim
  DenseLayer<T> regression;  // bin_count x trunk_output_dim

  template <class F>
  void ForEachBlock(F&& f) {
    for (std::size_t i = 0; i < embeddings.size(); ++i) {
      f("embedding." + std::to_string(i), std::span<T>(embeddings[i].data(), embeddings[i].size()));
    }
    for (std::size_t i = 0; i < trunk.size(); ++i) {
      const std::string prefix = "trunk." + std::to_string(i);
      f(prefix + ".weight", std::span<T>(trunk[i].weight.data(), trunk[i].weight.size()));
      f(prefix + ".bias", std::span<T>(trunk[i].bias.data(), trunk[i].bias.size()));
    }
    f("classifier.weight", std::span<T>(classifier.weight.data(), classifier.weight.size()));
    f("classifier.bias", std::span<T>(classifier.bias.data(), classifier.bias.size()));
    f("regression.weight", std::span<T>(regression.weight.data(), regression.weight.size()));
    f("regression.bias", std::span<T>(regression.bias.data(), regression.bias.size()));
  }

  template <class F>
  void ForEachBlock(F&& f) const {
    const_cast<NetParams*>(this)->ForEachBlock(
        [&](const std::string& name, std::span<T> block) {
          f(name, std::span<const T>(block.data(), block.size()));
        });
  }

  template <class U>
  NetParams<U> Cast() const {
    NetParams<U> out;
    for (const auto& e : embeddings) out.embeddings.push_back(e.template cast<U>());
    for (const auto& layer : trunk) {
      out.trunk.push_back({layer.weight.template cast<U>(), layer.bias.template cast<U>()});
    }
    out.classifier = {classifier.weight.template cast<U>(), classifier.bias.template cast<U>()};
    out.regression = {regression.weight.template cast<U>(), regression.bias.template cast<U>()};
    return out;
  }

  NetParams ZerosLike() const {
    NetParams out = *this;
    out.ForEachBlock([](const std::string&, std::span<T> block) {
      std::fill(block.begin(), block.end(), T(0));
    });
    return out;
  }

  std::size_t ParameterCount() const {
    std::size_t total = 0;
    ForEachBlock([&](const std::string&, std::span<const T> block) { total += block.size(); });
    return total;
  }
};

template <class T>
NetParams<T> ZeroParams(const NetConfig& config) {
  NetParams<T> p;
  for (int i = 0; i < config.sparse_fields; ++i) {
    p.embeddings.push_back(Matrix<T>::Zero(config.embedding_width, config.vocab));
  }
  int fan_in = config.input_dim();
  for (int width : config.hidden) {
    p.trunk.push_back({Matrix<T>::Zero(width, fan_in), Vector<T>::Zero(width)});
    fan_in = width;
  }
  p.classifier = {Matrix<T>::Zero(config.classifier_count, fan_in),
                  Vector<T>::Zero(config.classifier_count)};
  p.regression = {Matrix<T>::Zero(config.bins.bin_count(), fan_in),
                  Vector<T>::Zero(config.bins.bin_count())};
  return p;
}

// ---------------------------------------------------------------------------
// Scalar helpers

template <class T>
T Softplus(T x) {
  using std::abs;
  using std::exp;
  using std::log1p;
  return (x > T(0) ? x : T(0)) + log1p(exp(-abs(x)));
}

template <class T>
T Sigmoid(T x) {
  using std::exp;
  if (x >= T(0)) return T(1) / (T(1) + exp(-x));
  const T e = exp(x);
  return e / (T(1) + e);
}

// ---------------------------------------------------------------------------
// Output-head composition

template <class T>
void ComposeCosts(Variant variant, std::span<const T> raw, const CreativeBinning& bins,
                  std::span<T> out) {
  const std::size_t n = raw.size();
  if (n == 0) return;
  switch (variant) {
    case Variant::kControl:
      for (std::size_t k = 0; k < n; ++k) out[k] = raw[k];
      return;
    case Variant::kMonotonic:
      out[0] = raw[0];
      for (std::size_t k = 1; k < n; ++k) out[k] = out[k - 1] + raw[k] * raw[k];
      return;
    case Variant::kSubmodular: {
      // Slopes accumulate from the tail, so they can only shrink as k grows.
      T slope = T(0);
      std::vector<T> slopes(n, T(0));
      for (std::size_t k = n; k-- > 1;) {
        slope += raw[k] * raw[k];
        slopes[k] = slope;
      }
      out[0] = raw[0];
      for (std::size_t k = 1; k < n; ++k) {
        out[k] = out[k - 1] + slopes[k] * T(bins.Width(static_cast<int>(k)));
      }
      return;
    }
  }
}

// d composed[bin] / d raw[m] for every m.
template <class T>
void ComposeJacobianRow(Variant variant, std::span<const T> raw, const CreativeBinning& bins,
                        int bin, std::span<T> out) {
  const std::size_t n = raw.size();
  for (std::size_t m = 0; m < n; ++m) out[m] = T(0);
  switch (variant) {
    case Variant::kControl:
      out[bin] = T(1);
      return;
    case Variant::kMonotonic:
      out[0] = T(1);
      for (int m = 1; m <= bin; ++m) out[m] = T(2) * raw[m];
      return;
    case Variant::kSubmodular: {
      out[0] = T(1);
      // composed[b] = raw0 + sum_{i=1..b} width_i * sum_{m>=i} raw_m^2
      T width_prefix = T(0);
      for (std::size_t m = 1; m < n; ++m) {
        if (static_cast<int>(m) <= bin) width_prefix += T(bins.Width(static_cast<int>(m)));
        out[m] = T(2) * raw[m] * width_prefix;
      }
      return;
    }
  }
}

// ---------------------------------------------------------------------------
// Spectral norm by power iteration on W^T W

struct PowerIterationOptions {
  double tolerance = 1e-7;  // on the change of the unit right singular vector
  int max_iterations = 200;
};

// Settings used inside the Lipschitz penalty and its gradient: tight enough
// that u v^T is accurate to near machine precision.
inline constexpr PowerIterationOptions kPenaltyPowerIteration{1e-13, 3000};

template <class T>
struct SingularTriplet {
  T value = T(0);
  Vector<T> left;
  Vector<T> right;
  int iterations = 0;
};

template <class T>
SingularTriplet<T> TopSingularTriplet(const Matrix<T>& m, const PowerIterationOptions& options) {
  using std::sqrt;
  SingularTriplet<T> out;
  const Eigen::Index cols = m.cols();
  out.right = Vector<T>(cols);
  for (Eigen::Index i = 0; i < cols; ++i) {
    out.right[i] = T(1.5) + T(std::cos(0.7 * static_cast<double>(i)));
  }
  out.right.normalize();
  out.left = Vector<T>::Zero(m.rows());
  if (m.size() == 0) return out;
  for (int it = 0; it < options.max_iterations; ++it) {
    out.iterations = it + 1;
    Vector<T> next = m.transpose() * (m * out.right);
    const T norm = next.norm();
    if (norm == T(0)) {
      out.value = T(0);
      return out;
    }
    next /= norm;
    const T change = (next - out.right).norm();
    out.right = next;
    if (change <= T(options.tolerance)) break;
  }
  Vector<T> image = m * out.right;
  out.value = image.norm();
  if (out.value > T(0)) out.left = image / out.value;
  return out;
}

template <class T>
T LipschitzPenalty(const NetParams<T>& params) {
  T product = T(1);
  for (const auto& layer : params.trunk) {
    product *= Softplus(TopSingularTriplet(layer.weight, kPenaltyPowerIteration).value);
  }
  return product;
}

// grad += scale * d(penalty)/d(trunk weights)
template <class T>
T AccumulatePenaltyGradient(const NetParams<T>& params, T scale, NetParams<T>& grad) {
  const std::size_t layers = params.trunk.size();
  std::vector<SingularTriplet<T>> triplets;
  std::vector<T> factors;
  for (const auto& layer : params.trunk) {
    triplets.push_back(TopSingularTriplet(layer.weight, kPenaltyPowerIteration));
    factors.push_back(Softplus(triplets.back().value));
  }
  T product = T(1);
  for (T f : factors) product *= f;
  for (std::size_t j = 0; j < layers; ++j) {
    T others = T(1);
    for (std::size_t i = 0; i < layers; ++i) {
      if (i != j) others *= factors[i];
    }
    const T coeff = scale * others * Sigmoid(triplets[j].value);
    grad.trunk[j].weight.noalias() += coeff * triplets[j].left * triplets[j].right.transpose();
  }
  return product;
}

// ---------------------------------------------------------------------------
// Forward / backward for one record

inline std::size_t BucketOf(std::int64_t id, int vocab) {
  const std::int64_t v = vocab;
  return static_cast<std::size_t>(((id % v) + v) % v);
}

struct DropoutState {
  std::mt19937_64* rng = nullptr;
  double rate = 0.0;
};

template <class T>
struct ForwardTrace {
  std::vector<std::size_t> buckets;
  Vector<T> input;
  std::vector<Vector<T>> pre;
  std::vector<Vector<T>> post;
  std::vector<Vector<T>> dropout_scale;  // empty when dropout is off
  Vector<T> logits;
  Vector<T> probs;
  Vector<T> raw;
  Vector<T> composed;
  int bin = 0;
};

template <class T>
void RunForward(const NetParams<T>& params, const NetConfig& config, const CostRecord& record,
                ForwardTrace<T>& trace, DropoutState dropout = {}) {
  if (static_cast<int>(record.sparse_ids.size()) != config.sparse_fields ||
      static_cast<int>(record.dense.size()) != config.dense_dim) {
    Fail(ErrorKind::kInvalidArgument, "forward: feature dimensions do not match the network");
  }
  const int width = config.embedding_width;
  trace.input.resize(config.input_dim());
  trace.buckets.resize(config.sparse_fields);
  for (int f = 0; f < config.sparse_fields; ++f) {
    const std::size_t bucket = BucketOf(record.sparse_ids[f], config.vocab);
    trace.buckets[f] = bucket;
    trace.input.segment(f * width, width) = params.embeddings[f].col(bucket);
  }
  for (int d = 0; d < config.dense_dim; ++d) {
    trace.input[config.sparse_fields * width + d] = T(record.dense[d]);
  }

  const std::size_t layers = params.trunk.size();
  trace.pre.resize(layers);
  trace.post.resize(layers);
  trace.dropout_scale.resize(dropout.rng != nullptr && dropout.rate > 0.0 ? layers : 0);
  const Vector<T>* h = &trace.input;
  for (std::size_t l = 0; l < layers; ++l) {
    trace.pre[l].noalias() = params.trunk[l].weight * (*h);
    trace.pre[l] += params.trunk[l].bias;
    trace.post[l] = trace.pre[l].cwiseMax(T(0));
    if (!trace.dropout_scale.empty()) {
      Vector<T>& scale = trace.dropout_scale[l];
      scale.resize(trace.post[l].size());
      const T keep = T(1.0 / (1.0 - dropout.rate));
      for (Eigen::Index i = 0; i < scale.size(); ++i) {
        const double u = static_cast<double>((*dropout.rng)() >> 11) * 0x1.0p-53;
        scale[i] = u < dropout.rate ? T(0) : keep;
      }
      trace.post[l].array() *= scale.array();
    }
    h = &trace.post[l];
  }

  trace.logits.noalias() = params.classifier.weight * (*h);
  trace.logits += params.classifier.bias;
  trace.probs.resize(trace.logits.size());
  for (Eigen::Index i = 0; i < trace.logits.size(); ++i) trace.probs[i] = Sigmoid(trace.logits[i]);

  trace.raw.noalias() = params.regression.weight * (*h);
  trace.raw += params.regression.bias;
  trace.composed.resize(trace.raw.size());
  ComposeCosts<T>(config.variant, std::span<const T>(trace.raw.data(), trace.raw.size()),
                  config.bins, std::span<T>(trace.composed.data(), trace.composed.size()));
  trace.bin = config.bins.BinOf(record.creative_count);
}

template <class T>
struct LossTerms {
  T path_ce = T(0);
  T uncertainty = T(0);
  T regression = T(0);
};

// Loss terms plus, when requested, dLoss/dlogit (classifiers) and
// dLoss/draw (regression heads) for the weighted objective.
template <class T>
LossTerms<T> EvaluateLossTerms(const UnbalancedCostTree& tree, const NetConfig& config,
                               const ForwardTrace<T>& trace, double cost, const LossSpec& spec,
                               Vector<T>* dlogits = nullptr, Vector<T>* draw = nullptr) {
  using std::sqrt;
  LossTerms<T> terms;
  const T unit = T(1) / T(config.cost_scale);
  const int classifiers = tree.classifier_count();
  if (dlogits != nullptr) dlogits->setZero(classifiers);

  if (classifiers > 0) {
    const PathSpec path = tree.PathLabels(tree.AssignLeaf(cost));
    for (const PathStep& step : path.steps) {
      const T z = trace.logits[step.classifier];
      const bool left = step.branch == Branch::kLeft;
      terms.path_ce += left ? Softplus(T(-z)) : Softplus(z);
      if (dlogits != nullptr) {
        (*dlogits)[step.classifier] += T(spec.alpha1) * (trace.probs[step.classifier] - (left ? T(1) : T(0)));
      }
    }

    const std::size_t leaves = static_cast<std::size_t>(tree.leaf_count());
    std::vector<T> mass(leaves);
    std::span<const T> probs(trace.probs.data(), trace.probs.size());
    tree.LeafMasses<T>(probs, mass);
    T first = T(0);
    T second = T(0);
    for (std::size_t i = 0; i < leaves; ++i) {
      const TreeNode& leaf = tree.node(tree.leaf_ids()[i]);
      first += mass[i] * T(leaf.leaf_value) * unit;
      second += mass[i] * T(leaf.leaf_value_sq) * unit * unit;
    }
    const T variance = second - first * first;
    if (variance > T(0)) {
      terms.uncertainty = sqrt(variance);
      if (dlogits != nullptr && spec.alpha2 != 0.0) {
        std::vector<T> leaf_grad(leaves);
        for (std::size_t i = 0; i < leaves; ++i) {
          const TreeNode& leaf = tree.node(tree.leaf_ids()[i]);
          leaf_grad[i] = (T(leaf.leaf_value_sq) * unit * unit -
                          T(2) * first * T(leaf.leaf_value) * unit) /
                         (T(2) * terms.uncertainty);
        }
        std::vector<T> prob_grad(classifiers);
        tree.BackpropLeafGradient<T>(probs, leaf_grad, prob_grad);
        for (int c = 0; c < classifiers; ++c) {
          const T p = trace.probs[c];
          (*dlogits)[c] += T(spec.alpha2) * prob_grad[c] * p * (T(1) - p);
        }
      }
    }
  }

  const T predicted = trace.composed[trace.bin];
  const T diff = predicted - T(cost) * unit;
  terms.regression = diff * diff;
  if (draw != nullptr) {
    draw->setZero(trace.raw.size());
    if (spec.alpha3 != 0.0) {
      Vector<T> row(trace.raw.size());
      ComposeJacobianRow<T>(config.variant, std::span<const T>(trace.raw.data(), trace.raw.size()),
                            config.bins, trace.bin, std::span<T>(row.data(), row.size()));
      *draw = (T(spec.alpha3) * T(2) * diff) * row;
    }
  }
  return terms;
}

template <class T>
T WeightedLoss(const LossTerms<T>& terms, const LossSpec& spec) {
  return T(spec.alpha1) * terms.path_ce + T(spec.alpha2) * terms.uncertainty +
         T(spec.alpha3) * terms.regression;
}

// Full per-record objective without dropout, including the Lipschitz term.
template <class T>
T RecordObjective(const NetParams<T>& params, const NetConfig& config,
                  const UnbalancedCostTree& tree, const CostRecord& record, const LossSpec& spec) {
  ForwardTrace<T> trace;
  RunForward(params, config, record, trace);
  T loss = WeightedLoss(EvaluateLossTerms(tree, config, trace, record.cost, spec), spec);
  if (spec.lipschitz_weight != 0.0) loss += T(spec.lipschitz_weight) * LipschitzPenalty(params);
  return loss;
}

// grad += scale * d(alpha-weighted data loss)/d(params) for one traced record.
// The Lipschitz term is handled by AccumulatePenaltyGradient.
template <class T>
LossTerms<T> AccumulateRecordGradient(const NetParams<T>& params, const NetConfig& config,
                                      const UnbalancedCostTree& tree, const CostRecord& record,
                                      const LossSpec& spec, const ForwardTrace<T>& trace, T scale,
                                      NetParams<T>& grad) {
  Vector<T> dlogits;
  Vector<T> draw;
  const LossTerms<T> terms =
      EvaluateLossTerms(tree, config, trace, record.cost, spec, &dlogits, &draw);
  dlogits *= scale;
  draw *= scale;

  const std::size_t layers = params.trunk.size();
  const Vector<T>& last = layers == 0 ? trace.input : trace.post[layers - 1];
  grad.classifier.weight.noalias() += dlogits * last.transpose();
  grad.classifier.bias += dlogits;
  grad.regression.weight.noalias() += draw * last.transpose();
  grad.regression.bias += draw;

  Vector<T> dh = params.classifier.weight.transpose() * dlogits;
  dh.noalias() += params.regression.weight.transpose() * draw;
  for (std::size_t l = layers; l-- > 0;) {
    if (!trace.dropout_scale.empty()) dh.array() *= trace.dropout_scale[l].array();
    Vector<T> dpre = dh;
    for (Eigen::Index i = 0; i < dpre.size(); ++i) {
      if (!(trace.pre[l][i] > T(0))) dpre[i] = T(0);
    }
    const Vector<T>& below = l == 0 ? trace.input : trace.post[l - 1];
    grad.trunk[l].weight.noalias() += dpre * below.transpose();
    grad.trunk[l].bias += dpre;
    dh.noalias() = params.trunk[l].weight.transpose() * dpre;
  }
  const int width = config.embedding_width;
  for (int f = 0; f < config.sparse_fields; ++f) {
    grad.embeddings[f].col(trace.buckets[f]) += dh.segment(f * width, width);
  }
  return terms;
}

}  // namespace acq
