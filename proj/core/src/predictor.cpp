#include "acq/predictor.hpp"

#include <cmath>
#include <cstring>
#include <random>
#include <string>

namespace acq {

std::string_view VariantName(Variant variant) {
  switch (variant) {
    case Variant::kControl: return "control";
    case Variant::kMonotonic: return "monotonic";
    case Variant::kSubmodular: return "submodular";
  }
  return "unknown";
}

Variant ParseVariant(std::string_view name) {
  if (name == "control") return Variant::kControl;
  if (name == "monotonic") return Variant::kMonotonic;
  if (name == "submodular") return Variant::kSubmodular;
  Fail(ErrorKind::kInvalidArgument, "unknown variant '" + std::string(name) + "'");
}

void NetConfig::Validate() const {
  Require(sparse_fields >= 0 && dense_dim >= 0, "feature counts must be non-negative");
  Require(vocab >= 1 && embedding_width >= 1, "embedding vocab and width must be positive");
  Require(input_dim() > 0, "network needs at least one input feature");
  for (int width : hidden) Require(width > 0, "hidden widths must be positive");
  Require(classifier_count >= 0, "classifier_count must be non-negative");
  Require(std::isfinite(cost_scale) && cost_scale > 0.0, "cost_scale must be positive");
}

PropertyHeadNet::PropertyHeadNet(NetConfig config, NetParams<double> params)
    : config_(std::move(config)), params_(std::move(params)) {}

PropertyHeadNet PropertyHeadNet::Zeros(NetConfig config) {
  config.Validate();
  NetParams<double> params = ZeroParams<double>(config);
  return PropertyHeadNet(std::move(config), std::move(params));
}

PropertyHeadNet::PropertyHeadNet(NetConfig config, std::uint64_t seed)
    : config_(std::move(config)), params_() {
  config_.Validate();
  params_ = ZeroParams<double>(config_);
  std::mt19937_64 rng(seed);
  auto fill = [&](auto& m, double stddev) {
    std::normal_distribution<double> dist(0.0, stddev);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  };
  for (auto& table : params_.embeddings) fill(table, 0.1);
  for (auto& layer : params_.trunk) {
    fill(layer.weight, std::sqrt(2.0 / static_cast<double>(layer.weight.cols())));
  }
  const double head_scale = 1.0 / std::sqrt(static_cast<double>(config_.trunk_output_dim()));
  fill(params_.classifier.weight, head_scale);
  fill(params_.regression.weight, 0.1 * head_scale);
}

ForwardResult PropertyHeadNet::Forward(const CostRecord& record) const {
  ForwardTrace<double> trace;
  RunForward(params_, config_, record, trace);
  ForwardResult out;
  out.classifier_probs.assign(trace.probs.data(), trace.probs.data() + trace.probs.size());
  out.composed_costs.resize(trace.composed.size());
  for (Eigen::Index i = 0; i < trace.composed.size(); ++i) {
    out.composed_costs[i] = config_.cost_scale * trace.composed[i];
  }
  out.bin = trace.bin;
  out.selected_cost = out.composed_costs[trace.bin];
  return out;
}

namespace {

void CheckTree(const NetConfig& config, const UnbalancedCostTree& tree) {
  if (tree.classifier_count() != config.classifier_count) {
    Fail(ErrorKind::kSchemaMismatch, "network classifier heads do not match the tree");
  }
}

CostRecord WithQuota(const CostRecord& features, int quota) {
  CostRecord probe = features;
  probe.creative_count = quota;
  return probe;
}

}  // namespace

double PropertyHeadNet::PredictPvalue(const UnbalancedCostTree& tree, const CostRecord& features,
                                      int quota) const {
  CheckTree(config_, tree);
  if (quota < kMinQuota || quota > kMaxQuota) {
    Fail(ErrorKind::kInvalidArgument, "quota " + std::to_string(quota) + " outside [1, 200]");
  }
  const ForwardResult result = Forward(WithQuota(features, quota));
  return std::max(0.0, result.selected_cost);
}

std::vector<double> PropertyHeadNet::PredictPvalues(const UnbalancedCostTree& tree,
                                                    const CostRecord& features,
                                                    std::span<const int> quotas) const {
  CheckTree(config_, tree);
  const ForwardResult result = Forward(WithQuota(features, kMinQuota));
  std::vector<double> out;
  out.reserve(quotas.size());
  for (int quota : quotas) {
    out.push_back(std::max(0.0, result.composed_costs[config_.bins.BinOf(quota)]));
  }
  return out;
}

double PropertyHeadNet::PredictExpectedCost(const UnbalancedCostTree& tree,
                                            const CostRecord& features) const {
  CheckTree(config_, tree);
  const ForwardResult result = Forward(WithQuota(features, kMinQuota));
  return tree.ExpectedCost(tree.LeafDistribution(result.classifier_probs));
}

void CheckFinite(const NetParams<double>& grad) {
  grad.ForEachBlock([](const std::string& name, std::span<const double> block) {
    for (std::size_t i = 0; i < block.size(); ++i) {
      if (!std::isfinite(block[i])) {
        Fail(ErrorKind::kNonFinite,
             "non-finite gradient at " + name + "[" + std::to_string(i) + "]");
      }
    }
  });
}

NetParams<double> Backward(const PropertyHeadNet& net, const UnbalancedCostTree& tree,
                           const CostRecord& record, const LossSpec& spec, double* loss) {
  CheckTree(net.config(), tree);
  spec.Validate();
  NetParams<double> grad = net.params().ZerosLike();
  ForwardTrace<double> trace;
  RunForward(net.params(), net.config(), record, trace);
  const LossTerms<double> terms =
      AccumulateRecordGradient(net.params(), net.config(), tree, record, spec, trace, 1.0, grad);
  double total = WeightedLoss(terms, spec);
  if (spec.lipschitz_weight != 0.0 && !net.params().trunk.empty()) {
    total += spec.lipschitz_weight *
             AccumulatePenaltyGradient(net.params(), spec.lipschitz_weight, grad);
  }
  if (!std::isfinite(total)) Fail(ErrorKind::kNonFinite, "non-finite loss in backward");
  CheckFinite(grad);
  if (loss != nullptr) *loss = total;
  return grad;
}

std::vector<double> MonotonicCompose(std::span<const double> raw) {
  std::vector<double> out(raw.size());
  ComposeCosts<double>(Variant::kMonotonic, raw, CreativeBinning::Default(), out);
  return out;
}

std::vector<double> SubmodularCompose(std::span<const double> raw, const CreativeBinning& bins) {
  Require(static_cast<int>(raw.size()) == bins.bin_count(), "one raw head per bin expected");
  std::vector<double> out(raw.size());
  ComposeCosts<double>(Variant::kSubmodular, raw, bins, out);
  return out;
}

std::vector<double> SubmodularSlopes(std::span<const double> raw) {
  std::vector<double> slopes(raw.size(), 0.0);
  double slope = 0.0;
  for (std::size_t k = raw.size(); k-- > 1;) {
    slope += raw[k] * raw[k];
    slopes[k] = slope;
  }
  return slopes;
}

double SpectralNorm(const Matrix<double>& m, PowerIterationOptions options) {
  Require(m.size() > 0, "spectral_norm: empty matrix");
  return TopSingularTriplet(m, options).value;
}

double LipschitzPenalty(const PropertyHeadNet& net) {
  Require(!net.params().trunk.empty(), "lipschitz_penalty: network has no trunk layers");
  return LipschitzPenalty<double>(net.params());
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

constexpr char kMagic[4] = {'A', 'C', 'Q', 'M'};
constexpr std::uint32_t kModelVersion = 1;

class ByteWriter {
 public:
  void U32(std::uint32_t v) { Raw(v); }
  void U64(std::uint64_t v) { Raw(v); }
  void I32(std::int32_t v) { Raw(v); }
  void F64(double v) { Raw(v); }
  void Bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    out.insert(out.end(), p, p + n);
  }
  void String(const std::string& s) {
    U32(static_cast<std::uint32_t>(s.size()));
    Bytes(s.data(), s.size());
  }
  std::vector<std::uint8_t> out;

 private:
  template <class V>
  void Raw(V v) {
    // Little-endian regardless of host order.
    std::uint8_t buf[sizeof(V)];
    std::uint64_t bits = 0;
    std::memcpy(&bits, &v, sizeof(V));
    for (std::size_t i = 0; i < sizeof(V); ++i) buf[i] = static_cast<std::uint8_t>(bits >> (8 * i));
    Bytes(buf, sizeof(V));
  }
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> in) : in_(in) {}
  std::uint32_t U32() { return Raw<std::uint32_t>(); }
  std::uint64_t U64() { return Raw<std::uint64_t>(); }
  std::int32_t I32() { return Raw<std::int32_t>(); }
  double F64() { return Raw<double>(); }
  void Bytes(void* data, std::size_t n) {
    Need(n);
    std::memcpy(data, in_.data() + pos_, n);
    pos_ += n;
  }
  std::string String() {
    const std::uint32_t n = U32();
    std::string s(n, '\0');
    Bytes(s.data(), n);
    return s;
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  void Need(std::size_t n) const {
    if (pos_ + n > in_.size()) Fail(ErrorKind::kSchemaMismatch, "model file truncated");
  }
  template <class V>
  V Raw() {
    Need(sizeof(V));
    std::uint64_t bits = 0;
    for (std::size_t i = 0; i < sizeof(V); ++i) {
      bits |= static_cast<std::uint64_t>(in_[pos_ + i]) << (8 * i);
    }
    pos_ += sizeof(V);
    V v;
    std::memcpy(&v, &bits, sizeof(V));
    return v;
  }
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> PropertyHeadNet::Serialize(std::uint64_t tree_checksum) const {
  ByteWriter w;
  w.Bytes(kMagic, sizeof(kMagic));
  w.U32(kModelVersion);
  w.U64(tree_checksum);
  w.String(std::string(VariantName(config_.variant)));
  w.I32(config_.sparse_fields);
  w.I32(config_.vocab);
  w.I32(config_.embedding_width);
  w.I32(config_.dense_dim);
  w.U32(static_cast<std::uint32_t>(config_.hidden.size()));
  for (int width : config_.hidden) w.I32(width);
  w.I32(config_.classifier_count);
  w.U32(static_cast<std::uint32_t>(config_.bins.boundaries().size()));
  for (int b : config_.bins.boundaries()) w.I32(b);
  w.F64(config_.cost_scale);
  params_.ForEachBlock([&](const std::string& name, std::span<const double> block) {
    w.String(name);
    w.U64(block.size());
    for (double v : block) w.F64(v);
  });
  return std::move(w.out);
}

PropertyHeadNet PropertyHeadNet::Deserialize(std::span<const std::uint8_t> bytes,
                                             const UnbalancedCostTree& tree) {
  ByteReader r(bytes);
  char magic[4];
  r.Bytes(magic, sizeof(magic));
  if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    Fail(ErrorKind::kSchemaMismatch, "not an acq model file");
  }
  if (r.U32() != kModelVersion) Fail(ErrorKind::kSchemaMismatch, "unsupported model version");
  if (r.U64() != tree.Checksum()) {
    Fail(ErrorKind::kSchemaMismatch, "model was trained against a different tree");
  }
  NetConfig config;
  config.variant = ParseVariant(r.String());
  config.sparse_fields = r.I32();
  config.vocab = r.I32();
  config.embedding_width = r.I32();
  config.dense_dim = r.I32();
  config.hidden.resize(r.U32());
  for (int& width : config.hidden) width = r.I32();
  config.classifier_count = r.I32();
  std::vector<int> boundaries(r.U32());
  for (int& b : boundaries) b = r.I32();
  config.bins = CreativeBinning(std::move(boundaries));
  config.cost_scale = r.F64();
  config.Validate();
  CheckTree(config, tree);

  NetParams<double> params = ZeroParams<double>(config);
  params.ForEachBlock([&](const std::string& name, std::span<double> block) {
    if (r.String() != name || r.U64() != block.size()) {
      Fail(ErrorKind::kSchemaMismatch, "model block layout mismatch at " + name);
    }
    for (double& v : block) v = r.F64();
  });
  if (!r.done()) Fail(ErrorKind::kSchemaMismatch, "trailing bytes in model file");
  return PropertyHeadNet(std::move(config), std::move(params));
}

}  // namespace acq
