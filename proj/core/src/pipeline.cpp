#include "acq/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <limits>
#include <map>
#include <random>
#include <sstream>

#include "json.hpp"

#include "acq/binning.hpp"
#include "acq/error.hpp"
#include "acq/io.hpp"
#include "acq/oracle.hpp"
#include "acq/predictor.hpp"
#include "acq/tree.hpp"

namespace acq {

namespace {

using Json = nlohmann::ordered_json;

Json ToJsonValue(const PipelineConfig& c) {
  Json j;
  j["schema_version"] = c.schema_version;
  j["paths"] = {{"dataset", c.paths.dataset},   {"tree", c.paths.tree},
                {"model", c.paths.model},       {"pvalues", c.paths.pvalues},
                {"instance", c.paths.instance}, {"plan", c.paths.plan},
                {"report", c.paths.report},     {"evaluation", c.paths.evaluation},
                {"bench", c.paths.bench}};
  const SynthConfig& s = c.synth;
  j["synth"] = {{"n_accounts", s.n_accounts},
                {"photos_per_account", s.photos_per_account},
                {"records_per_photo", s.records_per_photo},
                {"zero_rate", s.zero_rate},
                {"tail_mu", s.tail_mu},
                {"tail_sigma", s.tail_sigma},
                {"curve_tau", s.curve_tau},
                {"tau_spread", s.tau_spread},
                {"noise_std", s.noise_std},
                {"cost_cap", s.cost_cap},
                {"activity_strength", s.activity_strength},
                {"activity_saturation_corr", s.activity_saturation_corr},
                {"feature_noise", s.feature_noise},
                {"feature_dim", s.feature_dim},
                {"product_vocab", s.product_vocab},
                {"industry1_vocab", s.industry1_vocab},
                {"industry2_vocab", s.industry2_vocab},
                {"seed", s.seed}};
  const TrainConfig& t = c.train;
  j["train"] = {{"epochs", t.epochs},
                {"batch_size", t.batch_size},
                {"learning_rate", t.learning_rate},
                {"seed", t.seed},
                {"clip_norm", t.clip_norm},
                {"dropout_rate", t.dropout_rate},
                {"eval_batch_size", t.eval_batch_size},
                {"beta1", t.beta1},
                {"beta2", t.beta2},
                {"epsilon", t.epsilon}};
  j["split"] = {{"validation_fraction", c.split.validation_fraction},
                {"baseline", c.split.baseline}};
  j["loss"] = {{"alpha1", c.loss.alpha1},
               {"alpha2", c.loss.alpha2},
               {"alpha3", c.loss.alpha3},
               {"lipschitz_weight", c.loss.lipschitz_weight}};
  j["reward"] = {{"explore_weight", c.reward.explore_weight}};
  j["model"] = {{"variant", std::string(VariantName(c.model.variant))},
                {"hidden", c.model.hidden},
                {"embedding_width", c.model.embedding_width},
                {"vocab", c.model.vocab},
                {"positive_leaves", c.model.positive_leaves},
                {"init_seed", c.model.init_seed},
                {"cost_scale", c.model.cost_scale}};
  j["allocator"] = {{"tolerance", c.allocator.tolerance},
                    {"max_iterations", c.allocator.max_iterations},
                    {"threads", c.allocator.threads},
                    {"capacity_fraction", c.allocator.capacity_fraction},
                    {"input", c.allocator.input}};
  j["evaluate"] = {{"days", c.evaluate.days}};
  j["bench"] = {{"sizes", c.bench.sizes},
                {"sample_items", c.bench.sample_items},
                {"sample_fraction", c.bench.sample_fraction},
                {"repeats", c.bench.repeats}};
  return j;
}

template <class T>
void Get(const Json& j, const char* key, T& out) {
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    Fail(ErrorKind::kInvalidArgument, std::string("config: bad value for '") + key + "': " + e.what());
  }
}

PipelineConfig FromJsonValue(const Json& j) {
  PipelineConfig c;
  Get(j, "schema_version", c.schema_version);
  const Json& p = j.at("paths");
  Get(p, "dataset", c.paths.dataset);
  Get(p, "tree", c.paths.tree);
  Get(p, "model", c.paths.model);
  Get(p, "pvalues", c.paths.pvalues);
  Get(p, "instance", c.paths.instance);
  Get(p, "plan", c.paths.plan);
  Get(p, "report", c.paths.report);
  Get(p, "evaluation", c.paths.evaluation);
  Get(p, "bench", c.paths.bench);
  const Json& s = j.at("synth");
  Get(s, "n_accounts", c.synth.n_accounts);
  Get(s, "photos_per_account", c.synth.photos_per_account);
  Get(s, "records_per_photo", c.synth.records_per_photo);
  Get(s, "zero_rate", c.synth.zero_rate);
  Get(s, "tail_mu", c.synth.tail_mu);
  Get(s, "tail_sigma", c.synth.tail_sigma);
  Get(s, "curve_tau", c.synth.curve_tau);
  Get(s, "tau_spread", c.synth.tau_spread);
  Get(s, "noise_std", c.synth.noise_std);
  Get(s, "cost_cap", c.synth.cost_cap);
  Get(s, "activity_strength", c.synth.activity_strength);
  Get(s, "activity_saturation_corr", c.synth.activity_saturation_corr);
  Get(s, "feature_noise", c.synth.feature_noise);
  Get(s, "feature_dim", c.synth.feature_dim);
  Get(s, "product_vocab", c.synth.product_vocab);
  Get(s, "industry1_vocab", c.synth.industry1_vocab);
  Get(s, "industry2_vocab", c.synth.industry2_vocab);
  Get(s, "seed", c.synth.seed);
  const Json& t = j.at("train");
  Get(t, "epochs", c.train.epochs);
  Get(t, "batch_size", c.train.batch_size);
  Get(t, "learning_rate", c.train.learning_rate);
  Get(t, "seed", c.train.seed);
  Get(t, "clip_norm", c.train.clip_norm);
  Get(t, "dropout_rate", c.train.dropout_rate);
  Get(t, "eval_batch_size", c.train.eval_batch_size);
  Get(t, "beta1", c.train.beta1);
  Get(t, "beta2", c.train.beta2);
  Get(t, "epsilon", c.train.epsilon);
  Get(j.at("split"), "validation_fraction", c.split.validation_fraction);
  Get(j.at("split"), "baseline", c.split.baseline);
  const Json& l = j.at("loss");
  Get(l, "alpha1", c.loss.alpha1);
  Get(l, "alpha2", c.loss.alpha2);
  Get(l, "alpha3", c.loss.alpha3);
  Get(l, "lipschitz_weight", c.loss.lipschitz_weight);
  Get(j.at("reward"), "explore_weight", c.reward.explore_weight);
  const Json& m = j.at("model");
  std::string variant;
  Get(m, "variant", variant);
  c.model.variant = ParseVariant(variant);
  Get(m, "hidden", c.model.hidden);
  Get(m, "embedding_width", c.model.embedding_width);
  Get(m, "vocab", c.model.vocab);
  Get(m, "positive_leaves", c.model.positive_leaves);
  Get(m, "init_seed", c.model.init_seed);
  Get(m, "cost_scale", c.model.cost_scale);
  const Json& a = j.at("allocator");
  Get(a, "tolerance", c.allocator.tolerance);
  Get(a, "max_iterations", c.allocator.max_iterations);
  Get(a, "threads", c.allocator.threads);
  Get(a, "capacity_fraction", c.allocator.capacity_fraction);
  Get(a, "input", c.allocator.input);
  Get(j.at("evaluate"), "days", c.evaluate.days);
  const Json& b = j.at("bench");
  Get(b, "sizes", c.bench.sizes);
  Get(b, "sample_items", c.bench.sample_items);
  Get(b, "sample_fraction", c.bench.sample_fraction);
  Get(b, "repeats", c.bench.repeats);
  return c;
}

bool SameKind(const Json& a, const Json& b) {
  if (a.is_number() && b.is_number()) return !(a.is_number_integer() && b.is_number_float());
  return a.type() == b.type();
}

void MergeStrict(Json& base, const Json& patch, const std::string& prefix) {
  if (!patch.is_object()) Fail(ErrorKind::kInvalidArgument, "config: expected an object at '" + prefix + "'");
  for (const auto& [key, value] : patch.items()) {
    const std::string path = prefix.empty() ? key : prefix + "." + key;
    if (!base.contains(key)) Fail(ErrorKind::kInvalidArgument, "config: unknown key '" + path + "'");
    Json& slot = base[key];
    if (slot.is_object()) {
      MergeStrict(slot, value, path);
    } else if (SameKind(slot, value) ||
               (slot.is_array() && value.is_array())) {
      slot = value;
    } else {
      Fail(ErrorKind::kInvalidArgument, "config: wrong type for '" + path + "'");
    }
  }
}

void ApplyOverride(Json& base, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    Fail(ErrorKind::kInvalidArgument, "override '" + assignment + "' is not key=value");
  }
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  Json value = Json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;

  // Build the nested patch {a: {b: value}} and merge it strictly.
  std::vector<std::string> parts;
  std::stringstream stream(key);
  for (std::string part; std::getline(stream, part, '.');) parts.push_back(part);
  Json patch = value;
  for (auto it = parts.rbegin(); it != parts.rend(); ++it) patch = Json{{*it, patch}};
  MergeStrict(base, patch, "");
}

std::vector<CostRecord> LoadDataset(const PipelineConfig& config) {
  return ParseDataset(io::ReadFile(config.Resolve(config.paths.dataset)));
}

UnbalancedCostTree LoadTree(const PipelineConfig& config) {
  return UnbalancedCostTree::Parse(io::ReadFile(config.Resolve(config.paths.tree)));
}

PropertyHeadNet LoadModel(const PipelineConfig& config, const UnbalancedCostTree& tree) {
  return PropertyHeadNet::Deserialize(io::ReadBinaryFile(config.Resolve(config.paths.model)), tree);
}

void Split(const PipelineConfig& config, std::span<const CostRecord> records,
           std::vector<CostRecord>& train, std::vector<CostRecord>& validation) {
  for (const CostRecord& r : records) {
    (IsValidation(r, config) ? validation : train).push_back(r);
  }
  if (train.empty()) Fail(ErrorKind::kInvalidArgument, "split: no training records");
}

MetricsReport Report(std::string label, std::span<const CostRecord> records,
                     std::span<const double> scores, std::span<const double> predictions) {
  std::vector<double> costs;
  std::vector<std::uint64_t> accounts;
  costs.reserve(records.size());
  accounts.reserve(records.size());
  for (const CostRecord& r : records) {
    costs.push_back(r.cost);
    accounts.push_back(r.account_id);
  }
  return Evaluate(std::move(label), scores, predictions, costs, accounts);
}

BisectOptions MakeBisect(const PipelineConfig& config) {
  BisectOptions options;
  options.tolerance = config.allocator.tolerance;
  options.max_iterations = config.allocator.max_iterations;
  options.parallel.threads = config.allocator.threads;
  return options;
}

double TruthObjective(std::span<const PhotoLatent> photos, std::span<const int> quotas) {
  double total = 0.0;
  for (std::size_t i = 0; i < photos.size(); ++i) total += photos[i].ExpectedCost(quotas[i]);
  return total;
}

std::string JsonLine(const Json& j) { return j.dump() + "\n"; }

}  // namespace

PipelineConfig PipelineConfig::FromJson(std::string_view text, std::string base_dir,
                                        const std::vector<std::string>& overrides,
                                        std::optional<std::uint64_t> seed) {
  Json user = Json::parse(text, nullptr, false);
  if (user.is_discarded()) Fail(ErrorKind::kInvalidArgument, "config: not valid JSON");
  Json merged = ToJsonValue(PipelineConfig{});
  MergeStrict(merged, user, "");
  for (const std::string& o : overrides) ApplyOverride(merged, o);
  PipelineConfig config = FromJsonValue(merged);
  if (config.schema_version != kConfigSchemaVersion) {
    Fail(ErrorKind::kSchemaMismatch, "config: schema_version " +
                                         std::to_string(config.schema_version) + " (expected " +
                                         std::to_string(kConfigSchemaVersion) + ")");
  }
  if (seed) {
    config.synth.seed = *seed;
    config.train.seed = *seed;
  }
  config.base_dir = std::move(base_dir);
  config.synth.Validate();
  config.train.Validate();
  config.loss.Validate();
  Require(config.split.validation_fraction >= 0.0 && config.split.validation_fraction < 1.0,
          "config: split.validation_fraction must be in [0, 1)");
  Require(config.reward.explore_weight >= 0.0, "config: reward.explore_weight must be >= 0");
  Require(config.allocator.capacity_fraction > 0.0 && config.allocator.capacity_fraction <= 1.0,
          "config: allocator.capacity_fraction must be in (0, 1]");
  Require(config.allocator.tolerance > 0.0, "config: allocator.tolerance must be positive");
  Require(config.allocator.threads >= 1, "config: allocator.threads must be >= 1");
  Require(config.allocator.input == "pvalues" || config.allocator.input == "instance",
          "config: allocator.input must be 'pvalues' or 'instance'");
  Require(config.evaluate.days >= 1, "config: evaluate.days must be >= 1");
  Require(config.bench.repeats >= 1 && config.bench.sample_items >= 1 && !config.bench.sizes.empty(),
          "config: bench settings must be positive");
  Require(config.model.positive_leaves >= 1, "config: model.positive_leaves must be >= 1");
  Require(config.model.cost_scale >= 0.0, "config: model.cost_scale must be >= 0");
  return config;
}

PipelineConfig PipelineConfig::Load(const std::string& path,
                                    const std::vector<std::string>& overrides,
                                    std::optional<std::uint64_t> seed) {
  const std::string text = io::ReadFile(path);
  std::string dir = std::filesystem::path(path).parent_path().string();
  if (dir.empty()) dir = ".";
  return FromJson(text, dir, overrides, seed);
}

std::string PipelineConfig::ToJson() const { return ToJsonValue(*this).dump(2) + "\n"; }

std::string PipelineConfig::Resolve(const std::string& path) const {
  const std::filesystem::path p(path);
  if (p.is_absolute()) return path;
  return (std::filesystem::path(base_dir) / p).lexically_normal().string();
}

NetConfig PipelineConfig::MakeNetConfig(int classifier_count, Variant variant,
                                        double cost_scale) const {
  NetConfig net;
  net.sparse_fields = 3;
  net.vocab = model.vocab;
  net.embedding_width = model.embedding_width;
  net.dense_dim = synth.feature_dim;
  net.hidden = model.hidden;
  net.classifier_count = classifier_count;
  net.variant = variant;
  net.cost_scale = cost_scale;
  return net;
}

double ResolveCostScale(const PipelineConfig& config, std::span<const CostRecord> train) {
  if (config.model.cost_scale > 0.0) return config.model.cost_scale;
  double sum = 0.0;
  double sum_sq = 0.0;
  for (const CostRecord& r : train) {
    sum += r.cost;
    sum_sq += r.cost * r.cost;
  }
  const double n = static_cast<double>(train.size());
  const double variance = n > 0.0 ? sum_sq / n - (sum / n) * (sum / n) : 0.0;
  return variance > 0.0 ? std::sqrt(variance) : 1.0;
}

bool IsValidation(const CostRecord& record, const PipelineConfig& config) {
  const std::uint64_t h = DeriveSeed(config.train.seed, 0x5b1177, record.photo_id);
  return static_cast<double>(h >> 11) * 0x1.0p-53 < config.split.validation_fraction;
}

ModelComparison TrainAndCompare(const PipelineConfig& config, std::span<const CostRecord> records,
                                const UnbalancedCostTree& tree, PropertyHeadNet* trained) {
  std::vector<CostRecord> train;
  std::vector<CostRecord> validation;
  Split(config, records, train, validation);

  ModelComparison out;
  const double scale = ResolveCostScale(config, train);
  auto score = [&](const std::string& prefix, const PropertyHeadNet& net, bool tree_score) {
    auto add = [&](const std::string& part, std::span<const CostRecord> rows) {
      if (rows.empty()) return;
      const Predictions p = PredictAll(net, tree, rows, config.train.eval_batch_size);
      out.reports.push_back(Report(prefix + "/" + part, rows,
                                   tree_score ? p.expected_cost : p.selected_cost,
                                   p.selected_cost));
    };
    add("train", train);
    add("validation", validation);
  };

  PropertyHeadNet net(config.MakeNetConfig(tree.classifier_count(), config.model.variant, scale),
                      config.model.init_seed);
  out.ubtm_training = Train(net, tree, train, config.train, config.loss);
  score("ubtm", net, true);

  if (config.split.baseline) {
    PropertyHeadNet control(config.MakeNetConfig(tree.classifier_count(), Variant::kControl, scale),
                            config.model.init_seed);
    out.baseline_training = Train(control, tree, train, config.train, LossSpec::RegressionOnly());
    score("dnn_mse", control, false);
  }
  if (trained) *trained = std::move(net);
  return out;
}

int MatchedUniformQuota(std::size_t photos, std::int64_t target, std::int64_t capacity) {
  Require(photos > 0, "baseline: no photos");
  const auto n = static_cast<std::int64_t>(photos);
  int best = 0;
  std::int64_t best_gap = std::numeric_limits<std::int64_t>::max();
  for (int q = kMinQuota; q <= kMaxQuota; ++q) {
    if (n * q > capacity) break;
    const std::int64_t gap = std::llabs(n * q - target);
    if (gap < best_gap) {
      best_gap = gap;
      best = q;
    }
  }
  if (best == 0) Fail(ErrorKind::kInfeasible, "baseline: even quota 1 exceeds the capacity");
  return best;
}

std::vector<DayEvaluation> EvaluateDays(const PipelineConfig& config, const PropertyHeadNet& net,
                                        const UnbalancedCostTree& tree) {
  const std::vector<int> quotas = net.config().bins.CandidateQuotas();
  std::vector<DayEvaluation> days;
  for (int d = 1; d <= config.evaluate.days; ++d) {
    const std::vector<PhotoLatent> photos = GeneratePhotos(config.synth, static_cast<std::uint64_t>(d));
    std::vector<ItemKey> keys;
    std::vector<double> rewards;
    keys.reserve(photos.size());
    rewards.reserve(photos.size() * quotas.size());
    for (const PhotoLatent& photo : photos) {
      keys.push_back(photo.key);
      for (double pv : net.PredictPvalues(tree, photo.Features(), quotas)) {
        rewards.push_back(AssembleReward(pv, 0.0, config.reward));
      }
    }
    const McKpInstance instance =
        InstanceFromRewards(keys, quotas, rewards, config.allocator.capacity_fraction);
    const AllocationPlan plan = Solve(instance, MakeBisect(config));

    DayEvaluation day;
    day.day = d;
    day.photos = photos.size();
    day.capacity = instance.capacity();
    std::vector<int> acq_quotas(photos.size());
    for (std::size_t i = 0; i < photos.size(); ++i) {
      acq_quotas[i] = instance.candidates(i)[plan.choices[i]].quota;
      day.acq_creatives += acq_quotas[i];
    }
    day.acq_cost = TruthObjective(photos, acq_quotas);
    day.rule_quota = MatchedUniformQuota(photos.size(), day.acq_creatives, day.capacity);
    day.rule_creatives = static_cast<std::int64_t>(photos.size()) * day.rule_quota;
    day.rule_cost = TruthObjective(photos, std::vector<int>(photos.size(), day.rule_quota));
    if (day.acq_creatives > day.capacity || day.rule_creatives > day.capacity) {
      Fail(ErrorKind::kNumerical, "evaluate: plan exceeds capacity on day " + std::to_string(d));
    }
    days.push_back(day);
  }
  return days;
}

BenchReport RunBench(const PipelineConfig& config) {
  const std::vector<int> quotas = CreativeBinning::Default().CandidateQuotas();
  const BisectOptions options = MakeBisect(config);
  BenchReport report;
  for (std::size_t items : config.bench.sizes) {
    SynthConfig synth = config.synth;
    synth.photos_per_account = 100;
    synth.n_accounts = static_cast<int>((items + 99) / 100);
    std::vector<PhotoLatent> photos = GeneratePhotos(synth, 1000);
    photos.resize(items);
    const McKpInstance instance = InstanceFromTruth(photos, quotas, config.allocator.capacity_fraction);

    BenchRow row;
    row.items = items;
    row.seconds = std::numeric_limits<double>::infinity();
    // Timed: the sampled price plus one decision pass over every item. Plan
    // export (repair and upgrade) is not part of the solver time.
    for (int r = 0; r < config.bench.repeats; ++r) {
      const auto start = std::chrono::steady_clock::now();
      row.lambda = EstimateLambdaBySampleSize(instance, config.bench.sample_items,
                                              options.tolerance, synth.seed);
      const std::int64_t slack = GOfLambda(instance, row.lambda, options.parallel);
      const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start;
      row.seconds = std::min(row.seconds, elapsed.count());
      row.slack = -slack;
    }
    row.objective = PlanAtLambda(instance, row.lambda, options.parallel).objective;
    report.rows.push_back(row);

    if (items == *std::max_element(config.bench.sizes.begin(), config.bench.sizes.end())) {
      const double lambda =
          EstimateLambdaBySampling(instance, config.bench.sample_fraction, options.tolerance, synth.seed);
      report.sampled_objective = PlanAtLambda(instance, lambda, options.parallel).objective;
      report.full_objective = Solve(instance, options).objective;
    }
  }
  double lo = std::numeric_limits<double>::infinity();
  double hi = 0.0;
  for (const BenchRow& row : report.rows) {
    lo = std::min(lo, row.seconds);
    hi = std::max(hi, row.seconds);
  }
  report.time_ratio = hi / lo;
  return report;
}

std::string CmdSynth(const PipelineConfig& config) {
  const SynthDataset data = GenerateDataset(config.synth);
  io::WriteFile(config.Resolve(config.paths.dataset), SerializeDataset(config.synth, data.records));
  std::size_t positives = 0;
  for (const CostRecord& r : data.records) positives += r.cost > 0.0;
  std::ostringstream out;
  out << "synth: " << data.records.size() << " records, " << positives << " positive -> "
      << config.Resolve(config.paths.dataset);
  return out.str();
}

std::string CmdBuildTree(const PipelineConfig& config) {
  const std::vector<CostRecord> records = LoadDataset(config);
  std::vector<double> costs;
  for (const CostRecord& r : records) {
    if (!IsValidation(r, config)) costs.push_back(r.cost);
  }
  const UnbalancedCostTree tree = UnbalancedCostTree::Build(costs, config.model.positive_leaves);
  io::WriteFile(config.Resolve(config.paths.tree), tree.Serialize());
  std::ostringstream out;
  out << "build-tree: " << tree.leaf_count() << " leaves, " << tree.classifier_count()
      << " classifiers from " << costs.size() << " training costs";
  if (!tree.warning().empty()) out << " (warning: " << tree.warning() << ")";
  return out.str();
}

std::string CmdTrain(const PipelineConfig& config) {
  const std::vector<CostRecord> records = LoadDataset(config);
  const UnbalancedCostTree tree = LoadTree(config);
  PropertyHeadNet net = PropertyHeadNet::Zeros(config.MakeNetConfig(tree.classifier_count(), config.model.variant));
  const ModelComparison result = TrainAndCompare(config, records, tree, &net);
  io::WriteBinaryFile(config.Resolve(config.paths.model), net.Serialize(tree.Checksum()));

  std::string report;
  auto losses = [&](const std::string& label, const TrainResult& r) {
    Json j;
    j["label"] = label;
    j["epoch_losses"] = r.epoch_losses;
    report += JsonLine(j);
  };
  losses("ubtm/loss", result.ubtm_training);
  if (result.baseline_training) losses("dnn_mse/loss", *result.baseline_training);
  std::ostringstream summary;
  summary << "train:";
  for (const MetricsReport& m : result.reports) {
    report += m.ToJsonLine() + "\n";
    if (m.label.ends_with("/validation") && m.auc) {
      summary << ' ' << m.label << " auc=" << io::FormatDouble(*m.auc);
    }
  }
  io::WriteFile(config.Resolve(config.paths.report), report);
  return summary.str();
}

std::string CmdPredict(const PipelineConfig& config) {
  const std::vector<CostRecord> records = LoadDataset(config);
  const UnbalancedCostTree tree = LoadTree(config);
  const PropertyHeadNet net = LoadModel(config, tree);
  const CreativeBinning& bins = net.config().bins;
  const std::vector<int> quotas = bins.CandidateQuotas();

  // Plays and observed cost per (photo, bin) feed the exploration score.
  struct Seen {
    std::size_t first_row = 0;
    std::vector<double> plays;
    std::vector<double> cost;
  };
  std::map<std::pair<std::uint64_t, std::uint64_t>, Seen> photos;
  std::vector<std::pair<std::uint64_t, std::uint64_t>> order;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const CostRecord& r = records[i];
    const auto key = std::make_pair(r.account_id, r.photo_id);
    auto [it, inserted] = photos.try_emplace(key);
    if (inserted) {
      it->second.first_row = i;
      it->second.plays.assign(static_cast<std::size_t>(bins.bin_count()), 0.0);
      it->second.cost.assign(static_cast<std::size_t>(bins.bin_count()), 0.0);
      order.push_back(key);
    }
    const int bin = bins.BinOf(r.creative_count);
    it->second.plays[bin] += 1.0;
    it->second.cost[bin] += r.cost;
  }

  std::ostringstream out;
  out << "# acq-pvalues v1 photos " << order.size() << " quotas " << quotas.size() << '\n';
  out << "account_id photo_id quota pvalue explore_score\n";
  const auto total = static_cast<double>(records.size());
  for (const auto& key : order) {
    const Seen& seen = photos.at(key);
    const std::vector<double> pvalues = net.PredictPvalues(tree, records[seen.first_row], quotas);
    for (std::size_t k = 0; k < quotas.size(); ++k) {
      const int bin = bins.BinOf(quotas[k]);
      const double plays = seen.plays[bin];
      const double mean = plays > 0.0 ? seen.cost[bin] / plays : 0.0;
      out << key.first << ' ' << key.second << ' ' << quotas[k] << ' '
          << io::FormatDouble(pvalues[k]) << ' '
          << io::FormatDouble(UcbExploreScore(mean, total, plays)) << '\n';
    }
  }
  io::WriteFile(config.Resolve(config.paths.pvalues), out.str());
  return "predict: " + std::to_string(order.size()) + " photos x " +
         std::to_string(quotas.size()) + " quotas -> " + config.Resolve(config.paths.pvalues);
}

namespace {

McKpInstance InstanceFromPvalueFile(const PipelineConfig& config) {
  const std::string text = io::ReadFile(config.Resolve(config.paths.pvalues));
  const auto lines = io::SplitLines(text);
  if (lines.empty() || !lines[0].starts_with("# acq-pvalues v1")) {
    Fail(ErrorKind::kSchemaMismatch, "pvalues: unrecognized header");
  }
  McKpInstance instance;
  std::int64_t max_sum = 0;
  ItemKey current{};
  std::vector<Candidate> candidates;
  bool open = false;
  auto flush = [&] {
    if (!open) return;
    int top = 0;
    for (const Candidate& c : candidates) top = std::max(top, c.quota);
    max_sum += top;
    instance.AddItem(current, std::move(candidates));
    candidates.clear();
  };
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto f = io::SplitFields(lines[i]);
    if (f.empty() || f[0] == "account_id" || f[0].starts_with("#")) continue;
    if (f.size() != 5) Fail(ErrorKind::kSchemaMismatch, "pvalues: row " + std::to_string(i) + " has wrong width");
    const ItemKey key{static_cast<std::uint64_t>(io::ParseInt(f[0])),
                      static_cast<std::uint64_t>(io::ParseInt(f[1]))};
    if (!open || !(key == current)) {
      flush();
      current = key;
      open = true;
    }
    candidates.push_back({static_cast<int>(io::ParseInt(f[2])),
                          AssembleReward(io::ParseDouble(f[3]), io::ParseDouble(f[4]), config.reward)});
  }
  flush();
  instance.set_capacity(static_cast<std::int64_t>(
      std::floor(config.allocator.capacity_fraction * static_cast<double>(max_sum))));
  return instance;
}

}  // namespace

std::string CmdAllocate(const PipelineConfig& config) {
  McKpInstance instance;
  if (config.allocator.input == "instance") {
    instance = McKpInstance::Parse(io::ReadFile(config.Resolve(config.paths.instance)));
  } else {
    instance = InstanceFromPvalueFile(config);
    io::WriteFile(config.Resolve(config.paths.instance), instance.Serialize());
  }
  const AllocationPlan plan = Solve(instance, MakeBisect(config));
  io::WriteFile(config.Resolve(config.paths.plan), plan.Serialize(instance));
  std::ostringstream out;
  out << "allocate: " << instance.item_count() << " items, lambda "
      << io::FormatDouble(plan.dual_price) << ", used " << plan.used_capacity << "/"
      << plan.capacity << ", objective " << io::FormatDouble(plan.objective);
  return out.str();
}

std::string CmdEvaluate(const PipelineConfig& config) {
  const UnbalancedCostTree tree = LoadTree(config);
  const PropertyHeadNet net = LoadModel(config, tree);
  const std::vector<DayEvaluation> days = EvaluateDays(config, net, tree);
  std::string report;
  std::ostringstream table;
  table << "day  photos  acq_cost  rule_cost  lift  acq_creatives  rule_creatives  rule_quota\n";
  for (const DayEvaluation& d : days) {
    Json j;
    j["day"] = d.day;
    j["photos"] = d.photos;
    j["capacity"] = d.capacity;
    j["acq_cost"] = d.acq_cost;
    j["acq_creatives"] = d.acq_creatives;
    j["rule_quota"] = d.rule_quota;
    j["rule_cost"] = d.rule_cost;
    j["rule_creatives"] = d.rule_creatives;
    j["cost_lift"] = d.cost_lift();
    j["creative_delta"] = d.creative_delta();
    report += JsonLine(j);
    table << d.day << "  " << d.photos << "  " << io::FormatDouble(d.acq_cost) << "  "
          << io::FormatDouble(d.rule_cost) << "  " << io::FormatDouble(100.0 * d.cost_lift())
          << "%  " << d.acq_creatives << "  " << d.rule_creatives << "  " << d.rule_quota << '\n';
  }
  io::WriteFile(config.Resolve(config.paths.evaluation), report);
  return table.str();
}

std::string CmdBench(const PipelineConfig& config) {
  const BenchReport report = RunBench(config);
  std::string lines;
  std::ostringstream table;
  table << "items  seconds  lambda  objective\n";
  for (const BenchRow& row : report.rows) {
    Json j;
    j["items"] = row.items;
    j["seconds"] = row.seconds;
    j["lambda"] = row.lambda;
    j["slack"] = row.slack;
    j["objective"] = row.objective;
    lines += JsonLine(j);
    table << row.items << "  " << io::FormatDouble(row.seconds) << "  "
          << io::FormatDouble(row.lambda) << "  " << io::FormatDouble(row.objective) << '\n';
  }
  Json summary;
  summary["time_ratio"] = report.time_ratio;
  summary["sampled_objective"] = report.sampled_objective;
  summary["full_objective"] = report.full_objective;
  summary["sampled_gap"] = report.sampled_gap();
  lines += JsonLine(summary);
  io::WriteFile(config.Resolve(config.paths.bench), lines);
  table << "time ratio " << io::FormatDouble(report.time_ratio) << ", sampled gap "
        << io::FormatDouble(report.sampled_gap()) << '\n';
  return table.str();
}

std::string CmdOracle(const PipelineConfig& config, std::string_view method) {
  const McKpInstance instance = McKpInstance::Parse(io::ReadFile(config.Resolve(config.paths.instance)));
  Json j;
  j["method"] = method;
  if (method == "exhaustive") {
    j["objective"] = oracle::ExhaustiveMckp(instance).objective;
  } else if (method == "dp") {
    j["objective"] = oracle::DpMckpExact(instance).objective;
  } else if (method == "lp") {
    const oracle::DualOptimum dual = oracle::LpBreakpointOptimum(instance);
    j["objective"] = dual.value;
    j["lambda"] = dual.lambda;
  } else {
    Fail(ErrorKind::kInvalidArgument, "oracle: unknown method '" + std::string(method) + "'");
  }
  return j.dump();
}

}  // namespace acq
