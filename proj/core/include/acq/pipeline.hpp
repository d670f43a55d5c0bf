#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "acq/allocator.hpp"
#include "acq/datagen.hpp"
#include "acq/losses.hpp"
#include "acq/metrics.hpp"
#include "acq/net_math.hpp"
#include "acq/train.hpp"

namespace acq {

inline constexpr int kConfigSchemaVersion = 1;

// Relative paths are resolved against the directory of the config file.
struct PipelinePaths {
  std::string dataset = "data/dataset.txt";
  std::string tree = "data/tree.txt";
  std::string model = "data/model.bin";
  std::string pvalues = "data/pvalues.txt";
  std::string instance = "data/instance.txt";
  std::string plan = "data/plan.txt";
  std::string report = "data/train_report.jsonl";
  std::string evaluation = "data/evaluation.jsonl";
  std::string bench = "data/bench.jsonl";
};

struct ModelSettings {
  Variant variant = Variant::kSubmodular;
  std::vector<int> hidden = {64, 64};
  int embedding_width = 8;
  int vocab = 10009;
  int positive_leaves = 8;
  std::uint64_t init_seed = 11;
  // Loss unit; 0 picks the standard deviation of the training costs.
  double cost_scale = 0.0;
};

struct SplitSettings {
  double validation_fraction = 0.2;
  // Also train the MSE-only control net on the same split and report it.
  bool baseline = true;
};

struct AllocatorSettings {
  double tolerance = 1e-9;
  int max_iterations = 200;
  int threads = 1;
  double capacity_fraction = 0.35;
  // "pvalues" builds the instance from the pvalue file; "instance" reads it.
  std::string input = "pvalues";
};

struct EvaluateSettings {
  int days = 3;
};

struct BenchSettings {
  std::vector<std::size_t> sizes = {100000, 200000, 500000};
  std::size_t sample_items = 100000;
  double sample_fraction = 0.2;
  int repeats = 3;
};

struct PipelineConfig {
  int schema_version = kConfigSchemaVersion;
  std::string base_dir = ".";
  PipelinePaths paths;
  SynthConfig synth;
  TrainConfig train;
  SplitSettings split;
  LossSpec loss;
  RewardSpec reward;
  ModelSettings model;
  AllocatorSettings allocator;
  EvaluateSettings evaluate;
  BenchSettings bench;

  // Config text is JSON; every key must already exist in the defaults.
  // Overrides are "dotted.key=value" with JSON values (bare words are
  // strings). A seed replaces both synth.seed and train.seed.
  static PipelineConfig FromJson(std::string_view text, std::string base_dir,
                                 const std::vector<std::string>& overrides = {},
                                 std::optional<std::uint64_t> seed = std::nullopt);
  static PipelineConfig Load(const std::string& path,
                             const std::vector<std::string>& overrides = {},
                             std::optional<std::uint64_t> seed = std::nullopt);
  std::string ToJson() const;

  std::string Resolve(const std::string& path) const;
  NetConfig MakeNetConfig(int classifier_count, Variant variant, double cost_scale = 1.0) const;
};

// model.cost_scale, or the standard deviation of the costs when that is 0.
double ResolveCostScale(const PipelineConfig& config, std::span<const CostRecord> train);

// Records held out for validation, by a seeded hash of the photo id.
bool IsValidation(const CostRecord& record, const PipelineConfig& config);

struct ModelComparison {
  std::vector<MetricsReport> reports;  // ubtm/train, ubtm/validation, then dnn_mse/*
  TrainResult ubtm_training;
  std::optional<TrainResult> baseline_training;
};

// Trains the configured net (scored by the tree expectation) and, when
// enabled, the MSE-only control (scored by its regression output) with the
// same seeds and split.
ModelComparison TrainAndCompare(const PipelineConfig& config,
                                std::span<const CostRecord> records,
                                const UnbalancedCostTree& tree, PropertyHeadNet* trained = nullptr);

struct DayEvaluation {
  int day = 0;
  std::size_t photos = 0;
  std::int64_t capacity = 0;
  double acq_cost = 0.0;
  std::int64_t acq_creatives = 0;
  int rule_quota = 0;
  double rule_cost = 0.0;
  std::int64_t rule_creatives = 0;

  double cost_lift() const { return acq_cost / rule_cost - 1.0; }
  double creative_delta() const {
    return static_cast<double>(acq_creatives - rule_creatives) /
           static_cast<double>(rule_creatives);
  }
};

// Uniform quota closest to `target` total creatives that fits the capacity.
int MatchedUniformQuota(std::size_t photos, std::int64_t target, std::int64_t capacity);

std::vector<DayEvaluation> EvaluateDays(const PipelineConfig& config,
                                        const PropertyHeadNet& net,
                                        const UnbalancedCostTree& tree);

struct BenchRow {
  std::size_t items = 0;
  double seconds = 0.0;  // best of repeats: sampled price plus full decision pass
  double lambda = 0.0;
  std::int64_t slack = 0;  // capacity minus the decision pass usage
  double objective = 0.0;  // exported plan at lambda
};

struct BenchReport {
  std::vector<BenchRow> rows;
  double time_ratio = 0.0;        // max / min seconds across sizes
  double sampled_objective = 0.0;  // price from a sample_fraction sample
  double full_objective = 0.0;     // full bisection, both on the largest size
  double sampled_gap() const { return 1.0 - sampled_objective / full_objective; }
};

BenchReport RunBench(const PipelineConfig& config);

// Stage commands. Each reads its inputs from config.paths and writes its
// outputs there; the return value is a short human-readable summary.
std::string CmdSynth(const PipelineConfig& config);
std::string CmdBuildTree(const PipelineConfig& config);
std::string CmdTrain(const PipelineConfig& config);
std::string CmdPredict(const PipelineConfig& config);
std::string CmdAllocate(const PipelineConfig& config);
std::string CmdEvaluate(const PipelineConfig& config);
std::string CmdBench(const PipelineConfig& config);
// Test-only: runs an exact oracle ("exhaustive", "dp" or "lp") on paths.instance.
std::string CmdOracle(const PipelineConfig& config, std::string_view method);

}  // namespace acq
