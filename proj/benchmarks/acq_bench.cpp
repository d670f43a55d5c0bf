#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "acq/allocator.hpp"
#include "acq/datagen.hpp"
#include "acq/pipeline.hpp"
#include "acq/predictor.hpp"
#include "acq/tree.hpp"

namespace {

acq::McKpInstance MakeInstance(std::size_t items) {
  acq::SynthConfig synth;
  synth.photos_per_account = 100;
  synth.n_accounts = static_cast<int>((items + 99) / 100);
  std::vector<acq::PhotoLatent> photos = acq::GeneratePhotos(synth, 1000);
  photos.resize(items);
  const std::vector<int> quotas = acq::CreativeBinning::Default().CandidateQuotas();
  return acq::InstanceFromTruth(photos, quotas, 0.35);
}

void BM_GOfLambda(benchmark::State& state) {
  const acq::McKpInstance instance = MakeInstance(static_cast<std::size_t>(state.range(0)));
  const double lambda = acq::BisectLambda(instance, {});
  for (auto _ : state) benchmark::DoNotOptimize(acq::GOfLambda(instance, lambda));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_GOfLambda)->Arg(100000)->Arg(500000)->Unit(benchmark::kMillisecond);

void BM_FullBisection(benchmark::State& state) {
  const acq::McKpInstance instance = MakeInstance(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(acq::BisectLambda(instance, {}));
}
BENCHMARK(BM_FullBisection)->Arg(100000)->Arg(500000)->Unit(benchmark::kMillisecond);

// Fixed 100k-item sample then one decision pass, as in the bench stage.
void BM_SampledPrice(benchmark::State& state) {
  const acq::McKpInstance instance = MakeInstance(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    const double lambda = acq::EstimateLambdaBySampleSize(instance, 100000, 1e-9, 7);
    benchmark::DoNotOptimize(acq::GOfLambda(instance, lambda));
  }
}
BENCHMARK(BM_SampledPrice)->Arg(100000)->Arg(200000)->Arg(500000)->Unit(benchmark::kMillisecond);

void BM_PlanAtLambda(benchmark::State& state) {
  const acq::McKpInstance instance = MakeInstance(static_cast<std::size_t>(state.range(0)));
  const double lambda = acq::BisectLambda(instance, {});
  for (auto _ : state) benchmark::DoNotOptimize(acq::PlanAtLambda(instance, lambda).objective);
}
BENCHMARK(BM_PlanAtLambda)->Arg(100000)->Unit(benchmark::kMillisecond);

struct NetFixture {
  acq::UnbalancedCostTree tree;
  acq::PropertyHeadNet net;
  std::vector<acq::CostRecord> records;
};

NetFixture MakeNet() {
  acq::PipelineConfig config;
  config.synth.n_accounts = 20;
  const acq::SynthDataset data = acq::GenerateDataset(config.synth);
  std::vector<double> costs;
  for (const acq::CostRecord& r : data.records) costs.push_back(r.cost);
  acq::UnbalancedCostTree tree = acq::UnbalancedCostTree::Build(costs, 8);
  acq::PropertyHeadNet net(
      config.MakeNetConfig(tree.classifier_count(), acq::Variant::kSubmodular, 30.0), 11);
  return {std::move(tree), std::move(net), data.records};
}

void BM_Forward(benchmark::State& state) {
  const NetFixture f = MakeNet();
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(f.net.Forward(f.records[i]).selected_cost);
    i = (i + 1) % f.records.size();
  }
}
BENCHMARK(BM_Forward);

void BM_Backward(benchmark::State& state) {
  const NetFixture f = MakeNet();
  const acq::LossSpec spec;
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(acq::Backward(f.net, f.tree, f.records[i], spec));
    i = (i + 1) % f.records.size();
  }
}
BENCHMARK(BM_Backward);

void BM_PredictPvalues(benchmark::State& state) {
  const NetFixture f = MakeNet();
  const std::vector<int> quotas = f.net.config().bins.CandidateQuotas();
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(f.net.PredictPvalues(f.tree, f.records[i], quotas));
    i = (i + 1) % f.records.size();
  }
}
BENCHMARK(BM_PredictPvalues);

}  // namespace

BENCHMARK_MAIN();
