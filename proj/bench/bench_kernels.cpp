// Serial reference vs OpenMP kernels. Set OMP_NUM_THREADS to vary the
// parallel width.

#include <benchmark/benchmark.h>

#include <random>
#include <sstream>

#include "metanode/dataio.hpp"
#include "metanode/field.hpp"
#include "metanode/harness.hpp"
#include "metanode/kernels.hpp"

using namespace metanode;

namespace {

kernels::Execution exec_of(const benchmark::State& state) {
  return state.range(0) == 0 ? kernels::Execution::serial : kernels::Execution::parallel;
}

void BM_EvalFieldBatch(benchmark::State& state) {
  const auto params = field::init_params(field::FieldSpec::paper(), 1);
  const auto rows = static_cast<std::size_t>(state.range(1));
  Matrix states(rows, 23);
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (double& v : states.data()) v = u(rng);
  for (auto _ : state) benchmark::DoNotOptimize(kernels::eval_field_batch(params, states, exec_of(state)));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(rows));
}
BENCHMARK(BM_EvalFieldBatch)->ArgNames({"parallel", "rows"})->ArgsProduct({{0, 1}, {625, 10000}});

void BM_TrainingObjective(benchmark::State& state) {
  const auto schema = dataio::FeatureSchema::limonene();
  std::istringstream in(dataio::fixture_csv(schema, 0));
  const auto ds = dataio::build_dataset(dataio::parse_csv(in, schema), schema);
  const harness::ExperimentConfig cfg;
  const auto obj = harness::make_objective(cfg, ds, 1.0);
  const auto params = field::init_params(obj.spec, 3);
  std::vector<double> grad(params.theta().size());
  for (auto _ : state) benchmark::DoNotOptimize(obj.evaluate(params.theta(), grad, exec_of(state)));
}
BENCHMARK(BM_TrainingObjective)->ArgNames({"parallel"})->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
