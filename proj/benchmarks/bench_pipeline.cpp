#include <benchmark/benchmark.h>

#include "layerguard/corpus.hpp"
#include "layerguard/pipeline.hpp"
#include "test_support.hpp"

namespace {

using namespace layerguard;

void bm_static_run_host(benchmark::State& state) {
  PipelineConfig cfg;
  cfg.seed = 9;
  HostGenConfig hc;
  hc.count = 10000;
  hc.seed = 9;
  const std::vector<PreparedLayer> layers{prepare_layer(Layer::host, gen_hostlogs(hc), cfg)};
  layerguard::testing::EchoTruthClient llm(0.9);
  llm.learn(layers[0].eval);
  const Clock clock = [] { return std::int64_t{1700000000}; };
  for (auto _ : state) {
    std::vector<MemoryStore> memories(1);
    benchmark::DoNotOptimize(run_mode(Mode::static_threshold, layers, {}, cfg, memories, llm, clock));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(layers[0].eval.size()));
}
BENCHMARK(bm_static_run_host)->Unit(benchmark::kMillisecond);

}  // namespace
