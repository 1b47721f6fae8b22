#include <benchmark/benchmark.h>

#include <random>

#include "layerguard/qcal.hpp"

namespace {

using namespace layerguard;

void bm_calibrate(benchmark::State& state) {
  std::mt19937_64 gen(4);
  std::uniform_real_distribution<double> u(0.5, 1.0);
  std::vector<ScoredEvent> stream(static_cast<std::size_t>(state.range(0)));
  for (std::size_t i = 0; i < stream.size(); ++i) {
    auto& e = stream[i];
    e.event.id = "e" + std::to_string(i);
    e.event.layer = Layer::host;
    e.confidence = u(gen);
    e.pred_label = static_cast<int>(gen() % 2);
    e.event.truth = e.confidence > 0.7 ? e.pred_label : 1 - e.pred_label;
  }
  const CalibrationConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(calibrate(Layer::host, stream, cfg, 1));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(bm_calibrate)->Arg(5000)->Unit(benchmark::kMillisecond);

}  // namespace
