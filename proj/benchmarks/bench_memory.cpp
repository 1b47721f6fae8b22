#include <benchmark/benchmark.h>

#include <random>

#include "layerguard/memory.hpp"

namespace {

using namespace layerguard;

std::vector<double> random_unit(std::mt19937_64& gen, std::size_t dims) {
  std::normal_distribution<double> n;
  std::vector<double> v(dims);
  double norm = 0;
  for (auto& x : v) {
    x = n(gen);
    norm += x * x;
  }
  for (auto& x : v) x /= std::sqrt(norm);
  return v;
}

void bm_memory_query(benchmark::State& state) {
  const auto records = static_cast<std::size_t>(state.range(0));
  const std::size_t dims = 256;
  std::mt19937_64 gen(3);
  MemoryStore store(dims);
  for (std::size_t i = 0; i < records; ++i) {
    store.insert({.id = "r" + std::to_string(i), .layer = Layer::host, .vector = random_unit(gen, dims)});
  }
  const auto q = random_unit(gen, dims);
  for (auto _ : state) benchmark::DoNotOptimize(store.query(q, 5));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(records));
}
BENCHMARK(bm_memory_query)->Arg(1000)->Arg(10000);

void bm_embed_text(benchmark::State& state) {
  const std::string line =
      "[HIDS] host=web-03 user=svc proc=bash syscalls=open,read,mmap,connect,execve,write,close path=/tmp/.x";
  const EmbeddingConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(embed_text(line, cfg));
}
BENCHMARK(bm_embed_text);

}  // namespace
