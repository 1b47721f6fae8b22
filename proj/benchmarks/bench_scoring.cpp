#include <benchmark/benchmark.h>

#include "layerguard/corpus.hpp"
#include "layerguard/scoring.hpp"

namespace {

using namespace layerguard;

std::vector<std::string> host_docs(std::size_t n) {
  HostGenConfig hc;
  hc.count = n;
  hc.seed = 8;
  std::vector<std::string> docs;
  for (const auto& e : gen_hostlogs(hc)) docs.push_back(e.raw);
  return docs;
}

void bm_tfidf_fit(benchmark::State& state) {
  const auto docs = host_docs(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(TfidfVectorizer::fit(docs));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(bm_tfidf_fit)->Arg(5000);

void bm_tfidf_transform(benchmark::State& state) {
  const auto docs = host_docs(5000);
  const auto v = TfidfVectorizer::fit(docs);
  std::size_t i = 0;
  for (auto _ : state) benchmark::DoNotOptimize(v.transform(docs[i++ % docs.size()]));
}
BENCHMARK(bm_tfidf_transform);

}  // namespace
