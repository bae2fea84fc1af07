#include <benchmark/benchmark.h>

#include <random>
#include <string>
#include <vector>

#include "kar/corpus.hpp"
#include "kar/embedding.hpp"
#include "kar/sparse.hpp"

namespace {

using namespace kar;

std::vector<std::string> make_ids(std::size_t n) {
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < n; ++i) ids.push_back("doc" + std::to_string(i));
  return ids;
}

void BM_DenseTopK(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const std::size_t dim = 256;
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g;
  std::vector<double> matrix(n * dim);
  for (auto& x : matrix) x = g(rng);
  const VectorIndex index(make_ids(n), std::move(matrix), dim);
  std::vector<double> q(dim);
  for (auto& x : q) x = g(rng);
  for (auto _ : state) benchmark::DoNotOptimize(index.top_k(q, 20));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}
BENCHMARK(BM_DenseTopK)->Arg(1000)->Arg(10000)->Arg(100000);

void BM_Bm25TopK(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<int> word(0, 4999), len(20, 120);
  std::vector<std::string> texts;
  for (std::size_t d = 0; d < n; ++d) {
    std::string t;
    for (int i = len(rng); i > 0; --i) t += " w" + std::to_string(word(rng));
    texts.push_back(t);
  }
  const Bm25Index index = Bm25Index::build(make_ids(n), texts);
  for (auto _ : state) benchmark::DoNotOptimize(index.top_k("w1 w17 w300 w4000 w42", 20));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}
BENCHMARK(BM_Bm25TopK)->Arg(1000)->Arg(20000);

void BM_NeighborsWithin(benchmark::State& state) {
  const auto nodes = static_cast<std::size_t>(state.range(0));
  const int hops = static_cast<int>(state.range(1));
  KnowledgeBase::Builder b(DocStructure(std::vector<DocStructure::EntityType>{{"thing", {"name"}}}));
  for (std::size_t i = 0; i < nodes; ++i) b.add_document({"n" + std::to_string(i), "", "thing", "x", {}});
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<std::size_t> pick(0, nodes - 1);
  for (std::size_t e = 0; e < nodes * 3; ++e) {
    b.add_edge("n" + std::to_string(pick(rng)), "rel", "n" + std::to_string(pick(rng)));
  }
  const KnowledgeBase kb = std::move(b).build();
  EntityIndex start = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(kb.neighbors_within(start, hops));
    start = static_cast<EntityIndex>((start + 7919) % nodes);
  }
}
BENCHMARK(BM_NeighborsWithin)->Args({10000, 1})->Args({10000, 2})->Args({10000, 3});

void BM_HashEmbed(benchmark::State& state) {
  const HashEmbedder e(static_cast<std::size_t>(state.range(0)));
  const std::string text =
      "Field readings of coral reef acidification and carbonate chemistry along a fringing reef lagoon.";
  for (auto _ : state) benchmark::DoNotOptimize(e.embed_text(text));
}
BENCHMARK(BM_HashEmbed)->Arg(64)->Arg(768);

}  // namespace
BENCHMARK_MAIN();
