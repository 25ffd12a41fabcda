#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "annp/ann_index.hpp"
#include "annp/kernels.hpp"

using namespace annp;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d(0.0, 1.0);
  Matrix m(r, c);
  for (double &v : m.data) v = d(rng);
  return m;
}

void BM_Matmul(benchmark::State &state, bool parallel) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Matrix a = random_matrix(n, n, 1), b = random_matrix(n, n, 2);
  Matrix c;
  for (auto _ : state) {
    if (parallel) kernels::matmul(a, b, c);
    else kernels::serial::matmul(a, b, c);
    benchmark::DoNotOptimize(c.data.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n * n));
}

void BM_Attention(benchmark::State &state, bool parallel) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const std::size_t d = 64, heads = 4;
  const Matrix q = random_matrix(n, d, 1), k = random_matrix(n, d, 2), v = random_matrix(n, d, 3);
  const auto ranges = kernels::chunked_causal_ranges(n, 6);
  Matrix out;
  kernels::AttentionProbs probs;
  for (auto _ : state) {
    if (parallel) kernels::attention_forward(q, k, v, heads, ranges, out, probs);
    else kernels::serial::attention_forward(q, k, v, heads, ranges, out);
    benchmark::DoNotOptimize(out.data.data());
  }
}

void BM_Joint(benchmark::State &state, bool parallel) {
  const auto t = static_cast<std::size_t>(state.range(0));
  const std::size_t u = 24, j = 64, vocab = 41;
  const Matrix a = random_matrix(t, j, 1), l = random_matrix(u + 1, j, 2);
  const Matrix w = random_matrix(j, vocab, 3), b = random_matrix(1, vocab, 4);
  Matrix hidden, logp;
  for (auto _ : state) {
    if (parallel) kernels::joint_forward(a, l, w, b, hidden, logp);
    else kernels::serial::joint_forward(a, l, w, b, hidden, logp);
    benchmark::DoNotOptimize(logp.data.data());
  }
}

void BM_ScoreRows(benchmark::State &state, bool parallel) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Matrix rows = random_matrix(n, 64, 1);
  const Matrix q = random_matrix(1, 64, 2);
  std::vector<double> scores(n);
  for (auto _ : state) {
    if (parallel) kernels::score_rows(rows, q.data, scores);
    else kernels::serial::score_rows(rows, q.data, scores);
    benchmark::DoNotOptimize(scores.data());
  }
}

void BM_AnnQuery(benchmark::State &state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  EmbeddingTable table;
  table.vectors = random_matrix(n, 64, 1);
  for (std::size_t i = 0; i < n; ++i) table.ids.push_back(i);
  const Matrix q = random_matrix(1, 64, 2);
  const AnnIndex index = AnnIndex::build(table, IndexConfig{});
  for (auto _ : state) benchmark::DoNotOptimize(index.query(q.data, 20));
}

void BM_BruteForceQuery(benchmark::State &state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  EmbeddingTable table;
  table.vectors = random_matrix(n, 64, 1);
  for (std::size_t i = 0; i < n; ++i) table.ids.push_back(i);
  const Matrix q = random_matrix(1, 64, 2);
  for (auto _ : state) benchmark::DoNotOptimize(brute_force_query(table, q.data, 20));
}

}  // namespace

BENCHMARK_CAPTURE(BM_Matmul, parallel, true)->Arg(64)->Arg(256);
BENCHMARK_CAPTURE(BM_Matmul, serial, false)->Arg(64)->Arg(256);
BENCHMARK_CAPTURE(BM_Attention, parallel, true)->Arg(64)->Arg(512);
BENCHMARK_CAPTURE(BM_Attention, serial, false)->Arg(64)->Arg(512);
BENCHMARK_CAPTURE(BM_Joint, parallel, true)->Arg(32)->Arg(128);
BENCHMARK_CAPTURE(BM_Joint, serial, false)->Arg(32)->Arg(128);
BENCHMARK_CAPTURE(BM_ScoreRows, parallel, true)->Arg(10000);
BENCHMARK_CAPTURE(BM_ScoreRows, serial, false)->Arg(10000);
BENCHMARK(BM_AnnQuery)->Arg(10000);
BENCHMARK(BM_BruteForceQuery)->Arg(10000);

BENCHMARK_MAIN();
