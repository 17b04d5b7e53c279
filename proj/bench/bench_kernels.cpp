// Parallel kernels against their serial reference implementations.
// Run with OMP_NUM_THREADS to vary the thread count of the parallel side.

#include <benchmark/benchmark.h>

#include "bseg/attention.hpp"
#include "bseg/decoder.hpp"
#include "bseg/reference.hpp"
#include "bseg/tensor.hpp"

namespace {

using namespace bseg;

Tensor2D random_tensor(std::size_t r, std::size_t c, Rng rng) {
  Tensor2D t(r, c);
  for (double& v : t.data()) v = rng.normal();
  return t;
}

FeatureMap random_map(std::size_t h, std::size_t w, std::size_t c, Rng rng) {
  FeatureMap m(h, w, c, 16);
  for (double& v : m.data()) v = rng.normal();
  return m;
}

void BM_linear(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Tensor2D x = random_tensor(n, 256, Rng(1, "x"));
  const Linear l = random_linear(256, 256, Rng(1, "w"));
  for (auto _ : state) benchmark::DoNotOptimize(linear(x, l));
  state.SetItemsProcessed(state.iterations() * static_cast<long>(n));
}

void BM_linear_reference(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Tensor2D x = random_tensor(n, 256, Rng(1, "x"));
  const Linear l = random_linear(256, 256, Rng(1, "w"));
  for (auto _ : state) benchmark::DoNotOptimize(reference::matmul_bias(x, l.weight, l.bias));
  state.SetItemsProcessed(state.iterations() * static_cast<long>(n));
}

struct DeformCase {
  Tensor2D queries;
  ReferencePoints refs;
  std::vector<FeatureMap> maps;
  DeformParams params;

  explicit DeformCase(std::size_t n) {
    const std::size_t d = 128;
    queries = random_tensor(n, d, Rng(2, "q"));
    Rng r(2, "refs");
    for (std::size_t i = 0; i < n; ++i) refs.push_back({r.uniform(), r.uniform()});
    maps = {random_map(32, 32, d, Rng(2, "m0")), random_map(16, 16, d, Rng(2, "m1")),
            random_map(8, 8, d, Rng(2, "m2")), random_map(4, 4, d, Rng(2, "m3"))};
    params = DeformParams::random(d, 8, 4, 4, Rng(2, "p"));
  }
};

void BM_deform(benchmark::State& state) {
  const DeformCase c(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(deform_attention(c.queries, c.refs, c.maps, c.params));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_deform_reference(benchmark::State& state) {
  const DeformCase c(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state)
    benchmark::DoNotOptimize(reference::brute_force_deform_oracle(c.queries, c.refs, c.maps, c.params));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

QuerySet mask_queries(std::size_t n, std::size_t d) {
  QuerySet q;
  q.features = random_tensor(n, d, Rng(3, "q"));
  q.active.assign(n, true);
  return q;
}

void BM_masks(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const QuerySet q = mask_queries(n, 128);
  const FeatureMap m = random_map(64, 64, 128, Rng(3, "m"));
  for (auto _ : state) benchmark::DoNotOptimize(predict_masks(q, m));
  state.SetItemsProcessed(state.iterations() * static_cast<long>(n));
}

void BM_masks_reference(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const QuerySet q = mask_queries(n, 128);
  const FeatureMap m = random_map(64, 64, 128, Rng(3, "m"));
  for (auto _ : state) {
    for (std::size_t i = 0; i < n; ++i) benchmark::DoNotOptimize(reference::mask_logits(q.features.row(i), m));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long>(n));
}

void BM_group_norm(benchmark::State& state) {
  const Tensor2D x = random_tensor(static_cast<std::size_t>(state.range(0)), 256, Rng(4, "x"));
  const NormAffine id = NormAffine::identity(256);
  for (auto _ : state) benchmark::DoNotOptimize(group_norm(x, 32, kNormEps, id));
}

void BM_group_norm_reference(benchmark::State& state) {
  const Tensor2D x = random_tensor(static_cast<std::size_t>(state.range(0)), 256, Rng(4, "x"));
  const NormAffine id = NormAffine::identity(256);
  for (auto _ : state) benchmark::DoNotOptimize(reference::group_norm(x, 32, kNormEps, id.gain, id.shift));
}

}  // namespace

BENCHMARK(BM_linear)->Arg(300)->Arg(2500);
BENCHMARK(BM_linear_reference)->Arg(300)->Arg(2500);
BENCHMARK(BM_deform)->Arg(300)->Arg(1024);
BENCHMARK(BM_deform_reference)->Arg(300)->Arg(1024);
BENCHMARK(BM_masks)->Arg(64)->Arg(300);
BENCHMARK(BM_masks_reference)->Arg(64)->Arg(300);
BENCHMARK(BM_group_norm)->Arg(2500);
BENCHMARK(BM_group_norm_reference)->Arg(2500);

BENCHMARK_MAIN();
