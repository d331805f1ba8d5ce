// Micro-benchmarks for the hot paths: responsibilities, document updates,
// path gradients, bound evaluation and the deterministic reduction.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "tpf/advi.hpp"
#include "tpf/cavi.hpp"
#include "tpf/corpus.hpp"
#include "tpf/elbo.hpp"
#include "tpf/numeric.hpp"
#include "tpf/parallel.hpp"
#include "tpf/state.hpp"
#include "tpf/synthgen.hpp"

namespace {

struct Instance {
  tpf::Corpus corpus;
  tpf::Hyperparams hp;
  tpf::VariationalState state;
  tpf::Batch batch;
};

Instance make_instance(int A, int V, int K, int T,
                       tpf::CovStructure cov = tpf::CovStructure::kDiagonal) {
  tpf::SynthConfig cfg;
  cfg.A = A;
  cfg.V = V;
  cfg.K = std::min(K, 6);
  cfg.T = T;
  cfg.tau = 10.0;
  cfg.seed = 3;
  auto corpus = tpf::simulate(cfg).first;
  tpf::Hyperparams hp;
  hp.K = K;
  hp.cov = cov;
  std::mt19937_64 rng(5);
  auto state = tpf::init_state(corpus, hp, rng);
  tpf::Batch batch;
  for (int d = 0; d < corpus.num_docs(); ++d) batch.doc_ids.push_back(d);
  batch.scale = 1.0;
  return {std::move(corpus), hp, std::move(state), std::move(batch)};
}

void bm_responsibilities(benchmark::State& bs) {
  auto inst = make_instance(50, 150, 8, 5);
  for (auto _ : bs) {
    auto aux = tpf::aux_proportions(inst.state, inst.corpus,
                                    inst.batch.doc_ids);
    benchmark::DoNotOptimize(aux.probs.data());
  }
}
BENCHMARK(bm_responsibilities);

void bm_document_update(benchmark::State& bs) {
  auto inst = make_instance(50, 150, 8, 5);
  const auto rate_sums = tpf::expected_rate_sums(inst.state);
  for (auto _ : bs) {
    tpf::update_theta_xi(inst.state, inst.corpus, inst.hp,
                         inst.batch.doc_ids, rate_sums);
    benchmark::DoNotOptimize(inst.state.theta_shp.data());
  }
}
BENCHMARK(bm_document_update);

void bm_path_gradient_diagonal(benchmark::State& bs) {
  auto inst = make_instance(50, 150, 8, 5);
  for (auto _ : bs) {
    auto grad = tpf::h_gradient(inst.state, inst.corpus, inst.batch);
    benchmark::DoNotOptimize(grad.loc.data());
  }
}
BENCHMARK(bm_path_gradient_diagonal);

void bm_path_gradient_general(benchmark::State& bs) {
  auto inst = make_instance(50, 150, 8, 5, tpf::CovStructure::kGeneral);
  for (auto _ : bs) {
    auto grad = tpf::h_gradient(inst.state, inst.corpus, inst.batch);
    benchmark::DoNotOptimize(grad.cov.data());
  }
}
BENCHMARK(bm_path_gradient_general);

void bm_exact_bound(benchmark::State& bs) {
  auto inst = make_instance(50, 150, 8, 5);
  for (auto _ : bs) {
    auto r = tpf::elbo_components(inst.state, inst.corpus, inst.hp, false);
    benchmark::DoNotOptimize(r.elbo);
  }
}
BENCHMARK(bm_exact_bound);

void bm_pairwise_sum(benchmark::State& bs) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  std::vector<double> xs(1 << 20);
  for (auto& x : xs) x = unif(rng);
  for (auto _ : bs) {
    benchmark::DoNotOptimize(tpf::pairwise_sum(xs));
  }
}
BENCHMARK(bm_pairwise_sum);

}  // namespace

BENCHMARK_MAIN();
