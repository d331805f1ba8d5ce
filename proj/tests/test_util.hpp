#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "tpf/armath.hpp"
#include "tpf/corpus.hpp"
#include "tpf/state.hpp"

namespace tutil {

inline double rel_gap(double a, double b) {
  return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

inline bool close_abs(double a, double b, double tol) {
  return std::isfinite(a) && std::isfinite(b) && std::abs(a - b) <= tol;
}

inline bool close_rel(double a, double b, double tol) {
  return std::isfinite(a) && std::isfinite(b) && rel_gap(a, b) <= tol;
}

inline bool same_triplets(const std::vector<tpf::Corpus::Triplet>& a,
                          const std::vector<tpf::Corpus::Triplet>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].doc != b[i].doc || a[i].term != b[i].term ||
        a[i].count != b[i].count) {
      return false;
    }
  }
  return true;
}

// Random sparse corpus: every doc gets >= 1 positive count so nothing is
// dropped and doc ids stay aligned with the generating loop.
inline tpf::Corpus random_corpus(int D, int V, int T, std::mt19937_64& rng,
                                 bool with_authors = false,
                                 double density = 0.5,
                                 std::uint32_t max_count = 6) {
  std::vector<tpf::Corpus::Triplet> trips;
  std::vector<int> periods(D), authors;
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::uniform_int_distribution<std::uint32_t> cnt(1, max_count);
  for (int d = 0; d < D; ++d) {
    periods[d] = d % T;
    bool any = false;
    for (int v = 0; v < V; ++v) {
      if (unif(rng) < density) {
        trips.push_back({d, v, cnt(rng)});
        any = true;
      }
    }
    if (!any) trips.push_back({d, d % V, 1});
  }
  std::vector<std::string> vocab;
  for (int v = 0; v < V; ++v) vocab.push_back("w" + std::to_string(v));
  if (with_authors) {
    authors.resize(D);
    for (int d = 0; d < D; ++d) authors[d] = d / T;
  }
  return tpf::Corpus::build(std::move(trips), std::move(periods),
                            std::move(vocab), std::move(authors));
}

// Generic state away from initialisation symmetry: positive gamma blocks,
// spread-out locations, positive-definite h covariances.
inline tpf::VariationalState random_state(const tpf::Corpus& corpus,
                                          const tpf::Hyperparams& hp,
                                          std::mt19937_64& rng) {
  tpf::VariationalState s;
  s.D = corpus.num_docs();
  s.V = corpus.num_terms();
  s.K = hp.K;
  s.T = corpus.num_periods();
  s.delta_mode = hp.delta_mode;
  s.cov = hp.cov;
  std::uniform_real_distribution<double> pos(0.3, 2.5);
  std::uniform_real_distribution<double> sym(-1.0, 1.0);
  auto fill_pos = [&](std::vector<double>& x, std::size_t n) {
    x.resize(n);
    for (auto& e : x) e = pos(rng);
  };
  auto fill_sym = [&](std::vector<double>& x, std::size_t n) {
    x.resize(n);
    for (auto& e : x) e = sym(rng);
  };
  const std::size_t DK = static_cast<std::size_t>(s.D) * s.K;
  const std::size_t KV = static_cast<std::size_t>(s.K) * s.V;
  const std::size_t KVT = KV * s.T;
  fill_pos(s.theta_shp, DK);
  fill_pos(s.theta_rte, DK);
  // the xi and tau shapes are structural: no update ever writes them, so a
  // reachable state always carries the values fixed at initialisation
  s.xi_shp.assign(s.D, hp.a_xi + s.K * hp.a_theta);
  fill_pos(s.xi_rte, s.D);
  s.tau_shp.assign(KV, hp.a_tau + 0.5 * s.T);
  fill_pos(s.tau_rte, KV);
  fill_sym(s.delta_loc, KV);
  fill_pos(s.delta_var, KV);
  if (hp.delta_mode == tpf::DeltaMode::kFixedOne) {
    std::fill(s.delta_loc.begin(), s.delta_loc.end(), 1.0);
    std::fill(s.delta_var.begin(), s.delta_var.end(), 0.0);
  }
  fill_sym(s.mu_loc, KV);
  fill_pos(s.mu_var, KV);
  fill_sym(s.h_loc, KVT);
  if (hp.cov == tpf::CovStructure::kDiagonal) {
    fill_pos(s.h_var, KVT);
  } else {
    const int fsz = tpf::factor_size(s.T);
    s.h_factor.resize(KV * fsz);
    std::uniform_real_distribution<double> ld(-0.5, 0.5);
    std::uniform_real_distribution<double> lo(-0.3, 0.3);
    for (std::size_t b = 0; b < KV; ++b) {
      double* f = s.h_factor.data() + b * fsz;
      for (int t = 0; t < s.T; ++t) f[t] = ld(rng);
      for (int i = s.T; i < fsz; ++i) f[i] = lo(rng);
    }
  }
  s.validate();
  return s;
}

}  // namespace tutil
