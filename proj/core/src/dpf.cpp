#include "tpf/dpf.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "tpf/advi.hpp"
#include "tpf/armath.hpp"
#include "tpf/cavi.hpp"
#include "tpf/checkpoint.hpp"
#include "tpf/errors.hpp"
#include "tpf/numeric.hpp"
#include "tpf/parallel.hpp"
#include "tpf/rng.hpp"
#include "train_loop.hpp"

namespace tpf {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;
constexpr double kLog2PiE = 2.8378770664093454836;

void expect_size(const std::vector<double>& x, std::size_t n,
                 const char* name) {
  if (x.size() != n) {
    throw numeric_error(std::string("state block ") + name +
                        " has wrong size");
  }
}

void expect_positive(const std::vector<double>& x, const char* name) {
  for (double e : x) {
    if (!(e > 0.0) || !std::isfinite(e)) {
      throw numeric_error(std::string("state block ") + name +
                          " must be positive and finite");
    }
  }
}

void expect_finite(const std::vector<double>& x, const char* name) {
  for (double e : x) {
    if (!std::isfinite(e)) {
      throw numeric_error(std::string("state block ") + name +
                          " contains a non-finite value");
    }
  }
}

}  // namespace

void DpfState::validate() const {
  const std::size_t akn = static_cast<std::size_t>(A) * K;
  const std::size_t akt = akn * T;
  const std::size_t kvn = static_cast<std::size_t>(K) * V;
  const std::size_t kvt = kvn * T;
  expect_size(g_loc, akt, "g_loc");
  expect_size(g_var, akt, "g_var");
  expect_size(tau_g_shp, akn, "tau_g_shp");
  expect_size(tau_g_rte, akn, "tau_g_rte");
  expect_size(mu_g_loc, akn, "mu_g_loc");
  expect_size(mu_g_var, akn, "mu_g_var");
  expect_size(h_loc, kvt, "h_loc");
  expect_size(h_var, kvt, "h_var");
  expect_size(tau_h_shp, kvn, "tau_h_shp");
  expect_size(tau_h_rte, kvn, "tau_h_rte");
  expect_size(mu_h_loc, kvn, "mu_h_loc");
  expect_size(mu_h_var, kvn, "mu_h_var");
  expect_finite(g_loc, "g_loc");
  expect_positive(g_var, "g_var");
  expect_positive(tau_g_shp, "tau_g_shp");
  expect_positive(tau_g_rte, "tau_g_rte");
  expect_finite(mu_g_loc, "mu_g_loc");
  expect_positive(mu_g_var, "mu_g_var");
  expect_finite(h_loc, "h_loc");
  expect_positive(h_var, "h_var");
  expect_positive(tau_h_shp, "tau_h_shp");
  expect_positive(tau_h_rte, "tau_h_rte");
  expect_finite(mu_h_loc, "mu_h_loc");
  expect_positive(mu_h_var, "mu_h_var");
}

Corpus aggregate_by_author(const Corpus& corpus) {
  if (!corpus.has_authors()) {
    throw usage_error("aggregation needs author ids");
  }
  const int A = corpus.num_authors();
  const int T = corpus.num_periods();
  const int V = corpus.num_terms();
  std::unordered_map<std::uint64_t, std::uint64_t> cells;  // (doc', v) -> y
  for (int d = 0; d < corpus.num_docs(); ++d) {
    const std::uint64_t nd =
        static_cast<std::uint64_t>(corpus.period_of(d)) * A +
        corpus.author_of(d);
    for (int e = corpus.row_begin(d); e < corpus.row_end(d); ++e) {
      cells[nd * V + corpus.entry_term(e)] += corpus.entry_count(e);
    }
  }
  std::vector<Corpus::Triplet> triplets;
  triplets.reserve(cells.size());
  for (const auto& [key, count] : cells) {
    if (count > 0xffffffffull) {
      throw numeric_error("aggregated count overflows the count type");
    }
    triplets.push_back({static_cast<int>(key / V), static_cast<int>(key % V),
                        static_cast<std::uint32_t>(count)});
  }
  std::sort(triplets.begin(), triplets.end(),
            [](const Corpus::Triplet& x, const Corpus::Triplet& y) {
              return x.doc != y.doc ? x.doc < y.doc : x.term < y.term;
            });
  std::vector<int> periods(static_cast<std::size_t>(A) * T);
  std::vector<int> authors(periods.size());
  for (int t = 0; t < T; ++t) {
    for (int a = 0; a < A; ++a) {
      periods[static_cast<std::size_t>(t) * A + a] = t;
      authors[static_cast<std::size_t>(t) * A + a] = a;
    }
  }
  return Corpus::build(std::move(triplets), std::move(periods),
                       corpus.vocabulary(), std::move(authors));
}

namespace {

// The author-intensity model addresses one (author, period) cell per doc.
void check_dpf_corpus(const Corpus& corpus) {
  if (!corpus.has_authors()) {
    throw usage_error("the author-intensity model needs author ids");
  }
  const int A = corpus.num_authors(), T = corpus.num_periods();
  std::vector<char> seen(static_cast<std::size_t>(A) * T, 0);
  for (int d = 0; d < corpus.num_docs(); ++d) {
    char& flag =
        seen[static_cast<std::size_t>(corpus.author_of(d)) * T +
             corpus.period_of(d)];
    if (flag) {
      throw usage_error("author " + std::to_string(corpus.author_of(d)) +
                        " has several documents in period " +
                        std::to_string(corpus.period_of(d)) +
                        "; aggregate them first");
    }
    flag = 1;
  }
}

void check_dims(const DpfState& s, const Corpus& corpus) {
  if (s.A != corpus.num_authors() || s.V != corpus.num_terms() ||
      s.T != corpus.num_periods()) {
    throw usage_error("state and corpus dimensions disagree");
  }
}

// sum_v exp(h_loc + h_var / 2) per (k, t); [k * T + t]
std::vector<double> h_rate_sums(const DpfState& s) {
  const int K = s.K, V = s.V, T = s.T;
  std::vector<double> sums(static_cast<std::size_t>(K) * T, 0.0);
  parallel_for(K, [&](std::size_t k) {
    std::vector<double> acc(T, 0.0);
    for (int v = 0; v < V; ++v) {
      const int off = s.hoff(static_cast<int>(k), v);
      for (int t = 0; t < T; ++t) {
        acc[t] += std::exp(s.h_loc[off + t] + 0.5 * s.h_var[off + t]);
      }
    }
    for (int t = 0; t < T; ++t) sums[k * T + t] = acc[t];
  });
  return sums;
}

// Expected log likelihood of single documents; rate_sums is h_rate_sums.
std::vector<double> doc_rec_slots(const DpfState& s, const Corpus& corpus,
                                  std::span<const int> doc_ids,
                                  std::span<const double> rate_sums) {
  const int K = s.K, T = s.T;
  std::vector<double> slots(doc_ids.size());
  parallel_for(doc_ids.size(), [&](std::size_t i) {
    const int d = doc_ids[i];
    const int a = corpus.author_of(d);
    const int t = corpus.period_of(d);
    double rec = 0.0;
    for (int k = 0; k < K; ++k) {
      const int off = s.goff(a, k);
      rec -= std::exp(s.g_loc[off + t] + 0.5 * s.g_var[off + t]) *
             rate_sums[static_cast<std::size_t>(k) * T + t];
    }
    for (int e = corpus.row_begin(d); e < corpus.row_end(d); ++e) {
      const int v = corpus.entry_term(e);
      const double y = static_cast<double>(corpus.entry_count(e));
      double cmax = -HUGE_VAL;
      for (int k = 0; k < K; ++k) {
        cmax = std::max(cmax, s.g_loc[s.goff(a, k) + t] +
                                  s.h_loc[s.hoff(k, v) + t]);
      }
      double z = 0.0;
      for (int k = 0; k < K; ++k) {
        z += std::exp(s.g_loc[s.goff(a, k) + t] + s.h_loc[s.hoff(k, v) + t] -
                      cmax);
      }
      rec += y * (cmax + std::log(z)) - log_gamma(y + 1.0);
    }
    if (!std::isfinite(rec)) {
      throw numeric_error("non-finite ELBO term at document " +
                          std::to_string(d));
    }
    slots[i] = rec;
  });
  return slots;
}

struct SeqSlots {
  std::vector<double> lp, ent;
};

// Prior and entropy contributions of one family of AR blocks (tau gamma
// block, mu normal block, the path itself); delta is fixed at one.
SeqSlots seq_terms(std::span<const double> loc_all,
                   std::span<const double> var_all,
                   std::span<const double> tau_shp,
                   std::span<const double> tau_rte,
                   std::span<const double> mu_loc,
                   std::span<const double> mu_var, int T,
                   const Hyperparams& hp, const char* side) {
  const std::size_t n = tau_shp.size();
  SeqSlots slots;
  slots.lp.resize(n);
  slots.ent.resize(n);
  const double tau_const = hp.a_tau * std::log(hp.b_tau) - log_gamma(hp.a_tau);
  const double mu_prec = 1.0 / (hp.sigma_mu * hp.sigma_mu);
  parallel_for(n, [&](std::size_t i) {
    const std::size_t off = i * T;
    const double etau = tau_shp[i] / tau_rte[i];
    const double elog_tau = digamma(tau_shp[i]) - std::log(tau_rte[i]);
    double lp = tau_const + (hp.a_tau - 1.0) * elog_tau - hp.b_tau * etau;
    double ent = entropy_gamma(tau_shp[i], tau_rte[i]);

    lp += -0.5 * kLog2Pi - std::log(hp.sigma_mu) -
          0.5 * mu_prec *
              ((mu_loc[i] - hp.mu_mu) * (mu_loc[i] - hp.mu_mu) + mu_var[i]);
    ent += entropy_normal(mu_var[i]);

    const std::span<const double> loc{loc_all.data() + off,
                                      static_cast<std::size_t>(T)};
    const std::span<const double> var{var_all.data() + off,
                                      static_cast<std::size_t>(T)};
    const QuadTraces q = quad_traces_diag(loc, var, mu_loc[i], mu_var[i]);
    const double quad = expected_quadratic_form(q, 1.0, 1.0);
    double logdet = 0.0;
    for (double x : var) logdet += std::log(x);
    lp += -0.5 * T * kLog2Pi + 0.5 * T * elog_tau - 0.5 * etau * quad;
    ent += 0.5 * logdet + 0.5 * T * kLog2PiE;

    if (!std::isfinite(lp) || !std::isfinite(ent)) {
      throw numeric_error(std::string("non-finite ELBO term at ") + side +
                          " block " + std::to_string(i));
    }
    slots.lp[i] = lp;
    slots.ent[i] = ent;
  });
  return slots;
}

SeqSlots g_terms(const DpfState& s, const Hyperparams& hp) {
  return seq_terms(s.g_loc, s.g_var, s.tau_g_shp, s.tau_g_rte, s.mu_g_loc,
                   s.mu_g_var, s.T, hp, "author");
}

SeqSlots h_terms(const DpfState& s, const Hyperparams& hp) {
  return seq_terms(s.h_loc, s.h_var, s.tau_h_shp, s.tau_h_rte, s.mu_h_loc,
                   s.mu_h_var, s.T, hp, "term");
}

std::vector<int> all_docs(const Corpus& corpus) {
  std::vector<int> ids(corpus.num_docs());
  for (int d = 0; d < corpus.num_docs(); ++d) ids[d] = d;
  return ids;
}

}  // namespace

double dpf_reconstruction(const DpfState& state, const Corpus& corpus) {
  check_dims(state, corpus);
  const auto rate_sums = h_rate_sums(state);
  const auto ids = all_docs(corpus);
  return pairwise_sum(doc_rec_slots(state, corpus, ids, rate_sums));
}

double dpf_log_lik_at_mean(const DpfState& state, const Corpus& corpus) {
  check_dims(state, corpus);
  const int K = state.K, V = state.V, T = state.T;
  std::vector<double> mean_sums(static_cast<std::size_t>(K) * T, 0.0);
  parallel_for(K, [&](std::size_t k) {
    std::vector<double> acc(T, 0.0);
    for (int v = 0; v < V; ++v) {
      const int off = state.hoff(static_cast<int>(k), v);
      for (int t = 0; t < T; ++t) acc[t] += std::exp(state.h_loc[off + t]);
    }
    for (int t = 0; t < T; ++t) mean_sums[k * T + t] = acc[t];
  });

  std::vector<double> slots(corpus.num_docs());
  parallel_for(slots.size(), [&](std::size_t i) {
    const int d = static_cast<int>(i);
    const int a = corpus.author_of(d);
    const int t = corpus.period_of(d);
    double value = 0.0;
    for (int k = 0; k < K; ++k) {
      value -= std::exp(state.g_loc[state.goff(a, k) + t]) *
               mean_sums[static_cast<std::size_t>(k) * T + t];
    }
    for (int e = corpus.row_begin(d); e < corpus.row_end(d); ++e) {
      const int v = corpus.entry_term(e);
      const double y = static_cast<double>(corpus.entry_count(e));
      double lam = 0.0;
      for (int k = 0; k < K; ++k) {
        lam += std::exp(state.g_loc[state.goff(a, k) + t] +
                        state.h_loc[state.hoff(k, v) + t]);
      }
      if (!(lam > 0.0)) {
        throw numeric_error("mean rate vanished at document " +
                            std::to_string(d) + ", term " + std::to_string(v) +
                            " with a positive count");
      }
      value += y * std::log(lam) - log_gamma(y + 1.0);
    }
    if (!std::isfinite(value)) {
      throw numeric_error("non-finite log likelihood at document " +
                          std::to_string(d));
    }
    slots[i] = value;
  });
  return pairwise_sum(slots);
}

ElboReport dpf_elbo_components(const DpfState& state, const Corpus& corpus,
                               const Hyperparams& hp, bool with_criteria) {
  const auto start = std::chrono::steady_clock::now();
  check_dims(state, corpus);
  const auto rate_sums = h_rate_sums(state);
  const auto ids = all_docs(corpus);
  const auto rec = doc_rec_slots(state, corpus, ids, rate_sums);
  const auto g = g_terms(state, hp);
  const auto h = h_terms(state, hp);
  ElboReport r;
  r.reconstruction = pairwise_sum(rec);
  r.log_prior = pairwise_sum(g.lp) + pairwise_sum(h.lp);
  r.entropy = pairwise_sum(g.ent) + pairwise_sum(h.ent);
  r.elbo = r.reconstruction + r.log_prior + r.entropy;
  if (!std::isfinite(r.elbo)) {
    throw numeric_error("ELBO is not finite");
  }
  if (with_criteria) {
    const double ll = dpf_log_lik_at_mean(state, corpus);
    r.vaic = 2.0 * ll - 4.0 * r.reconstruction;
    r.vbic = -2.0 * r.reconstruction - 2.0 * r.entropy;
  }
  r.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();
  return r;
}

double dpf_approx_elbo(const DpfState& state, const Corpus& corpus,
                       const Hyperparams& hp, std::span<const int> doc_ids,
                       double scale) {
  check_dims(state, corpus);
  const auto rate_sums = h_rate_sums(state);
  const auto rec = doc_rec_slots(state, corpus, doc_ids, rate_sums);
  const auto g = g_terms(state, hp);
  const auto h = h_terms(state, hp);
  return scale * pairwise_sum(rec) + pairwise_sum(g.lp) + pairwise_sum(g.ent) +
         pairwise_sum(h.lp) + pairwise_sum(h.ent);
}

namespace {

// Batch mask plus the author-side weights sum_{batch docs at t} E exp(g).
struct DpfBatchView {
  std::vector<char> in_batch;        // by doc id
  std::vector<double> rate_weights;  // K x T
};

DpfBatchView make_view(const DpfState& s, const Corpus& corpus,
                       std::span<const int> doc_ids) {
  DpfBatchView view;
  view.in_batch.assign(corpus.num_docs(), 0);
  view.rate_weights.assign(static_cast<std::size_t>(s.K) * s.T, 0.0);
  for (int d : doc_ids) {
    if (view.in_batch[d]) {
      throw usage_error("batch lists document " + std::to_string(d) +
                        " twice");
    }
    view.in_batch[d] = 1;
    const int a = corpus.author_of(d);
    const int t = corpus.period_of(d);
    for (int k = 0; k < s.K; ++k) {
      const int off = s.goff(a, k);
      view.rate_weights[static_cast<std::size_t>(k) * s.T + t] +=
          std::exp(s.g_loc[off + t] + 0.5 * s.g_var[off + t]);
    }
  }
  return view;
}

// Data terms per batch document: the log-sum-exp mass and the expected-rate
// mass, plus the author-side gradient pieces. Documents own disjoint
// (author, period) cells, so the writes never collide.
std::vector<double> doc_pass(const DpfState& s, const Corpus& corpus,
                             std::span<const int> doc_ids,
                             std::span<const double> rate_sums, double scale,
                             DpfGradient* grad) {
  const int K = s.K, T = s.T;
  std::vector<double> slots(doc_ids.size());
  parallel_for(doc_ids.size(), [&](std::size_t i) {
    const int d = doc_ids[i];
    const int a = corpus.author_of(d);
    const int t = corpus.period_of(d);
    std::vector<double> phi(K);
    double acc = 0.0;
    for (int e = corpus.row_begin(d); e < corpus.row_end(d); ++e) {
      const int v = corpus.entry_term(e);
      const double y = static_cast<double>(corpus.entry_count(e));
      double cmax = -HUGE_VAL;
      for (int k = 0; k < K; ++k) {
        phi[k] = s.g_loc[s.goff(a, k) + t] + s.h_loc[s.hoff(k, v) + t];
        if (phi[k] > cmax) cmax = phi[k];
      }
      double z = 0.0;
      for (int k = 0; k < K; ++k) {
        phi[k] = std::exp(phi[k] - cmax);
        z += phi[k];
      }
      acc += y * (cmax + std::log(z));
      if (grad != nullptr) {
        for (int k = 0; k < K; ++k) {
          grad->g_loc[s.goff(a, k) + t] += scale * y * phi[k] / z;
        }
      }
    }
    for (int k = 0; k < K; ++k) {
      const int off = s.goff(a, k);
      const double eg = std::exp(s.g_loc[off + t] + 0.5 * s.g_var[off + t]);
      const double rate =
          eg * rate_sums[static_cast<std::size_t>(k) * T + t];
      acc -= rate;
      if (grad != nullptr) {
        grad->g_loc[off + t] -= scale * rate;
        grad->g_cov[off + t] = -0.5 * scale * rate;  // completed in g_pass
      }
    }
    if (!std::isfinite(acc)) {
      throw numeric_error("non-finite data term at document " +
                          std::to_string(d));
    }
    slots[i] = acc;
  });
  return slots;
}

// Term-side responsibility accumulation over the batch columns.
void h_data_pass(const DpfState& s, const Corpus& corpus,
                 const DpfBatchView& view, double scale, DpfGradient* grad) {
  const int K = s.K, V = s.V, T = s.T;
  parallel_for(V, [&](std::size_t v) {
    std::vector<double> phi(K);
    for (int e = corpus.col_begin(static_cast<int>(v));
         e < corpus.col_end(static_cast<int>(v)); ++e) {
      const int d = corpus.centry_doc(e);
      if (!view.in_batch[d]) continue;
      const int a = corpus.author_of(d);
      const int t = corpus.period_of(d);
      const double y = static_cast<double>(corpus.centry_count(e));
      double cmax = -HUGE_VAL;
      for (int k = 0; k < K; ++k) {
        phi[k] = s.g_loc[s.goff(a, k) + t] +
                 s.h_loc[(static_cast<std::size_t>(k) * V + v) * T + t];
        if (phi[k] > cmax) cmax = phi[k];
      }
      double z = 0.0;
      for (int k = 0; k < K; ++k) {
        phi[k] = std::exp(phi[k] - cmax);
        z += phi[k];
      }
      for (int k = 0; k < K; ++k) {
        grad->h_loc[(static_cast<std::size_t>(k) * V + v) * T + t] +=
            scale * y * phi[k] / z;
      }
    }
  });
}

// AR prior quadratic form and entropy log-determinant per author block;
// finishes the variance gradient started in doc_pass.
std::vector<double> g_pass(const DpfState& s, DpfGradient* grad) {
  const int T = s.T;
  const std::size_t n = s.tau_g_shp.size();
  std::vector<double> slots(n);
  parallel_for(n, [&](std::size_t i) {
    const std::size_t off = i * T;
    const double tau_ratio = s.tau_g_shp[i] / s.tau_g_rte[i];
    const std::span<const double> loc{s.g_loc.data() + off,
                                      static_cast<std::size_t>(T)};
    const std::span<const double> var{s.g_var.data() + off,
                                      static_cast<std::size_t>(T)};
    const QuadTraces q = quad_traces_diag(loc, var, s.mu_g_loc[i],
                                          s.mu_g_var[i]);
    double logdet = 0.0;
    for (double x : var) logdet += std::log(x);
    const double acc =
        -0.5 * tau_ratio * expected_quadratic_form(q, 1.0, 1.0) +
        0.5 * logdet;
    if (!std::isfinite(acc)) {
      throw numeric_error("non-finite objective term at author block " +
                          std::to_string(i));
    }
    slots[i] = acc;
    if (grad == nullptr) return;

    std::vector<double> centered(T), prec_c(T);
    for (int t = 0; t < T; ++t) centered[t] = loc[t] - s.mu_g_loc[i];
    expected_precision_multiply(centered, 1.0, 1.0, prec_c);
    for (int t = 0; t < T; ++t) {
      grad->g_loc[off + t] -= tau_ratio * prec_c[t];
      const double prec_tt = (t + 1 < T) ? 2.0 : 1.0;
      const double dv = grad->g_cov[off + t] - 0.5 * tau_ratio * prec_tt +
                        0.5 / var[t];
      grad->g_cov[off + t] = dv * var[t];  // chain through log-variance
    }
  });
  return slots;
}

// Same for term blocks; both the expected-rate gradient (whose objective
// share sits in the document slots) and the prior pieces.
std::vector<double> h_pass(const DpfState& s, const DpfBatchView& view,
                           double scale, DpfGradient* grad) {
  const int V = s.V, T = s.T;
  const std::size_t n = s.tau_h_shp.size();
  std::vector<double> slots(n);
  parallel_for(n, [&](std::size_t i) {
    const int k = static_cast<int>(i) / V;
    const std::size_t off = i * T;
    const double tau_ratio = s.tau_h_shp[i] / s.tau_h_rte[i];
    const std::span<const double> loc{s.h_loc.data() + off,
                                      static_cast<std::size_t>(T)};
    const std::span<const double> var{s.h_var.data() + off,
                                      static_cast<std::size_t>(T)};
    std::vector<double> dvar;
    if (grad != nullptr) {
      dvar.assign(T, 0.0);
      for (int t = 0; t < T; ++t) {
        const double w =
            view.rate_weights[static_cast<std::size_t>(k) * T + t];
        const double e = std::exp(loc[t] + 0.5 * var[t]);
        grad->h_loc[off + t] -= scale * w * e;
        dvar[t] = -0.5 * scale * w * e;
      }
    }
    const QuadTraces q = quad_traces_diag(loc, var, s.mu_h_loc[i],
                                          s.mu_h_var[i]);
    double logdet = 0.0;
    for (double x : var) logdet += std::log(x);
    const double acc =
        -0.5 * tau_ratio * expected_quadratic_form(q, 1.0, 1.0) +
        0.5 * logdet;
    if (!std::isfinite(acc)) {
      throw numeric_error("non-finite objective term at term block " +
                          std::to_string(i));
    }
    slots[i] = acc;
    if (grad == nullptr) return;

    std::vector<double> centered(T), prec_c(T);
    for (int t = 0; t < T; ++t) centered[t] = loc[t] - s.mu_h_loc[i];
    expected_precision_multiply(centered, 1.0, 1.0, prec_c);
    for (int t = 0; t < T; ++t) {
      grad->h_loc[off + t] -= tau_ratio * prec_c[t];
      const double prec_tt = (t + 1 < T) ? 2.0 : 1.0;
      const double dv = dvar[t] - 0.5 * tau_ratio * prec_tt + 0.5 / var[t];
      grad->h_cov[off + t] = dv * var[t];
    }
  });
  return slots;
}

double run(const DpfState& s, const Corpus& corpus, const Batch& batch,
           DpfGradient* grad) {
  check_dims(s, corpus);
  if (grad != nullptr) {
    grad->g_loc.assign(s.g_loc.size(), 0.0);
    grad->g_cov.assign(s.g_var.size(), 0.0);
    grad->h_loc.assign(s.h_loc.size(), 0.0);
    grad->h_cov.assign(s.h_var.size(), 0.0);
  }
  const DpfBatchView view = make_view(s, corpus, batch.doc_ids);
  const auto rate_sums = h_rate_sums(s);
  const auto doc_slots =
      doc_pass(s, corpus, batch.doc_ids, rate_sums, batch.scale, grad);
  if (grad != nullptr) h_data_pass(s, corpus, view, batch.scale, grad);
  const auto g_slots = g_pass(s, grad);
  const auto h_slots = h_pass(s, view, batch.scale, grad);
  return batch.scale * pairwise_sum(doc_slots) + pairwise_sum(g_slots) +
         pairwise_sum(h_slots);
}

}  // namespace

double dpf_objective(const DpfState& state, const Corpus& corpus,
                     const Batch& batch) {
  return run(state, corpus, batch, nullptr);
}

DpfGradient dpf_gradient(const DpfState& state, const Corpus& corpus,
                         const Batch& batch, double* objective_out) {
  DpfGradient grad;
  const double obj = run(state, corpus, batch, &grad);
  if (objective_out != nullptr) *objective_out = obj;
  return grad;
}

DpfState dpf_init(const Corpus& corpus, const Hyperparams& hp,
                  std::mt19937_64& rng) {
  hp.validate();
  DpfState s;
  s.A = corpus.num_authors();
  s.V = corpus.num_terms();
  s.K = hp.K;
  s.T = corpus.num_periods();
  const std::size_t akn = static_cast<std::size_t>(s.A) * s.K;
  const std::size_t kvn = static_cast<std::size_t>(s.K) * s.V;

  std::normal_distribution<double> level_noise(0.0, 0.1);
  std::normal_distribution<double> path_noise(0.0, 0.01);

  s.tau_g_shp.assign(akn, hp.a_tau + 0.5 * s.T);
  s.tau_g_rte.assign(akn, hp.b_tau);
  s.mu_g_loc.resize(akn);
  for (auto& x : s.mu_g_loc) x = level_noise(rng);
  s.mu_g_var.assign(akn, 1.0);
  s.g_loc.resize(akn * s.T);
  for (std::size_t i = 0; i < akn; ++i) {
    for (int t = 0; t < s.T; ++t) {
      s.g_loc[i * s.T + t] = s.mu_g_loc[i] + path_noise(rng);
    }
  }
  s.g_var.assign(akn * s.T, 1.0);

  s.tau_h_shp.assign(kvn, hp.a_tau + 0.5 * s.T);
  s.tau_h_rte.assign(kvn, hp.b_tau);
  s.mu_h_loc.resize(kvn);
  for (auto& x : s.mu_h_loc) x = level_noise(rng);
  s.mu_h_var.assign(kvn, 1.0);
  s.h_loc.resize(kvn * s.T);
  for (std::size_t i = 0; i < kvn; ++i) {
    for (int t = 0; t < s.T; ++t) {
      s.h_loc[i * s.T + t] = s.mu_h_loc[i] + path_noise(rng);
    }
  }
  s.h_var.assign(kvn * s.T, 1.0);
  return s;
}

namespace {

// Coordinate-optimal targets for one family's tau rates and mu blocks.
std::vector<double> seq_tau_targets(std::span<const double> loc_all,
                                    std::span<const double> var_all,
                                    std::span<const double> mu_loc,
                                    std::span<const double> mu_var, int T,
                                    double b_tau, const char* side) {
  const std::size_t n = mu_loc.size();
  std::vector<double> target(n);
  parallel_for(n, [&](std::size_t i) {
    const std::size_t off = i * T;
    const std::span<const double> loc{loc_all.data() + off,
                                      static_cast<std::size_t>(T)};
    const std::span<const double> var{var_all.data() + off,
                                      static_cast<std::size_t>(T)};
    const QuadTraces q = quad_traces_diag(loc, var, mu_loc[i], mu_var[i]);
    try {
      target[i] = seq::tau_rate_target(expected_quadratic_form(q, 1.0, 1.0),
                                       b_tau);
    } catch (const numeric_error& e) {
      throw numeric_error(std::string(e.what()) + " at " + side + " block " +
                          std::to_string(i));
    }
  });
  return target;
}

std::pair<std::vector<double>, std::vector<double>> seq_mu_targets(
    std::span<const double> loc_all, std::span<const double> tau_shp,
    std::span<const double> tau_rte, int T, const Hyperparams& hp) {
  const std::size_t n = tau_shp.size();
  std::vector<double> loc(n), var(n);
  parallel_for(n, [&](std::size_t i) {
    const std::span<const double> block{loc_all.data() + i * T,
                                        static_cast<std::size_t>(T)};
    const auto t = seq::mu_target(block, tau_shp[i] / tau_rte[i], 1.0, 1.0,
                                  hp.mu_mu, hp.sigma_mu);
    loc[i] = t.loc;
    var[i] = t.var;
  });
  return {std::move(loc), std::move(var)};
}

// One Adam ascent step on a location block plus its log-variance block.
void apply_dpf_adam(std::vector<double>& loc, std::vector<double>& var,
                    const std::vector<double>& grad_loc,
                    const std::vector<double>& grad_cov, AdamState& adam,
                    const AdamConfig& cfg) {
  adam.step += 1;
  adam_step(loc, grad_loc, adam.m_loc, adam.v_loc, adam.step, cfg);
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(adam.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(adam.step));
  for (std::size_t i = 0; i < var.size(); ++i) {
    const double g = grad_cov[i];
    adam.m_cov[i] = cfg.beta1 * adam.m_cov[i] + (1.0 - cfg.beta1) * g;
    adam.v_cov[i] = cfg.beta2 * adam.v_cov[i] + (1.0 - cfg.beta2) * g * g;
    const double w = std::log(var[i]) +
                     cfg.alpha * (adam.m_cov[i] / c1) /
                         (std::sqrt(adam.v_cov[i] / c2) + cfg.eps);
    var[i] = std::exp(w);
  }
}

AdamState zero_adam(std::size_t n) {
  AdamState a;
  a.m_loc.assign(n, 0.0);
  a.v_loc.assign(n, 0.0);
  a.m_cov.assign(n, 0.0);
  a.v_cov.assign(n, 0.0);
  return a;
}

struct DpfModel {
  DpfState state;
  const Corpus& corpus;
  const Hyperparams& hp;
  const FitConfig& cfg;
  AdamState adam_g, adam_h;

  DpfModel(DpfState init, const Corpus& c, const Hyperparams& h,
           const FitConfig& f)
      : state(std::move(init)), corpus(c), hp(h), cfg(f),
        adam_g(zero_adam(state.g_loc.size())),
        adam_h(zero_adam(state.h_loc.size())) {}

  // Both latent families are global here; nothing is document-local.
  void local_update(const Batch&) {}

  void global_update(double rho) {
    blend_global(state.tau_g_rte,
                 seq_tau_targets(state.g_loc, state.g_var, state.mu_g_loc,
                                 state.mu_g_var, state.T, hp.b_tau, "author"),
                 rho);
    {
      auto [loc, var] = seq_mu_targets(state.g_loc, state.tau_g_shp,
                                       state.tau_g_rte, state.T, hp);
      blend_global(state.mu_g_loc, loc, rho);
      blend_global(state.mu_g_var, var, rho);
    }
    blend_global(state.tau_h_rte,
                 seq_tau_targets(state.h_loc, state.h_var, state.mu_h_loc,
                                 state.mu_h_var, state.T, hp.b_tau, "term"),
                 rho);
    {
      auto [loc, var] = seq_mu_targets(state.h_loc, state.tau_h_shp,
                                       state.tau_h_rte, state.T, hp);
      blend_global(state.mu_h_loc, loc, rho);
      blend_global(state.mu_h_var, var, rho);
    }
  }

  double advi_step(const Batch& batch) {
    DpfGradient grad;
    if (!cfg.freeze_h) grad = dpf_gradient(state, corpus, batch);
    const double approx =
        dpf_approx_elbo(state, corpus, hp, batch.doc_ids, batch.scale);
    if (!cfg.freeze_h) {
      apply_dpf_adam(state.g_loc, state.g_var, grad.g_loc, grad.g_cov,
                     adam_g, cfg.adam);
      apply_dpf_adam(state.h_loc, state.h_var, grad.h_loc, grad.h_cov,
                     adam_h, cfg.adam);
    }
    return approx;
  }

  ElboReport evaluate() { return dpf_elbo_components(state, corpus, hp, true); }

  void save_checkpoint(const std::string& path) {
    dpf_checkpoint_save(state, path);
  }
};

}  // namespace

DpfFitResult dpf_fit(const Corpus& corpus, const Hyperparams& hp,
                     const FitConfig& cfg, bool aggregate) {
  hp.validate();
  cfg.validate();
  if (cfg.warm_start_epochs > 0) {
    throw usage_error(
        "warm start is not available for the author-intensity model");
  }
  std::optional<Corpus> owned;
  if (aggregate) owned = aggregate_by_author(corpus);
  const Corpus& c = owned.has_value() ? *owned : corpus;
  check_dpf_corpus(c);
  auto init_rng = substream(cfg.seed, "init");
  DpfModel model(dpf_init(c, hp, init_rng), c, hp, cfg);
  auto batch_rng = substream(cfg.seed, "batching");
  auto trace = detail::run_train_loop(model, c, cfg, batch_rng);
  return {std::move(model.state), std::move(trace)};
}

void dpf_checkpoint_save(const DpfState& state, const std::string& path) {
  detail::BinaryWriter w(path);
  detail::CheckpointHeader h;
  h.model_kind = kModelKindDpf;
  h.delta_mode = static_cast<std::uint32_t>(DeltaMode::kFixedOne);
  h.cov = static_cast<std::uint32_t>(CovStructure::kDiagonal);
  h.v = state.V;
  h.k = state.K;
  h.t = state.T;
  h.a = state.A;
  detail::write_header(w, h);
  w.f64_block(state.g_loc);
  w.f64_block(state.g_var);
  w.f64_block(state.tau_g_shp);
  w.f64_block(state.tau_g_rte);
  w.f64_block(state.mu_g_loc);
  w.f64_block(state.mu_g_var);
  w.f64_block(state.h_loc);
  w.f64_block(state.h_var);
  w.f64_block(state.tau_h_shp);
  w.f64_block(state.tau_h_rte);
  w.f64_block(state.mu_h_loc);
  w.f64_block(state.mu_h_var);
  w.finish();
}

DpfState dpf_checkpoint_load(const std::string& path) {
  detail::BinaryReader r(path);
  const detail::CheckpointHeader h = detail::read_header(r);
  if (h.model_kind != kModelKindDpf) {
    throw io_error("checkpoint " + path + " holds a different model kind");
  }
  DpfState s;
  s.A = static_cast<int>(h.a);
  s.V = static_cast<int>(h.v);
  s.K = static_cast<int>(h.k);
  s.T = static_cast<int>(h.t);
  const std::size_t akn = static_cast<std::size_t>(s.A) * s.K;
  const std::size_t kvn = static_cast<std::size_t>(s.K) * s.V;
  auto read_block = [&r](std::vector<double>& x, std::size_t n) {
    x.resize(n);
    r.f64_block(x);
  };
  read_block(s.g_loc, akn * s.T);
  read_block(s.g_var, akn * s.T);
  read_block(s.tau_g_shp, akn);
  read_block(s.tau_g_rte, akn);
  read_block(s.mu_g_loc, akn);
  read_block(s.mu_g_var, akn);
  read_block(s.h_loc, kvn * s.T);
  read_block(s.h_var, kvn * s.T);
  read_block(s.tau_h_shp, kvn);
  read_block(s.tau_h_rte, kvn);
  read_block(s.mu_h_loc, kvn);
  read_block(s.mu_h_var, kvn);
  r.expect_eof();
  return s;
}

}  // namespace tpf
