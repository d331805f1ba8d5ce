#include "tpf/elbo.hpp"

#include <chrono>
#include <cmath>
#include <string>
#include <vector>

#include "tpf/armath.hpp"
#include "tpf/cavi.hpp"
#include "tpf/errors.hpp"
#include "tpf/numeric.hpp"
#include "tpf/parallel.hpp"

namespace tpf {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;
constexpr double kLog2PiE = 2.8378770664093454836;

struct DocSlots {
  std::vector<double> rec, lp, ent;
};

// Reconstruction, prior and entropy contributions of single documents;
// rate_sums is expected_rate_sums(state).
DocSlots doc_terms(const VariationalState& s, const Corpus& corpus,
                   const Hyperparams& hp, std::span<const int> doc_ids,
                   std::span<const double> rate_sums) {
  const int K = s.K;
  DocSlots slots;
  slots.rec.resize(doc_ids.size());
  slots.lp.resize(doc_ids.size());
  slots.ent.resize(doc_ids.size());
  const double lg_a_theta = log_gamma(hp.a_theta);
  const double xi_const = hp.a_xi * std::log(hp.b_xi) - log_gamma(hp.a_xi);
  parallel_for(doc_ids.size(), [&](std::size_t i) {
    const int d = doc_ids[i];
    const int t = corpus.period_of(d);
    const double exi = s.xi_shp[d] / s.xi_rte[d];
    const double elog_xi = digamma(s.xi_shp[d]) - std::log(s.xi_rte[d]);
    std::vector<double> elog(K);
    double rec = 0.0, lp = 0.0, ent = 0.0;
    for (int k = 0; k < K; ++k) {
      const int idx = d * K + k;
      elog[k] = digamma(s.theta_shp[idx]) - std::log(s.theta_rte[idx]);
      const double mean = s.theta_shp[idx] / s.theta_rte[idx];
      rec -= mean * rate_sums[static_cast<std::size_t>(k) * s.T + t];
      lp += hp.a_theta * elog_xi - lg_a_theta +
            (hp.a_theta - 1.0) * elog[k] - exi * mean;
      ent += entropy_gamma(s.theta_shp[idx], s.theta_rte[idx]);
    }
    lp += xi_const + (hp.a_xi - 1.0) * elog_xi - hp.b_xi * exi;
    ent += entropy_gamma(s.xi_shp[d], s.xi_rte[d]);
    for (int e = corpus.row_begin(d); e < corpus.row_end(d); ++e) {
      const int v = corpus.entry_term(e);
      const double y = static_cast<double>(corpus.entry_count(e));
      double cmax = -HUGE_VAL;
      for (int k = 0; k < K; ++k) {
        cmax = std::max(cmax, elog[k] + s.h_loc[s.hoff(k, v) + t]);
      }
      double z = 0.0;
      for (int k = 0; k < K; ++k) {
        z += std::exp(elog[k] + s.h_loc[s.hoff(k, v) + t] - cmax);
      }
      rec += y * (cmax + std::log(z)) - log_gamma(y + 1.0);
    }
    if (!std::isfinite(rec) || !std::isfinite(lp) || !std::isfinite(ent)) {
      throw numeric_error("non-finite ELBO term at document " +
                          std::to_string(d));
    }
    slots.rec[i] = rec;
    slots.lp[i] = lp;
    slots.ent[i] = ent;
  });
  return slots;
}

struct KvSlots {
  std::vector<double> lp, ent;
};

KvSlots kv_terms(const VariationalState& s, const Hyperparams& hp) {
  const int V = s.V, T = s.T;
  const std::size_t n = s.tau_shp.size();
  KvSlots slots;
  slots.lp.resize(n);
  slots.ent.resize(n);
  const double tau_const = hp.a_tau * std::log(hp.b_tau) - log_gamma(hp.a_tau);
  const double mu_prec = 1.0 / (hp.sigma_mu * hp.sigma_mu);
  const double delta_prec = 1.0 / (hp.sigma_delta * hp.sigma_delta);
  // normalising mass of the truncated prior, used by that mode only
  double trunc_prior_log_z = 0.0;
  if (s.delta_mode == DeltaMode::kTruncated) {
    trunc_prior_log_z =
        std::log(normal_cdf((1.0 - hp.mu_delta) / hp.sigma_delta) -
                 normal_cdf((-1.0 - hp.mu_delta) / hp.sigma_delta));
  }
  parallel_for(n, [&](std::size_t i) {
    const int k = static_cast<int>(i) / V;
    const int v = static_cast<int>(i) % V;
    const double etau = s.tau_shp[i] / s.tau_rte[i];
    const double elog_tau = digamma(s.tau_shp[i]) - std::log(s.tau_rte[i]);
    double lp = tau_const + (hp.a_tau - 1.0) * elog_tau - hp.b_tau * etau;
    double ent = entropy_gamma(s.tau_shp[i], s.tau_rte[i]);

    lp += -0.5 * kLog2Pi - std::log(hp.sigma_mu) -
          0.5 * mu_prec *
              ((s.mu_loc[i] - hp.mu_mu) * (s.mu_loc[i] - hp.mu_mu) +
               s.mu_var[i]);
    ent += entropy_normal(s.mu_var[i]);

    switch (s.delta_mode) {
      case DeltaMode::kFree: {
        const double c = s.delta_loc[i] - hp.mu_delta;
        lp += -0.5 * kLog2Pi - std::log(hp.sigma_delta) -
              0.5 * delta_prec * (c * c + s.delta_var[i]);
        ent += entropy_normal(s.delta_var[i]);
        break;
      }
      case DeltaMode::kFixedOne:
        break;
      case DeltaMode::kTruncated: {
        const auto m = truncated_normal_moments(s.delta_loc[i], s.delta_var[i]);
        const double c = m.mean - hp.mu_delta;
        lp += -0.5 * kLog2Pi - std::log(hp.sigma_delta) - trunc_prior_log_z -
              0.5 * delta_prec * (c * c + m.var);
        ent += m.entropy;
        break;
      }
    }

    const auto dm = s.delta_moments_at(k, v);
    double logdet = 0.0;
    QuadTraces q;
    if (s.cov == CovStructure::kDiagonal) {
      const auto var = s.h_var_block(k, v);
      for (double x : var) logdet += std::log(x);
      q = quad_traces_diag(s.h_loc_block(k, v), var, s.mu_loc[i], s.mu_var[i]);
    } else {
      const auto factor = s.h_factor_block(k, v);
      for (int t = 0; t < T; ++t) logdet += 2.0 * factor[t];
      q = quad_traces_factor(s.h_loc_block(k, v), factor, s.mu_loc[i],
                             s.mu_var[i]);
    }
    const double quad = expected_quadratic_form(q, dm.e1, dm.e2);
    lp += -0.5 * T * kLog2Pi + 0.5 * T * elog_tau - 0.5 * etau * quad;
    ent += 0.5 * logdet + 0.5 * T * kLog2PiE;

    if (!std::isfinite(lp) || !std::isfinite(ent)) {
      throw numeric_error("non-finite ELBO term at block (k=" +
                          std::to_string(k) + ", v=" + std::to_string(v) + ")");
    }
    slots.lp[i] = lp;
    slots.ent[i] = ent;
  });
  return slots;
}

std::vector<int> all_docs(const Corpus& corpus) {
  std::vector<int> ids(corpus.num_docs());
  for (int d = 0; d < corpus.num_docs(); ++d) ids[d] = d;
  return ids;
}

}  // namespace

ElboReport elbo_components(const VariationalState& state, const Corpus& corpus,
                           const Hyperparams& hp, bool with_criteria) {
  const auto start = std::chrono::steady_clock::now();
  const auto ids = all_docs(corpus);
  const auto rate_sums = expected_rate_sums(state);
  const auto docs = doc_terms(state, corpus, hp, ids, rate_sums);
  const auto kv = kv_terms(state, hp);
  ElboReport r;
  r.reconstruction = pairwise_sum(docs.rec);
  r.log_prior = pairwise_sum(docs.lp) + pairwise_sum(kv.lp);
  r.entropy = pairwise_sum(docs.ent) + pairwise_sum(kv.ent);
  r.elbo = r.reconstruction + r.log_prior + r.entropy;
  if (!std::isfinite(r.elbo)) {
    throw numeric_error("ELBO is not finite");
  }
  if (with_criteria) {
    const double ll = log_lik_at_mean(state, corpus);
    r.vaic = 2.0 * ll - 4.0 * r.reconstruction;
    r.vbic = -2.0 * r.reconstruction - 2.0 * r.entropy;
  }
  r.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();
  return r;
}

double log_lik_at_mean(const VariationalState& state, const Corpus& corpus) {
  const int K = state.K, V = state.V, T = state.T;
  // sum_v exp(h_loc), the full-rate mass per (k, t) at the mean path
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
    const int t = corpus.period_of(d);
    double value = 0.0;
    for (int k = 0; k < K; ++k) {
      value -= state.theta_shp[d * K + k] / state.theta_rte[d * K + k] *
               mean_sums[static_cast<std::size_t>(k) * T + t];
    }
    for (int e = corpus.row_begin(d); e < corpus.row_end(d); ++e) {
      const int v = corpus.entry_term(e);
      const double y = static_cast<double>(corpus.entry_count(e));
      double lam = 0.0;
      for (int k = 0; k < K; ++k) {
        lam += state.theta_shp[d * K + k] / state.theta_rte[d * K + k] *
               std::exp(state.h_loc[state.hoff(k, v) + t]);
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

std::pair<double, double> information_criteria(const VariationalState& state,
                                               const Corpus& corpus,
                                               const Hyperparams& hp) {
  const auto r = elbo_components(state, corpus, hp, true);
  return {*r.vaic, *r.vbic};
}

double approx_elbo(const VariationalState& state, const Corpus& corpus,
                   const Hyperparams& hp, std::span<const int> doc_ids,
                   double scale) {
  const auto rate_sums = expected_rate_sums(state);
  const auto docs = doc_terms(state, corpus, hp, doc_ids, rate_sums);
  const auto kv = kv_terms(state, hp);
  std::vector<double> doc_total(doc_ids.size());
  for (std::size_t i = 0; i < doc_ids.size(); ++i) {
    doc_total[i] = docs.rec[i] + docs.lp[i] + docs.ent[i];
  }
  return scale * pairwise_sum(doc_total) + pairwise_sum(kv.lp) +
         pairwise_sum(kv.ent);
}

}  // namespace tpf
