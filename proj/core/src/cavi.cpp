#include "tpf/cavi.hpp"

#include <cmath>
#include <stdexcept>

#include "tpf/armath.hpp"
#include "tpf/errors.hpp"
#include "tpf/numeric.hpp"
#include "tpf/parallel.hpp"

namespace tpf {

namespace {

// Responsibilities for one stored (d, v) pair, written to phi[0..K).
// Returns the log-sum-exp of the logits (softmax with max shift).
double responsibilities(const VariationalState& s,
                        std::span<const double> elog_theta_row, int v, int t,
                        double* phi) {
  const int K = s.K;
  double cmax = -HUGE_VAL;
  for (int k = 0; k < K; ++k) {
    const double logit = elog_theta_row[k] + s.h_loc[s.hoff(k, v) + t];
    phi[k] = logit;
    if (logit > cmax) cmax = logit;
  }
  double z = 0.0;
  for (int k = 0; k < K; ++k) {
    phi[k] = std::exp(phi[k] - cmax);
    z += phi[k];
  }
  for (int k = 0; k < K; ++k) phi[k] /= z;
  return cmax + std::log(z);
}

void elog_theta_row(const VariationalState& s, int d, std::span<double> out) {
  for (int k = 0; k < s.K; ++k) {
    const int i = d * s.K + k;
    out[k] = digamma(s.theta_shp[i]) - std::log(s.theta_rte[i]);
  }
}

}  // namespace

AuxProportions aux_proportions(const VariationalState& state,
                               const Corpus& corpus,
                               std::span<const int> doc_ids) {
  AuxProportions out;
  out.K = state.K;
  std::size_t entries = 0;
  for (int d : doc_ids) entries += corpus.row_end(d) - corpus.row_begin(d);
  out.probs.resize(entries * state.K);
  std::vector<double> elog(state.K);
  std::size_t row = 0;
  for (int d : doc_ids) {
    elog_theta_row(state, d, elog);
    const int t = corpus.period_of(d);
    for (int i = corpus.row_begin(d); i < corpus.row_end(d); ++i, ++row) {
      responsibilities(state, elog, corpus.entry_term(i), t,
                       out.probs.data() + row * state.K);
    }
  }
  return out;
}

std::vector<double> expected_rate_sums(const VariationalState& state) {
  const int K = state.K, V = state.V, T = state.T;
  std::vector<double> sums(static_cast<std::size_t>(K) * T, 0.0);
  parallel_for(K, [&](std::size_t k) {
    std::vector<double> acc(T, 0.0);
    for (int v = 0; v < V; ++v) {
      const int off = state.hoff(static_cast<int>(k), v);
      for (int t = 0; t < T; ++t) {
        acc[t] += std::exp(state.h_loc[off + t] +
                           0.5 * state.marginal_h_var(static_cast<int>(k), v, t));
      }
    }
    for (int t = 0; t < T; ++t) sums[k * T + t] = acc[t];
  });
  return sums;
}

void update_theta_xi(VariationalState& state, const Corpus& corpus,
                     const Hyperparams& hp, std::span<const int> doc_ids,
                     std::span<const double> rate_sums) {
  const int K = state.K;
  parallel_for(doc_ids.size(), [&](std::size_t i) {
    const int d = doc_ids[i];
    const int t = corpus.period_of(d);
    const double exi = state.xi_shp[d] / state.xi_rte[d];
    std::vector<double> elog(K), phi(K), shp(K, hp.a_theta);
    elog_theta_row(state, d, elog);
    for (int e = corpus.row_begin(d); e < corpus.row_end(d); ++e) {
      responsibilities(state, elog, corpus.entry_term(e), t, phi.data());
      const double y = static_cast<double>(corpus.entry_count(e));
      for (int k = 0; k < K; ++k) shp[k] += y * phi[k];
    }
    double mean_sum = 0.0;
    for (int k = 0; k < K; ++k) {
      const double rte = exi + rate_sums[static_cast<std::size_t>(k) * state.T + t];
      state.theta_shp[d * K + k] = shp[k];
      state.theta_rte[d * K + k] = rte;
      mean_sum += shp[k] / rte;
    }
    state.xi_shp[d] = hp.a_xi + K * hp.a_theta;
    state.xi_rte[d] = hp.b_xi + mean_sum;
  });
}

namespace seq {

double tau_rate_target(double quad, double b_tau) {
  const double value = b_tau + 0.5 * quad;
  if (!(value > 0.0)) {
    throw numeric_error("tau rate target is not positive");
  }
  return value;
}

NormalTarget delta_target(double tr0, double tr1, double tau_ratio,
                          double mu_delta, double sigma_delta) {
  const double prior_prec = 1.0 / (sigma_delta * sigma_delta);
  NormalTarget t;
  t.var = 1.0 / (prior_prec + tau_ratio * tr0);
  t.loc = t.var * (mu_delta * prior_prec + tau_ratio * tr1);
  return t;
}

NormalTarget mu_target(std::span<const double> h_loc, double tau_ratio,
                       double e1, double e2, double mu_mu, double sigma_mu) {
  const int T = static_cast<int>(h_loc.size());
  const double prior_prec = 1.0 / (sigma_mu * sigma_mu);
  double head = 0.0;  // sum over all but the last period
  for (int t = 0; t + 1 < T; ++t) head += h_loc[t];
  double pairs = 0.0;
  for (int t = 1; t < T; ++t) pairs += h_loc[t - 1] + h_loc[t];
  const double weighted = (1.0 + e2) * head + h_loc[T - 1] - e1 * pairs;
  NormalTarget t;
  t.var = 1.0 / (prior_prec + tau_ratio * expected_precision_ones(e1, e2, T));
  t.loc = t.var * (mu_mu * prior_prec + tau_ratio * weighted);
  return t;
}

}  // namespace seq

namespace {

QuadTraces state_quad_traces(const VariationalState& state, int k, int v) {
  const int i = state.kv(k, v);
  return state.cov == CovStructure::kDiagonal
             ? quad_traces_diag(state.h_loc_block(k, v),
                                state.h_var_block(k, v), state.mu_loc[i],
                                state.mu_var[i])
             : quad_traces_factor(state.h_loc_block(k, v),
                                  state.h_factor_block(k, v), state.mu_loc[i],
                                  state.mu_var[i]);
}

}  // namespace

std::vector<double> update_tau_rate(const VariationalState& state,
                                    const Hyperparams& hp) {
  const int V = state.V;
  std::vector<double> target(state.tau_shp.size());
  parallel_for(target.size(), [&](std::size_t i) {
    const int k = static_cast<int>(i) / V;
    const int v = static_cast<int>(i) % V;
    const auto dm = state.delta_moments_at(k, v);
    const QuadTraces q = state_quad_traces(state, k, v);
    try {
      target[i] = seq::tau_rate_target(
          expected_quadratic_form(q, dm.e1, dm.e2), hp.b_tau);
    } catch (const numeric_error& e) {
      throw numeric_error(std::string(e.what()) + " at block (k=" +
                          std::to_string(k) + ", v=" + std::to_string(v) + ")");
    }
  });
  return target;
}

std::pair<std::vector<double>, std::vector<double>> update_delta(
    const VariationalState& state, const Hyperparams& hp) {
  if (state.delta_mode == DeltaMode::kFixedOne) {
    throw std::logic_error("update_delta called with delta fixed at one");
  }
  const int V = state.V;
  const std::size_t n = state.delta_loc.size();
  std::vector<double> loc(n), var(n);
  parallel_for(n, [&](std::size_t i) {
    const int k = static_cast<int>(i) / V;
    const int v = static_cast<int>(i) % V;
    const double tau_ratio = state.tau_shp[i] / state.tau_rte[i];
    const QuadTraces q = state_quad_traces(state, k, v);
    const auto t = seq::delta_target(q.tr0, q.tr1, tau_ratio, hp.mu_delta,
                                     hp.sigma_delta);
    loc[i] = t.loc;
    var[i] = t.var;
  });
  return {std::move(loc), std::move(var)};
}

std::pair<std::vector<double>, std::vector<double>> update_mu(
    const VariationalState& state, const Hyperparams& hp) {
  const int V = state.V;
  const std::size_t n = state.mu_loc.size();
  std::vector<double> loc(n), var(n);
  parallel_for(n, [&](std::size_t i) {
    const int k = static_cast<int>(i) / V;
    const int v = static_cast<int>(i) % V;
    const auto dm = state.delta_moments_at(k, v);
    const double tau_ratio = state.tau_shp[i] / state.tau_rte[i];
    const auto t = seq::mu_target(state.h_loc_block(k, v), tau_ratio, dm.e1,
                                  dm.e2, hp.mu_mu, hp.sigma_mu);
    loc[i] = t.loc;
    var[i] = t.var;
  });
  return {std::move(loc), std::move(var)};
}

void blend_global(std::span<double> old_values, std::span<const double> target,
                  double rho) {
  if (old_values.size() != target.size()) {
    throw usage_error("blend_global: size mismatch");
  }
  if (!(rho > 0.0 && rho <= 1.0)) {
    throw usage_error("blend_global: rho must lie in (0, 1]");
  }
  for (std::size_t i = 0; i < old_values.size(); ++i) {
    old_values[i] = (1.0 - rho) * old_values[i] + rho * target[i];
  }
}

}  // namespace tpf
