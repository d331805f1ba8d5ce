#include "tpf/advi.hpp"

#include <cmath>
#include <string>

#include "tpf/armath.hpp"
#include "tpf/errors.hpp"
#include "tpf/numeric.hpp"
#include "tpf/parallel.hpp"

namespace tpf {

namespace {

struct BatchView {
  std::vector<int> row_of_doc;       // D, -1 if outside the batch
  std::vector<double> elog_theta;    // |batch| x K
  std::vector<double> mean_theta;    // |batch| x K
  std::vector<double> rate_weights;  // K x T: sum of E theta over batch docs
};

BatchView make_batch_view(const VariationalState& s, const Corpus& corpus,
                          std::span<const int> doc_ids) {
  const int K = s.K, T = s.T;
  BatchView view;
  view.row_of_doc.assign(corpus.num_docs(), -1);
  view.elog_theta.resize(doc_ids.size() * K);
  view.mean_theta.resize(doc_ids.size() * K);
  view.rate_weights.assign(static_cast<std::size_t>(K) * T, 0.0);
  for (std::size_t b = 0; b < doc_ids.size(); ++b) {
    const int d = doc_ids[b];
    if (view.row_of_doc[d] != -1) {
      throw usage_error("batch lists document " + std::to_string(d) +
                        " twice");
    }
    view.row_of_doc[d] = static_cast<int>(b);
    const int t = corpus.period_of(d);
    for (int k = 0; k < K; ++k) {
      const int idx = d * K + k;
      view.elog_theta[b * K + k] =
          digamma(s.theta_shp[idx]) - std::log(s.theta_rte[idx]);
      const double mean = s.theta_shp[idx] / s.theta_rte[idx];
      view.mean_theta[b * K + k] = mean;
      view.rate_weights[static_cast<std::size_t>(k) * T + t] += mean;
    }
  }
  return view;
}

// Per-term pass over the batch columns: log-sum-exp mass and, when grad_loc
// is given, the responsibility-weighted count accumulation.
std::vector<double> data_lse_pass(const VariationalState& s,
                                  const Corpus& corpus, const BatchView& view,
                                  double scale, HGradient* grad) {
  const int K = s.K, V = s.V, T = s.T;
  std::vector<double> slots(V, 0.0);
  parallel_for(V, [&](std::size_t v) {
    std::vector<double> phi(K);
    double acc = 0.0;
    for (int e = corpus.col_begin(static_cast<int>(v));
         e < corpus.col_end(static_cast<int>(v)); ++e) {
      const int d = corpus.centry_doc(e);
      const int b = view.row_of_doc[d];
      if (b < 0) continue;
      const int t = corpus.period_of(d);
      const double y = static_cast<double>(corpus.centry_count(e));
      double cmax = -HUGE_VAL;
      for (int k = 0; k < K; ++k) {
        phi[k] = view.elog_theta[static_cast<std::size_t>(b) * K + k] +
                 s.h_loc[(static_cast<std::size_t>(k) * V + v) * T + t];
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
          grad->loc[(static_cast<std::size_t>(k) * V + v) * T + t] +=
              scale * y * phi[k] / z;
        }
      }
    }
    if (!std::isfinite(acc)) {
      throw numeric_error("non-finite data term at term " + std::to_string(v));
    }
    slots[v] = acc;
  });
  return slots;
}

// Everything per (k, v): expected-rate mass, AR prior, entropy; fills the
// remaining gradient pieces when grad is given.
std::vector<double> block_pass(const VariationalState& s, const BatchView& view,
                               double scale, HGradient* grad) {
  const int V = s.V, T = s.T;
  const std::size_t n = s.tau_shp.size();
  const bool diagonal = s.cov == CovStructure::kDiagonal;
  const int fsz = factor_size(T);
  std::vector<double> slots(n, 0.0);
  parallel_for(n, [&](std::size_t i) {
    const int k = static_cast<int>(i) / V;
    const int v = static_cast<int>(i) % V;
    const auto dm = s.delta_moments_at(k, v);
    const double tau_ratio = s.tau_shp[i] / s.tau_rte[i];
    const auto loc = s.h_loc_block(k, v);
    const std::size_t off = s.hoff(k, v);

    double acc = 0.0;
    std::vector<double> dvar;  // data-term derivative w.r.t. marginal variance
    if (grad != nullptr) dvar.assign(T, 0.0);
    for (int t = 0; t < T; ++t) {
      const double w =
          view.rate_weights[static_cast<std::size_t>(k) * T + t];
      const double e =
          std::exp(loc[t] + 0.5 * s.marginal_h_var(k, v, t));
      acc -= scale * w * e;
      if (grad != nullptr) {
        grad->loc[off + t] -= scale * w * e;
        dvar[t] = -0.5 * scale * w * e;
      }
    }

    // prior quadratic form and entropy log-determinant
    QuadTraces q;
    double logdet = 0.0;
    if (diagonal) {
      const auto var = s.h_var_block(k, v);
      q = quad_traces_diag(loc, var, s.mu_loc[i], s.mu_var[i]);
      for (double x : var) logdet += std::log(x);
    } else {
      const auto factor = s.h_factor_block(k, v);
      q = quad_traces_factor(loc, factor, s.mu_loc[i], s.mu_var[i]);
      for (int t = 0; t < T; ++t) logdet += 2.0 * factor[t];
    }
    acc += -0.5 * tau_ratio * expected_quadratic_form(q, dm.e1, dm.e2) +
           0.5 * logdet;
    if (!std::isfinite(acc)) {
      throw numeric_error("non-finite objective term at block (k=" +
                          std::to_string(k) + ", v=" + std::to_string(v) +
                          ")");
    }
    slots[i] = acc;
    if (grad == nullptr) return;

    std::vector<double> centered(T), prec_c(T);
    for (int t = 0; t < T; ++t) centered[t] = loc[t] - s.mu_loc[i];
    expected_precision_multiply(centered, dm.e1, dm.e2, prec_c);
    for (int t = 0; t < T; ++t) grad->loc[off + t] -= tau_ratio * prec_c[t];

    if (diagonal) {
      const auto var = s.h_var_block(k, v);
      for (int t = 0; t < T; ++t) {
        const double prec_tt = (t + 1 < T) ? 1.0 + dm.e2 : 1.0;
        const double dv = dvar[t] - 0.5 * tau_ratio * prec_tt +
                          0.5 / var[t];
        grad->cov[off + t] = dv * var[t];  // chain rule through log-variance
      }
    } else {
      const auto factor = s.h_factor_block(k, v);
      const std::size_t foff = static_cast<std::size_t>(i) * fsz;
      // dL = 2 dvar_t L(t, j) - tau_ratio (E Delta L)(t, j) + diag(1 / L_tt)
      for (int t = 0; t < T; ++t) {
        const double dtt = (t + 1 < T) ? 1.0 + dm.e2 : 1.0;
        for (int j = 0; j <= t; ++j) {
          const double ltj = factor_entry(factor, T, t, j);
          double prod = dtt * ltj;  // (E Delta L)(t, j)
          if (t > 0) prod -= dm.e1 * factor_entry(factor, T, t - 1, j);
          if (t + 1 < T) prod -= dm.e1 * factor_entry(factor, T, t + 1, j);
          double g = 2.0 * dvar[t] * ltj - tau_ratio * prod;
          if (j == t) {
            g += 1.0 / ltj;
            grad->cov[foff + t] = g * ltj;  // log-diagonal parameter
          } else {
            grad->cov[foff + T + t * (t - 1) / 2 + j] = g;
          }
        }
      }
    }
  });
  return slots;
}

double run(const VariationalState& s, const Corpus& corpus, const Batch& batch,
           HGradient* grad) {
  if (grad != nullptr) {
    grad->loc.assign(s.h_loc.size(), 0.0);
    grad->cov.assign(s.cov == CovStructure::kDiagonal
                         ? s.h_loc.size()
                         : s.tau_shp.size() * factor_size(s.T),
                     0.0);
  }
  const BatchView view = make_batch_view(s, corpus, batch.doc_ids);
  const auto lse_slots = data_lse_pass(s, corpus, view, batch.scale, grad);
  const auto block_slots = block_pass(s, view, batch.scale, grad);
  return batch.scale * pairwise_sum(lse_slots) + pairwise_sum(block_slots);
}

}  // namespace

double h_objective(const VariationalState& state, const Corpus& corpus,
                   const Batch& batch) {
  return run(state, corpus, batch, nullptr);
}

HGradient h_gradient(const VariationalState& state, const Corpus& corpus,
                     const Batch& batch, double* objective_out) {
  HGradient grad;
  const double obj = run(state, corpus, batch, &grad);
  if (objective_out != nullptr) *objective_out = obj;
  return grad;
}

AdamState make_adam_state(const VariationalState& state) {
  AdamState a;
  a.m_loc.assign(state.h_loc.size(), 0.0);
  a.v_loc.assign(state.h_loc.size(), 0.0);
  const std::size_t cov_size = state.cov == CovStructure::kDiagonal
                                   ? state.h_loc.size()
                                   : state.h_factor.size();
  a.m_cov.assign(cov_size, 0.0);
  a.v_cov.assign(cov_size, 0.0);
  return a;
}

void adam_step(std::span<double> params, std::span<const double> grads,
               std::span<double> m, std::span<double> v, long step,
               const AdamConfig& cfg) {
  if (params.size() != grads.size() || params.size() != m.size() ||
      params.size() != v.size()) {
    throw usage_error("adam_step: size mismatch");
  }
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
    v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
    params[i] += cfg.alpha * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg.eps);
  }
}

void apply_adam(VariationalState& state, const HGradient& grad,
                AdamState& adam, const AdamConfig& cfg) {
  adam.step += 1;
  adam_step(state.h_loc, grad.loc, adam.m_loc, adam.v_loc, adam.step, cfg);
  if (state.cov == CovStructure::kDiagonal) {
    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(adam.step));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(adam.step));
    for (std::size_t i = 0; i < state.h_var.size(); ++i) {
      const double g = grad.cov[i];
      adam.m_cov[i] = cfg.beta1 * adam.m_cov[i] + (1.0 - cfg.beta1) * g;
      adam.v_cov[i] = cfg.beta2 * adam.v_cov[i] + (1.0 - cfg.beta2) * g * g;
      const double w = std::log(state.h_var[i]) +
                       cfg.alpha * (adam.m_cov[i] / c1) /
                           (std::sqrt(adam.v_cov[i] / c2) + cfg.eps);
      state.h_var[i] = std::exp(w);
    }
  } else {
    adam_step(state.h_factor, grad.cov, adam.m_cov, adam.v_cov, adam.step,
              cfg);
  }
}

}  // namespace tpf
