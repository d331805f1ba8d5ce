#include "tpf/state.hpp"

#include <cmath>
#include <string>

#include "tpf/armath.hpp"
#include "tpf/errors.hpp"
#include "tpf/numeric.hpp"

namespace tpf {

void Hyperparams::validate() const {
  auto positive = [](double x, const char* name) {
    if (!(x > 0.0)) {
      throw usage_error(std::string(name) + " must be positive");
    }
  };
  positive(a_theta, "a_theta");
  positive(a_xi, "a_xi");
  positive(b_xi, "b_xi");
  positive(a_tau, "a_tau");
  positive(b_tau, "b_tau");
  positive(sigma_mu, "sigma_mu");
  positive(sigma_delta, "sigma_delta");
  if (K < 1) throw usage_error("K must be at least 1");
}

DeltaMoments delta_moments(double loc, double var, DeltaMode mode) {
  switch (mode) {
    case DeltaMode::kFree:
      return {loc, loc * loc + var};
    case DeltaMode::kFixedOne:
      return {1.0, 1.0};
    case DeltaMode::kTruncated: {
      const auto m = truncated_normal_moments(loc, var);
      return {m.mean, m.second};
    }
  }
  throw usage_error("unknown delta mode");
}

double VariationalState::marginal_h_var(int k, int v, int t) const {
  if (cov == CovStructure::kDiagonal) return h_var[hoff(k, v) + t];
  return factor_marginal_var(h_factor_block(k, v), T, t);
}

void VariationalState::validate() const {
  auto expect_size = [](const std::vector<double>& x, std::size_t n,
                        const char* name) {
    if (x.size() != n) {
      throw numeric_error(std::string("state block ") + name +
                          " has wrong size");
    }
  };
  auto expect_positive = [](const std::vector<double>& x, const char* name) {
    for (double e : x) {
      if (!(e > 0.0) || !std::isfinite(e)) {
        throw numeric_error(std::string("state block ") + name +
                            " must be positive and finite");
      }
    }
  };
  auto expect_finite = [](const std::vector<double>& x, const char* name) {
    for (double e : x) {
      if (!std::isfinite(e)) {
        throw numeric_error(std::string("state block ") + name +
                            " contains a non-finite value");
      }
    }
  };
  const std::size_t dk = static_cast<std::size_t>(D) * K;
  const std::size_t kvn = static_cast<std::size_t>(K) * V;
  const std::size_t kvt = kvn * T;
  expect_size(theta_shp, dk, "theta_shp");
  expect_size(theta_rte, dk, "theta_rte");
  expect_size(xi_shp, D, "xi_shp");
  expect_size(xi_rte, D, "xi_rte");
  expect_size(tau_shp, kvn, "tau_shp");
  expect_size(tau_rte, kvn, "tau_rte");
  expect_size(delta_loc, kvn, "delta_loc");
  expect_size(delta_var, kvn, "delta_var");
  expect_size(mu_loc, kvn, "mu_loc");
  expect_size(mu_var, kvn, "mu_var");
  expect_size(h_loc, kvt, "h_loc");
  if (cov == CovStructure::kDiagonal) {
    expect_size(h_var, kvt, "h_var");
    expect_size(h_factor, 0, "h_factor");
    expect_positive(h_var, "h_var");
  } else {
    expect_size(h_var, 0, "h_var");
    expect_size(h_factor, kvn * factor_size(T), "h_factor");
    expect_finite(h_factor, "h_factor");
  }
  expect_positive(theta_shp, "theta_shp");
  expect_positive(theta_rte, "theta_rte");
  expect_positive(xi_shp, "xi_shp");
  expect_positive(xi_rte, "xi_rte");
  expect_positive(tau_shp, "tau_shp");
  expect_positive(tau_rte, "tau_rte");
  expect_positive(mu_var, "mu_var");
  expect_finite(mu_loc, "mu_loc");
  expect_finite(h_loc, "h_loc");
  expect_finite(delta_loc, "delta_loc");
  expect_finite(delta_var, "delta_var");
  if (delta_mode == DeltaMode::kFixedOne) {
    for (std::size_t i = 0; i < kvn; ++i) {
      if (delta_loc[i] != 1.0 || delta_var[i] != 0.0) {
        throw numeric_error(
            "delta is fixed at one but the stored block disagrees");
      }
    }
  } else {
    expect_positive(delta_var, "delta_var");
  }
}

void FitConfig::validate() const {
  if (epochs < 1) throw usage_error("epochs must be at least 1");
  if (batch_size < 1) throw usage_error("batch size must be at least 1");
  if (!(kappa > 0.5) || !(kappa <= 1.0)) {
    throw usage_error("kappa must lie in (0.5, 1]");
  }
  if (tau0 < 0.0) throw usage_error("tau0 must be nonnegative");
  if (!(adam.alpha > 0.0)) throw usage_error("adam alpha must be positive");
  if (eval_every < 0) throw usage_error("eval_every must be nonnegative");
  if (warm_start_epochs < 0) {
    throw usage_error("warm_start_epochs must be nonnegative");
  }
}

VariationalState init_state(const Corpus& corpus, const Hyperparams& hp,
                            std::mt19937_64& rng, const WarmStart* warm) {
  hp.validate();
  VariationalState s;
  s.D = corpus.num_docs();
  s.V = corpus.num_terms();
  s.K = hp.K;
  s.T = corpus.num_periods();
  s.delta_mode = hp.delta_mode;
  s.cov = hp.cov;

  const std::size_t dk = static_cast<std::size_t>(s.D) * s.K;
  const std::size_t kvn = static_cast<std::size_t>(s.K) * s.V;
  const std::size_t kvt = kvn * s.T;

  std::uniform_real_distribution<double> unif(0.0, 0.1);
  std::normal_distribution<double> level_noise(0.0, 0.1);
  std::normal_distribution<double> path_noise(0.0, 0.01);

  if (warm != nullptr) {
    if (warm->theta_shp.size() != dk || warm->mu_loc.size() != kvn) {
      throw usage_error("warm start block does not match the fit dimensions");
    }
    s.theta_shp = warm->theta_shp;
    s.theta_rte = warm->theta_rte;
  } else {
    s.theta_shp.resize(dk);
    for (auto& x : s.theta_shp) x = hp.a_theta + unif(rng);
    s.theta_rte.assign(dk, 1.0);
  }

  s.xi_shp.assign(s.D, hp.a_xi + s.K * hp.a_theta);
  s.xi_rte.assign(s.D, hp.b_xi);

  s.tau_shp.assign(kvn, hp.a_tau + 0.5 * s.T);
  s.tau_rte.assign(kvn, hp.b_tau);

  if (hp.delta_mode == DeltaMode::kFixedOne) {
    s.delta_loc.assign(kvn, 1.0);
    s.delta_var.assign(kvn, 0.0);
  } else {
    s.delta_loc.assign(kvn, hp.mu_delta);
    s.delta_var.assign(kvn, 0.01);
  }

  if (warm != nullptr) {
    s.mu_loc = warm->mu_loc;
  } else {
    s.mu_loc.resize(kvn);
    for (auto& x : s.mu_loc) x = level_noise(rng);
  }
  s.mu_var.assign(kvn, 1.0);

  s.h_loc.resize(kvt);
  for (int k = 0; k < s.K; ++k) {
    for (int v = 0; v < s.V; ++v) {
      const double level = s.mu_loc[s.kv(k, v)];
      for (int t = 0; t < s.T; ++t) {
        s.h_loc[s.hoff(k, v) + t] = level + path_noise(rng);
      }
    }
  }
  if (hp.cov == CovStructure::kDiagonal) {
    s.h_var.assign(kvt, 1.0);
  } else {
    // identity factor: zero log-diagonal, zero strict lower triangle
    s.h_factor.assign(kvn * factor_size(s.T), 0.0);
  }
  return s;
}

}  // namespace tpf
