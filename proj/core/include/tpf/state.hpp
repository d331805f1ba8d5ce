#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "tpf/corpus.hpp"

namespace tpf {

enum class DeltaMode { kFree, kFixedOne, kTruncated };
enum class CovStructure { kDiagonal, kGeneral };

struct Hyperparams {
  double a_theta = 0.3;
  double a_xi = 0.3;
  double b_xi = 1.0;
  double a_tau = 0.3;
  double b_tau = 0.3;
  double mu_mu = 0.0;
  double sigma_mu = 100.0;
  double mu_delta = 0.5;
  double sigma_delta = 1.0;
  int K = 25;
  DeltaMode delta_mode = DeltaMode::kFree;
  CovStructure cov = CovStructure::kDiagonal;

  void validate() const;
};

// E delta and E delta^2 under the current q(delta); for the truncated mode
// these are moments of the normal restricted to [-1, 1].
struct DeltaMoments {
  double e1 = 0.0;
  double e2 = 0.0;
};

DeltaMoments delta_moments(double loc, double var, DeltaMode mode);

// All variational blocks. Gamma blocks store (shape, rate); normal blocks
// store (location, variance); each AR block h_{kv} stores T locations plus
// either T marginal variances or a lower-triangular covariance factor
// packed as T log-diagonal entries followed by the strict lower triangle.
struct VariationalState {
  int D = 0, V = 0, K = 0, T = 0;
  DeltaMode delta_mode = DeltaMode::kFree;
  CovStructure cov = CovStructure::kDiagonal;

  std::vector<double> theta_shp, theta_rte;  // D x K, [d * K + k]
  std::vector<double> xi_shp, xi_rte;        // D
  std::vector<double> tau_shp, tau_rte;      // K x V, [k * V + v]
  std::vector<double> delta_loc, delta_var;  // K x V
  std::vector<double> mu_loc, mu_var;        // K x V
  std::vector<double> h_loc;                 // K x V x T, [(k * V + v) * T + t]
  std::vector<double> h_var;                 // K x V x T (diagonal mode only)
  std::vector<double> h_factor;              // K x V x T(T+1)/2 (general only)

  int kv(int k, int v) const { return k * V + v; }
  int hoff(int k, int v) const { return (k * V + v) * T; }
  std::span<const double> h_loc_block(int k, int v) const {
    return {h_loc.data() + hoff(k, v), static_cast<std::size_t>(T)};
  }
  std::span<const double> h_var_block(int k, int v) const {
    return {h_var.data() + hoff(k, v), static_cast<std::size_t>(T)};
  }
  std::span<const double> h_factor_block(int k, int v) const {
    const int fsz = T * (T + 1) / 2;
    return {h_factor.data() + static_cast<std::size_t>(kv(k, v)) * fsz,
            static_cast<std::size_t>(fsz)};
  }
  double marginal_h_var(int k, int v, int t) const;
  DeltaMoments delta_moments_at(int k, int v) const {
    return delta_moments(delta_loc[kv(k, v)], delta_var[kv(k, v)], delta_mode);
  }

  // Structural and positivity checks; throws on violation.
  void validate() const;
};

struct AdamConfig {
  double alpha = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct FitConfig {
  int epochs = 100;
  int batch_size = 512;
  double kappa = 0.51;   // learning-rate exponent, must lie in (0.5, 1]
  double tau0 = 0.0;     // learning-rate offset
  AdamConfig adam;
  std::uint64_t seed = 1;
  int eval_every = 10;   // exact ELBO cadence in epochs; 0 disables
  int warm_start_epochs = 0;
  bool freeze_h = false;  // skip the gradient step on h (diagnostics)
  std::string abort_checkpoint_path;  // written if a numeric error aborts

  void validate() const;
};

// Static-model fit product used to initialise a full fit: the document
// block and the per (k, v) intensity level it settled on.
struct WarmStart {
  std::vector<double> theta_shp, theta_rte;  // D x K
  std::vector<double> mu_loc;                // K x V
};

VariationalState init_state(const Corpus& corpus, const Hyperparams& hp,
                            std::mt19937_64& rng,
                            const WarmStart* warm = nullptr);

}  // namespace tpf
