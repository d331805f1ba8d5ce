#pragma once

#include <random>
#include <span>
#include <string>
#include <vector>

#include "tpf/corpus.hpp"
#include "tpf/elbo.hpp"
#include "tpf/state.hpp"
#include "tpf/trainer.hpp"

namespace tpf {

// Variational blocks of the author-intensity baseline. Each document is one
// (author, period) cell with rate lambda_av,t = sum_k exp(g_ak,t + h_kv,t);
// both AR families fix the autocorrelation at one and keep diagonal
// covariances.
struct DpfState {
  int A = 0, V = 0, K = 0, T = 0;

  std::vector<double> g_loc, g_var;          // A x K x T, [(a*K + k)*T + t]
  std::vector<double> tau_g_shp, tau_g_rte;  // A x K
  std::vector<double> mu_g_loc, mu_g_var;    // A x K

  std::vector<double> h_loc, h_var;          // K x V x T, [(k*V + v)*T + t]
  std::vector<double> tau_h_shp, tau_h_rte;  // K x V
  std::vector<double> mu_h_loc, mu_h_var;    // K x V

  int ak(int a, int k) const { return a * K + k; }
  int goff(int a, int k) const { return (a * K + k) * T; }
  int kv(int k, int v) const { return k * V + v; }
  int hoff(int k, int v) const { return (k * V + v) * T; }

  std::span<const double> g_loc_block(int a, int k) const {
    return {g_loc.data() + goff(a, k), static_cast<std::size_t>(T)};
  }
  std::span<const double> g_var_block(int a, int k) const {
    return {g_var.data() + goff(a, k), static_cast<std::size_t>(T)};
  }
  std::span<const double> h_loc_block(int k, int v) const {
    return {h_loc.data() + hoff(k, v), static_cast<std::size_t>(T)};
  }
  std::span<const double> h_var_block(int k, int v) const {
    return {h_var.data() + hoff(k, v), static_cast<std::size_t>(T)};
  }

  void validate() const;
};

// Sums counts per (author, period) so the result has exactly one document
// per pair; periods and authors are preserved, empty cells are dropped.
Corpus aggregate_by_author(const Corpus& corpus);

DpfState dpf_init(const Corpus& corpus, const Hyperparams& hp,
                  std::mt19937_64& rng);

struct DpfFitResult {
  DpfState state;
  std::vector<TraceRow> trace;
};

// Requires author ids and one document per (author, period); with
// `aggregate` the corpus is first collapsed by aggregate_by_author.
DpfFitResult dpf_fit(const Corpus& corpus, const Hyperparams& hp,
                     const FitConfig& cfg, bool aggregate = false);

ElboReport dpf_elbo_components(const DpfState& state, const Corpus& corpus,
                               const Hyperparams& hp,
                               bool with_criteria = true);

// Expected log likelihood under q (the reconstruction part of the bound).
double dpf_reconstruction(const DpfState& state, const Corpus& corpus);

// Log likelihood at the mean paths: lambda* = sum_k exp(g_loc + h_loc).
double dpf_log_lik_at_mean(const DpfState& state, const Corpus& corpus);

double dpf_approx_elbo(const DpfState& state, const Corpus& corpus,
                       const Hyperparams& hp, std::span<const int> doc_ids,
                       double scale);

// The g/h-dependent part of the batch-scaled bound: data terms of the batch
// documents, both AR prior quadratic forms, both entropy log-determinants.
double dpf_objective(const DpfState& state, const Corpus& corpus,
                     const Batch& batch);

// Gradients with respect to locations and log marginal variances.
struct DpfGradient {
  std::vector<double> g_loc, g_cov;  // A x K x T
  std::vector<double> h_loc, h_cov;  // K x V x T
};

DpfGradient dpf_gradient(const DpfState& state, const Corpus& corpus,
                         const Batch& batch, double* objective_out = nullptr);

void dpf_checkpoint_save(const DpfState& state, const std::string& path);
DpfState dpf_checkpoint_load(const std::string& path);

}  // namespace tpf
