#pragma once

#include <span>
#include <utility>
#include <vector>

#include "tpf/corpus.hpp"
#include "tpf/state.hpp"

namespace tpf {

// Multinomial responsibilities of the latent count split: for each stored
// (d, v) pair of the requested documents (doc-major, following `doc_ids`),
// K probabilities proportional to exp{E log theta_dk + h_loc[k, v, t_d]}.
struct AuxProportions {
  int K = 0;
  std::vector<double> probs;  // entries x K
};

AuxProportions aux_proportions(const VariationalState& state,
                               const Corpus& corpus,
                               std::span<const int> doc_ids);

// Per (k, t): sum_v exp(h_loc + h_var / 2), the term-side factor of the
// expected rate. Index [k * T + t].
std::vector<double> expected_rate_sums(const VariationalState& state);

// Closed-form replacement of the document blocks of `doc_ids`: theta from
// the responsibilities and the expected rates, then xi from the fresh theta.
void update_theta_xi(VariationalState& state, const Corpus& corpus,
                     const Hyperparams& hp, std::span<const int> doc_ids,
                     std::span<const double> rate_sums);

// Coordinate-optimal targets for the global blocks (the shapes stay at
// their fixed values). Each uses the most recent state it is given.
std::vector<double> update_tau_rate(const VariationalState& state,
                                    const Hyperparams& hp);
std::pair<std::vector<double>, std::vector<double>> update_delta(
    const VariationalState& state, const Hyperparams& hp);
std::pair<std::vector<double>, std::vector<double>> update_mu(
    const VariationalState& state, const Hyperparams& hp);

// Single-sequence targets the block updates above are built from; the
// author-intensity variant reuses them on its own sequences.
namespace seq {

struct NormalTarget {
  double loc = 0.0;
  double var = 0.0;
};

// b_tau + quad / 2 from the trace pieces of one AR block.
double tau_rate_target(double quad, double b_tau);

// Precision-weighted combination of the prior and the lag structure.
NormalTarget delta_target(double tr0, double tr1, double tau_ratio,
                          double mu_delta, double sigma_delta);

NormalTarget mu_target(std::span<const double> h_loc, double tau_ratio,
                       double e1, double e2, double mu_mu, double sigma_mu);

}  // namespace seq

// old <- (1 - rho) * old + rho * target
void blend_global(std::span<double> old_values,
                  std::span<const double> target, double rho);

}  // namespace tpf
