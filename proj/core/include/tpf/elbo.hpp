#pragma once

#include <optional>
#include <span>
#include <utility>

#include "tpf/corpus.hpp"
#include "tpf/state.hpp"

namespace tpf {

// Exact evidence lower bound split into its three parts, with the optimal
// multinomial split of each count folded in analytically:
//   elbo = reconstruction + log_prior + entropy.
struct ElboReport {
  double elbo = 0.0;
  double reconstruction = 0.0;
  double log_prior = 0.0;
  double entropy = 0.0;
  std::optional<double> vaic;
  std::optional<double> vbic;
  double wall_seconds = 0.0;
};

ElboReport elbo_components(const VariationalState& state, const Corpus& corpus,
                           const Hyperparams& hp, bool with_criteria = false);

// Poisson log likelihood of the data at the posterior-mean parameters,
// lambda*_dv = sum_k E[theta_dk] exp(h_loc[k, v, t_d]).
double log_lik_at_mean(const VariationalState& state, const Corpus& corpus);

// (vaic, vbic) = (2 log_lik - 4 reconstruction, -2 reconstruction - 2 entropy)
std::pair<double, double> information_criteria(const VariationalState& state,
                                               const Corpus& corpus,
                                               const Hyperparams& hp);

// The exact formula with every document sum replaced by `scale` times the
// sum over `doc_ids`; equals elbo_components().elbo when the ids cover all
// documents once and scale is 1.
double approx_elbo(const VariationalState& state, const Corpus& corpus,
                   const Hyperparams& hp, std::span<const int> doc_ids,
                   double scale);

}  // namespace tpf
