#pragma once

#include <span>
#include <vector>

#include "tpf/corpus.hpp"
#include "tpf/state.hpp"

namespace tpf {

// The h-dependent part of the batch-scaled objective:
//   scale * sum_{d in batch} sum_v [ y_dv lse_k(E log lambda) - sum_k E lambda ]
//   - 1/2 sum_{k,v} (E tau) E(h - mu 1)' Delta (h - mu 1)
//   + 1/2 sum_{k,v} log |h_cov|
// It differs from the full objective only by terms that do not involve h.
double h_objective(const VariationalState& state, const Corpus& corpus,
                   const Batch& batch);

// Gradient with respect to the unconstrained parameterisation: locations
// directly; log marginal variances in diagonal mode; the packed factor
// (log-diagonal plus strict lower triangle) in general mode.
struct HGradient {
  std::vector<double> loc;  // K x V x T
  std::vector<double> cov;  // K x V x T or K x V x T(T+1)/2
};

HGradient h_gradient(const VariationalState& state, const Corpus& corpus,
                     const Batch& batch, double* objective_out = nullptr);

// First/second moment accumulators matching the h parameter layout.
struct AdamState {
  std::vector<double> m_loc, v_loc, m_cov, v_cov;
  long step = 0;
};

AdamState make_adam_state(const VariationalState& state);

// One ascent step on a flat parameter block (bias-corrected moments).
void adam_step(std::span<double> params, std::span<const double> grads,
               std::span<double> m, std::span<double> v, long step,
               const AdamConfig& cfg);

// One ascent step on the h blocks of the state.
void apply_adam(VariationalState& state, const HGradient& grad,
                AdamState& adam, const AdamConfig& cfg);

}  // namespace tpf
