#pragma once

#include <optional>
#include <string>
#include <vector>

#include "tpf/corpus.hpp"
#include "tpf/elbo.hpp"
#include "tpf/state.hpp"

namespace tpf {

// rho_s = (s + tau0)^(-kappa); kappa in (0.5, 1] keeps the schedule valid.
double step_size(long s, double kappa, double tau0);

struct TraceRow {
  int epoch = 0;
  double approx_elbo = 0.0;  // batch-scaled value, averaged over the epoch
  std::optional<double> elbo, reconstruction, log_prior, entropy, vaic, vbic;
  double sec_epoch = 0.0;
  std::optional<double> sec_eval;
};

struct FitResult {
  VariationalState state;
  std::vector<TraceRow> trace;
};

// One pass of the stochastic scheme: per batch, closed-form document
// updates, blended global updates, then one Adam step on h.
FitResult fit(const Corpus& corpus, const Hyperparams& hp,
              const FitConfig& cfg);

// Fits the model with all periods collapsed to one and hands back the
// blocks a full fit starts from.
WarmStart warm_start(const Corpus& corpus, const Hyperparams& hp,
                     const FitConfig& cfg);

void write_trace_csv(const std::vector<TraceRow>& rows,
                     const std::string& path);

}  // namespace tpf
