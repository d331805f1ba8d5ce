#pragma once

// Shared epoch/batch skeleton for the two model kinds. A model exposes:
//   void local_update(const Batch&);
//   void global_update(double rho);
//   double advi_step(const Batch&);      // returns the batch-scaled bound
//   ElboReport evaluate();
//   void save_checkpoint(const std::string& path);

#include <chrono>
#include <random>
#include <string>
#include <vector>

#include "tpf/corpus.hpp"
#include "tpf/elbo.hpp"
#include "tpf/errors.hpp"
#include "tpf/trainer.hpp"

namespace tpf::detail {

template <class Model>
std::vector<TraceRow> run_train_loop(Model& model, const Corpus& corpus,
                                     const FitConfig& cfg,
                                     std::mt19937_64& batch_rng) {
  using clock = std::chrono::steady_clock;
  std::vector<TraceRow> trace;
  long s = 0;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto epoch_start = clock::now();
    const auto batches = split_batches(corpus, cfg.batch_size, batch_rng);
    double approx_sum = 0.0;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      ++s;
      const double rho = step_size(s, cfg.kappa, cfg.tau0);
      try {
        model.local_update(batches[b]);
        model.global_update(rho);
        approx_sum += model.advi_step(batches[b]);
      } catch (const numeric_error& e) {
        if (!cfg.abort_checkpoint_path.empty()) {
          try {
            model.save_checkpoint(cfg.abort_checkpoint_path);
          } catch (...) {
          }
        }
        throw numeric_error("epoch " + std::to_string(epoch) + ", batch " +
                            std::to_string(b + 1) + ", step " +
                            std::to_string(s) + ": " + e.what());
      }
    }
    TraceRow row;
    row.epoch = epoch;
    row.approx_elbo = approx_sum / static_cast<double>(batches.size());
    row.sec_epoch =
        std::chrono::duration<double>(clock::now() - epoch_start).count();
    if (cfg.eval_every > 0 &&
        (epoch % cfg.eval_every == 0 || epoch == cfg.epochs)) {
      const ElboReport report = model.evaluate();
      row.elbo = report.elbo;
      row.reconstruction = report.reconstruction;
      row.log_prior = report.log_prior;
      row.entropy = report.entropy;
      row.vaic = report.vaic;
      row.vbic = report.vbic;
      row.sec_eval = report.wall_seconds;
    }
    trace.push_back(row);
  }
  return trace;
}

}  // namespace tpf::detail
