#include "tpf/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "tpf/advi.hpp"
#include "tpf/cavi.hpp"
#include "tpf/checkpoint.hpp"
#include "tpf/errors.hpp"
#include "tpf/rng.hpp"
#include "train_loop.hpp"

namespace tpf {

double step_size(long s, double kappa, double tau0) {
  if (!(kappa > 0.5) || !(kappa <= 1.0)) {
    throw usage_error("kappa must lie in (0.5, 1]");
  }
  if (s < 1) throw usage_error("step index starts at 1");
  if (tau0 < 0.0) throw usage_error("tau0 must be nonnegative");
  return std::pow(static_cast<double>(s) + tau0, -kappa);
}

namespace {

struct TpfModel {
  VariationalState state;
  const Corpus& corpus;
  const Hyperparams& hp;
  const FitConfig& cfg;
  AdamState adam;

  TpfModel(VariationalState init, const Corpus& c, const Hyperparams& h,
           const FitConfig& f)
      : state(std::move(init)), corpus(c), hp(h), cfg(f),
        adam(make_adam_state(state)) {}

  void local_update(const Batch& batch) {
    const auto rate_sums = expected_rate_sums(state);
    update_theta_xi(state, corpus, hp, batch.doc_ids, rate_sums);
  }

  void global_update(double rho) {
    blend_global(state.tau_rte, update_tau_rate(state, hp), rho);
    if (state.delta_mode != DeltaMode::kFixedOne) {
      auto [loc, var] = update_delta(state, hp);
      blend_global(state.delta_loc, loc, rho);
      blend_global(state.delta_var, var, rho);
    }
    auto [loc, var] = update_mu(state, hp);
    blend_global(state.mu_loc, loc, rho);
    blend_global(state.mu_var, var, rho);
  }

  double advi_step(const Batch& batch) {
    HGradient grad;
    if (!cfg.freeze_h) grad = h_gradient(state, corpus, batch);
    const double approx =
        approx_elbo(state, corpus, hp, batch.doc_ids, batch.scale);
    if (!cfg.freeze_h) apply_adam(state, grad, adam, cfg.adam);
    return approx;
  }

  ElboReport evaluate() { return elbo_components(state, corpus, hp, true); }

  void save_checkpoint(const std::string& path) {
    checkpoint_save(state, path);
  }
};

}  // namespace

FitResult fit(const Corpus& corpus, const Hyperparams& hp,
              const FitConfig& cfg) {
  hp.validate();
  cfg.validate();
  WarmStart warm;
  const WarmStart* warm_ptr = nullptr;
  if (cfg.warm_start_epochs > 0) {
    warm = warm_start(corpus, hp, cfg);
    warm_ptr = &warm;
  }
  auto init_rng = substream(cfg.seed, "init");
  TpfModel model(init_state(corpus, hp, init_rng, warm_ptr), corpus, hp, cfg);
  auto batch_rng = substream(cfg.seed, "batching");
  auto trace = detail::run_train_loop(model, corpus, cfg, batch_rng);
  return {std::move(model.state), std::move(trace)};
}

WarmStart warm_start(const Corpus& corpus, const Hyperparams& hp,
                     const FitConfig& cfg) {
  if (cfg.warm_start_epochs < 1) {
    throw usage_error("warm start needs at least one epoch");
  }
  std::vector<int> flat_periods(corpus.num_docs(), 0);
  std::vector<int> authors;
  if (corpus.has_authors()) {
    authors.resize(corpus.num_docs());
    for (int d = 0; d < corpus.num_docs(); ++d) authors[d] = corpus.author_of(d);
  }
  const Corpus flat = Corpus::build(corpus.triplets(), std::move(flat_periods),
                                    corpus.vocabulary(), std::move(authors));

  Hyperparams static_hp = hp;
  // With one period the autocorrelation never enters any update; fixing it
  // just drops its prior and entropy terms.
  static_hp.delta_mode = DeltaMode::kFixedOne;
  FitConfig static_cfg = cfg;
  static_cfg.epochs = cfg.warm_start_epochs;
  static_cfg.warm_start_epochs = 0;
  static_cfg.eval_every = 0;
  static_cfg.seed = substream_seed(cfg.seed, "warm");
  static_cfg.abort_checkpoint_path.clear();

  FitResult r = fit(flat, static_hp, static_cfg);
  WarmStart w;
  w.theta_shp = std::move(r.state.theta_shp);
  w.theta_rte = std::move(r.state.theta_rte);
  w.mu_loc = std::move(r.state.h_loc);  // T = 1: the fitted level itself
  return w;
}

void write_trace_csv(const std::vector<TraceRow>& rows,
                     const std::string& path) {
  std::ofstream out(path);
  if (!out) throw io_error("cannot write trace file " + path);
  out << "epoch,approx_elbo,elbo,reconstruction,log_prior,entropy,vaic,vbic,"
         "sec_epoch,sec_eval\n";
  char buf[64];
  auto field = [&buf](double x) {
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return std::string(buf);
  };
  auto opt_field = [&field](const std::optional<double>& x) {
    return x.has_value() ? field(*x) : std::string();
  };
  for (const auto& r : rows) {
    out << r.epoch << ',' << field(r.approx_elbo) << ',' << opt_field(r.elbo)
        << ',' << opt_field(r.reconstruction) << ',' << opt_field(r.log_prior)
        << ',' << opt_field(r.entropy) << ',' << opt_field(r.vaic) << ','
        << opt_field(r.vbic) << ',' << field(r.sec_epoch) << ','
        << opt_field(r.sec_eval) << '\n';
  }
  if (!out.flush()) throw io_error("failed writing trace file " + path);
}

}  // namespace tpf
