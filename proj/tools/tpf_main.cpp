// Command-line front end: simulate synthetic corpora, fit the temporal
// Poisson factorisation model (or the author-intensity baseline), evaluate
// a checkpoint, and export summaries.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "tpf/checkpoint.hpp"
#include "tpf/corpus.hpp"
#include "tpf/dpf.hpp"
#include "tpf/elbo.hpp"
#include "tpf/errors.hpp"
#include "tpf/parallel.hpp"
#include "tpf/postprocess.hpp"
#include "tpf/state.hpp"
#include "tpf/synthgen.hpp"
#include "tpf/trainer.hpp"

namespace {

namespace fs = std::filesystem;

void add_hyper_flags(CLI::App* cmd, tpf::Hyperparams& hp) {
  cmd->add_option("--K", hp.K, "number of topics");
  cmd->add_option("--a-theta", hp.a_theta, "document-weight shape prior");
  cmd->add_option("--a-xi", hp.a_xi, "document-activity shape prior");
  cmd->add_option("--b-xi", hp.b_xi, "document-activity rate prior");
  cmd->add_option("--a-tau", hp.a_tau, "innovation-precision shape prior");
  cmd->add_option("--b-tau", hp.b_tau, "innovation-precision rate prior");
  cmd->add_option("--mu-mu", hp.mu_mu, "level prior mean");
  cmd->add_option("--sigma-mu", hp.sigma_mu, "level prior sd");
  cmd->add_option("--mu-delta", hp.mu_delta, "autocorrelation prior mean");
  cmd->add_option("--sigma-delta", hp.sigma_delta,
                  "autocorrelation prior sd");
  const std::map<std::string, tpf::DeltaMode> delta_modes{
      {"free", tpf::DeltaMode::kFree},
      {"fixed-one", tpf::DeltaMode::kFixedOne},
      {"truncated", tpf::DeltaMode::kTruncated}};
  cmd->add_option("--delta-mode", hp.delta_mode,
                  "autocorrelation treatment: free, fixed-one, truncated")
      ->transform(CLI::CheckedTransformer(delta_modes, CLI::ignore_case));
  const std::map<std::string, tpf::CovStructure> covs{
      {"diagonal", tpf::CovStructure::kDiagonal},
      {"general", tpf::CovStructure::kGeneral}};
  cmd->add_option("--cov", hp.cov,
                  "intensity covariance structure: diagonal, general")
      ->transform(CLI::CheckedTransformer(covs, CLI::ignore_case));
}

void add_fit_flags(CLI::App* cmd, tpf::FitConfig& fc) {
  cmd->add_option("--epochs", fc.epochs, "training epochs");
  cmd->add_option("--batch", fc.batch_size, "minibatch size");
  cmd->add_option("--kappa", fc.kappa, "step-size exponent in (0.5, 1]");
  cmd->add_option("--tau0", fc.tau0, "step-size offset");
  cmd->add_option("--seed", fc.seed, "random seed");
  cmd->add_option("--eval-every", fc.eval_every,
                  "exact bound cadence in epochs (0 disables)");
  cmd->add_option("--warm-start-epochs", fc.warm_start_epochs,
                  "static-model epochs used to initialise");
  cmd->add_flag("--freeze-h", fc.freeze_h,
                "skip the gradient step on the intensity paths");
  cmd->add_option("--adam-alpha", fc.adam.alpha, "Adam step size");
  cmd->add_option("--adam-beta1", fc.adam.beta1, "Adam first-moment decay");
  cmd->add_option("--adam-beta2", fc.adam.beta2, "Adam second-moment decay");
  cmd->add_option("--adam-eps", fc.adam.eps, "Adam denominator floor");
}

tpf::Corpus load_dir(const std::string& dir) {
  const fs::path p(dir);
  return tpf::load_corpus((p / "triplets.csv").string(),
                          (p / "docs.csv").string(),
                          (p / "vocab.txt").string());
}

void make_out_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw tpf::io_error("cannot create directory " + dir);
}

void check_state_dims(const tpf::VariationalState& s,
                      const tpf::Corpus& corpus) {
  if (s.D != corpus.num_docs() || s.V != corpus.num_terms() ||
      s.T != corpus.num_periods()) {
    throw tpf::usage_error(
        "checkpoint dimensions do not match the corpus (D " +
        std::to_string(s.D) + " vs " + std::to_string(corpus.num_docs()) +
        ", V " + std::to_string(s.V) + " vs " +
        std::to_string(corpus.num_terms()) + ", T " + std::to_string(s.T) +
        " vs " + std::to_string(corpus.num_periods()) + ")");
  }
}

std::string fmt(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

void report_to_stdout_and_csv(const tpf::ElboReport& r,
                              const std::string& checkpoint,
                              const std::string& csv_path) {
  nlohmann::json j;
  j["checkpoint"] = checkpoint;
  j["elbo"] = r.elbo;
  j["reconstruction"] = r.reconstruction;
  j["log_prior"] = r.log_prior;
  j["entropy"] = r.entropy;
  if (r.vaic.has_value()) j["vaic"] = *r.vaic;
  if (r.vbic.has_value()) j["vbic"] = *r.vbic;
  j["sec_eval"] = r.wall_seconds;
  std::cout << j.dump() << "\n";

  const bool fresh = !fs::exists(csv_path) || fs::file_size(csv_path) == 0;
  std::ofstream out(csv_path, std::ios::app);
  if (!out) throw tpf::io_error("cannot write " + csv_path);
  if (fresh) {
    out << "checkpoint,elbo,reconstruction,log_prior,entropy,vaic,vbic,"
           "sec_eval\n";
  }
  out << checkpoint << ',' << fmt(r.elbo) << ',' << fmt(r.reconstruction)
      << ',' << fmt(r.log_prior) << ',' << fmt(r.entropy) << ','
      << (r.vaic ? fmt(*r.vaic) : std::string()) << ','
      << (r.vbic ? fmt(*r.vbic) : std::string()) << ',' << fmt(r.wall_seconds)
      << '\n';
  if (!out.flush()) throw tpf::io_error("failed writing " + csv_path);
}

int run(int argc, char** argv) {
  CLI::App app{
      "Temporal factorisation of document-term counts: simulate, fit, "
      "evaluate, summarise"};
  app.require_subcommand(1);
  app.fallthrough(true);
  int threads = 1;
  app.add_option("--threads", threads, "worker threads")
      ->check(CLI::PositiveNumber);

  // simulate
  auto* sim = app.add_subcommand("simulate", "generate a synthetic corpus");
  sim->set_config("--config", "", "flat key=value file; flags win");
  tpf::SynthConfig synth;
  std::string sim_out;
  sim->add_option("--A", synth.A, "documents per period");
  sim->add_option("--V", synth.V, "vocabulary size");
  sim->add_option("--K", synth.K, "topics (at most 6)");
  sim->add_option("--T", synth.T, "periods");
  sim->add_option("--delta", synth.delta, "true autocorrelation");
  sim->add_option("--tau", synth.tau, "true innovation precision");
  sim->add_option("--seed", synth.seed, "random seed");
  sim->add_option("--out", sim_out, "output directory")->required();

  // fit
  auto* fit_cmd = app.add_subcommand("fit", "train on a corpus directory");
  fit_cmd->set_config("--config", "", "flat key=value file; flags win");
  tpf::Hyperparams fit_hp;
  tpf::FitConfig fit_cfg;
  std::string fit_data, fit_out, fit_model = "tpf";
  bool fit_aggregate = false;
  fit_cmd->add_option("--data", fit_data, "corpus directory")->required();
  fit_cmd->add_option("--out", fit_out, "output directory")->required();
  fit_cmd->add_option("--model", fit_model, "model kind: tpf or dpf")
      ->check(CLI::IsMember({"tpf", "dpf"}));
  fit_cmd->add_flag("--aggregate", fit_aggregate,
                    "sum counts per (author, period) first (dpf)");
  add_hyper_flags(fit_cmd, fit_hp);
  add_fit_flags(fit_cmd, fit_cfg);

  // eval
  auto* eval_cmd =
      app.add_subcommand("eval", "exact bound and criteria of a checkpoint");
  eval_cmd->set_config("--config", "", "flat key=value file; flags win");
  tpf::Hyperparams eval_hp;
  std::string eval_ckpt, eval_data, eval_out;
  eval_cmd->add_option("--checkpoint", eval_ckpt, "checkpoint path")
      ->required();
  eval_cmd->add_option("--data", eval_data, "corpus directory")->required();
  eval_cmd->add_option("--out", eval_out,
                       "directory for eval.csv (default: checkpoint's)");
  add_hyper_flags(eval_cmd, eval_hp);

  // summarize
  auto* sum_cmd =
      app.add_subcommand("summarize", "export prevalence, terms, distances");
  sum_cmd->set_config("--config", "", "flat key=value file; flags win");
  std::string sum_ckpt, sum_data, sum_out;
  double frex_w = 0.5;
  int top_n = 10;
  sum_cmd->add_option("--checkpoint", sum_ckpt, "checkpoint path")
      ->required();
  sum_cmd->add_option("--data", sum_data, "corpus directory")->required();
  sum_cmd->add_option("--out", sum_out,
                      "output directory (default: checkpoint's)");
  sum_cmd->add_option("--frex-w", frex_w, "exclusivity weight in [0, 1]");
  sum_cmd->add_option("--top", top_n, "terms per topic and period");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);  // prints the help text, exits 0
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    throw tpf::usage_error(e.what());
  }
  tpf::set_num_threads(threads);

  if (*sim) {
    const auto [corpus, truth] = tpf::simulate(synth);
    tpf::write_synthetic(corpus, truth, sim_out);
    std::cout << "wrote " << corpus.num_docs() << " documents ("
              << truth.A * truth.T - corpus.num_docs() << " empty dropped), "
              << corpus.num_terms() << " terms, " << corpus.num_periods()
              << " periods to " << sim_out << "\n";
    return 0;
  }

  if (*fit_cmd) {
    const tpf::Corpus corpus = load_dir(fit_data);
    make_out_dir(fit_out);
    const fs::path out(fit_out);
    fit_cfg.abort_checkpoint_path = (out / "abort_checkpoint.bin").string();
    if (fit_model == "dpf") {
      auto r = tpf::dpf_fit(corpus, fit_hp, fit_cfg, fit_aggregate);
      tpf::dpf_checkpoint_save(r.state, (out / "checkpoint.bin").string());
      tpf::write_trace_csv(r.trace, (out / "trace.csv").string());
    } else {
      auto r = tpf::fit(corpus, fit_hp, fit_cfg);
      tpf::checkpoint_save(r.state, (out / "checkpoint.bin").string());
      tpf::write_trace_csv(r.trace, (out / "trace.csv").string());
    }
    std::cout << "wrote " << (out / "checkpoint.bin").string() << " and "
              << (out / "trace.csv").string() << "\n";
    return 0;
  }

  if (*eval_cmd) {
    const tpf::Corpus corpus = load_dir(eval_data);
    const std::string out_dir =
        eval_out.empty() ? fs::path(eval_ckpt).parent_path().string()
                         : eval_out;
    if (!out_dir.empty()) make_out_dir(out_dir);
    const std::string csv =
        (fs::path(out_dir.empty() ? "." : out_dir) / "eval.csv").string();
    tpf::ElboReport report;
    if (tpf::checkpoint_model_kind(eval_ckpt) == tpf::kModelKindDpf) {
      const tpf::DpfState state = tpf::dpf_checkpoint_load(eval_ckpt);
      eval_hp.K = state.K;
      report = tpf::dpf_elbo_components(state, corpus, eval_hp, true);
    } else {
      const tpf::VariationalState state = tpf::checkpoint_load(eval_ckpt);
      check_state_dims(state, corpus);
      eval_hp.K = state.K;
      eval_hp.delta_mode = state.delta_mode;
      eval_hp.cov = state.cov;
      report = tpf::elbo_components(state, corpus, eval_hp, true);
    }
    report_to_stdout_and_csv(report, eval_ckpt, csv);
    return 0;
  }

  if (*sum_cmd) {
    if (tpf::checkpoint_model_kind(sum_ckpt) != tpf::kModelKindTpf) {
      throw tpf::usage_error(
          "summarize needs a document-weight model checkpoint");
    }
    const tpf::Corpus corpus = load_dir(sum_data);
    const tpf::VariationalState state = tpf::checkpoint_load(sum_ckpt);
    check_state_dims(state, corpus);
    const std::string out_dir =
        sum_out.empty() ? fs::path(sum_ckpt).parent_path().string() : sum_out;
    const fs::path out(out_dir.empty() ? "." : out_dir);
    make_out_dir(out.string());
    tpf::write_prevalence_csv(state, corpus, (out / "prevalence.csv").string());
    tpf::write_topics_json(state, corpus, (out / "topics.json").string(),
                           frex_w, top_n);
    tpf::write_dtc_time_csv(state, (out / "dtc_time.csv").string());
    tpf::write_dtc_topics_csv(state, (out / "dtc_topics.csv").string());

    const auto frex = tpf::frex_scores(state, frex_w);
    for (int k = 0; k < state.K; ++k) {
      std::cout << "topic " << k << "\n";
      for (int t = 0; t < state.T; ++t) {
        std::vector<tpf::TopTerm> terms(state.V);
        for (int v = 0; v < state.V; ++v) {
          terms[v] = {v, frex[state.hoff(k, v) + t]};
        }
        std::sort(terms.begin(), terms.end(),
                  [](const tpf::TopTerm& a, const tpf::TopTerm& b) {
                    return a.frex != b.frex ? a.frex > b.frex
                                            : a.term < b.term;
                  });
        terms.resize(std::min<std::size_t>(terms.size(),
                                           std::max(top_n, 0)));
        std::cout << "  period " << t << ":";
        for (const auto& tt : terms) std::cout << ' ' << corpus.term(tt.term);
        std::cout << "\n";
      }
    }
    std::cout << "wrote prevalence.csv, topics.json, dtc_time.csv, "
                 "dtc_topics.csv to "
              << out.string() << "\n";
    return 0;
  }

  return 0;
}

int fail(const char* kind, const std::string& message, int code) {
  nlohmann::json j;
  j["error"] = kind;
  j["message"] = message;
  std::cerr << j.dump() << "\n";
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const tpf::usage_error& e) {
    return fail("usage", e.what(), 2);
  } catch (const tpf::io_error& e) {
    return fail("io", e.what(), 3);
  } catch (const tpf::numeric_error& e) {
    return fail("numeric", e.what(), 4);
  } catch (const std::exception& e) {
    return fail("internal", e.what(), 1);
  }
}
