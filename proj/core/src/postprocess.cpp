#include "tpf/postprocess.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include <json.hpp>

#include "tpf/errors.hpp"
#include "tpf/parallel.hpp"

namespace tpf {

namespace {

void check_topic(const VariationalState& s, int k) {
  if (k < 0 || k >= s.K) {
    throw usage_error("topic index " + std::to_string(k) + " out of range");
  }
}

void check_period(const VariationalState& s, int t) {
  if (t < 0 || t >= s.T) {
    throw usage_error("period index " + std::to_string(t) + " out of range");
  }
}

// Empirical CDF with ties sharing their upper rank: value -> (# <= value)/n.
struct Ecdf {
  std::vector<double> sorted;
  explicit Ecdf(std::vector<double> values) : sorted(std::move(values)) {
    std::sort(sorted.begin(), sorted.end());
  }
  double operator()(double x) const {
    const auto it = std::upper_bound(sorted.begin(), sorted.end(), x);
    return static_cast<double>(it - sorted.begin()) /
           static_cast<double>(sorted.size());
  }
};

double sym_kl_univariate(double m1, double v1, double m2, double v2) {
  const double dv = v1 - v2;
  const double dm = m1 - m2;
  return 0.25 * (dv * dv + (v1 + v2) * dm * dm) / (v1 * v2);
}

Eigen::MatrixXd factor_matrix(const VariationalState& s, int k, int v) {
  const int T = s.T;
  Eigen::MatrixXd l = Eigen::MatrixXd::Zero(T, T);
  const auto f = s.h_factor_block(k, v);
  for (int t = 0; t < T; ++t) {
    l(t, t) = std::exp(f[t]);
    for (int j = 0; j < t; ++j) l(t, j) = f[T + t * (t - 1) / 2 + j];
  }
  return l;
}

}  // namespace

std::vector<double> term_intensity(const VariationalState& state) {
  const int K = state.K, V = state.V, T = state.T;
  std::vector<double> beta(state.h_loc.size());
  parallel_for(static_cast<std::size_t>(K) * V, [&](std::size_t i) {
    const int k = static_cast<int>(i) / V;
    const int v = static_cast<int>(i) % V;
    const int off = state.hoff(k, v);
    for (int t = 0; t < T; ++t) {
      beta[off + t] =
          std::exp(state.h_loc[off + t] + 0.5 * state.marginal_h_var(k, v, t));
    }
  });
  return beta;
}

std::vector<double> topic_prevalence(const VariationalState& state,
                                     const Corpus& corpus) {
  const int K = state.K, V = state.V, T = state.T;
  if (corpus.num_periods() != T || corpus.num_docs() != state.D) {
    throw usage_error("state and corpus dimensions disagree");
  }
  const auto beta = term_intensity(state);
  std::vector<double> psi(static_cast<std::size_t>(K) * T, 0.0);
  for (int t = 0; t < T; ++t) {
    for (int k = 0; k < K; ++k) {
      double doc_mass = 0.0;
      for (int d : corpus.docs_in_period(t)) {
        doc_mass += state.theta_shp[d * K + k] / state.theta_rte[d * K + k];
      }
      double term_mass = 0.0;
      for (int v = 0; v < V; ++v) term_mass += beta[state.hoff(k, v) + t];
      psi[static_cast<std::size_t>(k) * T + t] = doc_mass * term_mass;
    }
    double z = 0.0;
    for (int k = 0; k < K; ++k) z += psi[static_cast<std::size_t>(k) * T + t];
    if (!(z > 0.0)) {
      throw numeric_error("prevalence normaliser vanished at period " +
                          std::to_string(t));
    }
    for (int k = 0; k < K; ++k) psi[static_cast<std::size_t>(k) * T + t] /= z;
  }
  return psi;
}

std::vector<double> frex_scores(const VariationalState& state, double w) {
  if (!(w >= 0.0 && w <= 1.0)) {
    throw usage_error("frex weight must lie in [0, 1]");
  }
  const int K = state.K, V = state.V, T = state.T;
  const auto beta = term_intensity(state);
  std::vector<double> frex(beta.size());
  // exclusivity shares: beta normalised over topics per (v, t)
  std::vector<double> share(beta.size());
  parallel_for(static_cast<std::size_t>(V) * T, [&](std::size_t i) {
    const int v = static_cast<int>(i) / T;
    const int t = static_cast<int>(i) % T;
    double z = 0.0;
    for (int k = 0; k < K; ++k) z += beta[state.hoff(k, v) + t];
    for (int k = 0; k < K; ++k) {
      const int idx = state.hoff(k, v) + t;
      share[idx] = beta[idx] / z;
    }
  });
  parallel_for(static_cast<std::size_t>(K) * T, [&](std::size_t i) {
    const int k = static_cast<int>(i) / T;
    const int t = static_cast<int>(i) % T;
    std::vector<double> b(V), s(V);
    for (int v = 0; v < V; ++v) {
      b[v] = beta[state.hoff(k, v) + t];
      s[v] = share[state.hoff(k, v) + t];
    }
    const Ecdf fr(b);
    const Ecdf ex(s);
    for (int v = 0; v < V; ++v) {
      const int idx = state.hoff(k, v) + t;
      frex[idx] = 1.0 / ((1.0 - w) / fr(b[v]) + w / ex(s[v]));
    }
  });
  return frex;
}

double dtc_pair(const VariationalState& state, int k1, int t1, int k2,
                int t2) {
  check_topic(state, k1);
  check_topic(state, k2);
  check_period(state, t1);
  check_period(state, t2);
  double total = 0.0;
  for (int v = 0; v < state.V; ++v) {
    total += sym_kl_univariate(state.h_loc[state.hoff(k1, v) + t1],
                               state.marginal_h_var(k1, v, t1),
                               state.h_loc[state.hoff(k2, v) + t2],
                               state.marginal_h_var(k2, v, t2));
  }
  return total;
}

double dtc_topics(const VariationalState& state, int k1, int k2) {
  check_topic(state, k1);
  check_topic(state, k2);
  const int T = state.T, V = state.V;
  std::vector<double> slots(V);
  parallel_for(V, [&](std::size_t v) {
    double d = 0.0;
    if (state.cov == CovStructure::kDiagonal) {
      for (int t = 0; t < T; ++t) {
        d += sym_kl_univariate(state.h_loc[state.hoff(k1, v) + t],
                               state.h_var[state.hoff(k1, v) + t],
                               state.h_loc[state.hoff(k2, v) + t],
                               state.h_var[state.hoff(k2, v) + t]);
      }
    } else {
      const Eigen::MatrixXd lx = factor_matrix(state, k1, static_cast<int>(v));
      const Eigen::MatrixXd ly = factor_matrix(state, k2, static_cast<int>(v));
      for (int t = 0; t < T; ++t) {
        if (!(lx(t, t) > 0.0) || !(ly(t, t) > 0.0)) {
          throw numeric_error("singular covariance at term " +
                              std::to_string(v));
        }
      }
      Eigen::VectorXd dm(T);
      for (int t = 0; t < T; ++t) {
        dm(t) = state.h_loc[state.hoff(k1, v) + t] -
                state.h_loc[state.hoff(k2, v) + t];
      }
      const auto tx = lx.triangularView<Eigen::Lower>();
      const auto ty = ly.triangularView<Eigen::Lower>();
      // quadratic forms through triangular solves against each factor
      const Eigen::VectorXd zx = tx.solve(dm);
      const Eigen::VectorXd zy = ty.solve(dm);
      const Eigen::MatrixXd cxy = ty.solve(lx);  // Ly^-1 Lx
      const Eigen::MatrixXd cyx = tx.solve(ly);
      d = 0.25 * (zx.squaredNorm() + zy.squaredNorm() + cxy.squaredNorm() +
                  cyx.squaredNorm() - 2.0 * T);
    }
    slots[v] = d / T;
  });
  double total = 0.0;
  for (double s : slots) total += s;
  return total;
}

std::vector<TopTerm> top_terms(const VariationalState& state, int k, int t,
                               int n, double w) {
  check_topic(state, k);
  check_period(state, t);
  const auto frex = frex_scores(state, w);
  std::vector<TopTerm> terms(state.V);
  for (int v = 0; v < state.V; ++v) {
    terms[v] = {v, frex[state.hoff(k, v) + t]};
  }
  std::sort(terms.begin(), terms.end(), [](const TopTerm& a, const TopTerm& b) {
    return a.frex != b.frex ? a.frex > b.frex : a.term < b.term;
  });
  terms.resize(std::min<std::size_t>(terms.size(), std::max(n, 0)));
  return terms;
}

namespace {

std::string fmt(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

}  // namespace

void write_prevalence_csv(const VariationalState& state, const Corpus& corpus,
                          const std::string& path) {
  const auto psi = topic_prevalence(state, corpus);
  std::ofstream out(path);
  if (!out) throw io_error("cannot write " + path);
  out << "period";
  for (int k = 0; k < state.K; ++k) out << ",topic_" << k;
  out << '\n';
  for (int t = 0; t < state.T; ++t) {
    out << t;
    for (int k = 0; k < state.K; ++k) {
      out << ',' << fmt(psi[static_cast<std::size_t>(k) * state.T + t]);
    }
    out << '\n';
  }
  if (!out.flush()) throw io_error("failed writing " + path);
}

void write_topics_json(const VariationalState& state, const Corpus& corpus,
                       const std::string& path, double w, int top_n) {
  if (corpus.num_terms() != state.V) {
    throw usage_error("state and corpus dimensions disagree");
  }
  const auto frex = frex_scores(state, w);
  nlohmann::json root;
  root["frex_weight"] = w;
  root["topics"] = nlohmann::json::array();
  for (int k = 0; k < state.K; ++k) {
    nlohmann::json topic;
    topic["topic"] = k;
    topic["periods"] = nlohmann::json::array();
    for (int t = 0; t < state.T; ++t) {
      std::vector<TopTerm> terms(state.V);
      for (int v = 0; v < state.V; ++v) {
        terms[v] = {v, frex[state.hoff(k, v) + t]};
      }
      std::sort(terms.begin(), terms.end(),
                [](const TopTerm& a, const TopTerm& b) {
                  return a.frex != b.frex ? a.frex > b.frex : a.term < b.term;
                });
      terms.resize(std::min<std::size_t>(terms.size(), std::max(top_n, 0)));
      nlohmann::json period;
      period["period"] = t;
      period["terms"] = nlohmann::json::array();
      for (const auto& tt : terms) {
        period["terms"].push_back({{"term", corpus.term(tt.term)},
                                   {"term_id", tt.term},
                                   {"frex", tt.frex}});
      }
      topic["periods"].push_back(std::move(period));
    }
    root["topics"].push_back(std::move(topic));
  }
  std::ofstream out(path);
  if (!out) throw io_error("cannot write " + path);
  out << root.dump(2) << '\n';
  if (!out.flush()) throw io_error("failed writing " + path);
}

void write_dtc_time_csv(const VariationalState& state,
                        const std::string& path) {
  std::ofstream out(path);
  if (!out) throw io_error("cannot write " + path);
  out << "topic";
  for (int t = 1; t < state.T; ++t) out << ",p" << t - 1 << "_to_p" << t;
  out << '\n';
  for (int k = 0; k < state.K; ++k) {
    out << k;
    for (int t = 1; t < state.T; ++t) {
      out << ',' << fmt(dtc_pair(state, k, t - 1, k, t));
    }
    out << '\n';
  }
  if (!out.flush()) throw io_error("failed writing " + path);
}

void write_dtc_topics_csv(const VariationalState& state,
                          const std::string& path) {
  std::ofstream out(path);
  if (!out) throw io_error("cannot write " + path);
  out << "topic";
  for (int k = 0; k < state.K; ++k) out << ",topic_" << k;
  out << '\n';
  for (int k1 = 0; k1 < state.K; ++k1) {
    out << k1;
    for (int k2 = 0; k2 < state.K; ++k2) {
      out << ',' << fmt(dtc_topics(state, k1, k2));
    }
    out << '\n';
  }
  if (!out.flush()) throw io_error("failed writing " + path);
}

}  // namespace tpf
