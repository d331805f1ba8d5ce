#include "tpf/armath.hpp"

#include <cmath>
#include <string>

#include "tpf/errors.hpp"

namespace tpf {

namespace {

constexpr double kLog2PiE = 2.8378770664093454836;

void check_dim(int T) {
  if (T < 1) throw usage_error("AR block length must be at least 1");
}

}  // namespace

Eigen::MatrixXd TriPrecision::dense() const {
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(dim, dim);
  for (int t = 0; t < dim; ++t) m(t, t) = main_diag(t);
  for (int t = 0; t + 1 < dim; ++t) {
    m(t, t + 1) = off_diag(t);
    m(t + 1, t) = off_diag(t);
  }
  return m;
}

double TriPrecision::det() const {
  double eta = main_diag(dim - 1) - 1.0;  // pivot deviation from one
  double det = 1.0 + eta;
  for (int t = dim - 2; t >= 0; --t) {
    const double q = off_diag(t) * off_diag(t);
    const double c = main_diag(t) - (1.0 + q);
    eta = c + q * eta / (1.0 + eta);
    det *= 1.0 + eta;
  }
  return det;
}

TriPrecision ar_precision(double delta, int T) {
  return expected_precision(delta, delta * delta, T);
}

TriPrecision expected_precision(double e1, double e2, int T) {
  check_dim(T);
  TriPrecision p;
  p.dim = T;
  p.main_diag = Eigen::VectorXd::Constant(T, 1.0 + e2);
  p.main_diag(T - 1) = 1.0;
  p.off_diag = Eigen::VectorXd::Constant(T > 1 ? T - 1 : 0, -e1);
  return p;
}

double partial_trace(const Eigen::MatrixXd& a, int k) {
  const int n = static_cast<int>(a.rows());
  if (a.cols() != n) throw usage_error("partial_trace: matrix must be square");
  double s = 0.0;
  switch (k) {
    case 0:
      for (int t = 0; t + 1 < n; ++t) s += a(t, t);
      return s;
    case 1:
      for (int t = 0; t + 1 < n; ++t) s += a(t, t + 1);
      return s;
    case -1:
      for (int t = 0; t + 1 < n; ++t) s += a(t + 1, t);
      return s;
    default:
      throw usage_error("partial_trace: k must be -1, 0 or 1");
  }
}

QuadTraces quad_traces(const Eigen::VectorXd& h_loc,
                       const Eigen::MatrixXd& h_cov, double mu_loc,
                       double mu_var) {
  const int T = static_cast<int>(h_loc.size());
  check_dim(T);
  QuadTraces q;
  for (int t = 0; t < T; ++t) {
    const double ct = h_loc(t) - mu_loc;
    const double d = h_cov(t, t) + ct * ct + mu_var;
    q.tr += d;
    if (t + 1 < T) q.tr0 += d;
  }
  for (int t = 1; t < T; ++t) {
    const double ct = h_loc(t) - mu_loc;
    const double cp = h_loc(t - 1) - mu_loc;
    q.tr1 += h_cov(t, t - 1) + ct * cp + mu_var;
  }
  return q;
}

QuadTraces quad_traces_diag(std::span<const double> h_loc,
                            std::span<const double> var, double mu_loc,
                            double mu_var) {
  const int T = static_cast<int>(h_loc.size());
  check_dim(T);
  QuadTraces q;
  for (int t = 0; t < T; ++t) {
    const double ct = h_loc[t] - mu_loc;
    const double d = var[t] + ct * ct + mu_var;
    q.tr += d;
    if (t + 1 < T) q.tr0 += d;
  }
  for (int t = 1; t < T; ++t) {
    q.tr1 += (h_loc[t] - mu_loc) * (h_loc[t - 1] - mu_loc) + mu_var;
  }
  return q;
}

double factor_entry(std::span<const double> factor, int T, int t, int j) {
  if (j > t) return 0.0;
  if (j == t) return std::exp(factor[t]);
  return factor[T + t * (t - 1) / 2 + j];
}

double factor_marginal_var(std::span<const double> factor, int T, int t) {
  double s = 0.0;
  for (int j = 0; j <= t; ++j) {
    const double l = factor_entry(factor, T, t, j);
    s += l * l;
  }
  return s;
}

QuadTraces quad_traces_factor(std::span<const double> h_loc,
                              std::span<const double> factor, double mu_loc,
                              double mu_var) {
  const int T = static_cast<int>(h_loc.size());
  check_dim(T);
  QuadTraces q;
  for (int t = 0; t < T; ++t) {
    const double ct = h_loc[t] - mu_loc;
    const double d = factor_marginal_var(factor, T, t) + ct * ct + mu_var;
    q.tr += d;
    if (t + 1 < T) q.tr0 += d;
  }
  for (int t = 1; t < T; ++t) {
    double cov = 0.0;  // (L L^T)(t, t-1)
    for (int j = 0; j <= t - 1; ++j) {
      cov += factor_entry(factor, T, t, j) * factor_entry(factor, T, t - 1, j);
    }
    q.tr1 += cov + (h_loc[t] - mu_loc) * (h_loc[t - 1] - mu_loc) + mu_var;
  }
  return q;
}

double expected_quadratic_form(const QuadTraces& q, double e1, double e2) {
  const double value = q.tr + e2 * q.tr0 - 2.0 * e1 * q.tr1;
  if (value < 0.0) {
    throw numeric_error("expected quadratic form came out negative (" +
                        std::to_string(value) + "); corrupted moments");
  }
  return value;
}

double expected_quadratic_form(const GaussBlockMoments& m) {
  return expected_quadratic_form(
      quad_traces(m.h_loc, m.h_cov, m.mu_loc, m.mu_var), m.delta_e1,
      m.delta_e2);
}

void expected_precision_multiply(std::span<const double> x, double e1,
                                 double e2, std::span<double> y) {
  const int T = static_cast<int>(x.size());
  check_dim(T);
  if (T == 1) {
    y[0] = x[0];
    return;
  }
  const double d = 1.0 + e2;
  y[0] = d * x[0] - e1 * x[1];
  for (int t = 1; t + 1 < T; ++t) {
    y[t] = d * x[t] - e1 * (x[t - 1] + x[t + 1]);
  }
  y[T - 1] = x[T - 1] - e1 * x[T - 2];
}

double entropy_gamma(double shp, double rte) {
  if (!(shp > 0.0) || !(rte > 0.0)) {
    throw numeric_error("entropy_gamma: parameters must be positive");
  }
  return (1.0 - shp) * digamma(shp) - std::log(rte) + shp + log_gamma(shp);
}

double entropy_normal(double var) {
  if (!(var > 0.0)) {
    throw numeric_error("entropy_normal: variance must be positive");
  }
  return 0.5 * std::log(var) + 0.5 * kLog2PiE;
}

double entropy_mvnormal(const Eigen::MatrixXd& cov) {
  const int T = static_cast<int>(cov.rows());
  check_dim(T);
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) {
    throw numeric_error("entropy_mvnormal: covariance is not positive definite");
  }
  double logdet = 0.0;
  for (int t = 0; t < T; ++t) logdet += std::log(llt.matrixL()(t, t));
  return entropy_mvnormal_logdet(2.0 * logdet, T);
}

double entropy_mvnormal_logdet(double logdet_cov, int T) {
  return 0.5 * logdet_cov + 0.5 * T * kLog2PiE;
}

}  // namespace tpf
