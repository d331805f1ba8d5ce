#pragma once

#include <Eigen/Dense>
#include <span>

#include "tpf/numeric.hpp"

namespace tpf {

// Precision matrix of the stationary-start AR(1) sequence prior, up to the
// scalar precision: tridiagonal with main diagonal (1+d^2, ..., 1+d^2, 1)
// and off-diagonals -d. Its determinant is 1 for every d and T.
struct TriPrecision {
  int dim = 0;
  Eigen::VectorXd main_diag;  // dim entries
  Eigen::VectorXd off_diag;   // dim-1 entries

  Eigen::MatrixXd dense() const;

  // Determinant via bottom-up pivots, tracking each pivot's deviation from
  // one so the pattern's cancellation (1 + d^2) - d^2 is performed exactly.
  // A dense determinant is meaningless for |d| > 1 at moderate dim: the
  // smallest eigenvalue ~ d^(-2 dim), so entry rounding alone swamps the
  // unit determinant.
  double det() const;
};

TriPrecision ar_precision(double delta, int T);

// Expectation of the precision under delta ~ q with moments (e1, e2):
// same shape with d^2 -> e2 and d -> e1 entrywise.
TriPrecision expected_precision(double e1, double e2, int T);

// Sum of the k-th diagonal, k in {-1, 0, 1}, where k = 0 means the main
// diagonal excluding its last element.
double partial_trace(const Eigen::MatrixXd& a, int k);

// Moments of one AR block under the variational posterior.
struct GaussBlockMoments {
  Eigen::VectorXd h_loc;
  Eigen::MatrixXd h_cov;  // symmetric positive semi-definite
  double mu_loc = 0.0;
  double mu_var = 0.0;
  double delta_e1 = 0.0;  // E delta
  double delta_e2 = 0.0;  // E delta^2
};

// Partial traces of A = h_cov + (h_loc - mu 1)(h_loc - mu 1)^T + mu_var 11^T,
// the matrix whose generalised trace against E Delta gives the expected
// quadratic form E (h - mu 1)^T Delta (h - mu 1).
struct QuadTraces {
  double tr = 0.0;   // full trace of A
  double tr0 = 0.0;  // trace excluding the last diagonal element
  double tr1 = 0.0;  // first superdiagonal sum (A symmetric: = subdiagonal)
};

QuadTraces quad_traces(const Eigen::VectorXd& h_loc,
                       const Eigen::MatrixXd& h_cov, double mu_loc,
                       double mu_var);

// Fast paths on raw storage. `var` holds marginal variances (diagonal
// covariance); `factor` holds one block of the lower-triangular
// parameterisation: T log-diagonal entries then the strict lower triangle
// row by row, cov = L L^T.
QuadTraces quad_traces_diag(std::span<const double> h_loc,
                            std::span<const double> var, double mu_loc,
                            double mu_var);
QuadTraces quad_traces_factor(std::span<const double> h_loc,
                              std::span<const double> factor, double mu_loc,
                              double mu_var);

inline int factor_size(int T) { return T * (T + 1) / 2; }

// L(t, j) from the packed representation above (j <= t).
double factor_entry(std::span<const double> factor, int T, int t, int j);
// Marginal variance sum_j L(t,j)^2.
double factor_marginal_var(std::span<const double> factor, int T, int t);

// E (h - mu 1)^T Delta (h - mu 1) = tr + e2 * tr0 - 2 e1 * tr1; raises on a
// (numerically impossible) negative result.
double expected_quadratic_form(const QuadTraces& q, double e1, double e2);
double expected_quadratic_form(const GaussBlockMoments& m);

// y = E Delta x for the tridiagonal expected precision.
void expected_precision_multiply(std::span<const double> x, double e1,
                                 double e2, std::span<double> y);

// 1^T E Delta 1 = 1 + (T - 1)(1 - 2 e1 + e2).
inline double expected_precision_ones(double e1, double e2, int T) {
  return 1.0 + (T - 1) * (1.0 - 2.0 * e1 + e2);
}

// Entropies of the variational families.
double entropy_gamma(double shp, double rte);
double entropy_normal(double var);
double entropy_mvnormal(const Eigen::MatrixXd& cov);
// Same from a precomputed log-determinant of the covariance.
double entropy_mvnormal_logdet(double logdet_cov, int T);

}  // namespace tpf
