#pragma once

#include <cmath>
#include <cstddef>
#include <span>

namespace tpf {

// Digamma and log-gamma, accurate to better than 1e-12 relative over the
// range the updates touch (shapes and rates in (0, 1e6]).
double digamma(double x);
double log_gamma(double x);

inline double normal_pdf(double x) {
  return 0.3989422804014326779 * std::exp(-0.5 * x * x);
}

inline double normal_cdf(double x) {
  return 0.5 * std::erfc(-x * 0.7071067811865475244);
}

// Moments of a normal(loc, var) restricted to [-1, 1].
struct TruncatedMoments {
  double mean = 0.0;
  double var = 0.0;
  double second = 0.0;  // E x^2
  double entropy = 0.0;
  double log_z = 0.0;  // log of the normalising mass on [-1, 1]
};

TruncatedMoments truncated_normal_moments(double loc, double var);

// Fixed-structure pairwise summation; independent of thread count and used
// as the ordered reduction everywhere a parallel loop fills a slot array.
double pairwise_sum(std::span<const double> values);

}  // namespace tpf
