#include "tpf/numeric.hpp"

#include <cmath>
#include <string>

#include "tpf/errors.hpp"

namespace tpf {

double digamma(double x) {
  if (!(x > 0.0)) {
    throw numeric_error("digamma: argument must be positive, got " +
                        std::to_string(x));
  }
  double result = 0.0;
  while (x < 8.0) {
    result -= 1.0 / x;
    x += 1.0;
  }
  // Asymptotic series in 1/x^2; with x >= 8 the truncation error is below
  // 1e-15 relative.
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  double series =
      inv2 *
      (1.0 / 12.0 -
       inv2 * (1.0 / 120.0 -
               inv2 * (1.0 / 252.0 -
                       inv2 * (1.0 / 240.0 -
                               inv2 * (1.0 / 132.0 -
                                       inv2 * (691.0 / 32760.0 -
                                               inv2 * (1.0 / 12.0)))))));
  return result + std::log(x) - 0.5 * inv - series;
}

double log_gamma(double x) {
  if (!(x > 0.0)) {
    throw numeric_error("log_gamma: argument must be positive, got " +
                        std::to_string(x));
  }
  int sign = 0;
  return ::lgamma_r(x, &sign);
}

TruncatedMoments truncated_normal_moments(double loc, double var) {
  if (!(var > 0.0)) {
    throw numeric_error("truncated_normal_moments: variance must be positive");
  }
  const double sd = std::sqrt(var);
  const double a = (-1.0 - loc) / sd;
  const double b = (1.0 - loc) / sd;
  const double z = normal_cdf(b) - normal_cdf(a);
  if (!(z > 0.0)) {
    throw numeric_error(
        "truncated_normal_moments: no mass left on [-1, 1] for loc=" +
        std::to_string(loc) + " var=" + std::to_string(var));
  }
  const double pa = normal_pdf(a);
  const double pb = normal_pdf(b);
  TruncatedMoments m;
  m.mean = loc + sd * (pa - pb) / z;
  const double r = (pa - pb) / z;
  m.var = var * (1.0 + (a * pa - b * pb) / z - r * r);
  m.second = m.var + m.mean * m.mean;
  m.entropy = std::log(2.5066282746310005024 * sd * z) + 0.5 +
              (a * pa - b * pb) / (2.0 * z);
  m.log_z = std::log(z);
  return m;
}

namespace {

double pairwise_sum_range(const double* data, std::size_t n) {
  if (n <= 16) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += data[i];
    return s;
  }
  const std::size_t half = n / 2;
  return pairwise_sum_range(data, half) +
         pairwise_sum_range(data + half, n - half);
}

}  // namespace

double pairwise_sum(std::span<const double> values) {
  return pairwise_sum_range(values.data(), values.size());
}

}  // namespace tpf
