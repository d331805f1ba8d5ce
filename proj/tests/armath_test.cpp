#include <Eigen/Dense>
#include <cmath>
#include <random>
#include <vector>

#include <doctest.h>

#include "test_util.hpp"
#include "tpf/armath.hpp"
#include "tpf/errors.hpp"

using tutil::close_abs;
using tutil::close_rel;

namespace {

Eigen::MatrixXd random_psd(int T, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::MatrixXd m(T, T);
  for (int i = 0; i < T; ++i)
    for (int j = 0; j < T; ++j) m(i, j) = gauss(rng);
  return m * m.transpose() + 0.05 * Eigen::MatrixXd::Identity(T, T);
}

}  // namespace

TEST_CASE("tridiagonal precision worked examples") {
  auto p = tpf::ar_precision(0.5, 3).dense();
  Eigen::MatrixXd want(3, 3);
  want << 1.25, -0.5, 0.0, -0.5, 1.25, -0.5, 0.0, -0.5, 1.0;
  CHECK((p - want).cwiseAbs().maxCoeff() == 0.0);

  auto rw = tpf::ar_precision(1.0, 2).dense();
  Eigen::MatrixXd want2(2, 2);
  want2 << 2.0, -1.0, -1.0, 1.0;
  CHECK((rw - want2).cwiseAbs().maxCoeff() == 0.0);

  auto one = tpf::ar_precision(0.7, 1).dense();
  CHECK(one.rows() == 1);
  CHECK(one(0, 0) == 1.0);

  CHECK(tpf::ar_precision(0.5, 3).det() == 1.0);
  CHECK(tpf::ar_precision(1.0, 2).det() == 1.0);
  CHECK(tpf::ar_precision(0.7, 1).det() == 1.0);
}

TEST_CASE("determinant is one for every autocorrelation and length") {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> dd(-2.0, 2.0);
  std::uniform_int_distribution<int> tt(1, 50);
  for (int i = 0; i < 200; ++i) {
    const double delta = dd(rng);
    const int T = tt(rng);
    const auto p = tpf::ar_precision(delta, T);
    CAPTURE(delta);
    CAPTURE(T);
    CHECK(std::abs(p.det() - 1.0) <= 1e-8);
    // dense LU keeps precision only while delta^(2T) is moderate; beyond
    // that the smallest eigenvalue drowns in the entries' own rounding
    if (std::pow(std::max(1.0, std::abs(delta)), 2.0 * T) < 1e6) {
      CHECK(std::abs(p.dense().determinant() - 1.0) <= 1e-8);
    }
  }
}

TEST_CASE("partial traces on worked examples") {
  Eigen::MatrixXd a(2, 2);
  a << 1.0, 2.0, 3.0, 4.0;
  CHECK(tpf::partial_trace(a, 0) == 1.0);   // main diagonal minus the last
  CHECK(tpf::partial_trace(a, 1) == 2.0);   // first superdiagonal
  CHECK(tpf::partial_trace(a, -1) == 3.0);  // first subdiagonal
  CHECK(tpf::partial_trace(Eigen::MatrixXd::Identity(4, 4), 0) == 3.0);
  CHECK(tpf::partial_trace(Eigen::MatrixXd::Identity(4, 4), 1) == 0.0);
}

TEST_CASE("expected quadratic form equals the dense moment identity") {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (int rep = 0; rep < 40; ++rep) {
    const int T = 1 + static_cast<int>(unif(rng) * 8);
    tpf::GaussBlockMoments m;
    m.h_loc = Eigen::VectorXd::NullaryExpr(T, [&](int) { return gauss(rng); });
    m.h_cov = random_psd(T, rng);
    m.mu_loc = gauss(rng);
    m.mu_var = unif(rng);
    const double dloc = gauss(rng) * 0.7;
    const double dvar = unif(rng) * 0.5;
    m.delta_e1 = dloc;
    m.delta_e2 = dloc * dloc + dvar;

    const double got = tpf::expected_quadratic_form(m);

    // E (h-mu 1)' D (h-mu 1) = Tr(E D * A) with
    // A = cov + (loc-mu 1)(loc-mu 1)' + mu_var 11'
    Eigen::VectorXd ones = Eigen::VectorXd::Ones(T);
    Eigen::VectorXd c = m.h_loc - m.mu_loc * ones;
    Eigen::MatrixXd A =
        m.h_cov + c * c.transpose() + m.mu_var * ones * ones.transpose();
    const double want =
        (tpf::expected_precision(m.delta_e1, m.delta_e2, T).dense() * A)
            .trace();
    CAPTURE(T);
    CHECK(close_rel(got, want, 1e-10));
  }
}

TEST_CASE("raw-storage trace paths match the dense one") {
  std::mt19937_64 rng(12);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.1, 1.5);
  for (int rep = 0; rep < 20; ++rep) {
    const int T = 1 + rep % 7;
    std::vector<double> loc(T), var(T);
    for (int t = 0; t < T; ++t) {
      loc[t] = gauss(rng);
      var[t] = unif(rng);
    }
    const double mu_loc = gauss(rng), mu_var = unif(rng);

    // diagonal path
    Eigen::VectorXd eloc = Eigen::Map<Eigen::VectorXd>(loc.data(), T);
    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(T, T);
    for (int t = 0; t < T; ++t) cov(t, t) = var[t];
    auto qd = tpf::quad_traces_diag(loc, var, mu_loc, mu_var);
    auto qref = tpf::quad_traces(eloc, cov, mu_loc, mu_var);
    CHECK(close_rel(qd.tr, qref.tr, 1e-13));
    CHECK(close_rel(qd.tr0, qref.tr0, 1e-13));
    CHECK(close_rel(qd.tr1, qref.tr1, 1e-13));

    // factor path: cov = L L' with packed log-diagonal + strict lower
    std::vector<double> packed(tpf::factor_size(T));
    Eigen::MatrixXd L = Eigen::MatrixXd::Zero(T, T);
    for (int t = 0; t < T; ++t) {
      packed[t] = 0.3 * gauss(rng);
      L(t, t) = std::exp(packed[t]);
    }
    int idx = T;
    for (int t = 1; t < T; ++t) {
      for (int j = 0; j < t; ++j) {
        packed[idx] = 0.4 * gauss(rng);
        L(t, j) = packed[idx];
        ++idx;
      }
    }
    auto qf = tpf::quad_traces_factor(loc, packed, mu_loc, mu_var);
    auto qref2 = tpf::quad_traces(eloc, L * L.transpose(), mu_loc, mu_var);
    CHECK(close_rel(qf.tr, qref2.tr, 1e-12));
    CHECK(close_rel(qf.tr0, qref2.tr0, 1e-12));
    CHECK(close_rel(qf.tr1, qref2.tr1, 1e-12));

    for (int t = 0; t < T; ++t) {
      CHECK(close_rel(tpf::factor_entry(packed, T, t, t), L(t, t), 1e-14));
      for (int j = 0; j < t; ++j) {
        CHECK(tpf::factor_entry(packed, T, t, j) == L(t, j));
      }
      CHECK(close_rel(tpf::factor_marginal_var(packed, T, t),
                      L.row(t).squaredNorm(), 1e-13));
    }
  }
}

TEST_CASE("expected quadratic form matches Monte Carlo sampling") {
  const int T = 5;
  std::mt19937_64 rng(31);
  std::normal_distribution<double> gauss(0.0, 1.0);
  tpf::GaussBlockMoments m;
  m.h_loc = Eigen::VectorXd(T);
  m.h_loc << 0.4, -0.2, 0.9, 0.0, -0.6;
  m.h_cov = random_psd(T, rng);
  m.mu_loc = 0.3;
  m.mu_var = 0.2;
  const double dloc = 0.35, dvar = 0.15;
  m.delta_e1 = dloc;
  m.delta_e2 = dloc * dloc + dvar;
  const double want = tpf::expected_quadratic_form(m);

  Eigen::LLT<Eigen::MatrixXd> llt(m.h_cov);
  REQUIRE(llt.info() == Eigen::Success);
  Eigen::MatrixXd L = llt.matrixL();
  const int n = 100000;
  double sum = 0.0, sumsq = 0.0;
  Eigen::VectorXd z(T);
  for (int i = 0; i < n; ++i) {
    for (int t = 0; t < T; ++t) z(t) = gauss(rng);
    Eigen::VectorXd h = m.h_loc + L * z;
    const double mu = m.mu_loc + std::sqrt(m.mu_var) * gauss(rng);
    const double delta = dloc + std::sqrt(dvar) * gauss(rng);
    Eigen::VectorXd x = h.array() - mu;
    double qf = x(T - 1) * x(T - 1);
    for (int t = 0; t + 1 < T; ++t) qf += (1.0 + delta * delta) * x(t) * x(t);
    for (int t = 1; t < T; ++t) qf -= 2.0 * delta * x(t) * x(t - 1);
    sum += qf;
    sumsq += qf * qf;
  }
  const double mean = sum / n;
  const double se = std::sqrt((sumsq / n - mean * mean) / n);
  CHECK(std::abs(mean - want) <= 3.0 * se);
}

TEST_CASE("expected precision actions match the dense matrix") {
  std::mt19937_64 rng(13);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (int rep = 0; rep < 20; ++rep) {
    const int T = 1 + rep % 9;
    const double e1 = gauss(rng) * 0.6;
    const double e2 = e1 * e1 + unif(rng) * 0.4;
    std::vector<double> x(T), y(T);
    for (auto& e : x) e = gauss(rng);
    tpf::expected_precision_multiply(x, e1, e2, y);
    Eigen::MatrixXd ed = tpf::expected_precision(e1, e2, T).dense();
    Eigen::VectorXd want = ed * Eigen::Map<Eigen::VectorXd>(x.data(), T);
    for (int t = 0; t < T; ++t) CHECK(close_abs(y[t], want(t), 1e-13));
    const double ones =
        Eigen::VectorXd::Ones(T).transpose() * ed * Eigen::VectorXd::Ones(T);
    CHECK(close_rel(tpf::expected_precision_ones(e1, e2, T), ones, 1e-13));
  }
}

TEST_CASE("entropies match high-precision references") {
  CHECK(close_rel(tpf::entropy_gamma(1.0, 1.0), 1.0, 1e-13));
  CHECK(close_rel(tpf::entropy_gamma(9.3, 2.0), 1.8039801182540537777, 1e-13));
  CHECK(
      close_rel(tpf::entropy_gamma(0.3, 0.3), 0.14800384360391842202, 1e-12));
  CHECK(close_rel(tpf::entropy_gamma(2.5, 0.7), 2.0866228534437867577, 1e-13));

  const double half_log_2pie = 1.4189385332046727418;
  CHECK(close_rel(tpf::entropy_normal(1.0), half_log_2pie, 1e-14));
  CHECK(close_rel(tpf::entropy_normal(4.0),
                  half_log_2pie + 0.5 * std::log(4.0), 1e-14));

  CHECK(close_rel(tpf::entropy_mvnormal(Eigen::MatrixXd::Identity(3, 3)),
                  3.0 * half_log_2pie, 1e-13));
  Eigen::MatrixXd diag = Eigen::MatrixXd::Zero(3, 3);
  diag.diagonal() << 0.5, 2.0, 1.3;
  double want = 0.0;
  for (int i = 0; i < 3; ++i) want += tpf::entropy_normal(diag(i, i));
  CHECK(close_rel(tpf::entropy_mvnormal(diag), want, 1e-13));
  CHECK(close_rel(tpf::entropy_mvnormal_logdet(std::log(0.5 * 2.0 * 1.3), 3),
                  want, 1e-13));

  Eigen::MatrixXd bad(2, 2);
  bad << 1.0, 2.0, 2.0, 1.0;  // eigenvalues -1 and 3
  CHECK_THROWS_AS(tpf::entropy_mvnormal(bad), tpf::numeric_error);
}

TEST_CASE("impossible negative quadratic form is rejected") {
  tpf::QuadTraces q;
  q.tr = -5.0;
  q.tr0 = 0.0;
  q.tr1 = 0.0;
  CHECK_THROWS_AS(tpf::expected_quadratic_form(q, 0.0, 0.0),
                  tpf::numeric_error);
}
