#include "doctest.h"

#include "tdbem/cq.hpp"
#include "tdbem/error.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

using namespace tdbem;

namespace {

CausalSignal smooth_signal(int dim, int N, double dt, unsigned seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> u(0.5, 2.0);
  CausalSignal s = CausalSignal::zeros(dim, N, dt);
  for (int i = 0; i < dim; ++i) {
    const double f = u(rng), a = u(rng);
    for (int n = 0; n < N; ++n) s.samples(i, n) = a * std::pow(std::sin(f * n * dt), 4);
  }
  return s;
}

/// F(s) = I + A/(s + 1) + B/s with fixed matrices.
Transfer test_transfer() {
  Eigen::MatrixXd A(2, 2), B(2, 2);
  A << 2.0, 0.3, -0.1, 1.5;
  B << 0.5, 0.0, 0.2, 0.7;
  return [A, B](Complex s) -> Eigen::MatrixXcd {
    return A.cast<Complex>() / (s + 1.0) + B.cast<Complex>() / s + Eigen::MatrixXcd::Identity(2, 2);
  };
}

}  // namespace

TEST_CASE("method names round trip") {
  for (CQMethod m : {CQMethod::BDF1, CQMethod::BDF2, CQMethod::Trapezoidal}) CHECK(parse_cq_method(to_string(m)) == m);
  CHECK_THROWS_AS(parse_cq_method("euler42"), ConfigError);
}

TEST_CASE("scheme validation") {
  CQScheme s{CQMethod::BDF2, 16, 0.1};
  CHECK_NOTHROW(s.validate());
  s.rho = 1.5;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s.rho = 0.0;
  s.dt = 0.0;
  CHECK_THROWS_AS(s.validate(), ConfigError);
}

TEST_CASE("contour frequencies lie in the right half plane") {
  for (CQMethod m : {CQMethod::BDF1, CQMethod::BDF2, CQMethod::Trapezoidal}) {
    const CQScheme scheme{m, 32, 0.05};
    const auto s = contour_frequencies(scheme, 32);
    CHECK(s.size() == 17);
    for (const Complex& z : s) CHECK(z.real() > 0.0);
    CHECK(std::abs(s.front().imag()) < 1e-12);
  }
}

TEST_CASE("exact series weights of the integrator and differentiator") {
  const CQScheme bdf1{CQMethod::BDF1, 8, 0.25};
  for (double w : scalar_series_weights(bdf1, -1, 8)) CHECK(w == doctest::Approx(0.25));
  const auto d = scalar_series_weights(bdf1, 1, 4);
  CHECK(d[0] == doctest::Approx(4.0));
  CHECK(d[1] == doctest::Approx(-4.0));
  CHECK(d[2] == doctest::Approx(0.0));
  const CQScheme trap{CQMethod::Trapezoidal, 8, 0.5};
  const auto t = scalar_series_weights(trap, -1, 4);
  CHECK(t[0] == doctest::Approx(0.25));
  CHECK(t[1] == doctest::Approx(0.5));
  CHECK(t[3] == doctest::Approx(0.5));
}

TEST_CASE("contour weights reproduce the exact series") {
  for (CQMethod m : {CQMethod::BDF1, CQMethod::BDF2, CQMethod::Trapezoidal}) {
    const CQScheme scheme{m, 24, 0.1};
    const auto exact = scalar_series_weights(scheme, -1, 24);
    const Transfer inv = [](Complex s) { return Eigen::MatrixXcd::Constant(1, 1, 1.0 / s); };
    // Default contour: aliasing level rho^M = 1e-7.
    const auto w = cq_weights(inv, scheme, 24);
    for (int k = 0; k < 24; ++k) CHECK(w[k](0, 0) == doctest::Approx(exact[k]).epsilon(1e-6));
    CQScheme fine = scheme;
    fine.contour_points = 96;
    fine.rho = std::pow(1e-14, 1.0 / 96);
    const auto wf = cq_weights(inv, fine, 24);
    for (int k = 0; k < 24; ++k) CHECK(wf[k](0, 0) == doctest::Approx(exact[k]).epsilon(1e-9));
  }
}

TEST_CASE("weights of the identity and of s") {
  const CQScheme scheme{CQMethod::BDF1, 16, 0.2};
  const auto id = cq_weights([](Complex) { return Eigen::MatrixXcd::Identity(3, 3); }, scheme, 16);
  CHECK((id[0] - Eigen::MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff() < 1e-10);
  for (int n = 1; n < 16; ++n) CHECK(id[n].cwiseAbs().maxCoeff() < 1e-10);
  const auto d = cq_weights([](Complex s) { return Eigen::MatrixXcd::Constant(1, 1, s); }, scheme, 16);
  CHECK(d[0](0, 0) == doctest::Approx(5.0).epsilon(1e-9));
  CHECK(d[1](0, 0) == doctest::Approx(-5.0).epsilon(1e-9));
  for (int n = 2; n < 16; ++n) CHECK(std::abs(d[n](0, 0)) < 1e-8);
}

TEST_CASE("doubling the contour points leaves the weights unchanged") {
  const std::vector<Transfer> transfers{
      test_transfer(),
      [](Complex s) { return Eigen::MatrixXcd::Constant(1, 1, 1.0 / std::sqrt(s)); },
      [](Complex s) { return Eigen::MatrixXcd::Constant(1, 1, std::exp(-s) / (s + 1.0)); }};
  for (CQMethod m : {CQMethod::BDF1, CQMethod::BDF2, CQMethod::Trapezoidal}) {
    const CQScheme base{m, 128, 0.05};
    CQScheme doubled = base;
    doubled.contour_points = 256;
    for (const Transfer& F : transfers) {
      const auto a = cq_weights(F, base, 128), b = cq_weights(F, doubled, 128);
      double scale = 0.0, diff = 0.0;
      for (int n = 0; n < 128; ++n) {
        scale = std::max(scale, a[n].cwiseAbs().maxCoeff());
        diff = std::max(diff, (a[n] - b[n]).cwiseAbs().maxCoeff());
      }
      CHECK(diff < 1e-8 * scale);
    }
  }
}

TEST_CASE("forward convolution is causal and time invariant") {
  const CQScheme scheme{CQMethod::BDF2, 40, 0.1};
  const auto w = cq_weights(test_transfer(), scheme, 40);
  const int k = 7;
  CausalSignal in = smooth_signal(2, 40, 0.1, 11);
  CausalSignal shifted = CausalSignal::zeros(2, 40, 0.1);
  shifted.samples.rightCols(40 - k) = in.samples.leftCols(40 - k);
  const CausalSignal out = cq_forward(w, in), out_shifted = cq_forward(w, shifted);
  CHECK(out_shifted.samples.leftCols(k).isZero());
  CHECK((out_shifted.samples.rightCols(40 - k) - out.samples.leftCols(40 - k)).cwiseAbs().maxCoeff() <
        1e-12 * out.samples.cwiseAbs().maxCoeff());
}

TEST_CASE("shift transfer delays a smooth signal at the method order") {
  auto f = [](double t) { return t > 0.0 ? t * t * std::exp(-t) : 0.0; };
  const double delay = 1.0, T = 4.0;
  const double expected[] = {1.0, 2.0, 2.0};
  int idx = 0;
  for (CQMethod m : {CQMethod::BDF1, CQMethod::BDF2, CQMethod::Trapezoidal}) {
    std::vector<double> err;
    for (int N : {128, 256, 512}) {
      const double dt = T / N;
      const CQScheme scheme{m, N, dt};
      const auto w = cq_weights(
          [delay](Complex s) { return Eigen::MatrixXcd::Constant(1, 1, std::exp(-s * delay)); }, scheme, N);
      CausalSignal in = CausalSignal::zeros(1, N, dt);
      for (int n = 0; n < N; ++n) in.samples(0, n) = f(n * dt);
      const CausalSignal out = cq_forward(w, in);
      // Error at the fixed time t = 3, clear of the delayed onset.
      const int n = 3 * N / 4;
      err.push_back(std::abs(out.samples(0, n) - f(n * dt - delay)));
    }
    INFO(to_string(m));
    CHECK(std::log2(err[1] / err[2]) == doctest::Approx(expected[idx]).epsilon(0.2));
    ++idx;
  }
}

TEST_CASE("scaled transform round trip") {
  const CQScheme scheme{CQMethod::BDF2, 33, 0.1};
  const CausalSignal s = smooth_signal(3, 33, 0.1, 2);
  const CausalSignal back = inverse_scaled_transform(scaled_transform(s, scheme), scheme);
  // Round-off is amplified by rho^-N = 1e7.
  CHECK((back.samples - s.samples).cwiseAbs().maxCoeff() < 1e-8 * s.samples.cwiseAbs().maxCoeff());
}

TEST_CASE("decoupled and marching solves agree") {
  for (CQMethod m : {CQMethod::BDF1, CQMethod::BDF2, CQMethod::Trapezoidal}) {
    const CQScheme scheme{m, 64, 0.05};
    const CausalSignal rhs = smooth_signal(2, 64, 0.05, 7);
    const Transfer F = test_transfer();
    const CausalSignal marching = cq_solve(F, rhs, scheme);
    const CausalSignal decoupled = cq_solve_decoupled(F, rhs, scheme);
    const double scale = marching.samples.cwiseAbs().maxCoeff();
    // The contour radius puts the aliasing level rho^N at 1e-7.
    CHECK((marching.samples - decoupled.samples).cwiseAbs().maxCoeff() < 1e-6 * scale);

    const CausalSignal fwd = cq_forward(cq_weights(F, scheme, 64), marching);
    CHECK((fwd.samples - rhs.samples).cwiseAbs().maxCoeff() < 1e-8 * rhs.samples.cwiseAbs().maxCoeff());
    const CausalSignal applied = cq_apply_decoupled(F, decoupled, scheme);
    CHECK((applied.samples - rhs.samples).cwiseAbs().maxCoeff() < 1e-8 * rhs.samples.cwiseAbs().maxCoeff());
  }
}

TEST_CASE("zero data give zero output") {
  const CQScheme scheme{CQMethod::BDF2, 16, 0.1};
  const CausalSignal z = CausalSignal::zeros(2, 16, 0.1);
  CHECK(cq_solve_decoupled(test_transfer(), z, scheme).samples.isZero());
  CHECK(antiderivative(z, scheme).samples.isZero());
}

TEST_CASE("derivative inverts the antiderivative") {
  const CQScheme scheme{CQMethod::BDF2, 40, 0.1};
  const CausalSignal s = smooth_signal(2, 40, 0.1, 5);
  const CausalSignal back = derivative(antiderivative(s, scheme), scheme);
  CHECK((back.samples - s.samples).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("observed orders of the three methods") {
  const double expected[] = {1.0, 2.0, 2.0};
  int k = 0;
  for (CQMethod m : {CQMethod::BDF1, CQMethod::BDF2, CQMethod::Trapezoidal}) {
    const auto orders = cq_convergence_orders(m, 32, 4, 4.0);
    REQUIRE(orders.size() == 3);
    CHECK(orders.back() == doctest::Approx(expected[k]).epsilon(0.2));
    ++k;
  }
}

TEST_CASE("finite-difference derivative and H2 seminorm") {
  const int N = 201;
  const double dt = 0.01;
  CausalSignal s = CausalSignal::zeros(1, N, dt);
  for (int n = 0; n < N; ++n) s.samples(0, n) = std::pow(n * dt, 2);
  const CausalSignal d = fd_derivative(s);
  for (int n = 0; n < N; ++n) CHECK(d.samples(0, n) == doctest::Approx(2.0 * n * dt).epsilon(1e-9));
  // t^2 on [0, 2]: 8/3 + 4 + 4.
  const double h2 = h2_seminorm(s, 2.0, [](const Eigen::VectorXd& v) { return v.norm(); });
  CHECK(h2 == doctest::Approx(8.0 / 3.0 + 4.0 + 4.0).epsilon(1e-3));
}

TEST_CASE("signal csv round trip") {
  const CausalSignal s = smooth_signal(4, 12, 0.125, 9);
  std::stringstream ss;
  write_signal_csv(ss, s);
  const CausalSignal r = read_signal_csv(ss);
  CHECK(r.dt == s.dt);
  CHECK(r.samples == s.samples);
  std::stringstream bad("t,comp0\n0,abc\n");
  CHECK_THROWS_AS(read_signal_csv(bad), ConfigError);
}
