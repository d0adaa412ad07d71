#pragma once

#include <Eigen/Dense>

#include <complex>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

namespace tdbem {

using Complex = std::complex<double>;

enum class CQMethod { BDF1, BDF2, Trapezoidal };

std::string to_string(CQMethod method);
CQMethod parse_cq_method(const std::string& name);

/// Multistep convolution quadrature: step dt, N steps, contour radius rho
/// and contour_points M (0 selects the defaults M = N, rho = 1e-14^(1/(2M))).
struct CQScheme {
  CQMethod method = CQMethod::BDF2;
  int N = 0;
  double dt = 0.0;
  double rho = 0.0;
  int contour_points = 0;

  int points(int count) const;
  double radius(int m) const;
  /// Characteristic function delta(zeta).
  Complex delta(Complex zeta) const;
  void validate() const;
};

/// Causal time series: column n holds the coefficient vector at t = n*dt.
struct CausalSignal {
  double dt = 0.0;
  Eigen::MatrixXd samples;

  int N() const { return static_cast<int>(samples.cols()); }
  int dim() const { return static_cast<int>(samples.rows()); }
  double time(int n) const { return n * dt; }

  static CausalSignal zeros(int dim, int N, double dt);
};

using Transfer = std::function<Eigen::MatrixXcd(Complex)>;

/// Contour frequencies s_l = delta(rho exp(-2 pi i l/M))/dt for l = 0..M/2.
std::vector<Complex> contour_frequencies(const CQScheme& scheme, int m);

/// Weights w_0..w_{count-1}: Taylor coefficients of F(delta(zeta)/dt).
std::vector<Eigen::MatrixXd> cq_weights(const Transfer& transfer, const CQScheme& scheme, int count);

CausalSignal cq_forward(const std::vector<Eigen::MatrixXd>& weights, const CausalSignal& signal);

/// Marching-on-in-time solve of sum_m w_m x_{n-m} = rhs_n.
CausalSignal cq_solve(const std::vector<Eigen::MatrixXd>& weights, const CausalSignal& rhs);
CausalSignal cq_solve(const Transfer& transfer, const CausalSignal& rhs, const CQScheme& scheme);

/// Scaled transform X_l = sum_n rho^n x_n exp(-2 pi i l n/N), l = 0..N/2.
std::vector<Eigen::VectorXcd> scaled_transform(const CausalSignal& signal, const CQScheme& scheme);

/// Inverse of scaled_transform given the half spectrum of a real signal.
CausalSignal inverse_scaled_transform(const std::vector<Eigen::VectorXcd>& spectrum, const CQScheme& scheme);

/// Decoupled frequency-domain forms of cq_forward / cq_solve: one transfer
/// evaluation (or solve) per contour frequency. They agree with the marching
/// forms up to the aliasing level rho^N.
CausalSignal cq_apply_decoupled(const Transfer& transfer, const CausalSignal& signal, const CQScheme& scheme);
CausalSignal cq_solve_decoupled(const Transfer& transfer, const CausalSignal& rhs, const CQScheme& scheme);

/// Exact Taylor coefficients of (delta(zeta)/dt)^power for power = +1 or -1.
std::vector<double> scalar_series_weights(const CQScheme& scheme, int power, int count);

CausalSignal antiderivative(const CausalSignal& signal, const CQScheme& scheme);
CausalSignal derivative(const CausalSignal& signal, const CQScheme& scheme);

/// Sum over l = 0..2 of int_0^t ||f^(l)||, with second-order finite
/// difference derivatives and trapezoidal time quadrature.
double h2_seminorm(const CausalSignal& signal, double t, const std::function<double(const Eigen::VectorXd&)>& norm);

/// Finite-difference derivative used by h2_seminorm (second order, one-sided at the ends).
CausalSignal fd_derivative(const CausalSignal& signal);

/// Observed orders log2(e_k / e_{k+1}) of CQ applied to F(s) = 1/s on the
/// smooth window sin^4(pi t / T) over [0, T], with step counts N0 * 2^k,
/// k = 0..levels-1; e_k is the max error against the exact antiderivative.
std::vector<double> cq_convergence_orders(CQMethod method, int N0, int levels, double T);

void write_signal_csv(std::ostream& out, const CausalSignal& signal);
void write_signal_csv_file(const std::string& path, const CausalSignal& signal);
CausalSignal read_signal_csv(std::istream& in);
CausalSignal read_signal_csv_file(const std::string& path);

}  // namespace tdbem
