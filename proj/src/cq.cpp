#include "tdbem/cq.hpp"

#include "tdbem/error.hpp"

#include <unsupported/Eigen/FFT>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

namespace tdbem {

namespace {

constexpr double kContourEpsilon = 1e-14;

// Numerator and denominator polynomials of delta(zeta) = P(zeta)/Q(zeta).
void delta_polynomials(CQMethod method, std::vector<double>& p, std::vector<double>& q) {
  switch (method) {
    case CQMethod::BDF1:
      p = {1.0, -1.0};
      q = {1.0};
      break;
    case CQMethod::BDF2:
      p = {1.5, -2.0, 0.5};
      q = {1.0};
      break;
    case CQMethod::Trapezoidal:
      p = {2.0, -2.0};
      q = {1.0, 1.0};
      break;
  }
}

// Taylor coefficients of a(zeta)/b(zeta).
std::vector<double> series_divide(const std::vector<double>& a, const std::vector<double>& b, int count) {
  std::vector<double> c(count, 0.0);
  for (int n = 0; n < count; ++n) {
    double v = n < static_cast<int>(a.size()) ? a[n] : 0.0;
    for (int k = 1; k < static_cast<int>(b.size()) && k <= n; ++k) v -= b[k] * c[n - k];
    c[n] = v / b[0];
  }
  return c;
}

void check_signal(const CausalSignal& s) {
  if (!(s.dt > 0.0)) throw ConfigError("signal: dt must be positive");
}

}  // namespace

std::string to_string(CQMethod method) {
  switch (method) {
    case CQMethod::BDF1: return "BDF1";
    case CQMethod::BDF2: return "BDF2";
    case CQMethod::Trapezoidal: return "trapezoidal";
  }
  return "?";
}

CQMethod parse_cq_method(const std::string& name) {
  if (name == "BDF1" || name == "bdf1") return CQMethod::BDF1;
  if (name == "BDF2" || name == "bdf2") return CQMethod::BDF2;
  if (name == "trapezoidal" || name == "TR") return CQMethod::Trapezoidal;
  throw ConfigError("unknown CQ method '" + name + "'");
}

int CQScheme::points(int count) const { return contour_points > 0 ? contour_points : std::max(count, 1); }

double CQScheme::radius(int m) const {
  if (rho > 0.0) return rho;
  return std::pow(kContourEpsilon, 1.0 / (2.0 * m));
}

Complex CQScheme::delta(Complex z) const {
  switch (method) {
    case CQMethod::BDF1: return 1.0 - z;
    case CQMethod::BDF2: return 1.5 - 2.0 * z + 0.5 * z * z;
    case CQMethod::Trapezoidal: return 2.0 * (1.0 - z) / (1.0 + z);
  }
  return 0.0;
}

void CQScheme::validate() const {
  if (N < 1) throw ConfigError("CQ scheme: N must be >= 1");
  if (!(dt > 0.0)) throw ConfigError("CQ scheme: dt must be positive");
  if (rho != 0.0 && !(rho > 0.0 && rho < 1.0)) throw ConfigError("CQ scheme: contour radius must lie in (0, 1)");
  if (contour_points < 0) throw ConfigError("CQ scheme: contour point count must be >= 0");
  const int m = points(N);
  if (std::pow(radius(m), m) < 1e-300) throw ConfigError("CQ scheme: rho^M underflows");
}

CausalSignal CausalSignal::zeros(int dim, int N, double dt) {
  CausalSignal s;
  s.dt = dt;
  s.samples = Eigen::MatrixXd::Zero(dim, N);
  return s;
}

std::vector<Complex> contour_frequencies(const CQScheme& scheme, int m) {
  const double rho = scheme.radius(m);
  std::vector<Complex> out;
  for (int l = 0; l <= m / 2; ++l) {
    const Complex zeta = std::polar(rho, -2.0 * std::numbers::pi * l / m);
    const Complex s = scheme.delta(zeta) / scheme.dt;
    if (!(s.real() > 0.0)) throw ConfigError("CQ contour frequency with Re s <= 0");
    out.push_back(s);
  }
  return out;
}

std::vector<Eigen::MatrixXd> cq_weights(const Transfer& transfer, const CQScheme& scheme, int count) {
  scheme.validate();
  if (count < 1) throw ConfigError("cq_weights: count must be >= 1");
  const int m = scheme.points(count);
  if (m < count) throw ConfigError("cq_weights: contour points must be >= count");
  const double rho = scheme.radius(m);
  const std::vector<Complex> freqs = contour_frequencies(scheme, m);

  std::vector<Eigen::MatrixXcd> values;
  values.reserve(freqs.size());
  for (const Complex& s : freqs) values.push_back(transfer(s));
  const int rows = static_cast<int>(values[0].rows()), cols = static_cast<int>(values[0].cols());

  std::vector<Eigen::MatrixXd> weights(count, Eigen::MatrixXd::Zero(rows, cols));
  Eigen::FFT<double> fft;
  std::vector<Complex> spectrum(m), series(m);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) {
      for (int l = 0; l <= m / 2; ++l) spectrum[l] = values[l](i, j);
      for (int l = m / 2 + 1; l < m; ++l) spectrum[l] = std::conj(values[m - l](i, j));
      // F(delta(zeta_l)) = sum_n w_n rho^n exp(-2 pi i l n/M), so w_n rho^n is the inverse DFT.
      fft.inv(series, spectrum);
      double scale = 1.0;
      for (int n = 0; n < count; ++n) {
        weights[n](i, j) = series[n].real() / scale;
        scale *= rho;
      }
    }
  }
  return weights;
}

CausalSignal cq_forward(const std::vector<Eigen::MatrixXd>& weights, const CausalSignal& signal) {
  check_signal(signal);
  const int N = signal.N();
  if (static_cast<int>(weights.size()) < N) throw ConfigError("cq_forward: fewer weights than signal steps");
  if (N == 0) return signal;
  if (weights[0].cols() != signal.dim()) throw ConfigError("cq_forward: weight/signal dimension mismatch");
  CausalSignal out = CausalSignal::zeros(static_cast<int>(weights[0].rows()), N, signal.dt);
  for (int n = 0; n < N; ++n) {
    for (int m = 0; m <= n; ++m) out.samples.col(n).noalias() += weights[m] * signal.samples.col(n - m);
  }
  return out;
}

CausalSignal cq_solve(const std::vector<Eigen::MatrixXd>& weights, const CausalSignal& rhs) {
  check_signal(rhs);
  const int N = rhs.N();
  if (static_cast<int>(weights.size()) < N) throw ConfigError("cq_solve: fewer weights than signal steps");
  if (N == 0) return rhs;
  if (weights[0].rows() != rhs.dim() || weights[0].cols() != weights[0].rows()) {
    throw ConfigError("cq_solve: w0 must be square and match the signal dimension");
  }
  Eigen::FullPivLU<Eigen::MatrixXd> lu(weights[0]);
  if (!lu.isInvertible()) throw NumericalError("cq_solve: w0 is singular");
  CausalSignal x = CausalSignal::zeros(rhs.dim(), N, rhs.dt);
  for (int n = 0; n < N; ++n) {
    Eigen::VectorXd r = rhs.samples.col(n);
    for (int m = 1; m <= n; ++m) r.noalias() -= weights[m] * x.samples.col(n - m);
    x.samples.col(n) = lu.solve(r);
  }
  return x;
}

CausalSignal cq_solve(const Transfer& transfer, const CausalSignal& rhs, const CQScheme& scheme) {
  return cq_solve(cq_weights(transfer, scheme, std::max(rhs.N(), 1)), rhs);
}

std::vector<Eigen::VectorXcd> scaled_transform(const CausalSignal& signal, const CQScheme& scheme) {
  const int N = signal.N();
  if (N != scheme.N) throw ConfigError("scaled_transform: signal length differs from scheme N");
  const double rho = scheme.radius(N);
  std::vector<Eigen::VectorXcd> out(N / 2 + 1, Eigen::VectorXcd(signal.dim()));
  Eigen::FFT<double> fft;
  std::vector<double> series(N);
  std::vector<Complex> spectrum;
  for (int i = 0; i < signal.dim(); ++i) {
    double scale = 1.0;
    for (int n = 0; n < N; ++n) {
      series[n] = scale * signal.samples(i, n);
      scale *= rho;
    }
    fft.fwd(spectrum, series);
    for (int l = 0; l <= N / 2; ++l) out[l][i] = spectrum[l];
  }
  return out;
}

CausalSignal inverse_scaled_transform(const std::vector<Eigen::VectorXcd>& spectrum, const CQScheme& scheme) {
  const int N = scheme.N;
  if (static_cast<int>(spectrum.size()) != N / 2 + 1) throw ConfigError("inverse_scaled_transform: wrong size");
  const int dim = static_cast<int>(spectrum[0].size());
  const double rho = scheme.radius(N);
  CausalSignal out = CausalSignal::zeros(dim, N, scheme.dt);
  Eigen::FFT<double> fft;
  std::vector<Complex> full(N), series(N);
  for (int i = 0; i < dim; ++i) {
    for (int l = 0; l <= N / 2; ++l) full[l] = spectrum[l][i];
    for (int l = N / 2 + 1; l < N; ++l) full[l] = std::conj(spectrum[N - l][i]);
    fft.inv(series, full);
    double scale = 1.0;
    for (int n = 0; n < N; ++n) {
      out.samples(i, n) = series[n].real() / scale;
      scale *= rho;
    }
  }
  return out;
}

CausalSignal cq_apply_decoupled(const Transfer& transfer, const CausalSignal& signal, const CQScheme& scheme) {
  scheme.validate();
  check_signal(signal);
  auto spectrum = scaled_transform(signal, scheme);
  const auto freqs = contour_frequencies(scheme, scheme.N);
  std::vector<Eigen::VectorXcd> out(freqs.size());
  for (size_t l = 0; l < freqs.size(); ++l) out[l] = transfer(freqs[l]) * spectrum[l];
  CausalSignal result = inverse_scaled_transform(out, scheme);
  result.dt = signal.dt;
  return result;
}

CausalSignal cq_solve_decoupled(const Transfer& transfer, const CausalSignal& rhs, const CQScheme& scheme) {
  scheme.validate();
  check_signal(rhs);
  auto spectrum = scaled_transform(rhs, scheme);
  const auto freqs = contour_frequencies(scheme, scheme.N);
  std::vector<Eigen::VectorXcd> out(freqs.size());
  for (size_t l = 0; l < freqs.size(); ++l) {
    Eigen::PartialPivLU<Eigen::MatrixXcd> lu(transfer(freqs[l]));
    out[l] = lu.solve(spectrum[l]);
    if (!out[l].allFinite()) throw NumericalError("cq_solve_decoupled: singular transfer matrix");
  }
  CausalSignal result = inverse_scaled_transform(out, scheme);
  result.dt = rhs.dt;
  return result;
}

std::vector<double> scalar_series_weights(const CQScheme& scheme, int power, int count) {
  if (power != 1 && power != -1) throw ConfigError("scalar_series_weights: power must be +1 or -1");
  std::vector<double> p, q;
  delta_polynomials(scheme.method, p, q);
  std::vector<double> w = power == 1 ? series_divide(p, q, count) : series_divide(q, p, count);
  const double factor = power == 1 ? 1.0 / scheme.dt : scheme.dt;
  for (double& v : w) v *= factor;
  return w;
}

namespace {

CausalSignal scalar_convolve(const std::vector<double>& w, const CausalSignal& signal) {
  CausalSignal out = CausalSignal::zeros(signal.dim(), signal.N(), signal.dt);
  for (int n = 0; n < signal.N(); ++n) {
    for (int m = 0; m <= n; ++m) out.samples.col(n) += w[m] * signal.samples.col(n - m);
  }
  return out;
}

}  // namespace

CausalSignal antiderivative(const CausalSignal& signal, const CQScheme& scheme) {
  check_signal(signal);
  return scalar_convolve(scalar_series_weights(scheme, -1, signal.N()), signal);
}

CausalSignal derivative(const CausalSignal& signal, const CQScheme& scheme) {
  check_signal(signal);
  return scalar_convolve(scalar_series_weights(scheme, 1, signal.N()), signal);
}

CausalSignal fd_derivative(const CausalSignal& f) {
  check_signal(f);
  const int N = f.N();
  CausalSignal out = CausalSignal::zeros(f.dim(), N, f.dt);
  if (N < 3) throw ConfigError("fd_derivative: needs at least 3 samples");
  const double c = 0.5 / f.dt;
  const auto& x = f.samples;
  out.samples.col(0) = c * (-3.0 * x.col(0) + 4.0 * x.col(1) - x.col(2));
  for (int n = 1; n < N - 1; ++n) out.samples.col(n) = c * (x.col(n + 1) - x.col(n - 1));
  out.samples.col(N - 1) = c * (3.0 * x.col(N - 1) - 4.0 * x.col(N - 2) + x.col(N - 3));
  return out;
}

double h2_seminorm(const CausalSignal& signal, double t, const std::function<double(const Eigen::VectorXd&)>& norm) {
  check_signal(signal);
  const int N = signal.N();
  const double dt = signal.dt;
  if (t < 0.0 || t > N * dt * (1.0 + 1e-12)) throw ConfigError("h2_seminorm: t out of range");
  if (t == 0.0) return 0.0;
  const CausalSignal d1 = fd_derivative(signal);
  const CausalSignal d2 = fd_derivative(d1);
  std::vector<double> g(N);
  for (int n = 0; n < N; ++n) {
    g[n] = norm(signal.samples.col(n)) + norm(d1.samples.col(n)) + norm(d2.samples.col(n));
  }
  // Trapezoidal rule on the sample grid; the last partial interval uses the
  // linear interpolant (extrapolant beyond the last sample).
  const double steps = t / dt;
  const int full = std::min(static_cast<int>(std::floor(steps)), N - 1);
  double sum = 0.0;
  for (int n = 0; n < full; ++n) sum += 0.5 * dt * (g[n] + g[n + 1]);
  const double rest = (steps - full) * dt;
  if (rest > 0.0) {
    const int a = std::min(full, N - 2);
    const double slope = (g[a + 1] - g[a]) / dt;
    const double g_end = g[full] + slope * rest;
    sum += 0.5 * rest * (g[full] + g_end);
  }
  return sum;
}

std::vector<double> cq_convergence_orders(CQMethod method, int N0, int levels, double T) {
  if (N0 < 2 || levels < 2 || !(T > 0.0)) throw ConfigError("cq_convergence_orders: need N0 >= 2, levels >= 2, T > 0");
  const double c = std::numbers::pi / T;
  auto g = [&](double t) { return std::pow(std::sin(c * t), 4); };
  auto G = [&](double t) {
    const double th = c * t;
    return (3.0 * th / 8.0 - std::sin(2.0 * th) / 4.0 + std::sin(4.0 * th) / 32.0) / c;
  };
  std::vector<double> errors;
  for (int k = 0; k < levels; ++k) {
    const int N = N0 << k;
    CQScheme scheme{method, N + 1, T / N};
    CausalSignal s = CausalSignal::zeros(1, N + 1, scheme.dt);
    for (int n = 0; n <= N; ++n) s.samples(0, n) = g(n * scheme.dt);
    const CausalSignal a = antiderivative(s, scheme);
    double err = 0.0;
    for (int n = 0; n <= N; ++n) err = std::max(err, std::abs(a.samples(0, n) - G(n * scheme.dt)));
    errors.push_back(err);
  }
  std::vector<double> orders;
  for (int k = 0; k + 1 < levels; ++k) orders.push_back(std::log2(errors[k] / errors[k + 1]));
  return orders;
}

void write_signal_csv(std::ostream& out, const CausalSignal& signal) {
  out << 't';
  for (int i = 0; i < signal.dim(); ++i) out << ",comp" << i;
  out << '\n';
  char buf[40];
  for (int n = 0; n < signal.N(); ++n) {
    std::snprintf(buf, sizeof(buf), "%.17g", signal.time(n));
    out << buf;
    for (int i = 0; i < signal.dim(); ++i) {
      std::snprintf(buf, sizeof(buf), "%.17g", signal.samples(i, n));
      out << ',' << buf;
    }
    out << '\n';
  }
}

void write_signal_csv_file(const std::string& path, const CausalSignal& signal) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write signal file '" + path + "'");
  write_signal_csv(out, signal);
}

CausalSignal read_signal_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("signal csv: empty input");
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) header.push_back(cell);
  }
  if (header.empty() || header[0] != "t") throw ConfigError("signal csv line 1: header must start with 't'");
  for (size_t i = 1; i < header.size(); ++i) {
    if (header[i] != "comp" + std::to_string(i - 1)) throw ConfigError("signal csv line 1: bad column name");
  }
  const int dim = static_cast<int>(header.size()) - 1;
  std::vector<double> times;
  std::vector<std::vector<double>> rows;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::vector<double> vals;
    for (std::string cell; std::getline(ss, cell, ',');) {
      char* end = nullptr;
      const double v = std::strtod(cell.c_str(), &end);
      if (end == cell.c_str() || *end != '\0') {
        throw ConfigError("signal csv line " + std::to_string(line_no) + ": bad number '" + cell + "'");
      }
      vals.push_back(v);
    }
    if (static_cast<int>(vals.size()) != dim + 1) {
      throw ConfigError("signal csv line " + std::to_string(line_no) + ": wrong column count");
    }
    times.push_back(vals[0]);
    rows.emplace_back(vals.begin() + 1, vals.end());
  }
  CausalSignal s;
  s.dt = times.size() >= 2 ? times[1] - times[0] : 0.0;
  s.samples.resize(dim, static_cast<int>(rows.size()));
  for (size_t n = 0; n < rows.size(); ++n) {
    for (int i = 0; i < dim; ++i) s.samples(i, static_cast<int>(n)) = rows[n][i];
  }
  return s;
}

CausalSignal read_signal_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open signal file '" + path + "'");
  return read_signal_csv(in);
}

}  // namespace tdbem
