#include "tdbem/evolution.hpp"

#include "tdbem/error.hpp"
#include "tdbem/waveform.hpp"

#include <Eigen/Eigenvalues>
#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numbers>
#include <random>

namespace tdbem {

namespace {

double gram_norm(const Eigen::MatrixXd& G, const Eigen::VectorXd& x) {
  if (x.size() == 0) return 0.0;
  return std::sqrt(std::max(0.0, x.dot(G * x)));
}

void check_spd(const Eigen::MatrixXd& m, const char* what) {
  if (m.rows() == 0) return;
  if ((m - m.transpose()).norm() > 1e-12 * std::max(1.0, m.norm())) {
    throw ConfigError(std::string("AbstractSystem: ") + what + " Gram matrix is not symmetric");
  }
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  if (llt.info() != Eigen::Success) throw ConfigError(std::string("AbstractSystem: ") + what + " Gram matrix is not SPD");
}

/// Orthonormal basis (columns) of Ker B.
Eigen::MatrixXd kernel_basis(const AbstractSystem& s) {
  const int n = s.dim_V();
  if (s.dim_M2() == 0) return Eigen::MatrixXd::Identity(n, n);
  Eigen::FullPivLU<Eigen::MatrixXd> lu(s.B);
  const int k = n - static_cast<int>(lu.rank());
  if (k == 0) return Eigen::MatrixXd(n, 0);
  Eigen::MatrixXd ker = lu.kernel();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(ker);
  return qr.householderQ() * Eigen::MatrixXd::Identity(n, k);
}

Eigen::MatrixXd lifting_system(const AbstractSystem& s) {
  Eigen::MatrixXd L(s.dim_H() + s.dim_M2(), s.dim_V());
  L.topRows(s.dim_H()) = s.J - s.A_star;
  L.bottomRows(s.dim_M2()) = s.B;
  return L;
}

Eigen::VectorXd value_or_zero(const std::function<Eigen::VectorXd(double, int)>& f, double t, int k, int dim) {
  if (!f) return Eigen::VectorXd::Zero(dim);
  Eigen::VectorXd v = f(t, k);
  if (v.size() != dim) throw ConfigError("evolve: data function returned a vector of the wrong size");
  return v;
}

struct ConstrainedOde {
  Eigen::MatrixXd Z;        // Ker B basis
  Eigen::MatrixXd JZ_inv;   // (J Z)^{-1}
  Eigen::MatrixXd A;        // generator in H coordinates
};

ConstrainedOde constrained_ode(const AbstractSystem& s) {
  ConstrainedOde ode;
  ode.Z = kernel_basis(s);
  if (ode.Z.cols() != s.dim_H()) {
    throw NumericalError("evolve: Ker B has dimension " + std::to_string(ode.Z.cols()) + ", H has " +
                         std::to_string(s.dim_H()));
  }
  const Eigen::MatrixXd JZ = s.J * ode.Z;
  Eigen::FullPivLU<Eigen::MatrixXd> lu(JZ);
  if (lu.rank() < JZ.rows()) throw NumericalError("evolve: J is not injective on Ker B");
  ode.JZ_inv = lu.inverse();
  ode.A = s.A_star * ode.Z * ode.JZ_inv;
  return ode;
}

using Forcing = std::function<Eigen::VectorXd(double)>;

/// RK4 with `m` substeps per output step; returns the states at the output grid.
Eigen::MatrixXd rk4(const Eigen::MatrixXd& A, const Forcing& f, const Eigen::VectorXd& y0, double dt, int steps, int m) {
  Eigen::MatrixXd out(y0.size(), steps + 1);
  Eigen::VectorXd y = y0;
  out.col(0) = y;
  const double h = dt / m;
  for (int n = 0; n < steps; ++n) {
    for (int j = 0; j < m; ++j) {
      const double t = n * dt + j * h;
      const Eigen::VectorXd fm = f(t + 0.5 * h);
      const Eigen::VectorXd k1 = A * y + f(t);
      const Eigen::VectorXd k2 = A * (y + 0.5 * h * k1) + fm;
      const Eigen::VectorXd k3 = A * (y + 0.5 * h * k2) + fm;
      const Eigen::VectorXd k4 = A * (y + h * k3) + f(t + h);
      y += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    out.col(n + 1) = y;
  }
  return out;
}

/// Exponential integrator: exact propagator, forcing interpolated
/// quadratically over each step (phi-function form).
Eigen::MatrixXd exponential(const Eigen::MatrixXd& A, const Forcing& f, const Eigen::VectorXd& y0, double dt,
                            int steps) {
  const int d = static_cast<int>(A.rows());
  Eigen::MatrixXd big = Eigen::MatrixXd::Zero(4 * d, 4 * d);
  big.topLeftCorner(d, d) = dt * A;
  for (int k = 0; k < 3; ++k) big.block(k * d, (k + 1) * d, d, d).setIdentity();
  const Eigen::MatrixXd E = big.exp();
  const Eigen::MatrixXd eA = E.topLeftCorner(d, d);
  const Eigen::MatrixXd phi1 = E.block(0, d, d, d);
  const Eigen::MatrixXd phi2 = E.block(0, 2 * d, d, d);
  const Eigen::MatrixXd phi3 = E.block(0, 3 * d, d, d);
  Eigen::MatrixXd out(d, steps + 1);
  Eigen::VectorXd y = y0;
  out.col(0) = y;
  for (int n = 0; n < steps; ++n) {
    const double t = n * dt;
    const Eigen::VectorXd f0 = f(t), fh = f(t + 0.5 * dt), f1 = f(t + dt);
    const Eigen::VectorXd c0 = f0;
    const Eigen::VectorXd c1 = -3.0 * f0 + 4.0 * fh - f1;
    const Eigen::VectorXd c2 = 2.0 * f0 - 4.0 * fh + 2.0 * f1;
    y = eA * y + dt * (phi1 * c0 + phi2 * c1 + 2.0 * (phi3 * c2));
    out.col(n + 1) = y;
  }
  return out;
}

Eigen::MatrixXd integrate(const AbstractSystem& s, const Eigen::MatrixXd& A, const Forcing& f,
                          const Eigen::VectorXd& y0, double dt, int steps, const EvolveOptions& options,
                          Trajectory& traj) {
  if (options.integrator == Integrator::Exponential) {
    traj.substeps = 1;
    return exponential(A, f, y0, dt, steps);
  }
  int m = 1;
  Eigen::MatrixXd coarse = rk4(A, f, y0, dt, steps, m);
  for (int k = 0;; ++k) {
    Eigen::MatrixXd fine = rk4(A, f, y0, dt, steps, 2 * m);
    double est = 0.0;
    for (int n = 0; n <= steps; ++n) est = std::max(est, gram_norm(s.H_gram, fine.col(n) - coarse.col(n)) / 15.0);
    traj.step_error_estimate = est;
    traj.substeps = 2 * m;
    if (est <= options.tolerance || k >= options.max_halvings) return fine;
    coarse = std::move(fine);
    m *= 2;
  }
}

void finish_trajectory(const AbstractSystem& s, const EvolutionData& data, const Eigen::MatrixXd& S,
                       const ConstrainedOde& ode, const Eigen::MatrixXd& y, Trajectory& traj) {
  const int steps = traj.steps;
  traj.U.resize(s.dim_V(), steps + 1);
  traj.Udot.resize(s.dim_H(), steps + 1);
  traj.constraint_residual.assign(steps + 1, 0.0);
  double chi_scale = 0.0;
  std::vector<Eigen::VectorXd> xi(steps + 1);
  for (int n = 0; n <= steps; ++n) {
    xi[n] = value_or_zero(data.Xi, traj.time(n), 0, s.dim_M());
    chi_scale = std::max(chi_scale, xi[n].tail(s.dim_M2()).norm());
  }
  for (int n = 0; n <= steps; ++n) {
    const double t = traj.time(n);
    Eigen::VectorXd U = ode.Z * (ode.JZ_inv * y.col(n));
    if (s.dim_M() > 0) U += S * xi[n];
    traj.U.col(n) = U;
    traj.Udot.col(n) = s.A_star * U + s.G * xi[n].head(s.dim_M1()) + value_or_zero(data.F, t, 0, s.dim_H());
    const double r = (s.B * U - xi[n].tail(s.dim_M2())).norm();
    traj.constraint_residual[n] = chi_scale > 0.0 ? r / chi_scale : r;
  }
}

}  // namespace

double AbstractSystem::norm_H(const Eigen::VectorXd& h) const { return gram_norm(H_gram, h); }
double AbstractSystem::norm_V(const Eigen::VectorXd& v) const { return gram_norm(V_gram, v); }
double AbstractSystem::norm_M(const Eigen::VectorXd& m) const { return gram_norm(M_gram, m); }

void AbstractSystem::validate() const {
  const int h = dim_H(), v = dim_V();
  if (H_gram.rows() != h || H_gram.cols() != h) throw ConfigError("AbstractSystem: H Gram shape mismatch");
  if (V_gram.rows() != v || V_gram.cols() != v) throw ConfigError("AbstractSystem: V Gram shape mismatch");
  if (A_star.rows() != h || A_star.cols() != v) throw ConfigError("AbstractSystem: A_star shape mismatch");
  if (B.cols() != v) throw ConfigError("AbstractSystem: B shape mismatch");
  if (G.rows() != h) throw ConfigError("AbstractSystem: G shape mismatch");
  if (M_gram.rows() != dim_M() || M_gram.cols() != dim_M()) throw ConfigError("AbstractSystem: M Gram shape mismatch");
  check_spd(H_gram, "H");
  check_spd(V_gram, "V");
  check_spd(M_gram, "M");
}

AbstractSystem builtin_wave_system(int n) {
  if (n < 4) throw ConfigError("builtin_wave_system: n must be at least 4");
  const double h = 1.0 / n;
  const int dv = 2 * n + 1, dh = 2 * n - 1;
  auto u = [](int i) { return i; };
  auto v = [n](int j) { return n + 1 + j; };
  AbstractSystem s;
  s.J = Eigen::MatrixXd::Zero(dh, dv);
  s.A_star = Eigen::MatrixXd::Zero(dh, dv);
  for (int i = 1; i < n; ++i) {
    s.J(i - 1, u(i)) = 1.0;
    s.A_star(i - 1, v(i)) = 1.0 / h;
    s.A_star(i - 1, v(i - 1)) = -1.0 / h;
  }
  for (int j = 0; j < n; ++j) {
    s.J(n - 1 + j, v(j)) = 1.0;
    s.A_star(n - 1 + j, u(j + 1)) = 1.0 / h;
    s.A_star(n - 1 + j, u(j)) = -1.0 / h;
  }
  s.H_gram = h * Eigen::MatrixXd::Identity(dh, dh);

  // Discrete H^1 x H(div) norm: trapezoidal L2 of u plus |u'|^2 on cells,
  // L2 of v plus |v'|^2 at interior nodes.
  s.V_gram = Eigen::MatrixXd::Zero(dv, dv);
  for (int i = 0; i <= n; ++i) s.V_gram(u(i), u(i)) += (i == 0 || i == n) ? 0.5 * h : h;
  for (int j = 0; j < n; ++j) {
    s.V_gram(u(j), u(j)) += 1.0 / h;
    s.V_gram(u(j + 1), u(j + 1)) += 1.0 / h;
    s.V_gram(u(j), u(j + 1)) -= 1.0 / h;
    s.V_gram(u(j + 1), u(j)) -= 1.0 / h;
    s.V_gram(v(j), v(j)) += h;
  }
  for (int i = 1; i < n; ++i) {
    s.V_gram(v(i), v(i)) += 1.0 / h;
    s.V_gram(v(i - 1), v(i - 1)) += 1.0 / h;
    s.V_gram(v(i), v(i - 1)) -= 1.0 / h;
    s.V_gram(v(i - 1), v(i)) -= 1.0 / h;
  }
  s.B = Eigen::MatrixXd::Zero(2, dv);
  s.B(0, u(0)) = 1.0;
  s.B(1, u(n)) = 1.0;
  s.G = Eigen::MatrixXd::Zero(dh, 1);
  s.M_gram = Eigen::MatrixXd::Identity(3, 3);
  return s;
}

Eigen::MatrixXd lifting_operator(const AbstractSystem& s) {
  const Eigen::MatrixXd L = lifting_system(s);
  if (L.rows() != L.cols()) {
    throw NumericalError("lift: lifting system is " + std::to_string(L.rows()) + " x " + std::to_string(L.cols()));
  }
  Eigen::FullPivLU<Eigen::MatrixXd> lu(L);
  if (lu.rank() < L.rows()) throw NumericalError("lift: lifting system is singular");
  Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(L.rows(), s.dim_M());
  rhs.topLeftCorner(s.dim_H(), s.dim_M1()) = s.G;
  rhs.bottomRightCorner(s.dim_M2(), s.dim_M2()).setIdentity();
  return lu.solve(rhs);
}

Eigen::VectorXd lift(const AbstractSystem& s, const Eigen::VectorXd& Xi) {
  if (Xi.size() != s.dim_M()) throw ConfigError("lift: Xi has the wrong size");
  const Eigen::MatrixXd L = lifting_system(s);
  if (L.rows() != L.cols()) throw NumericalError("lift: lifting system is not square");
  Eigen::FullPivLU<Eigen::MatrixXd> lu(L);
  if (lu.rank() < L.rows()) throw NumericalError("lift: lifting system is singular");
  Eigen::VectorXd rhs(L.rows());
  rhs.head(s.dim_H()) = s.G * Xi.head(s.dim_M1());
  rhs.tail(s.dim_M2()) = Xi.tail(s.dim_M2());
  Eigen::VectorXd U = lu.solve(rhs);
  const double res = (L * U - rhs).norm();
  if (res > 1e-10 * std::max(rhs.norm(), 1e-300) && rhs.norm() > 0.0) {
    throw NumericalError("lift: residual " + std::to_string(res) + " too large");
  }
  return U;
}

HypothesisReport check_hypotheses(const AbstractSystem& s, unsigned seed) {
  s.validate();
  HypothesisReport rep;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;

  // Norm equivalence through the graph form J'PJ + A'PA against the V Gram matrix.
  {
    const Eigen::MatrixXd N = s.J.transpose() * s.H_gram * s.J + s.A_star.transpose() * s.H_gram * s.A_star;
    Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> ges(N, s.V_gram);
    if (ges.info() != Eigen::Success) {
      rep.failures.push_back("norm equivalence: eigen solver failed");
    } else {
      const double lmin = ges.eigenvalues().minCoeff(), lmax = ges.eigenvalues().maxCoeff();
      rep.C1 = std::sqrt(std::max(0.0, lmin));
      rep.C2 = std::sqrt(2.0 * std::max(0.0, lmax));
      if (!(lmin > 1e-13 * lmax)) rep.failures.push_back("norm equivalence: graph norm degenerate on V");
    }
  }

  const Eigen::MatrixXd Z = kernel_basis(s);
  // Skewness of A on Ker B in the H inner product.
  {
    const Eigen::MatrixXd AZ = s.A_star * Z, JZ = s.J * Z;
    const Eigen::MatrixXd S = AZ.transpose() * s.H_gram * JZ;
    const double scale = std::sqrt((AZ.transpose() * s.H_gram * AZ).norm() * (JZ.transpose() * s.H_gram * JZ).norm());
    const double sym = (S + S.transpose()).norm();
    rep.dissipativity_residual = scale > 0.0 ? sym / scale : sym;
    if (rep.dissipativity_residual > 1e-10) rep.failures.push_back("dissipativity: (AU, U) != 0 on Ker B");
  }
  // I +/- A: Ker B -> H surjective.
  for (int sign : {1, -1}) {
    const Eigen::MatrixXd Mop = s.J * Z + sign * (s.A_star * Z);
    bool ok = false;
    if (Mop.rows() > 0) {
      Eigen::FullPivLU<Eigen::MatrixXd> lu(Mop);
      if (lu.rank() == Mop.rows()) {
        ok = true;
        for (int trial = 0; trial < 3 && ok; ++trial) {
          Eigen::VectorXd b(Mop.rows());
          for (int i = 0; i < b.size(); ++i) b[i] = normal(rng);
          const Eigen::VectorXd x = Mop.colPivHouseholderQr().solve(b);
          ok = (Mop * x - b).norm() <= 1e-10 * b.norm();
        }
      }
    } else {
      ok = true;
    }
    (sign > 0 ? rep.surjective_plus : rep.surjective_minus) = ok;
    if (!ok) rep.failures.push_back(sign > 0 ? "surjectivity: I + A not onto H" : "surjectivity: I - A not onto H");
  }
  // Lifting.
  {
    const Eigen::MatrixXd L = lifting_system(s);
    rep.lifting_ok = L.rows() == L.cols() && Eigen::FullPivLU<Eigen::MatrixXd>(L).rank() == L.rows();
    if (!rep.lifting_ok) {
      rep.failures.push_back("lifting: U = A_star U + G xi, B U = chi not uniquely solvable");
    } else if (s.dim_M() > 0) {
      const Eigen::MatrixXd S = lifting_operator(s);
      const Eigen::MatrixXd RM = Eigen::LLT<Eigen::MatrixXd>(s.M_gram).matrixU();
      const Eigen::MatrixXd RM_inv = RM.inverse();
      const Eigen::MatrixXd A1 = Eigen::MatrixXd(Eigen::LLT<Eigen::MatrixXd>(s.H_gram).matrixU()) * s.J * S * RM_inv;
      const Eigen::MatrixXd A2 = Eigen::MatrixXd(Eigen::LLT<Eigen::MatrixXd>(s.V_gram).matrixU()) * S * RM_inv;
      auto f = [&](const Eigen::VectorXd& e) { return (A1 * e).norm() + (A2 * e).norm(); };
      // Maximize |A1 e| + |A2 e| on the unit sphere: majorization fixed point
      // from several starts.
      std::vector<Eigen::VectorXd> starts;
      Eigen::MatrixXd stacked(A1.rows() + A2.rows(), A1.cols());
      stacked << A1, A2;
      for (const Eigen::MatrixXd* A : std::array<const Eigen::MatrixXd*, 3>{&A1, &A2, &stacked}) {
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(*A, Eigen::ComputeThinV);
        if (svd.matrixV().cols() > 0) starts.push_back(svd.matrixV().col(0));
      }
      for (int k = 0; k < 16; ++k) {
        Eigen::VectorXd e(s.dim_M());
        for (int i = 0; i < e.size(); ++i) e[i] = normal(rng);
        starts.push_back(e.normalized());
      }
      double best = -1.0;
      Eigen::VectorXd best_e;
      for (Eigen::VectorXd e : starts) {
        double val = f(e);
        for (int it = 0; it < 2000; ++it) {
          const Eigen::VectorXd a1 = A1 * e, a2 = A2 * e;
          Eigen::VectorXd g = Eigen::VectorXd::Zero(e.size());
          if (a1.norm() > 0.0) g += A1.transpose() * a1 / a1.norm();
          if (a2.norm() > 0.0) g += A2.transpose() * a2 / a2.norm();
          if (g.norm() == 0.0) break;
          const Eigen::VectorXd next = g.normalized();
          const double nv = f(next);
          e = next;
          if (nv - val <= 1e-15 * nv) {
            val = std::max(val, nv);
            break;
          }
          val = nv;
        }
        if (val > best) {
          best = val;
          best_e = e;
        }
      }
      rep.C_lift = best;
      rep.lift_maximizer = RM_inv * best_e;
    }
  }
  // |G| from M1 to H.
  if (s.dim_M1() > 0 && s.G.norm() > 0.0) {
    const Eigen::MatrixXd M11 = s.M_gram.topLeftCorner(s.dim_M1(), s.dim_M1());
    Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> ges(s.G.transpose() * s.H_gram * s.G, M11);
    rep.G_norm = std::sqrt(std::max(0.0, ges.eigenvalues().maxCoeff()));
  }
  return rep;
}

EvolutionData random_smooth_data(const AbstractSystem& s, std::uint64_t seed, double data_end, bool forcing,
                                 bool lifting, const Eigen::MatrixXd* profiles) {
  if (!(data_end > 0.0)) throw ConfigError("random_smooth_data: data_end must be positive");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  struct Term {
    Bump psi;
    Eigen::VectorXd shape;
  };
  auto make_terms = [&](int dim, const Eigen::MatrixXd* shapes) {
    std::vector<Term> terms;
    for (int k = 0; k < 3; ++k) {
      Term term;
      const double width = data_end * (0.3 + 0.5 * unit(rng));
      term.psi = Bump{1.0, width, (data_end - width) * unit(rng)};
      if (shapes) {
        term.shape = Eigen::VectorXd::Zero(dim);
        for (int j = 0; j < shapes->cols(); ++j) term.shape += normal(rng) * shapes->col(j);
      } else {
        term.shape.resize(dim);
        for (int i = 0; i < dim; ++i) term.shape[i] = normal(rng);
      }
      terms.push_back(term);
    }
    return terms;
  };
  EvolutionData data;
  if (forcing) {
    if (profiles && profiles->rows() != s.dim_H()) throw ConfigError("random_smooth_data: profile rows must equal dim H");
    auto terms = make_terms(s.dim_H(), profiles);
    data.F = [terms, dim = s.dim_H()](double t, int k) {
      Eigen::VectorXd out = Eigen::VectorXd::Zero(dim);
      for (const auto& term : terms) out += term.psi(t, k) * term.shape;
      return out;
    };
  }
  if (lifting && s.dim_M() > 0) {
    auto terms = make_terms(s.dim_M(), nullptr);
    data.Xi = [terms, dim = s.dim_M()](double t, int k) {
      Eigen::VectorXd out = Eigen::VectorXd::Zero(dim);
      for (const auto& term : terms) out += term.psi(t, k) * term.shape;
      return out;
    };
  }
  return data;
}

Eigen::MatrixXd wave_system_profiles(int n, int count) {
  if (n < 4) throw ConfigError("wave_system_profiles: n must be at least 4");
  const double h = 1.0 / n;
  Eigen::MatrixXd P = Eigen::MatrixXd::Zero(2 * n - 1, 2 * count);
  for (int j = 1; j <= count; ++j) {
    const double k = j * std::numbers::pi;
    for (int i = 1; i < n; ++i) P(i - 1, 2 * (j - 1)) = std::sin(k * i * h);
    for (int c = 0; c < n; ++c) P(n - 1 + c, 2 * (j - 1) + 1) = std::cos(k * (c + 0.5) * h);
  }
  return P;
}

std::string to_string(Integrator integrator) { return integrator == Integrator::RK4 ? "rk4" : "exponential"; }

Integrator parse_integrator(const std::string& name) {
  if (name == "rk4") return Integrator::RK4;
  if (name == "exponential") return Integrator::Exponential;
  throw ConfigError("unknown integrator '" + name + "'");
}

Eigen::MatrixXd generator_matrix(const AbstractSystem& system) { return constrained_ode(system).A; }

Trajectory evolve(const AbstractSystem& s, const EvolutionData& data, double T, double dt,
                  const EvolveOptions& options) {
  s.validate();
  if (!(dt > 0.0) || !(T > 0.0)) throw ConfigError("evolve: T and dt must be positive");
  const int steps = static_cast<int>(std::llround(T / dt));
  if (std::abs(steps * dt - T) > 1e-9 * T) throw ConfigError("evolve: T must be a multiple of dt");

  const double tol = 1e-12;
  if (value_or_zero(data.F, 0.0, 0, s.dim_H()).norm() > tol) throw ConfigError("evolve: F(0) must vanish");
  if (value_or_zero(data.Xi, 0.0, 0, s.dim_M()).norm() > tol) throw ConfigError("evolve: Xi(0) must vanish");
  if (value_or_zero(data.Xi, 0.0, 1, s.dim_M()).norm() > tol) throw ConfigError("evolve: dXi/dt(0) must vanish");

  const ConstrainedOde ode = constrained_ode(s);
  const Eigen::MatrixXd S = s.dim_M() > 0 ? lifting_operator(s) : Eigen::MatrixXd(s.dim_V(), 0);
  const Eigen::MatrixXd JS = s.J * S;
  const Forcing f0 = [&](double t) -> Eigen::VectorXd {
    Eigen::VectorXd out = value_or_zero(data.F, t, 0, s.dim_H());
    if (data.Xi) out += JS * (value_or_zero(data.Xi, t, 0, s.dim_M()) - value_or_zero(data.Xi, t, 1, s.dim_M()));
    return out;
  };
  Trajectory traj;
  traj.dt = dt;
  traj.steps = steps;
  const Eigen::MatrixXd y = integrate(s, ode.A, f0, Eigen::VectorXd::Zero(s.dim_H()), dt, steps, options, traj);
  finish_trajectory(s, data, S, ode, y, traj);
  return traj;
}

Trajectory evolve_free(const AbstractSystem& s, const Eigen::VectorXd& initial_H, double T, double dt,
                       const EvolveOptions& options) {
  s.validate();
  if (initial_H.size() != s.dim_H()) throw ConfigError("evolve_free: initial state has the wrong size");
  const int steps = static_cast<int>(std::llround(T / dt));
  const ConstrainedOde ode = constrained_ode(s);
  const Forcing zero = [&](double) -> Eigen::VectorXd { return Eigen::VectorXd::Zero(s.dim_H()); };
  Trajectory traj;
  traj.dt = dt;
  traj.steps = steps;
  const Eigen::MatrixXd y = integrate(s, ode.A, zero, initial_H, dt, steps, options, traj);
  finish_trajectory(s, EvolutionData{}, Eigen::MatrixXd(s.dim_V(), 0), ode, y, traj);
  return traj;
}

double BoundMargins::min_margin() const { return std::min({min_margin_a, min_margin_b, min_margin_v}); }

BoundMargins verify_bounds(const Trajectory& traj, const EvolutionData& data, const AbstractSystem& s,
                           const HypothesisReport& c, int quadrature_refinement) {
  const int q = 2 * std::max(1, quadrature_refinement);  // Simpson panels per step (even)
  const int steps = traj.steps;
  BoundMargins m;
  m.lhs_a.resize(steps + 1);
  m.rhs_a.resize(steps + 1);
  m.lhs_b.resize(steps + 1);
  m.rhs_b.resize(steps + 1);
  m.lhs_v.resize(steps + 1);
  m.rhs_v.resize(steps + 1);
  // Integrands: |Xi|, |Xi'|, |Xi''|, |F|, |F'|.
  auto integrands = [&](double t) {
    std::array<double, 5> v{};
    if (data.Xi) {
      for (int k = 0; k < 3; ++k) v[k] = s.norm_M(data.Xi(t, k));
    }
    if (data.F) {
      v[3] = s.norm_H(data.F(t, 0));
      v[4] = s.norm_H(data.F(t, 1));
    }
    return v;
  };
  std::array<double, 5> acc{};
  const double h = traj.dt / q;
  for (int n = 0; n <= steps; ++n) {
    const double t = traj.time(n);
    if (n > 0) {
      const double t0 = traj.time(n - 1);
      for (int j = 0; j <= q; ++j) {
        const double w = (j == 0 || j == q) ? 1.0 : (j % 2 ? 4.0 : 2.0);
        const auto v = integrands(t0 + j * h);
        for (int k = 0; k < 5; ++k) acc[k] += w * h / 3.0 * v[k];
      }
    }
    const Eigen::VectorXd U = traj.U.col(n);
    const double xi_now = data.Xi ? s.norm_M(data.Xi(t, 0)) : 0.0;
    m.lhs_a[n] = s.norm_H(s.J * U);
    m.rhs_a[n] = c.C_lift * (acc[0] + 2.0 * acc[1]) + acc[3];
    m.lhs_b[n] = s.norm_H(traj.Udot.col(n));
    m.rhs_b[n] = c.C_lift * (acc[1] + 2.0 * acc[2]) + acc[4];
    m.lhs_v[n] = c.C1 * s.norm_V(U);
    m.rhs_v[n] = c.C_lift * (acc[0] + 3.0 * acc[1] + 2.0 * acc[2]) + acc[3] + 2.0 * acc[4] + c.G_norm * xi_now;
  }
  auto min_margin = [](const std::vector<double>& l, const std::vector<double>& r) {
    double out = std::numeric_limits<double>::infinity();
    for (size_t i = 0; i < l.size(); ++i) out = std::min(out, r[i] - l[i]);
    return out;
  };
  m.min_margin_a = min_margin(m.lhs_a, m.rhs_a);
  m.min_margin_b = min_margin(m.lhs_b, m.rhs_b);
  m.min_margin_v = min_margin(m.lhs_v, m.rhs_v);
  return m;
}

double energy_identity_drift(const Trajectory& traj, const EvolutionData& data, const AbstractSystem& s) {
  double work = 0.0, drift = 0.0, scale = 0.0;
  auto power = [&](int n) {
    if (!data.F) return 0.0;
    return data.F(traj.time(n), 0).dot(s.H_gram * (s.J * traj.U.col(n)));
  };
  for (int n = 0; n <= traj.steps; ++n) {
    const double e = 0.5 * std::pow(s.norm_H(s.J * traj.U.col(n)), 2);
    scale = std::max(scale, e);
  }
  for (int n = 2; n <= traj.steps; n += 2) {
    work += traj.dt / 3.0 * (power(n - 2) + 4.0 * power(n - 1) + power(n));
    const double e = 0.5 * std::pow(s.norm_H(s.J * traj.U.col(n)), 2);
    drift = std::max(drift, std::abs(e - work));
  }
  return scale > 0.0 ? drift / scale : drift;
}

double norm_drift(const Trajectory& traj, const AbstractSystem& s, double t0) {
  int n0 = static_cast<int>(std::ceil(t0 / traj.dt - 1e-9));
  n0 = std::clamp(n0, 0, traj.steps);
  const double ref = s.norm_H(s.J * traj.U.col(n0));
  double drift = 0.0;
  for (int n = n0; n <= traj.steps; ++n) drift = std::max(drift, std::abs(s.norm_H(s.J * traj.U.col(n)) - ref));
  return ref > 0.0 ? drift / ref : drift;
}

void write_trajectory_csv(const std::string& path, const Trajectory& traj, const AbstractSystem& s,
                          const BoundMargins* margins, int stride) {
  stride = std::max(1, stride);
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  out << "t";
  for (int i = 0; i < s.dim_V(); ++i) out << ",U" << i;
  out << ",norm_H";
  if (margins) out << ",rhs_a,rhs_b,rhs_v";
  out << "\n";
  char buf[32];
  auto put = [&](double x) {
    std::snprintf(buf, sizeof buf, "%.17g", x);
    out << buf;
  };
  for (int n = 0; n <= traj.steps; ++n) {
    if (n % stride != 0 && n != traj.steps) continue;
    put(traj.time(n));
    for (int i = 0; i < s.dim_V(); ++i) {
      out << ',';
      put(traj.U(i, n));
    }
    out << ',';
    put(s.norm_H(s.J * traj.U.col(n)));
    if (margins) {
      for (const auto* v : {&margins->rhs_a, &margins->rhs_b, &margins->rhs_v}) {
        out << ',';
        put((*v)[n]);
      }
    }
    out << "\n";
  }
}

}  // namespace tdbem
