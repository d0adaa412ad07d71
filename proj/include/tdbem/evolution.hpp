#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace tdbem {

/// Finite-dimensional evolution system. States U live in V = R^dim_V and are
/// mapped into H = R^dim_H by J; the equations read
///   J dU/dt = A_star U + G xi + F,   B U = chi,
/// with inner products given by SPD Gram matrices on H, V and M = M1 x M2.
struct AbstractSystem {
  Eigen::MatrixXd J;       // dim_H x dim_V
  Eigen::MatrixXd H_gram;  // dim_H x dim_H
  Eigen::MatrixXd V_gram;  // dim_V x dim_V
  Eigen::MatrixXd A_star;  // dim_H x dim_V
  Eigen::MatrixXd B;       // dim_M2 x dim_V
  Eigen::MatrixXd G;       // dim_H x dim_M1
  Eigen::MatrixXd M_gram;  // (dim_M1 + dim_M2) square

  int dim_H() const { return static_cast<int>(J.rows()); }
  int dim_V() const { return static_cast<int>(J.cols()); }
  int dim_M1() const { return static_cast<int>(G.cols()); }
  int dim_M2() const { return static_cast<int>(B.rows()); }
  int dim_M() const { return dim_M1() + dim_M2(); }

  double norm_H(const Eigen::VectorXd& h) const;
  double norm_V(const Eigen::VectorXd& v) const;
  double norm_M(const Eigen::VectorXd& m) const;
  /// Throws ConfigError on inconsistent shapes or non-SPD Gram matrices.
  void validate() const;
};

/// Staggered centred differences for u_t = v_x, v_t = u_x on [0, 1] with n
/// cells: u at the n + 1 nodes, v at the cell midpoints, B the two endpoint
/// values of u, G = 0 on a one-dimensional M1. H holds u at interior nodes.
AbstractSystem builtin_wave_system(int n);

struct HypothesisReport {
  double C1 = 0.0;  // C1 |U|_V <= |U|_H + |A_star U|_H
  double C2 = 0.0;  // |U|_H + |A_star U|_H <= C2 |U|_V
  double dissipativity_residual = 0.0;  // H-symmetric part of A on Ker B, relative
  bool surjective_plus = false;         // I + A onto H from Ker B
  bool surjective_minus = false;        // I - A
  bool lifting_ok = false;
  double C_lift = 0.0;
  double G_norm = 0.0;
  Eigen::VectorXd lift_maximizer;  // unit-M-norm Xi attaining C_lift
  std::vector<std::string> failures;

  bool ok() const { return failures.empty(); }
};

HypothesisReport check_hypotheses(const AbstractSystem& system, unsigned seed = 1);

/// Solution of U = A_star U + G xi, B U = chi for Xi = (xi, chi).
/// Throws NumericalError when the lifting system is singular.
Eigen::VectorXd lift(const AbstractSystem& system, const Eigen::VectorXd& Xi);

/// Matrix of the lifting operator L: M -> V.
Eigen::MatrixXd lifting_operator(const AbstractSystem& system);

/// Time-dependent data; the int argument is the derivative order (0..2).
/// An empty function stands for zero data.
struct EvolutionData {
  std::function<Eigen::VectorXd(double, int)> F;   // H-valued
  std::function<Eigen::VectorXd(double, int)> Xi;  // M-valued, (xi, chi)
};

/// Seeded data vanishing with their first derivatives at t = 0 and after
/// `data_end`: sums of sin^4 time windows times spatial vectors. F uses the
/// columns of `profiles` (H coordinates) when given, random vectors otherwise;
/// Xi always uses random vectors.
EvolutionData random_smooth_data(const AbstractSystem& system, std::uint64_t seed, double data_end, bool forcing,
                                 bool lifting, const Eigen::MatrixXd* profiles = nullptr);

/// Smooth spatial shapes of builtin_wave_system(n) in H coordinates:
/// u = sin(j pi x), v = cos(j pi x) for j = 1..count.
Eigen::MatrixXd wave_system_profiles(int n, int count = 3);

enum class Integrator { RK4, Exponential };

std::string to_string(Integrator integrator);
Integrator parse_integrator(const std::string& name);

struct EvolveOptions {
  Integrator integrator = Integrator::RK4;
  /// RK4: substeps are halved until the Richardson estimate between two
  /// consecutive substep sizes is below this (absolute, H norm).
  double tolerance = 1e-10;
  int max_halvings = 6;
};

struct Trajectory {
  double dt = 0.0;
  int steps = 0;
  Eigen::MatrixXd U;     // dim_V x (steps + 1)
  Eigen::MatrixXd Udot;  // dim_H x (steps + 1): J dU/dt
  std::vector<double> constraint_residual;  // |B U - chi|, relative to max |chi|
  int substeps = 1;                         // RK4 substeps per output step
  double step_error_estimate = 0.0;

  double time(int n) const { return n * dt; }
};

/// Solves the constrained evolution with U = L Xi + U0, where U0 in Ker B
/// solves J dU0/dt = A_star U0 + F + J L (Xi - dXi/dt). Rejects data with
/// F(0) != 0, Xi(0) != 0 or dXi/dt(0) != 0.
Trajectory evolve(const AbstractSystem& system, const EvolutionData& data, double T, double dt,
                  const EvolveOptions& options = {});

/// Free evolution from an initial state (H coordinates of a Ker B element).
Trajectory evolve_free(const AbstractSystem& system, const Eigen::VectorXd& initial_H, double T, double dt,
                       const EvolveOptions& options = {});

struct BoundMargins {
  std::vector<double> lhs_a, rhs_a;  // |U|_H against its bound
  std::vector<double> lhs_b, rhs_b;  // |dU/dt|_H
  std::vector<double> lhs_v, rhs_v;  // C1 |U|_V
  double min_margin_a = 0.0;
  double min_margin_b = 0.0;
  double min_margin_v = 0.0;

  double min_margin() const;
};

/// Evaluates both sides of the three a priori bounds at every output step,
/// with the data integrals computed by composite Simpson quadrature on
/// `quadrature_refinement` panels per step.
BoundMargins verify_bounds(const Trajectory& trajectory, const EvolutionData& data, const AbstractSystem& system,
                           const HypothesisReport& constants, int quadrature_refinement = 4);

/// Maximum over even steps of |1/2 |U|^2 - int (F, U)| relative to max 1/2 |U|^2
/// (zero lifting data).
double energy_identity_drift(const Trajectory& trajectory, const EvolutionData& data, const AbstractSystem& system);

/// max over t >= t0 of | |U(t)|_H - |U(t0)|_H | / |U(t0)|_H.
double norm_drift(const Trajectory& trajectory, const AbstractSystem& system, double t0);

/// Matrix of A on Ker B in H coordinates.
Eigen::MatrixXd generator_matrix(const AbstractSystem& system);

/// Rows every `stride` steps (the last step is always written).
void write_trajectory_csv(const std::string& path, const Trajectory& trajectory, const AbstractSystem& system,
                          const BoundMargins* margins = nullptr, int stride = 1);

}  // namespace tdbem
