#pragma once

#include "tdbem/mesh.hpp"
#include "tdbem/trace_space.hpp"

#include <Eigen/Dense>

#include <complex>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace tdbem {

using Complex = std::complex<double>;

enum class OperatorKind { V, K, Kt, W, SPot, DPot };

std::string to_string(OperatorKind kind);

/// Quadrature knobs. Regular panel pairs closer than near_factor * h use a
/// rule of degree near_degree, closer than mid_factor * h mid_degree, and the
/// rest far_degree; touching pairs use the relative-coordinate rule of order
/// singular_order per axis.
struct QuadratureOptions {
  int singular_order = 4;
  double near_factor = 2.0;
  int near_degree = 6;
  double mid_factor = 4.0;
  int mid_degree = 4;
  int far_degree = 2;
  // Potential evaluation: points closer than potential_near_factor * h to a
  // panel use potential_near_degree.
  double potential_near_factor = 3.0;
  int potential_near_degree = 10;
  int potential_far_degree = 5;

  /// Every order/degree raised by one step (for self-consistency checks).
  QuadratureOptions refined() const;

  /// Preset whose entries agree with refined() to about 1e-7 relative.
  static QuadratureOptions accurate();
};

struct FrequencyOperatorBlock {
  OperatorKind kind = OperatorKind::V;
  Complex s;
  std::uint64_t test_id = 0;
  std::uint64_t trial_id = 0;
  Eigen::MatrixXcd matrix;
};

/// Frequencies with positive real part.
struct FrequencyGrid {
  std::vector<Complex> s;

  static double sigma(Complex z) { return z.real(); }
  static double sigma_low(Complex z) { return std::min(1.0, z.real()); }
  void validate() const;
};

enum AmbientFlags : unsigned {
  kAmbientV00 = 1u,   // V: P0 x P0
  kAmbientK01 = 2u,   // K: P0 test x P1 trial
  kAmbientW11 = 4u,   // W: P1 x P1
  kAmbientV11 = 8u,   // V: P1 x P1
  kAmbientV10 = 16u,  // V: P1 test x P0 trial
  kAmbientK11 = 32u,  // K: P1 test x P1 trial
};

/// Galerkin matrices on the ambient P0/P1 spaces at one frequency, computed in
/// a single pass over panel pairs. Only the members selected by flags are set.
template <class Scalar>
struct AmbientOperators {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  unsigned flags = 0;
  Matrix V00, K01, W11, V11, V10, K11;
};

template <class Scalar>
AmbientOperators<Scalar> assemble_ambient(const Mesh& mesh, Scalar s, unsigned flags,
                                          const QuadratureOptions& options = {});

extern template AmbientOperators<double> assemble_ambient<double>(const Mesh&, double, unsigned,
                                                                  const QuadratureOptions&);
extern template AmbientOperators<Complex> assemble_ambient<Complex>(const Mesh&, Complex, unsigned,
                                                                    const QuadratureOptions&);

/// Galerkin block of a boundary operator between two trace spaces.
FrequencyOperatorBlock assemble(OperatorKind kind, Complex s, const DiscreteTraceSpace& test,
                                const DiscreteTraceSpace& trial, const QuadratureOptions& options = {});

/// Same block extracted from already assembled ambient operators.
Eigen::MatrixXcd block_from_ambient(OperatorKind kind, const AmbientOperators<Complex>& ops,
                                    const DiscreteTraceSpace& test, const DiscreteTraceSpace& trial);

/// Ambient flags needed to extract `kind` between spaces of the given orders.
unsigned ambient_flags_for(OperatorKind kind, TraceOrder test, TraceOrder trial);

/// Rows: points; columns: active dofs of `source`. S_pot needs a Minus space
/// and D_pot a Plus space.
FrequencyOperatorBlock potential_matrix(OperatorKind kind, Complex s, const DiscreteTraceSpace& source,
                                        const std::vector<Point>& points, const QuadratureOptions& options = {});

/// Distance from p to the closest point of the surface.
double distance_to_mesh(const Mesh& mesh, const Point& p);

struct CalderonResidual {
  double r1 = 0.0;  // V W + (K - 1/2)(K + 1/2) on a Plus density, relative
  double r2 = 0.0;  // W V + (Kt - 1/2)(Kt + 1/2) on a Minus density, relative
};

/// Residuals of the two Calderon identities applied to seeded random smooth
/// densities, measured in the dual energy norms.
CalderonResidual calderon_residual(Complex s, const DiscreteTraceSpace& Xh, const DiscreteTraceSpace& Yh,
                                   const QuadratureOptions& options = {}, std::uint64_t seed = 1);

/// Same residuals for given ambient densities lambda (P0) and phi (P1).
CalderonResidual calderon_residual(Complex s, const DiscreteTraceSpace& Xh, const DiscreteTraceSpace& Yh,
                                   const Eigen::VectorXd& lambda, const Eigen::VectorXd& phi,
                                   const QuadratureOptions& options = {});

struct BoundProbeRow {
  Complex s;
  double norm = 0.0;
};

/// Operator norms induced by the V(1)/W(1) energy norms, estimated with 50
/// power iterations. V: X->X', K: Y->X', Kt: X->Y', W: Y->Y'.
std::vector<BoundProbeRow> bound_probe(OperatorKind kind, const FrequencyGrid& grid, const DiscreteTraceSpace& Xh,
                                       const DiscreteTraceSpace& Yh, const QuadratureOptions& options = {},
                                       std::uint64_t seed = 1);

/// Least-squares slope of log(norm) against log|s|.
double fit_growth_exponent(const std::vector<BoundProbeRow>& rows);

void write_matrix(std::ostream& out, const Eigen::MatrixXcd& m);
Eigen::MatrixXcd read_matrix(std::istream& in);

}  // namespace tdbem
