#pragma once

#include "tdbem/cq.hpp"
#include "tdbem/laplace_ops.hpp"
#include "tdbem/mesh.hpp"
#include "tdbem/trace_space.hpp"
#include "tdbem/waveform.hpp"

#include <array>
#include <memory>
#include <set>
#include <string>
#include <vector>

namespace tdbem {

enum class FormulationLabel {
  IndirectDirichlet,
  DirectDirichlet,
  IndirectNeumann,
  DirectNeumann,
  SymmetricDirichlet,
  SymmetricNeumann,
  Mixed,
  ScreenDirichlet,
  ScreenNeumann,
  Custom,
};

std::string to_string(FormulationLabel label);
FormulationLabel parse_formulation_label(const std::string& name);

/// Data slots of the transmission problem
///   gamma+ u - alpha1 in X_h polar,  [gamma u] - alpha2 in Y_h,
///   nu- u - beta1 in Y_h polar,      [nu u] - beta2 in X_h,
/// with [gamma u] = gamma- u - gamma+ u and [nu u] = nu- u - nu+ u.
enum DataSlot { kAlpha1 = 0, kAlpha2 = 1, kBeta1 = 2, kBeta2 = 3 };

/// A transmission problem: the trial spaces X_h (P0, Neumann jump) and Y_h
/// (P1, Dirichlet jump) plus four causal data signals. Alpha signals hold
/// vertex values, beta signals triangle values. A void slot is never read.
struct TransmissionSpec {
  FormulationLabel label = FormulationLabel::Custom;
  std::shared_ptr<const Mesh> mesh;
  DiscreteTraceSpace Xh;
  DiscreteTraceSpace Yh;
  CausalSignal alpha1, alpha2, beta1, beta2;
  std::array<bool, 4> void_slot{};

  const CausalSignal& data(DataSlot slot) const;
  /// Step size and length shared by the non-void slots.
  double dt() const;
  int N() const;
  /// Throws ConfigError for mismatched spaces, shapes, illegal void slots or
  /// data that does not vanish at t = 0.
  void validate() const;
};

struct FormulationOptions {
  CausalSignal alpha;  // Dirichlet data, vertex values
  CausalSignal beta;   // Neumann data, triangle values
  /// Direct Dirichlet formulation: "exterior" (u = 0 inside) or "interior" (u = 0 outside).
  std::string side = "exterior";
  /// Mixed problems: triangles of Gamma_D and Gamma_N by region tag. An empty
  /// Dirichlet set means every tag not listed as Neumann.
  std::set<int> dirichlet_tags;
  std::set<int> neumann_tags;
};

TransmissionSpec make_formulation(FormulationLabel label, std::shared_ptr<const Mesh> mesh,
                                  const FormulationOptions& options);

TransmissionSpec make_custom(const DiscreteTraceSpace& Xh, const DiscreteTraceSpace& Yh, const CausalSignal& alpha1,
                             const CausalSignal& alpha2, const CausalSignal& beta1, const CausalSignal& beta2,
                             std::array<bool, 4> void_slot = {});

/// Galerkin matrix of the transmission system at one frequency on X_h x Y_h:
///   [ V           -(1/2 + K) ]
///   [ 1/2 + K^t    W         ]
Eigen::MatrixXcd transmission_matrix(const AmbientOperators<Complex>& ops, const Eigen::MatrixXd& duality,
                                     const DiscreteTraceSpace& Xh, const DiscreteTraceSpace& Yh);

struct SolveOptions {
  std::vector<Point> observation_points;
  QuadratureOptions quadrature;
  /// When set, per-step energy norms of the densities are recorded.
  std::shared_ptr<const NormPair> norms;
};

struct SolveResult {
  CausalSignal lambda;    // Neumann jump, triangle values
  CausalSignal phi;       // Dirichlet jump, vertex values
  CausalSignal lambda_h;  // X_h coefficients
  CausalSignal phi_h;     // Y_h coefficients
  CausalSignal field;     // rows: observation points
  std::vector<double> lambda_norm;
  std::vector<double> phi_norm;
  /// Per step: residual of the Galerkin conditions tested against X_h and
  /// Y_h, relative to the largest right-hand side.
  std::vector<double> polar_residual;
  double max_polar_residual = 0.0;
};

/// Solves several problems on one mesh in a single sweep over the contour
/// frequencies; problems sharing (X_h, Y_h) share one factorization per frequency.
std::vector<SolveResult> solve_formulations(const std::vector<TransmissionSpec>& specs, const CQScheme& scheme,
                                            const SolveOptions& options = {});
SolveResult solve_formulation(const TransmissionSpec& spec, const CQScheme& scheme, const SolveOptions& options = {});

/// u = S * lambda - D * phi at `points`.
CausalSignal reconstruct_field(const TransmissionSpec& spec, const CausalSignal& lambda, const CausalSignal& phi,
                               const std::vector<Point>& points, const CQScheme& scheme,
                               const QuadratureOptions& options = {});

/// Exterior Dirichlet-to-Neumann map nu+ u for Dirichlet data alpha, through
/// the exterior direct formulation (lambda = -nu+ u).
CausalSignal exterior_dtn(std::shared_ptr<const Mesh> mesh, const CausalSignal& alpha, const CQScheme& scheme,
                          const QuadratureOptions& options = {});
/// Interior Dirichlet-to-Neumann map nu- u (interior direct formulation, lambda = nu- u).
CausalSignal interior_dtn(std::shared_ptr<const Mesh> mesh, const CausalSignal& alpha, const CQScheme& scheme,
                          const QuadratureOptions& options = {});
/// Exterior Neumann-to-Dirichlet map gamma+ u for Neumann data beta
/// (exterior direct Neumann formulation, phi = -gamma+ u).
CausalSignal exterior_ntd(std::shared_ptr<const Mesh> mesh, const CausalSignal& beta, const CQScheme& scheme,
                          const QuadratureOptions& options = {});

/// Relative space-time L2 distance sqrt(sum |a - b|^2 / sum |b|^2).
double relative_l2(const CausalSignal& a, const CausalSignal& b);

// Error studies ------------------------------------------------------------

struct LadderLevel {
  int level = 1;
  int N = 64;
};

struct ErrorStudyOptions {
  FormulationLabel label = FormulationLabel::DirectDirichlet;
  std::vector<LadderLevel> ladder;
  double T = 7.0;
  double radius = 1.0;
  CQMethod method = CQMethod::BDF2;
  PointSource source;
  std::vector<Point> observation_points;
  QuadratureOptions quadrature;
  /// Reference from a finer solve (one level and a doubled N past the ladder)
  /// instead of the point-source density.
  bool self_reference = false;
};

struct ErrorStudyRow {
  int level = 0;
  int N = 0;
  double dt = 0.0;
  double h = 0.0;
  double density_error = 0.0;  // max over steps of the energy-norm error
  double majorant = 0.0;       // H2 seminorm of the best-approximation deficit
  double ratio = 0.0;
  double field_error = 0.0;    // relative space-time L2 at the observation points
};

struct ErrorStudyReport {
  std::vector<ErrorStudyRow> rows;
  bool monotone = false;
  double ratio_spread = 0.0;  // max ratio / min ratio
};

/// Reference density sampled on a mesh: triangle values for Dirichlet-type
/// labels (the unknown is lambda), vertex values otherwise (phi).
using ReferenceDensity = std::function<CausalSignal(const Mesh& fine)>;

/// Row of an error study for an already solved level. The energy norms live
/// on refine_uniform(coarse mesh), where the reference is sampled.
ErrorStudyRow error_study_row(const TransmissionSpec& spec, const SolveResult& result, const CQScheme& scheme,
                              const ReferenceDensity& reference, const CausalSignal& exact_field,
                              const QuadratureOptions& options = {});

/// Exact density of the point source for the direct exterior formulations:
/// lambda = -nu+ u (Dirichlet) or phi = -gamma+ u (Neumann).
ReferenceDensity point_source_reference(FormulationLabel label, const PointSource& source, const CQScheme& scheme);

/// Point-source data for a label: alpha = gamma+ u, beta = nu+ u.
FormulationOptions point_source_data(FormulationLabel label, const Mesh& mesh, const PointSource& source,
                                     const CQScheme& scheme);

ErrorStudyReport error_study(const ErrorStudyOptions& options);

/// Fills monotone and ratio_spread from rows.
void summarize(ErrorStudyReport& report);

// Long-time stability ----------------------------------------------------------

struct StabilityReport {
  std::vector<double> density_norm;  // per step
  std::vector<double> field_norm;    // per step, Euclidean over observation points
  double density_envelope = 0.0;     // min c with norm <= c (1 + t)
  double field_envelope = 0.0;
  double tail_density_max = 0.0;     // over t past the end of the data
  double tail_field_max = 0.0;
  bool exponential_growth = false;
};

/// Per-step envelope analysis of a solve whose data vanish after `data_end`.
StabilityReport stability_probe(const TransmissionSpec& spec, const CQScheme& scheme, const SolveOptions& options,
                                double data_end);
StabilityReport stability_report(const SolveResult& result, double dt, double data_end);

/// True when the maxima over the last four tenths of `values` grow by more
/// than a factor 1.5 from each tenth to the next and the final one is not
/// negligible against the overall maximum.
bool exponential_growth_flag(const std::vector<double>& values);

}  // namespace tdbem
