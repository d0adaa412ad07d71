#pragma once

#include "tdbem/mesh.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <set>
#include <vector>

namespace tdbem {

/// Sobolev order of a trace space: Minus = H^{-1/2} (P0), Plus = H^{1/2} (P1).
enum class TraceOrder { Minus, Plus };

struct Restriction {
  std::optional<std::set<int>> tags;  // keep only dofs supported on these tags
  bool screen = false;                // Plus order: drop vertices on the open boundary
  bool zero = false;                  // the zero space {0}
  bool require_nonempty = false;
};

/// Subspace of the ambient P0 (per triangle) or P1 (per vertex) space,
/// selected by a list of active ambient dofs.
struct DiscreteTraceSpace {
  std::shared_ptr<const Mesh> mesh;
  TraceOrder order = TraceOrder::Minus;
  std::vector<int> active;
  int ambient_dim = 0;
  std::uint64_t id = 0;

  int dim() const { return static_cast<int>(active.size()); }
  bool is_zero() const { return active.empty(); }
  bool is_full() const { return dim() == ambient_dim; }

  /// Ambient coefficients of an active coefficient vector (zeros elsewhere).
  template <class Derived>
  Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> embed(const Eigen::MatrixBase<Derived>& c) const {
    Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> out =
        Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1>::Zero(ambient_dim);
    for (int k = 0; k < dim(); ++k) out[active[k]] = c[k];
    return out;
  }

  /// Active entries of an ambient vector.
  template <class Derived>
  Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> restrict_vector(
      const Eigen::MatrixBase<Derived>& ambient) const {
    Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> out(dim());
    for (int k = 0; k < dim(); ++k) out[k] = ambient[active[k]];
    return out;
  }
};

/// Restricts an ambient matrix to the active rows of `test` and columns of `trial`.
template <class Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic> restrict_matrix(
    const Eigen::MatrixBase<Derived>& ambient, const DiscreteTraceSpace& test, const DiscreteTraceSpace& trial) {
  Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic> out(test.dim(), trial.dim());
  for (int j = 0; j < trial.dim(); ++j) {
    for (int i = 0; i < test.dim(); ++i) out(i, j) = ambient(test.active[i], trial.active[j]);
  }
  return out;
}

DiscreteTraceSpace build_space(std::shared_ptr<const Mesh> mesh, TraceOrder order, const Restriction& restriction = {});

/// The unrestricted P0 or P1 space on `mesh`.
DiscreteTraceSpace full_space(std::shared_ptr<const Mesh> mesh, TraceOrder order);

bool same_space(const DiscreteTraceSpace& a, const DiscreteTraceSpace& b);

/// Ambient P0 x P1 mass matrix: entry (t, v) = area(t)/3 if v is a vertex of t.
Eigen::MatrixXd ambient_duality_matrix(const Mesh& mesh);

/// Ambient P1 x P1 mass matrix.
Eigen::MatrixXd ambient_p1_mass_matrix(const Mesh& mesh);

/// Duality matrix <psi_i, phi_j> between a Minus test space and a Plus trial space.
Eigen::MatrixXd duality_matrix(const DiscreteTraceSpace& test, const DiscreteTraceSpace& trial);

/// Ambient coefficients interpolating `f`: centroid values (Minus) or nodal values (Plus).
Eigen::VectorXd interpolate(const Mesh& mesh, TraceOrder order, const std::function<double(const Point&)>& f);

struct QuadratureOptions;

/// Energy-norm matrices V(1) on ambient P0 and W(1) on ambient P1.
struct NormPair {
  std::shared_ptr<const Mesh> mesh;
  Eigen::MatrixXd V1;
  Eigen::MatrixXd W1;

  /// Norm matrix restricted to the active dofs of `space`.
  Eigen::MatrixXd matrix(const DiscreteTraceSpace& space) const;
};

NormPair build_norm_pair(std::shared_ptr<const Mesh> mesh, const QuadratureOptions& options);

/// Best approximation in the energy norm of an ambient coefficient vector
/// by the active subspace; returns active coefficients.
Eigen::VectorXd project_best(const DiscreteTraceSpace& space, const Eigen::VectorXd& ambient_samples,
                             const NormPair& norm);

/// Energy norm of active coefficients.
double discrete_norm(const DiscreteTraceSpace& space, const Eigen::VectorXd& coeffs, const NormPair& norm);
double discrete_norm(const DiscreteTraceSpace& space, const Eigen::VectorXcd& coeffs, const NormPair& norm);

}  // namespace tdbem
