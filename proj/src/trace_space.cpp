#include "tdbem/trace_space.hpp"

#include "tdbem/error.hpp"
#include "tdbem/laplace_ops.hpp"

#include <cmath>

namespace tdbem {

namespace {

std::uint64_t space_hash(const Mesh* mesh, TraceOrder order, const std::vector<int>& active) {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](std::uint64_t v) {
    for (int b = 0; b < 8; ++b) {
      h ^= (v >> (8 * b)) & 0xffu;
      h *= 1099511628211ull;
    }
  };
  mix(reinterpret_cast<std::uintptr_t>(mesh));
  mix(order == TraceOrder::Minus ? 1 : 2);
  mix(active.size());
  for (int a : active) mix(static_cast<std::uint64_t>(a));
  return h;
}

}  // namespace

DiscreteTraceSpace build_space(std::shared_ptr<const Mesh> mesh, TraceOrder order, const Restriction& restriction) {
  if (!mesh) throw ConfigError("build_space: null mesh");
  DiscreteTraceSpace space;
  space.order = order;
  space.ambient_dim = order == TraceOrder::Minus ? mesh->num_triangles() : mesh->num_vertices();

  if (restriction.tags) {
    for (int tag : *restriction.tags) {
      bool found = false;
      for (int t : mesh->region_tag) found = found || t == tag;
      if (!found) throw ConfigError("build_space: restriction tag " + std::to_string(tag) + " not present in mesh");
    }
  }
  auto tag_ok = [&](int t) { return !restriction.tags || restriction.tags->count(mesh->region_tag[t]) > 0; };

  if (!restriction.zero) {
    if (order == TraceOrder::Minus) {
      for (int t = 0; t < mesh->num_triangles(); ++t) {
        if (tag_ok(t)) space.active.push_back(t);
      }
    } else {
      std::vector<int> incident(mesh->num_vertices(), 0);
      std::vector<bool> all_tagged(mesh->num_vertices(), true);
      for (int t = 0; t < mesh->num_triangles(); ++t) {
        for (int v : mesh->triangles[t]) {
          ++incident[v];
          if (!tag_ok(t)) all_tagged[v] = false;
        }
      }
      std::vector<bool> excluded(mesh->num_vertices(), false);
      if (restriction.screen) excluded = boundary_vertices(*mesh);
      for (int v = 0; v < mesh->num_vertices(); ++v) {
        if (incident[v] > 0 && all_tagged[v] && !excluded[v]) space.active.push_back(v);
      }
    }
  }
  if (restriction.require_nonempty && space.active.empty()) {
    throw ConfigError("build_space: restriction selects no degrees of freedom");
  }
  space.id = space_hash(mesh.get(), order, space.active);
  space.mesh = std::move(mesh);
  return space;
}

DiscreteTraceSpace full_space(std::shared_ptr<const Mesh> mesh, TraceOrder order) {
  return build_space(std::move(mesh), order, {});
}

bool same_space(const DiscreteTraceSpace& a, const DiscreteTraceSpace& b) {
  return a.mesh == b.mesh && a.order == b.order && a.active == b.active;
}

Eigen::MatrixXd ambient_duality_matrix(const Mesh& mesh) {
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(mesh.num_triangles(), mesh.num_vertices());
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const double a = triangle_area(mesh, t) / 3.0;
    for (int v : mesh.triangles[t]) m(t, v) += a;
  }
  return m;
}

Eigen::MatrixXd ambient_p1_mass_matrix(const Mesh& mesh) {
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(mesh.num_vertices(), mesh.num_vertices());
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const double a = triangle_area(mesh, t);
    const auto& tri = mesh.triangles[t];
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) m(tri[i], tri[j]) += a * (i == j ? 1.0 / 6.0 : 1.0 / 12.0);
    }
  }
  return m;
}

Eigen::MatrixXd duality_matrix(const DiscreteTraceSpace& test, const DiscreteTraceSpace& trial) {
  if (test.mesh != trial.mesh) throw ConfigError("duality_matrix: spaces live on different meshes");
  if (test.order != TraceOrder::Minus || trial.order != TraceOrder::Plus) {
    throw ConfigError("duality_matrix: expects a Minus test space and a Plus trial space");
  }
  return restrict_matrix(ambient_duality_matrix(*test.mesh), test, trial);
}

Eigen::VectorXd interpolate(const Mesh& mesh, TraceOrder order, const std::function<double(const Point&)>& f) {
  if (order == TraceOrder::Minus) {
    Eigen::VectorXd out(mesh.num_triangles());
    for (int t = 0; t < mesh.num_triangles(); ++t) out[t] = f(triangle_centroid(mesh, t));
    return out;
  }
  Eigen::VectorXd out(mesh.num_vertices());
  for (int v = 0; v < mesh.num_vertices(); ++v) out[v] = f(mesh.vertices[v]);
  return out;
}

Eigen::MatrixXd NormPair::matrix(const DiscreteTraceSpace& space) const {
  if (space.mesh != mesh) throw ConfigError("NormPair: space lives on a different mesh");
  return restrict_matrix(space.order == TraceOrder::Minus ? V1 : W1, space, space);
}

NormPair build_norm_pair(std::shared_ptr<const Mesh> mesh, const QuadratureOptions& options) {
  NormPair norms;
  const auto ops = assemble_ambient<double>(*mesh, 1.0, kAmbientV00 | kAmbientW11, options);
  norms.V1 = ops.V00;
  norms.W1 = ops.W11;
  norms.mesh = std::move(mesh);
  return norms;
}

Eigen::VectorXd project_best(const DiscreteTraceSpace& space, const Eigen::VectorXd& ambient_samples,
                             const NormPair& norm) {
  if (ambient_samples.size() != space.ambient_dim) throw ConfigError("project_best: sample size mismatch");
  if (space.is_zero()) return Eigen::VectorXd();
  const Eigen::MatrixXd& full = space.order == TraceOrder::Minus ? norm.V1 : norm.W1;
  const Eigen::MatrixXd m = norm.matrix(space);
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  if (llt.info() != Eigen::Success) throw NumericalError("project_best: norm matrix is not positive definite");
  const Eigen::VectorXd rhs = space.restrict_vector(full * ambient_samples);
  return llt.solve(rhs);
}

namespace {

template <class Vec>
double energy_norm(const DiscreteTraceSpace& space, const Vec& coeffs, const NormPair& norm) {
  if (coeffs.size() != space.dim()) throw ConfigError("discrete_norm: coefficient size mismatch");
  if (space.is_zero()) return 0.0;
  const Eigen::MatrixXd& full = space.order == TraceOrder::Minus ? norm.V1 : norm.W1;
  const Eigen::MatrixXd m = space.is_full() ? Eigen::MatrixXd() : norm.matrix(space);
  const Eigen::MatrixXd& a = space.is_full() ? full : m;
  const double q = std::real(coeffs.dot(a * coeffs));
  const double scale = a.diagonal().cwiseAbs().maxCoeff() * coeffs.squaredNorm();
  if (q < -1e-12 * scale) throw NumericalError("discrete_norm: norm matrix is not positive definite");
  return std::sqrt(std::max(q, 0.0));
}

}  // namespace

double discrete_norm(const DiscreteTraceSpace& space, const Eigen::VectorXd& coeffs, const NormPair& norm) {
  return energy_norm(space, coeffs, norm);
}

double discrete_norm(const DiscreteTraceSpace& space, const Eigen::VectorXcd& coeffs, const NormPair& norm) {
  return energy_norm(space, coeffs, norm);
}

}  // namespace tdbem
