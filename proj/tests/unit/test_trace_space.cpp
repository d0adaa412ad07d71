#include "doctest.h"

#include "tdbem/error.hpp"
#include "tdbem/laplace_ops.hpp"
#include "tdbem/trace_space.hpp"

#include <Eigen/Eigenvalues>

#include <memory>
#include <random>

using namespace tdbem;

namespace {

std::shared_ptr<const Mesh> hemisphere_mesh(int level) {
  return std::make_shared<const Mesh>(
      tag_partition(build_icosphere(level, 1.0), [](const Point& c) { return c.z() > 0.0 ? 1 : 0; }));
}

}  // namespace

TEST_CASE("full spaces cover the ambient dofs") {
  auto mesh = hemisphere_mesh(1);
  const auto X = full_space(mesh, TraceOrder::Minus);
  const auto Y = full_space(mesh, TraceOrder::Plus);
  CHECK(X.dim() == mesh->num_triangles());
  CHECK(Y.dim() == mesh->num_vertices());
  CHECK(X.is_full());
  CHECK(Y.is_full());
  CHECK(X.id != Y.id);
  CHECK(same_space(X, full_space(mesh, TraceOrder::Minus)));
}

TEST_CASE("tag restriction keeps only supported dofs") {
  auto mesh = hemisphere_mesh(2);
  Restriction r;
  r.tags = std::set<int>{1};
  const auto X = build_space(mesh, TraceOrder::Minus, r);
  for (int t : X.active) CHECK(mesh->region_tag[t] == 1);
  int up = 0;
  for (int tag : mesh->region_tag) up += tag;
  CHECK(X.dim() == up);

  // A P1 basis function on the tagged part must vanish on every other triangle.
  const auto Y = build_space(mesh, TraceOrder::Plus, r);
  std::vector<bool> keep(mesh->num_vertices(), false);
  for (int v : Y.active) keep[v] = true;
  for (int t = 0; t < mesh->num_triangles(); ++t) {
    if (mesh->region_tag[t] == 1) continue;
    for (int v : mesh->triangles[t]) CHECK_FALSE(keep[v]);
  }
  CHECK(Y.dim() > 0);
  CHECK(Y.dim() < mesh->num_vertices());

  Restriction missing;
  missing.tags = std::set<int>{7};
  CHECK_THROWS_AS(build_space(mesh, TraceOrder::Minus, missing), ConfigError);
}

TEST_CASE("zero space and screen restriction") {
  auto mesh = hemisphere_mesh(1);
  Restriction z;
  z.zero = true;
  const auto Z = build_space(mesh, TraceOrder::Plus, z);
  CHECK(Z.is_zero());
  CHECK(Z.embed(Eigen::VectorXd()).isZero());
  Restriction nonempty = z;
  nonempty.require_nonempty = true;
  CHECK_THROWS_AS(build_space(mesh, TraceOrder::Plus, nonempty), ConfigError);

  auto screen = std::make_shared<const Mesh>(build_screen_square(4, 1.0));
  Restriction sr;
  sr.screen = true;
  const auto Y = build_space(screen, TraceOrder::Plus, sr);
  CHECK(Y.dim() == 9);
  const auto boundary = boundary_vertices(*screen);
  for (int v : Y.active) CHECK_FALSE(boundary[v]);
}

TEST_CASE("duality matrix integrates products") {
  auto mesh = hemisphere_mesh(1);
  const Eigen::MatrixXd M = ambient_duality_matrix(*mesh);
  const Eigen::VectorXd rows = M.rowwise().sum();
  for (int t = 0; t < mesh->num_triangles(); ++t) CHECK(rows[t] == doctest::Approx(triangle_area(*mesh, t)));
  CHECK(M.sum() == doctest::Approx(mesh_stats(*mesh).total_area));
  // Linear function paired with piecewise constants: exact for P1 interpolants.
  const Eigen::VectorXd f = interpolate(*mesh, TraceOrder::Plus, [](const Point& p) { return p.x() + 2.0 * p.y(); });
  const Eigen::VectorXd g = M * f;
  for (int t = 0; t < mesh->num_triangles(); ++t) {
    const Point c = triangle_centroid(*mesh, t);
    CHECK(g[t] == doctest::Approx(triangle_area(*mesh, t) * (c.x() + 2.0 * c.y())));
  }
  const Eigen::MatrixXd P1 = ambient_p1_mass_matrix(*mesh);
  CHECK(P1.sum() == doctest::Approx(mesh_stats(*mesh).total_area));
  CHECK((P1 - P1.transpose()).norm() < 1e-14);
}

TEST_CASE("restricted duality matches the ambient matrix") {
  auto mesh = hemisphere_mesh(2);
  Restriction r;
  r.tags = std::set<int>{0};
  const auto X = build_space(mesh, TraceOrder::Minus, r);
  const auto Y = full_space(mesh, TraceOrder::Plus);
  const Eigen::MatrixXd M = duality_matrix(X, Y);
  CHECK((M - restrict_matrix(ambient_duality_matrix(*mesh), X, Y)).norm() == doctest::Approx(0.0));
  CHECK_THROWS_AS(duality_matrix(Y, X), ConfigError);
}

TEST_CASE("energy norms and best approximation") {
  auto mesh = hemisphere_mesh(1);
  const NormPair norms = build_norm_pair(mesh, QuadratureOptions{});
  for (const Eigen::MatrixXd* m : {&norms.V1, &norms.W1}) {
    CHECK(((*m) - m->transpose()).norm() < 1e-10 * m->norm());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(*m);
    CHECK(eig.eigenvalues().minCoeff() > 0.0);
  }
  Restriction r;
  r.tags = std::set<int>{1};
  const auto X = build_space(mesh, TraceOrder::Minus, r);
  std::mt19937_64 rng(4);
  std::normal_distribution<double> normal;
  Eigen::VectorXd c(X.dim());
  for (int i = 0; i < c.size(); ++i) c[i] = normal(rng);
  // Elements of the subspace are reproduced.
  CHECK((project_best(X, X.embed(c), norms) - c).norm() < 1e-10 * c.norm());
  // The residual of a general vector is orthogonal to the subspace.
  Eigen::VectorXd a(mesh->num_triangles());
  for (int i = 0; i < a.size(); ++i) a[i] = normal(rng);
  const Eigen::VectorXd p = X.embed(project_best(X, a, norms));
  const Eigen::VectorXd orth = X.restrict_vector(norms.V1 * (a - p));
  CHECK(orth.norm() < 1e-10 * (norms.V1 * a).norm());
  CHECK(discrete_norm(X, c, norms) == doctest::Approx(std::sqrt(c.dot(norms.matrix(X) * c))));
}
