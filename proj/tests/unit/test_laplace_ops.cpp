#include "doctest.h"

#include "../support/oracles.hpp"
#include "tdbem/error.hpp"
#include "tdbem/laplace_ops.hpp"
#include "tdbem/quadrature.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <memory>
#include <numbers>

using namespace tdbem;

namespace {

double relative_entry_change(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return (a - b).cwiseAbs().maxCoeff() / b.cwiseAbs().maxCoeff();
}

}  // namespace

TEST_CASE("quadrature rules integrate polynomials") {
  const LineRule g = gauss_legendre(5);
  double m = 0.0;
  for (int i = 0; i < 5; ++i) m += g.weights[i] * std::pow(g.nodes[i], 9);
  CHECK(m == doctest::Approx(0.1).epsilon(1e-14));
  for (int degree : {1, 2, 3, 4, 5, 8}) {
    const TriangleRule r = triangle_rule(degree);
    double sum = 0.0, mono = 0.0;
    for (size_t k = 0; k < r.points.size(); ++k) {
      sum += r.weights[k];
      mono += r.weights[k] * std::pow(r.points[k].x(), degree);
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-14));
    // int_T u^d = d! / (d + 2)! on the reference triangle of area 1/2.
    const double exact = 2.0 / ((degree + 1.0) * (degree + 2.0));
    CHECK(mono == doctest::Approx(exact).epsilon(1e-12));
  }
  for (PairType type : {PairType::Vertex, PairType::Edge, PairType::Identical}) {
    const PairRule r = singular_pair_rule(type, 4);
    double sum = 0.0;
    for (double w : r.weights) sum += w;
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("closed-form triangle potential agrees with plain quadrature far away") {
  const Eigen::Vector3d a(0, 0, 0), b(1, 0, 0), c(0.2, 0.9, 0);
  const Eigen::Vector3d x(0.4, -0.7, 1.3);
  double numeric = 0.0;
  for (const auto& s : oracle::subdivided_rule(a, b, c, 3, 8)) numeric += s.w / (x - s.x).norm();
  CHECK(oracle::triangle_inverse_distance(a, b, c, x) == doctest::Approx(numeric).epsilon(1e-12));
  // In-plane point inside the triangle: finite and positive.
  CHECK(oracle::triangle_inverse_distance(a, b, c, Eigen::Vector3d(0.3, 0.3, 0)) > 0.0);
}

TEST_CASE("single layer moment on a flat mesh matches brute force") {
  const Mesh mesh = build_icosphere(0, 1.0);
  // The outer rule converges at second order; one Richardson step.
  const double coarse = oracle::flat_mesh_moment(mesh, 1.0, 1);
  const double fine = oracle::flat_mesh_moment(mesh, 1.0, 2);
  const double brute = fine + (fine - coarse) / 3.0;
  REQUIRE(std::abs(brute - fine) < 1e-6 * std::abs(brute));
  CHECK(oracle::triangle_retarded_potential(Eigen::Vector3d(0, 0, 0), Eigen::Vector3d(1, 0, 0),
                                            Eigen::Vector3d(0.2, 0.9, 0), Eigen::Vector3d(0.3, 0.2, 0.05), 1e-9,
                                            gauss_legendre(24)) ==
        doctest::Approx(oracle::triangle_inverse_distance(Eigen::Vector3d(0, 0, 0), Eigen::Vector3d(1, 0, 0),
                                                          Eigen::Vector3d(0.2, 0.9, 0), Eigen::Vector3d(0.3, 0.2, 0.05)))
            .epsilon(1e-8));
  const Eigen::VectorXd one = Eigen::VectorXd::Ones(mesh.num_triangles());
  const auto acc = assemble_ambient<double>(mesh, 1.0, kAmbientV00, QuadratureOptions::accurate());
  const auto def = assemble_ambient<double>(mesh, 1.0, kAmbientV00, QuadratureOptions{});
  CHECK(std::abs(one.dot(acc.V00 * one) - brute) < 1e-6 * brute);
  CHECK(std::abs(one.dot(def.V00 * one) - brute) < 1e-5 * brute);
}

TEST_CASE("sphere moment oracle matches the closed form") {
  for (double R : {0.5, 1.0, 2.0}) {
    for (double s : {0.3, 1.0, 3.0}) {
      const double closed = 4.0 * std::numbers::pi * R * R * (1.0 - std::exp(-2.0 * s * R)) / (2.0 * s);
      CHECK(oracle::sphere_moment_bessel(R, s) == doctest::Approx(closed).epsilon(1e-12));
    }
  }
}

TEST_CASE("accurate quadrature is self-consistent") {
  const Mesh mesh = build_icosphere(1, 1.0);
  const unsigned flags = kAmbientV00 | kAmbientK01 | kAmbientW11;
  const QuadratureOptions acc = QuadratureOptions::accurate();
  const auto a = assemble_ambient<Complex>(mesh, Complex(1.0, 2.0), flags, acc);
  const auto b = assemble_ambient<Complex>(mesh, Complex(1.0, 2.0), flags, acc.refined());
  auto change = [](const Eigen::MatrixXcd& x, const Eigen::MatrixXcd& y) {
    return (x - y).cwiseAbs().maxCoeff() / y.cwiseAbs().maxCoeff();
  };
  CHECK(change(a.V00, b.V00) < 1e-6);
  CHECK(change(a.K01, b.K01) < 1e-6);
  CHECK(change(a.W11, b.W11) < 1e-6);
}

TEST_CASE("operator structure at real and complex frequencies") {
  const Mesh mesh = build_icosphere(1, 1.0);
  const auto ops = assemble_ambient<double>(mesh, 2.0, kAmbientV00 | kAmbientW11 | kAmbientV11 | kAmbientK11);
  CHECK(relative_entry_change(ops.V00, ops.V00.transpose()) < 1e-12);
  CHECK(relative_entry_change(ops.W11, ops.W11.transpose()) < 1e-12);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> v(ops.V00), w(ops.W11);
  CHECK(v.eigenvalues().minCoeff() > 0.0);
  CHECK(w.eigenvalues().minCoeff() > 0.0);

  // Complex frequencies: complex symmetric and conjugate in s.
  const Complex s(1.0, 3.0);
  const auto p = assemble_ambient<Complex>(mesh, s, kAmbientV00 | kAmbientK01);
  const auto q = assemble_ambient<Complex>(mesh, std::conj(s), kAmbientV00 | kAmbientK01);
  CHECK((p.V00 - p.V00.transpose()).norm() < 1e-12 * p.V00.norm());
  CHECK((p.V00.conjugate() - q.V00).norm() < 1e-12 * p.V00.norm());
  CHECK((p.K01.conjugate() - q.K01).norm() < 1e-12 * p.K01.norm());
}

TEST_CASE("blocks on restricted spaces come from the ambient operators") {
  auto mesh = std::make_shared<const Mesh>(
      tag_partition(build_icosphere(1, 1.0), [](const Point& c) { return c.z() > 0.0 ? 1 : 0; }));
  Restriction r;
  r.tags = std::set<int>{1};
  const auto X = build_space(mesh, TraceOrder::Minus, r);
  const auto Y = build_space(mesh, TraceOrder::Plus, r);
  const Complex s(0.5, 1.5);
  const auto ops = assemble_ambient<Complex>(*mesh, s, kAmbientV00 | kAmbientK01 | kAmbientW11);
  for (auto [kind, test, trial] : {std::tuple{OperatorKind::V, X, X}, std::tuple{OperatorKind::K, X, Y},
                                   std::tuple{OperatorKind::Kt, Y, X}, std::tuple{OperatorKind::W, Y, Y}}) {
    const auto direct = assemble(kind, s, test, trial);
    const Eigen::MatrixXcd extracted = block_from_ambient(kind, ops, test, trial);
    CHECK(direct.matrix.rows() == test.dim());
    CHECK(direct.matrix.cols() == trial.dim());
    CHECK((direct.matrix - extracted).norm() < 1e-13 * extracted.norm());
  }
  const Eigen::MatrixXcd K = block_from_ambient(OperatorKind::K, ops, full_space(mesh, TraceOrder::Minus),
                                                full_space(mesh, TraceOrder::Plus));
  const Eigen::MatrixXcd Kt = block_from_ambient(OperatorKind::Kt, ops, full_space(mesh, TraceOrder::Plus),
                                                 full_space(mesh, TraceOrder::Minus));
  CHECK((K.transpose() - Kt).norm() == doctest::Approx(0.0));
}

TEST_CASE("potentials far from the surface") {
  auto mesh = std::make_shared<const Mesh>(build_icosphere(2, 1.0));
  const double s = 0.7;
  const std::vector<Point> far{Point(30.0, 0.0, 0.0), Point(0.0, -25.0, 5.0)};
  const auto X = full_space(mesh, TraceOrder::Minus);
  const auto S = potential_matrix(OperatorKind::SPot, s, X, far);
  const Eigen::VectorXd one = Eigen::VectorXd::Ones(X.dim());
  const double area = mesh_stats(*mesh).total_area;
  for (size_t i = 0; i < far.size(); ++i) {
    const double r = far[i].norm();
    // Uniform layer on the unit sphere: area * sinh(s)/s * exp(-s r)/(4 pi r) outside.
    const double exact = area * std::sinh(s) / s * std::exp(-s * r) / (4.0 * std::numbers::pi * r);
    CHECK(std::real((S.matrix * one.cast<Complex>())[i]) == doctest::Approx(exact).epsilon(0.01));
  }
  const auto D = potential_matrix(OperatorKind::DPot, s, full_space(mesh, TraceOrder::Plus), far);
  CHECK(D.matrix.rows() == 2);
  CHECK_THROWS_AS(potential_matrix(OperatorKind::SPot, s, full_space(mesh, TraceOrder::Plus), far), ConfigError);
}

TEST_CASE("distance to the surface") {
  const Mesh mesh = build_icosphere(2, 1.0);
  CHECK(distance_to_mesh(mesh, Point(3.0, 0.0, 0.0)) == doctest::Approx(2.0).epsilon(0.01));
  CHECK(distance_to_mesh(mesh, mesh.vertices[5]) == doctest::Approx(0.0));
  CHECK(distance_to_mesh(mesh, Point::Zero()) > 0.9);
}

TEST_CASE("frequency grids must lie in the right half plane") {
  FrequencyGrid g;
  g.s = {Complex(1.0, 2.0), Complex(-0.1, 1.0)};
  CHECK_THROWS_AS(g.validate(), ConfigError);
  g.s = {Complex(1.0, 2.0)};
  CHECK_NOTHROW(g.validate());
}
