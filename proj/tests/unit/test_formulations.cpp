#include "doctest.h"

#include "tdbem/error.hpp"
#include "tdbem/formulations.hpp"
#include "tdbem/waveform.hpp"

#include <cmath>
#include <memory>
#include <random>

using namespace tdbem;

namespace {

struct Fixture {
  std::shared_ptr<const Mesh> mesh;
  CQScheme scheme;
  PointSource source;
  CausalSignal alpha, beta;

  explicit Fixture(int level = 1, int N = 32, double T = 6.0) {
    mesh = std::make_shared<const Mesh>(
        tag_partition(build_icosphere(level, 1.0), [](const Point& c) { return c.z() > 0.0 ? 1 : 0; }));
    scheme = CQScheme{CQMethod::BDF2, N, T / N};
    source.x0 = Point(0.2, 0.1, -0.15);
    source.psi = Bump{1.0, 2.0, 0.0};
    alpha = point_source_dirichlet_trace(*mesh, source, scheme);
    beta = point_source_neumann_trace(*mesh, source, scheme);
  }

  FormulationOptions options() const {
    FormulationOptions o;
    o.alpha = alpha;
    o.beta = beta;
    return o;
  }
};

CausalSignal noise_like(const CausalSignal& s, unsigned seed) {
  std::mt19937 rng(seed);
  std::normal_distribution<double> normal;
  CausalSignal out = s;
  for (int n = 1; n < s.N(); ++n) {
    for (int i = 0; i < s.dim(); ++i) out.samples(i, n) = normal(rng);
  }
  out.samples.col(0).setZero();
  return out;
}

}  // namespace

TEST_CASE("formulation labels round trip") {
  for (FormulationLabel l :
       {FormulationLabel::IndirectDirichlet, FormulationLabel::DirectDirichlet, FormulationLabel::IndirectNeumann,
        FormulationLabel::DirectNeumann, FormulationLabel::SymmetricDirichlet, FormulationLabel::SymmetricNeumann,
        FormulationLabel::Mixed, FormulationLabel::ScreenDirichlet, FormulationLabel::ScreenNeumann,
        FormulationLabel::Custom}) {
    CHECK(parse_formulation_label(to_string(l)) == l);
  }
  CHECK_THROWS_AS(parse_formulation_label("indirect_robin"), ConfigError);
}

TEST_CASE("illegal problems are rejected") {
  const Fixture f;
  const auto X = full_space(f.mesh, TraceOrder::Minus);
  const auto Y = full_space(f.mesh, TraceOrder::Plus);
  const CausalSignal zv = CausalSignal::zeros(f.mesh->num_vertices(), f.scheme.N, f.scheme.dt);
  const CausalSignal zt = CausalSignal::zeros(f.mesh->num_triangles(), f.scheme.N, f.scheme.dt);
  // alpha1 is tested against X_h, so it may only be void when X_h = {0}.
  CHECK_THROWS_AS(make_custom(X, Y, zv, zv, zt, zt, {true, false, false, false}), ConfigError);
  Restriction half;
  half.tags = std::set<int>{1};
  const auto Yr = build_space(f.mesh, TraceOrder::Plus, half);
  CHECK_THROWS_AS(make_custom(X, Yr, f.alpha, zv, zt, zt, {false, true, false, false}), ConfigError);
  CHECK_NOTHROW(make_custom(X, Y, f.alpha, zv, zt, zt, {false, true, false, false}));

  CausalSignal late = f.alpha;
  late.samples.col(0).setConstant(1.0);
  CHECK_THROWS_AS(make_custom(X, Y, late, zv, zt, zt), ConfigError);
  CausalSignal wrong = zv;
  wrong.dt *= 2.0;
  CHECK_THROWS_AS(make_custom(X, Y, f.alpha, wrong, zt, zt), ConfigError);

  CHECK_THROWS_AS(make_formulation(FormulationLabel::ScreenDirichlet, f.mesh, f.options()), ConfigError);
  FormulationOptions bad_side = f.options();
  bad_side.side = "sideways";
  CHECK_THROWS_AS(make_formulation(FormulationLabel::DirectDirichlet, f.mesh, bad_side), ConfigError);
}

TEST_CASE("zero data give zero densities and fields") {
  const Fixture f;
  FormulationOptions o;
  o.alpha = CausalSignal::zeros(f.mesh->num_vertices(), f.scheme.N, f.scheme.dt);
  o.beta = CausalSignal::zeros(f.mesh->num_triangles(), f.scheme.N, f.scheme.dt);
  SolveOptions so;
  so.observation_points = {Point(2.0, 0.0, 0.0)};
  for (FormulationLabel l : {FormulationLabel::IndirectDirichlet, FormulationLabel::SymmetricNeumann}) {
    const SolveResult r = solve_formulation(make_formulation(l, f.mesh, o), f.scheme, so);
    CHECK(r.lambda.samples.isZero());
    CHECK(r.phi.samples.isZero());
    CHECK(r.field.samples.isZero());
  }
}

TEST_CASE("Galerkin conditions hold at every step") {
  const Fixture f;
  std::vector<TransmissionSpec> specs;
  for (FormulationLabel l : {FormulationLabel::IndirectDirichlet, FormulationLabel::DirectDirichlet,
                             FormulationLabel::IndirectNeumann, FormulationLabel::DirectNeumann,
                             FormulationLabel::SymmetricDirichlet, FormulationLabel::SymmetricNeumann}) {
    specs.push_back(make_formulation(l, f.mesh, f.options()));
  }
  FormulationOptions mixed = f.options();
  mixed.neumann_tags = {1};
  specs.push_back(make_formulation(FormulationLabel::Mixed, f.mesh, mixed));
  const auto results = solve_formulations(specs, f.scheme);
  REQUIRE(results.size() == specs.size());
  for (size_t k = 0; k < specs.size(); ++k) {
    INFO(to_string(specs[k].label));
    CHECK(results[k].max_polar_residual < 1e-8);
    CHECK(results[k].lambda.samples.allFinite());
    CHECK(results[k].lambda.samples.col(0).norm() <= 1e-8 * results[k].lambda.samples.norm());
  }
  // Mixed: X_h lives on the Dirichlet part, Y_h on the Neumann part.
  for (int t : specs.back().Xh.active) CHECK(f.mesh->region_tag[t] == 0);
}

TEST_CASE("batched and separate solves agree") {
  const Fixture f;
  const auto a = make_formulation(FormulationLabel::IndirectDirichlet, f.mesh, f.options());
  const auto b = make_formulation(FormulationLabel::DirectDirichlet, f.mesh, f.options());
  const auto c = make_formulation(FormulationLabel::SymmetricNeumann, f.mesh, f.options());
  const auto batch = solve_formulations({a, b, c}, f.scheme);
  const SolveResult ra = solve_formulation(a, f.scheme), rc = solve_formulation(c, f.scheme);
  CHECK(batch[0].lambda.samples == ra.lambda.samples);
  CHECK((batch[2].phi.samples - rc.phi.samples).cwiseAbs().maxCoeff() <= 1e-13 * rc.phi.samples.cwiseAbs().maxCoeff());
}

TEST_CASE("slots tested against the zero space are never read") {
  const Fixture f;
  const auto X = full_space(f.mesh, TraceOrder::Minus);
  Restriction zero;
  zero.zero = true;
  const auto Y0 = build_space(f.mesh, TraceOrder::Plus, zero);
  const CausalSignal zv = CausalSignal::zeros(f.mesh->num_vertices(), f.scheme.N, f.scheme.dt);
  const CausalSignal zt = CausalSignal::zeros(f.mesh->num_triangles(), f.scheme.N, f.scheme.dt);
  const auto voided = make_custom(X, Y0, f.alpha, zv, zt, zt, {false, false, true, false});
  const auto zeroed = make_custom(X, Y0, f.alpha, zv, zt, zt);
  const auto noisy = make_custom(X, Y0, f.alpha, zv, noise_like(f.beta, 3), zt);
  const auto r = solve_formulations({voided, zeroed, noisy}, f.scheme);
  CHECK(r[0].lambda.samples == r[1].lambda.samples);
  CHECK(r[0].lambda.samples == r[2].lambda.samples);
  CHECK(r[0].phi.samples == r[2].phi.samples);
}

TEST_CASE("transmission matrix is the Calderon block system") {
  const Fixture f;
  const Complex s(0.8, 1.7);
  Restriction half;
  half.tags = std::set<int>{1};
  const auto X = build_space(f.mesh, TraceOrder::Minus, half);
  const auto Y = full_space(f.mesh, TraceOrder::Plus);
  const auto ops = assemble_ambient<Complex>(*f.mesh, s, kAmbientV00 | kAmbientK01 | kAmbientW11);
  const Eigen::MatrixXcd A = transmission_matrix(ops, ambient_duality_matrix(*f.mesh), X, Y);

  const Eigen::MatrixXcd V = assemble(OperatorKind::V, s, X, X).matrix;
  const Eigen::MatrixXcd B = assemble(OperatorKind::K, s, X, Y).matrix + 0.5 * duality_matrix(X, Y).cast<Complex>();
  const Eigen::MatrixXcd Bt = assemble(OperatorKind::Kt, s, Y, X).matrix + 0.5 * duality_matrix(X, Y).transpose().cast<Complex>();
  const Eigen::MatrixXcd W = assemble(OperatorKind::W, s, Y, Y).matrix;
  const int nx = X.dim(), ny = Y.dim();
  CHECK((A.topLeftCorner(nx, nx) - V).norm() < 1e-12 * V.norm());
  CHECK((A.topRightCorner(nx, ny) + B).norm() < 1e-12 * B.norm());
  CHECK((A.bottomLeftCorner(ny, nx) - Bt).norm() < 1e-12 * B.norm());
  CHECK((A.bottomRightCorner(ny, ny) - W).norm() < 1e-12 * W.norm());

  // Eliminating the Dirichlet jump leaves the Steklov-Poincare operator V + B W^-1 B^t,
  // which is complex symmetric.
  const Eigen::MatrixXcd SP = V + B * W.partialPivLu().solve(Bt);
  CHECK((SP - SP.transpose()).norm() < 1e-10 * SP.norm());
  std::mt19937 rng(11);
  std::normal_distribution<double> normal;
  Eigen::VectorXcd g(nx);
  for (int i = 0; i < nx; ++i) g[i] = Complex(normal(rng), normal(rng));
  Eigen::VectorXcd rhs = Eigen::VectorXcd::Zero(nx + ny);
  rhs.head(nx) = g;
  const Eigen::VectorXcd full = A.partialPivLu().solve(rhs);
  const Eigen::VectorXcd lambda = SP.partialPivLu().solve(g);
  CHECK((full.head(nx) - lambda).norm() < 1e-9 * lambda.norm());
}

TEST_CASE("reconstructed field matches the solver output") {
  const Fixture f;
  const auto spec = make_formulation(FormulationLabel::DirectDirichlet, f.mesh, f.options());
  SolveOptions so;
  so.observation_points = {Point(2.0, 0.0, 0.0), Point(0.0, -1.5, 1.0)};
  const SolveResult r = solve_formulation(spec, f.scheme, so);
  const CausalSignal u = reconstruct_field(spec, r.lambda, r.phi, so.observation_points, f.scheme);
  CHECK((u.samples - r.field.samples).cwiseAbs().maxCoeff() < 1e-10 * r.field.samples.cwiseAbs().maxCoeff());
}

TEST_CASE("coarse exterior Dirichlet solve approximates the point source") {
  const Fixture f(1, 64, 7.0);
  SolveOptions so;
  so.observation_points = {Point(2.0, 0.0, 0.0), Point(0.0, 0.0, -2.0), Point(-1.2, 1.2, 1.0)};
  const auto spec = make_formulation(FormulationLabel::DirectDirichlet, f.mesh, f.options());
  const SolveResult r = solve_formulation(spec, f.scheme, so);
  const CausalSignal exact = point_source_field(so.observation_points, f.source, f.scheme);
  CHECK(relative_l2(r.field, exact) < 0.25);
  // Exterior direct formulation: lambda approximates -nu+ u.
  CausalSignal minus_beta = f.beta;
  minus_beta.samples *= -1.0;
  CHECK(relative_l2(r.lambda, minus_beta) < 0.3);
}

TEST_CASE("screen formulations solve on an open mesh") {
  auto screen = std::make_shared<const Mesh>(build_screen_square(4, 1.0));
  const CQScheme scheme{CQMethod::BDF2, 24, 0.25};
  PointSource src;
  src.x0 = Point(0.0, 0.0, 1.0);
  src.psi = Bump{1.0, 2.0, 0.0};
  FormulationOptions o;
  o.alpha = point_source_dirichlet_trace(*screen, src, scheme);
  o.beta = point_source_neumann_trace(*screen, src, scheme);
  for (FormulationLabel l : {FormulationLabel::ScreenDirichlet, FormulationLabel::ScreenNeumann}) {
    const SolveResult r = solve_formulation(make_formulation(l, screen, o), scheme);
    CHECK(r.max_polar_residual < 1e-8);
    CHECK(r.lambda.samples.allFinite());
  }
  CHECK_THROWS_AS(make_formulation(FormulationLabel::IndirectDirichlet, screen, o), ConfigError);
}

TEST_CASE("exponential growth flag") {
  std::vector<double> linear, quadratic, pulse, exponential, zeros(200, 0.0);
  for (int n = 0; n < 200; ++n) {
    linear.push_back(1.0 + 0.01 * n);
    quadratic.push_back(1.0 + n * n);
    pulse.push_back(std::exp(-0.01 * (n - 150.0) * (n - 150.0)));
    exponential.push_back(std::exp(0.1 * n));
  }
  CHECK_FALSE(exponential_growth_flag(quadratic));
  CHECK_FALSE(exponential_growth_flag(pulse));
  CHECK_FALSE(exponential_growth_flag(linear));
  CHECK(exponential_growth_flag(exponential));
  CHECK_FALSE(exponential_growth_flag(zeros));
}

TEST_CASE("stability report of a compactly supported source") {
  const Fixture f(1, 96, 24.0);
  SolveOptions so;
  so.observation_points = {Point(2.0, 0.0, 0.0)};
  auto mesh = f.mesh;
  so.norms = std::make_shared<const NormPair>(build_norm_pair(mesh, so.quadrature));
  const auto spec = make_formulation(FormulationLabel::IndirectDirichlet, f.mesh, f.options());
  const StabilityReport st = stability_probe(spec, f.scheme, so, f.source.psi.end() + 1.5);
  CHECK(st.density_norm.size() == 96);
  CHECK_FALSE(st.exponential_growth);
  CHECK(st.density_envelope > 0.0);
  CHECK(st.tail_density_max < 0.5 * *std::max_element(st.density_norm.begin(), st.density_norm.end()));
}

TEST_CASE("waveforms") {
  const CQScheme scheme{CQMethod::BDF2, 41, 0.05};
  const CausalSignal ramp = waveform("ramp", {{"amplitude", 2.0}, {"duration", 1.0}}, scheme);
  CHECK(ramp.samples(0, 0) == 0.0);
  CHECK(ramp.samples(0, 10) == doctest::Approx(2.0 * 0.25));
  CHECK(ramp.samples(0, 40) == doctest::Approx(2.0));
  // Compatible start: value and slope vanish at t = 0.
  CHECK(std::abs(ramp.samples(0, 1) - ramp.samples(0, 0)) / scheme.dt < 0.2);
  CHECK_THROWS_AS(waveform("sawtooth", {}, scheme), ConfigError);
  CHECK_THROWS_AS(waveform("bump", {{"width", -1.0}}, scheme), ConfigError);

  const Bump b{1.5, 2.0, 0.3};
  const double h = 1e-5;
  for (double t : {0.5, 1.0, 1.7}) {
    for (int k = 0; k < 3; ++k) {
      const double fd = (b(t + h, k) - b(t - h, k)) / (2.0 * h);
      CHECK(b(t, k + 1) == doctest::Approx(fd).epsilon(1e-6));
    }
  }
  CHECK(b(0.2) == 0.0);
  CHECK(b(2.4) == 0.0);

  PointSource src;
  src.x0 = Point(0.1, 0.0, 0.0);
  src.psi = b;
  const Point x(1.0, 0.5, -0.2), n = Point(0.3, 1.0, 0.2).normalized();
  for (double t : {1.2, 1.8}) {
    const double fd = (src.value(x + h * n, t) - src.value(x - h * n, t)) / (2.0 * h);
    CHECK(src.normal_derivative(x, n, t) == doctest::Approx(fd).epsilon(1e-6));
    const double fdt = (src.normal_derivative(x, n, t + h) - src.normal_derivative(x, n, t - h)) / (2.0 * h);
    CHECK(src.normal_derivative_dt(x, n, t, 1) == doctest::Approx(fdt).epsilon(1e-6));
  }
}
