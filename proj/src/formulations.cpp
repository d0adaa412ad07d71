#include "tdbem/formulations.hpp"

#include "tdbem/error.hpp"

#include <Eigen/Cholesky>
#include <Eigen/LU>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>

namespace tdbem {

namespace {

const std::array<std::pair<FormulationLabel, const char*>, 10> kLabels{{
    {FormulationLabel::IndirectDirichlet, "indirect_dirichlet"},
    {FormulationLabel::DirectDirichlet, "direct_dirichlet"},
    {FormulationLabel::IndirectNeumann, "indirect_neumann"},
    {FormulationLabel::DirectNeumann, "direct_neumann"},
    {FormulationLabel::SymmetricDirichlet, "symmetric_dirichlet"},
    {FormulationLabel::SymmetricNeumann, "symmetric_neumann"},
    {FormulationLabel::Mixed, "mixed"},
    {FormulationLabel::ScreenDirichlet, "screen_dirichlet"},
    {FormulationLabel::ScreenNeumann, "screen_neumann"},
    {FormulationLabel::Custom, "custom"},
}};

const char* slot_name(int slot) {
  static const char* names[] = {"alpha1", "alpha2", "beta1", "beta2"};
  return names[slot];
}

bool is_screen(FormulationLabel label) {
  return label == FormulationLabel::ScreenDirichlet || label == FormulationLabel::ScreenNeumann;
}

double max_abs(const CausalSignal& s) { return s.samples.size() ? s.samples.cwiseAbs().maxCoeff() : 0.0; }

/// Slot carries data that must be read (not void, not identically zero).
bool active_slot(const TransmissionSpec& spec, DataSlot slot) {
  return !spec.void_slot[slot] && max_abs(spec.data(slot)) > 0.0;
}

std::vector<Eigen::VectorXcd> zero_spectrum(int count, int dim) {
  return std::vector<Eigen::VectorXcd>(count, Eigen::VectorXcd::Zero(dim));
}

std::vector<Eigen::VectorXcd> spectrum_of(const TransmissionSpec& spec, DataSlot slot, const CQScheme& scheme,
                                          int dim) {
  if (!active_slot(spec, slot)) return zero_spectrum(scheme.N / 2 + 1, dim);
  return scaled_transform(spec.data(slot), scheme);
}

double quadratic_norm(const Eigen::MatrixXd& G, const Eigen::VectorXd& x) {
  return std::sqrt(std::max(0.0, x.dot(G * x)));
}

struct PerFrequencyPotentials {
  Eigen::MatrixXcd S;  // points x triangles
  Eigen::MatrixXcd D;  // points x vertices
};

PerFrequencyPotentials potentials(const std::shared_ptr<const Mesh>& mesh, Complex s,
                                  const std::vector<Point>& points, const QuadratureOptions& options) {
  PerFrequencyPotentials p;
  p.S = potential_matrix(OperatorKind::SPot, s, full_space(mesh, TraceOrder::Minus), points, options).matrix;
  p.D = potential_matrix(OperatorKind::DPot, s, full_space(mesh, TraceOrder::Plus), points, options).matrix;
  return p;
}

}  // namespace

std::string to_string(FormulationLabel label) {
  for (const auto& [l, name] : kLabels) {
    if (l == label) return name;
  }
  return "custom";
}

FormulationLabel parse_formulation_label(const std::string& name) {
  for (const auto& [l, n] : kLabels) {
    if (name == n) return l;
  }
  throw ConfigError("unknown formulation '" + name + "'");
}

const CausalSignal& TransmissionSpec::data(DataSlot slot) const {
  switch (slot) {
    case kAlpha1: return alpha1;
    case kAlpha2: return alpha2;
    case kBeta1: return beta1;
    default: return beta2;
  }
}

double TransmissionSpec::dt() const {
  for (int k = 0; k < 4; ++k) {
    if (!void_slot[k]) return data(static_cast<DataSlot>(k)).dt;
  }
  return 0.0;
}

int TransmissionSpec::N() const {
  for (int k = 0; k < 4; ++k) {
    if (!void_slot[k]) return data(static_cast<DataSlot>(k)).N();
  }
  return 0;
}

void TransmissionSpec::validate() const {
  if (!mesh) throw ConfigError("TransmissionSpec: null mesh");
  if (Xh.mesh != mesh || Yh.mesh != mesh) throw ConfigError("TransmissionSpec: spaces live on a different mesh");
  if (Xh.order != TraceOrder::Minus) throw ConfigError("TransmissionSpec: X_h must be a P0 (Minus) space");
  if (Yh.order != TraceOrder::Plus) throw ConfigError("TransmissionSpec: Y_h must be a P1 (Plus) space");
  if (void_slot[kAlpha1] && !Xh.is_zero()) throw ConfigError("TransmissionSpec: alpha1 may be void only if X_h = {0}");
  if (void_slot[kBeta1] && !Yh.is_zero()) throw ConfigError("TransmissionSpec: beta1 may be void only if Y_h = {0}");
  if (void_slot[kAlpha2] && !Yh.is_full()) throw ConfigError("TransmissionSpec: alpha2 may be void only if Y_h is full");
  if (void_slot[kBeta2] && !Xh.is_full()) throw ConfigError("TransmissionSpec: beta2 may be void only if X_h is full");
  const int dims[4] = {mesh->num_vertices(), mesh->num_vertices(), mesh->num_triangles(), mesh->num_triangles()};
  const double step = dt();
  const int n = N();
  if (n <= 0 || !(step > 0.0)) throw ConfigError("TransmissionSpec: data signals need N > 0 and dt > 0");
  for (int k = 0; k < 4; ++k) {
    if (void_slot[k]) continue;
    const CausalSignal& s = data(static_cast<DataSlot>(k));
    if (s.dim() != dims[k]) {
      throw ConfigError(std::string("TransmissionSpec: ") + slot_name(k) + " has " + std::to_string(s.dim()) +
                        " rows, expected " + std::to_string(dims[k]));
    }
    if (s.N() != n || std::abs(s.dt - step) > 1e-12 * step) {
      throw ConfigError(std::string("TransmissionSpec: ") + slot_name(k) + " does not share (dt, N)");
    }
    const double scale = std::max(1.0, max_abs(s));
    if (s.samples.col(0).cwiseAbs().maxCoeff() > 1e-12 * scale) {
      throw ConfigError(std::string("TransmissionSpec: ") + slot_name(k) + " does not vanish at t = 0");
    }
  }
}

TransmissionSpec make_custom(const DiscreteTraceSpace& Xh, const DiscreteTraceSpace& Yh, const CausalSignal& alpha1,
                             const CausalSignal& alpha2, const CausalSignal& beta1, const CausalSignal& beta2,
                             std::array<bool, 4> void_slot) {
  TransmissionSpec spec;
  spec.label = FormulationLabel::Custom;
  spec.mesh = Xh.mesh;
  spec.Xh = Xh;
  spec.Yh = Yh;
  spec.alpha1 = alpha1;
  spec.alpha2 = alpha2;
  spec.beta1 = beta1;
  spec.beta2 = beta2;
  spec.void_slot = void_slot;
  spec.validate();
  return spec;
}

TransmissionSpec make_formulation(FormulationLabel label, std::shared_ptr<const Mesh> mesh,
                                  const FormulationOptions& options) {
  if (!mesh) throw ConfigError("make_formulation: null mesh");
  if (label == FormulationLabel::Custom) throw ConfigError("make_formulation: use make_custom for custom problems");
  if (is_screen(label) && mesh->closed) throw ConfigError(to_string(label) + " needs an open (screen) mesh");
  if (!is_screen(label) && !mesh->closed) throw ConfigError(to_string(label) + " needs a closed mesh");

  const bool needs_alpha = label == FormulationLabel::IndirectDirichlet || label == FormulationLabel::DirectDirichlet ||
                           label == FormulationLabel::SymmetricDirichlet || label == FormulationLabel::Mixed ||
                           label == FormulationLabel::ScreenDirichlet;
  const bool needs_beta = label == FormulationLabel::IndirectNeumann || label == FormulationLabel::DirectNeumann ||
                          label == FormulationLabel::SymmetricNeumann || label == FormulationLabel::Mixed ||
                          label == FormulationLabel::ScreenNeumann;
  if (needs_alpha && options.alpha.dim() != mesh->num_vertices()) {
    throw ConfigError(to_string(label) + ": Dirichlet data must have one row per vertex");
  }
  if (needs_beta && options.beta.dim() != mesh->num_triangles()) {
    throw ConfigError(to_string(label) + ": Neumann data must have one row per triangle");
  }
  const CausalSignal& ref = needs_alpha ? options.alpha : options.beta;
  const int N = ref.N();
  const double dt = ref.dt;
  const CausalSignal z_v = CausalSignal::zeros(mesh->num_vertices(), N, dt);
  const CausalSignal z_t = CausalSignal::zeros(mesh->num_triangles(), N, dt);
  auto negated = [](const CausalSignal& s) {
    CausalSignal out = s;
    out.samples = -s.samples;
    return out;
  };

  TransmissionSpec spec;
  spec.label = label;
  spec.mesh = mesh;
  const DiscreteTraceSpace p0 = full_space(mesh, TraceOrder::Minus);
  const DiscreteTraceSpace p1 = full_space(mesh, TraceOrder::Plus);
  Restriction zero;
  zero.zero = true;
  const DiscreteTraceSpace x0 = build_space(mesh, TraceOrder::Minus, zero);
  const DiscreteTraceSpace y0 = build_space(mesh, TraceOrder::Plus, zero);

  switch (label) {
    case FormulationLabel::IndirectDirichlet:
    case FormulationLabel::ScreenDirichlet:
      spec.Xh = p0;
      spec.Yh = y0;
      spec.alpha1 = options.alpha;
      spec.alpha2 = z_v;
      spec.void_slot[kBeta1] = true;
      spec.beta2 = z_t;
      break;
    case FormulationLabel::DirectDirichlet:
      spec.Xh = p0;
      spec.Yh = y0;
      if (options.side == "exterior") {
        spec.alpha1 = options.alpha;
        spec.alpha2 = negated(options.alpha);
      } else if (options.side == "interior") {
        spec.alpha1 = z_v;
        spec.alpha2 = options.alpha;
      } else {
        throw ConfigError("direct_dirichlet: side must be 'exterior' or 'interior'");
      }
      spec.void_slot[kBeta1] = true;
      spec.beta2 = z_t;
      break;
    case FormulationLabel::IndirectNeumann:
      spec.Xh = x0;
      spec.Yh = p1;
      spec.void_slot[kAlpha1] = true;
      spec.alpha2 = z_v;
      spec.beta1 = options.beta;
      spec.beta2 = z_t;
      break;
    case FormulationLabel::ScreenNeumann: {
      Restriction screen;
      screen.screen = true;
      screen.require_nonempty = true;
      spec.Xh = x0;
      spec.Yh = build_space(mesh, TraceOrder::Plus, screen);
      spec.void_slot[kAlpha1] = true;
      spec.alpha2 = z_v;
      spec.beta1 = options.beta;
      spec.beta2 = z_t;
      break;
    }
    case FormulationLabel::DirectNeumann:
      spec.Xh = x0;
      spec.Yh = p1;
      spec.void_slot[kAlpha1] = true;
      spec.alpha2 = z_v;
      spec.beta1 = z_t;
      spec.beta2 = negated(options.beta);
      break;
    case FormulationLabel::SymmetricDirichlet:
      spec.Xh = p0;
      spec.Yh = p1;
      spec.alpha1 = options.alpha;
      spec.alpha2 = z_v;
      spec.beta1 = z_t;
      spec.beta2 = z_t;
      break;
    case FormulationLabel::SymmetricNeumann:
      spec.Xh = p0;
      spec.Yh = p1;
      spec.alpha1 = z_v;
      spec.alpha2 = z_v;
      spec.beta1 = options.beta;
      spec.beta2 = z_t;
      break;
    case FormulationLabel::Mixed: {
      std::set<int> all_tags(mesh->region_tag.begin(), mesh->region_tag.end());
      std::set<int> dirichlet = options.dirichlet_tags;
      if (dirichlet.empty()) {
        for (int t : all_tags) {
          if (!options.neumann_tags.count(t)) dirichlet.insert(t);
        }
      }
      for (int t : dirichlet) {
        if (options.neumann_tags.count(t)) {
          throw ConfigError("mixed: tag " + std::to_string(t) + " is both Dirichlet and Neumann");
        }
      }
      if (dirichlet.empty() && options.neumann_tags.empty()) throw ConfigError("mixed: no boundary parts given");
      Restriction rd;
      rd.tags = dirichlet;
      rd.zero = dirichlet.empty();
      Restriction rn;
      rn.tags = options.neumann_tags;
      rn.zero = options.neumann_tags.empty();
      if (rd.zero) rd.tags.reset();
      if (rn.zero) rn.tags.reset();
      spec.Xh = build_space(mesh, TraceOrder::Minus, rd);
      spec.Yh = build_space(mesh, TraceOrder::Plus, rn);
      spec.alpha1 = options.alpha;
      spec.alpha2 = negated(options.alpha);
      spec.beta1 = z_t;
      spec.beta2 = negated(options.beta);
      break;
    }
    case FormulationLabel::Custom: break;
  }
  for (int k = 0; k < 4; ++k) {
    if (spec.void_slot[k]) {
      CausalSignal& s = k == kAlpha1 ? spec.alpha1 : k == kAlpha2 ? spec.alpha2 : k == kBeta1 ? spec.beta1 : spec.beta2;
      s = CausalSignal{};
    }
  }
  spec.validate();
  return spec;
}

Eigen::MatrixXcd transmission_matrix(const AmbientOperators<Complex>& ops, const Eigen::MatrixXd& duality,
                                     const DiscreteTraceSpace& Xh, const DiscreteTraceSpace& Yh) {
  const int nx = Xh.dim(), ny = Yh.dim();
  Eigen::MatrixXcd A(nx + ny, nx + ny);
  if (nx > 0) A.topLeftCorner(nx, nx) = restrict_matrix(ops.V00, Xh, Xh);
  if (nx > 0 && ny > 0) {
    const Eigen::MatrixXcd half_k = restrict_matrix(0.5 * duality.cast<Complex>() + ops.K01, Xh, Yh);
    A.topRightCorner(nx, ny) = -half_k;
    A.bottomLeftCorner(ny, nx) = half_k.transpose();
  }
  if (ny > 0) A.bottomRightCorner(ny, ny) = restrict_matrix(ops.W11, Yh, Yh);
  return A;
}

std::vector<SolveResult> solve_formulations(const std::vector<TransmissionSpec>& specs, const CQScheme& scheme,
                                            const SolveOptions& options) {
  scheme.validate();
  if (specs.empty()) return {};
  const std::shared_ptr<const Mesh> mesh = specs.front().mesh;
  for (const auto& spec : specs) {
    spec.validate();
    if (spec.mesh != mesh) throw ConfigError("solve_formulations: all problems must share one mesh");
    if (spec.N() != scheme.N || std::abs(spec.dt() - scheme.dt) > 1e-12 * scheme.dt) {
      throw ConfigError("solve_formulations: data (dt, N) differ from the scheme");
    }
  }
  const int nv = mesh->num_vertices(), nt = mesh->num_triangles();
  const int L = scheme.N / 2 + 1;
  const Eigen::MatrixXd duality = ambient_duality_matrix(*mesh);
  const Eigen::MatrixXcd duality_c = duality.cast<Complex>();

  unsigned flags = 0;
  for (const auto& spec : specs) {
    const bool x = !spec.Xh.is_zero(), y = !spec.Yh.is_zero();
    if (x) flags |= kAmbientV00;
    if (y) flags |= kAmbientW11;
    if ((x && (y || active_slot(spec, kAlpha2))) || (y && active_slot(spec, kBeta2))) flags |= kAmbientK01;
  }

  // Groups of problems sharing one system matrix.
  std::map<std::pair<std::uint64_t, std::uint64_t>, std::vector<int>> groups;
  for (int k = 0; k < static_cast<int>(specs.size()); ++k) {
    groups[{specs[k].Xh.id, specs[k].Yh.id}].push_back(k);
  }

  struct Spectra {
    std::vector<Eigen::VectorXcd> a1, a2, b1, b2;
    std::vector<Eigen::VectorXcd> coeff, residual, rhs, field;
  };
  std::vector<Spectra> sp(specs.size());
  for (size_t k = 0; k < specs.size(); ++k) {
    const auto& spec = specs[k];
    sp[k].a1 = spectrum_of(spec, kAlpha1, scheme, nv);
    sp[k].a2 = spectrum_of(spec, kAlpha2, scheme, nv);
    sp[k].b1 = spectrum_of(spec, kBeta1, scheme, nt);
    sp[k].b2 = spectrum_of(spec, kBeta2, scheme, nt);
    const int n = spec.Xh.dim() + spec.Yh.dim();
    sp[k].coeff = zero_spectrum(L, n);
    sp[k].residual = zero_spectrum(L, n);
    sp[k].rhs = zero_spectrum(L, n);
    sp[k].field = zero_spectrum(L, static_cast<int>(options.observation_points.size()));
  }

  const std::vector<Complex> freqs = contour_frequencies(scheme, scheme.N);
  for (int l = 0; l < L; ++l) {
    const Complex s = freqs[l];
    AmbientOperators<Complex> ops;
    if (flags) ops = assemble_ambient<Complex>(*mesh, s, flags, options.quadrature);
    PerFrequencyPotentials pot;
    if (!options.observation_points.empty()) pot = potentials(mesh, s, options.observation_points, options.quadrature);

    for (const auto& [key, members] : groups) {
      const DiscreteTraceSpace& X = specs[members.front()].Xh;
      const DiscreteTraceSpace& Y = specs[members.front()].Yh;
      const int nx = X.dim(), ny = Y.dim();
      Eigen::PartialPivLU<Eigen::MatrixXcd> lu;
      Eigen::MatrixXcd A;
      if (nx + ny > 0) {
        A = transmission_matrix(ops, duality, X, Y);
        lu.compute(A);
      }
      for (int k : members) {
        const auto& spec = specs[k];
        Spectra& S = sp[k];
        Eigen::VectorXcd rhs(nx + ny);
        if (nx > 0) {
          Eigen::VectorXcd bx = Eigen::VectorXcd::Zero(nt);
          if (active_slot(spec, kAlpha1)) bx += duality_c * S.a1[l];
          if (active_slot(spec, kBeta2)) bx -= ops.V00 * S.b2[l];
          if (active_slot(spec, kAlpha2)) bx += 0.5 * (duality_c * S.a2[l]) + ops.K01 * S.a2[l];
          rhs.head(nx) = X.restrict_vector(bx);
        }
        if (ny > 0) {
          Eigen::VectorXcd by = Eigen::VectorXcd::Zero(nv);
          if (active_slot(spec, kBeta1)) by += duality_c.transpose() * S.b1[l];
          if (active_slot(spec, kBeta2)) by -= 0.5 * (duality_c.transpose() * S.b2[l]) + ops.K01.transpose() * S.b2[l];
          if (active_slot(spec, kAlpha2)) by -= ops.W11 * S.a2[l];
          rhs.tail(ny) = Y.restrict_vector(by);
        }
        Eigen::VectorXcd c = Eigen::VectorXcd::Zero(nx + ny);
        if (nx + ny > 0) {
          c = lu.solve(rhs);
          if (!c.allFinite()) throw NumericalError("solve_formulations: singular system at s = " +
                                                   std::to_string(s.real()) + "+" + std::to_string(s.imag()) + "i");
          S.residual[l] = A * c - rhs;
        }
        S.coeff[l] = c;
        S.rhs[l] = rhs;
        if (!options.observation_points.empty()) {
          Eigen::VectorXcd lam = S.b2[l] + X.embed(c.head(nx));
          Eigen::VectorXcd ph = S.a2[l] + Y.embed(c.tail(ny));
          S.field[l] = pot.S * lam - pot.D * ph;
        }
      }
    }
  }

  std::vector<SolveResult> results(specs.size());
  for (size_t k = 0; k < specs.size(); ++k) {
    const auto& spec = specs[k];
    Spectra& S = sp[k];
    SolveResult& R = results[k];
    const int nx = spec.Xh.dim(), ny = spec.Yh.dim();
    const CausalSignal coeff = inverse_scaled_transform(S.coeff, scheme);
    R.lambda_h = CausalSignal::zeros(nx, scheme.N, scheme.dt);
    R.phi_h = CausalSignal::zeros(ny, scheme.N, scheme.dt);
    R.lambda_h.samples = coeff.samples.topRows(nx);
    R.phi_h.samples = coeff.samples.bottomRows(ny);
    R.lambda = CausalSignal::zeros(nt, scheme.N, scheme.dt);
    R.phi = CausalSignal::zeros(nv, scheme.N, scheme.dt);
    if (active_slot(spec, kBeta2)) R.lambda.samples = spec.beta2.samples;
    if (active_slot(spec, kAlpha2)) R.phi.samples = spec.alpha2.samples;
    for (int i = 0; i < nx; ++i) R.lambda.samples.row(spec.Xh.active[i]) += R.lambda_h.samples.row(i);
    for (int i = 0; i < ny; ++i) R.phi.samples.row(spec.Yh.active[i]) += R.phi_h.samples.row(i);

    R.field = options.observation_points.empty()
                  ? CausalSignal::zeros(0, scheme.N, scheme.dt)
                  : inverse_scaled_transform(S.field, scheme);
    R.field.dt = scheme.dt;

    R.polar_residual.assign(scheme.N, 0.0);
    if (nx + ny > 0) {
      const CausalSignal res = inverse_scaled_transform(S.residual, scheme);
      const CausalSignal rhs = inverse_scaled_transform(S.rhs, scheme);
      double scale = 0.0;
      for (int n = 0; n < scheme.N; ++n) scale = std::max(scale, rhs.samples.col(n).norm());
      for (int n = 0; n < scheme.N; ++n) {
        const double r = res.samples.col(n).norm();
        R.polar_residual[n] = scale > 0.0 ? r / scale : r;
      }
    }
    R.max_polar_residual = *std::max_element(R.polar_residual.begin(), R.polar_residual.end());

    if (options.norms) {
      if (options.norms->mesh != mesh) throw ConfigError("solve_formulations: norm pair lives on a different mesh");
      R.lambda_norm.resize(scheme.N);
      R.phi_norm.resize(scheme.N);
      for (int n = 0; n < scheme.N; ++n) {
        R.lambda_norm[n] = quadratic_norm(options.norms->V1, R.lambda.samples.col(n));
        R.phi_norm[n] = quadratic_norm(options.norms->W1, R.phi.samples.col(n));
      }
    }
  }
  return results;
}

SolveResult solve_formulation(const TransmissionSpec& spec, const CQScheme& scheme, const SolveOptions& options) {
  return solve_formulations({spec}, scheme, options).front();
}

CausalSignal reconstruct_field(const TransmissionSpec& spec, const CausalSignal& lambda, const CausalSignal& phi,
                               const std::vector<Point>& points, const CQScheme& scheme,
                               const QuadratureOptions& options) {
  scheme.validate();
  if (!spec.mesh) throw ConfigError("reconstruct_field: null mesh");
  if (lambda.dim() != spec.mesh->num_triangles() || phi.dim() != spec.mesh->num_vertices()) {
    throw ConfigError("reconstruct_field: density shapes do not match the mesh");
  }
  if (lambda.N() != scheme.N || phi.N() != scheme.N) throw ConfigError("reconstruct_field: densities need N steps");
  const int L = scheme.N / 2 + 1;
  const int np = static_cast<int>(points.size());
  if (np == 0) return CausalSignal::zeros(0, scheme.N, scheme.dt);
  const auto lam = scaled_transform(lambda, scheme);
  const auto ph = scaled_transform(phi, scheme);
  const bool has_lambda = lambda.samples.cwiseAbs().maxCoeff() > 0.0;
  const bool has_phi = phi.samples.cwiseAbs().maxCoeff() > 0.0;
  const std::vector<Complex> freqs = contour_frequencies(scheme, scheme.N);
  std::vector<Eigen::VectorXcd> out = zero_spectrum(L, np);
  for (int l = 0; l < L; ++l) {
    if (has_lambda) {
      out[l] += potential_matrix(OperatorKind::SPot, freqs[l], full_space(spec.mesh, TraceOrder::Minus), points, options)
                    .matrix *
                lam[l];
    }
    if (has_phi) {
      out[l] -= potential_matrix(OperatorKind::DPot, freqs[l], full_space(spec.mesh, TraceOrder::Plus), points, options)
                    .matrix *
                ph[l];
    }
  }
  CausalSignal field = inverse_scaled_transform(out, scheme);
  field.dt = scheme.dt;
  return field;
}

CausalSignal exterior_dtn(std::shared_ptr<const Mesh> mesh, const CausalSignal& alpha, const CQScheme& scheme,
                          const QuadratureOptions& options) {
  FormulationOptions fo;
  fo.alpha = alpha;
  SolveOptions so;
  so.quadrature = options;
  CausalSignal out = solve_formulation(make_formulation(FormulationLabel::DirectDirichlet, mesh, fo), scheme, so).lambda;
  out.samples = -out.samples;
  return out;
}

CausalSignal interior_dtn(std::shared_ptr<const Mesh> mesh, const CausalSignal& alpha, const CQScheme& scheme,
                          const QuadratureOptions& options) {
  FormulationOptions fo;
  fo.alpha = alpha;
  fo.side = "interior";
  SolveOptions so;
  so.quadrature = options;
  return solve_formulation(make_formulation(FormulationLabel::DirectDirichlet, mesh, fo), scheme, so).lambda;
}

CausalSignal exterior_ntd(std::shared_ptr<const Mesh> mesh, const CausalSignal& beta, const CQScheme& scheme,
                          const QuadratureOptions& options) {
  FormulationOptions fo;
  fo.beta = beta;
  SolveOptions so;
  so.quadrature = options;
  CausalSignal out = solve_formulation(make_formulation(FormulationLabel::DirectNeumann, mesh, fo), scheme, so).phi;
  out.samples = -out.samples;
  return out;
}

double relative_l2(const CausalSignal& a, const CausalSignal& b) {
  if (a.dim() != b.dim() || a.N() != b.N()) throw ConfigError("relative_l2: shape mismatch");
  const double den = b.samples.norm();
  const double num = (a.samples - b.samples).norm();
  return den > 0.0 ? num / den : num;
}

// Error studies ------------------------------------------------------------------

namespace {

/// Prolongation from a mesh to refine_uniform(mesh) for P0 (triangles) or P1 (vertices).
Eigen::MatrixXd prolongation(const Mesh& coarse, const Mesh& fine, TraceOrder order) {
  if (order == TraceOrder::Minus) {
    Eigen::MatrixXd E = Eigen::MatrixXd::Zero(fine.num_triangles(), coarse.num_triangles());
    for (int t = 0; t < coarse.num_triangles(); ++t) E.block(4 * t, t, 4, 1).setOnes();
    return E;
  }
  Eigen::MatrixXd E = Eigen::MatrixXd::Zero(fine.num_vertices(), coarse.num_vertices());
  for (int v = 0; v < coarse.num_vertices(); ++v) E(v, v) = 1.0;
  for (int t = 0; t < coarse.num_triangles(); ++t) {
    const auto [a, b, c] = coarse.triangles[t];
    const int ab = fine.triangles[4 * t][1], ca = fine.triangles[4 * t][2], bc = fine.triangles[4 * t + 1][1];
    E(ab, a) = E(ab, b) = 0.5;
    E(bc, b) = E(bc, c) = 0.5;
    E(ca, c) = E(ca, a) = 0.5;
  }
  return E;
}

bool dirichlet_type(const TransmissionSpec& spec) { return !spec.Xh.is_zero(); }

}  // namespace

ErrorStudyRow error_study_row(const TransmissionSpec& spec, const SolveResult& result, const CQScheme& scheme,
                              const ReferenceDensity& reference, const CausalSignal& exact_field,
                              const QuadratureOptions& options) {
  const Mesh& coarse = *spec.mesh;
  const Mesh fine = refine_uniform(coarse);
  const bool minus = dirichlet_type(spec);
  const TraceOrder order = minus ? TraceOrder::Minus : TraceOrder::Plus;
  const DiscreteTraceSpace& space = minus ? spec.Xh : spec.Yh;
  const CausalSignal& density = minus ? result.lambda : result.phi;

  const auto ops = assemble_ambient<double>(fine, 1.0, minus ? kAmbientV00 : kAmbientW11, options);
  const Eigen::MatrixXd& G = minus ? ops.V00 : ops.W11;
  Eigen::LLT<Eigen::MatrixXd> llt(G);
  if (llt.info() != Eigen::Success) throw NumericalError("error_study_row: energy matrix not positive definite");
  const Eigen::MatrixXd Lt = llt.matrixU();
  const Eigen::MatrixXd E = prolongation(coarse, fine, order);
  Eigen::MatrixXd EX(E.rows(), space.dim());
  for (int k = 0; k < space.dim(); ++k) EX.col(k) = E.col(space.active[k]);
  const Eigen::MatrixXd GEX = G * EX;
  Eigen::LLT<Eigen::MatrixXd> gram(EX.transpose() * GEX);
  if (gram.info() != Eigen::Success) throw NumericalError("error_study_row: singular projection Gram matrix");

  const CausalSignal ref = reference(fine);
  if (ref.dim() != static_cast<int>(E.rows()) || ref.N() != scheme.N) {
    throw ConfigError("error_study_row: reference density has the wrong shape");
  }
  CausalSignal deficit = CausalSignal::zeros(ref.dim(), scheme.N, scheme.dt);
  ErrorStudyRow row;
  row.N = scheme.N;
  row.dt = scheme.dt;
  row.h = mesh_stats(coarse).h_max;
  const Eigen::MatrixXd err = Lt * (ref.samples - E * density.samples);
  for (int n = 0; n < scheme.N; ++n) row.density_error = std::max(row.density_error, err.col(n).norm());
  const Eigen::MatrixXd proj = EX * gram.solve(GEX.transpose() * ref.samples);
  deficit.samples = Lt * (ref.samples - proj);
  const double t_end = (scheme.N - 1) * scheme.dt;
  row.majorant = h2_seminorm(deficit, t_end, [](const Eigen::VectorXd& x) { return x.norm(); });
  row.ratio = row.majorant > 0.0 ? row.density_error / row.majorant : std::numeric_limits<double>::infinity();
  if (exact_field.dim() > 0) row.field_error = relative_l2(result.field, exact_field);
  return row;
}

ReferenceDensity point_source_reference(FormulationLabel label, const PointSource& source, const CQScheme& scheme) {
  if (label == FormulationLabel::DirectDirichlet) {
    return [source, scheme](const Mesh& fine) {
      CausalSignal s = point_source_neumann_trace(fine, source, scheme);
      s.samples = -s.samples;
      return s;
    };
  }
  if (label == FormulationLabel::DirectNeumann) {
    return [source, scheme](const Mesh& fine) {
      CausalSignal s = point_source_dirichlet_trace(fine, source, scheme);
      s.samples = -s.samples;
      return s;
    };
  }
  throw ConfigError("point_source_reference: no closed-form density for " + to_string(label) +
                    "; use a self reference");
}

FormulationOptions point_source_data(FormulationLabel label, const Mesh& mesh, const PointSource& source,
                                     const CQScheme& scheme) {
  (void)label;
  FormulationOptions fo;
  fo.alpha = point_source_dirichlet_trace(mesh, source, scheme);
  fo.beta = point_source_neumann_trace(mesh, source, scheme);
  return fo;
}

void summarize(ErrorStudyReport& report) {
  report.monotone = report.rows.size() >= 2;
  double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
  for (size_t k = 0; k < report.rows.size(); ++k) {
    if (k > 0 && !(report.rows[k].density_error < report.rows[k - 1].density_error)) report.monotone = false;
    lo = std::min(lo, report.rows[k].ratio);
    hi = std::max(hi, report.rows[k].ratio);
  }
  report.ratio_spread = report.rows.empty() ? 0.0 : hi / lo;
}

namespace {

/// Samples a density computed on a reference sphere mesh at the triangle
/// centroids (P0) or vertices (P1) of `fine`, using the reference triangle
/// with the nearest centroid; time steps are subsampled by `stride`.
CausalSignal transfer_reference(const Mesh& ref_mesh, const CausalSignal& ref, TraceOrder order, const Mesh& fine,
                                int stride, int N, double dt) {
  std::vector<Point> centroids(ref_mesh.num_triangles());
  for (int t = 0; t < ref_mesh.num_triangles(); ++t) centroids[t] = triangle_centroid(ref_mesh, t);
  auto nearest = [&](const Point& p) {
    int best = 0;
    double bd = std::numeric_limits<double>::infinity();
    for (int t = 0; t < ref_mesh.num_triangles(); ++t) {
      const double d = (centroids[t] - p).squaredNorm();
      if (d < bd) {
        bd = d;
        best = t;
      }
    }
    return best;
  };
  const int n_out = order == TraceOrder::Minus ? fine.num_triangles() : fine.num_vertices();
  CausalSignal out = CausalSignal::zeros(n_out, N, dt);
  for (int i = 0; i < n_out; ++i) {
    const Point p = order == TraceOrder::Minus ? triangle_centroid(fine, i) : fine.vertices[i];
    const int t = nearest(p);
    if (order == TraceOrder::Minus) {
      for (int n = 0; n < N; ++n) out.samples(i, n) = ref.samples(t, n * stride);
    } else {
      const auto& tri = ref_mesh.triangles[t];
      const Point a = ref_mesh.vertices[tri[0]], b = ref_mesh.vertices[tri[1]], c = ref_mesh.vertices[tri[2]];
      const Point nrm = (b - a).cross(c - a);
      const double area2 = nrm.squaredNorm();
      double w[3] = {nrm.dot((c - b).cross(p - b)) / area2, nrm.dot((a - c).cross(p - c)) / area2, 0.0};
      w[0] = std::clamp(w[0], 0.0, 1.0);
      w[1] = std::clamp(w[1], 0.0, 1.0 - w[0]);
      w[2] = 1.0 - w[0] - w[1];
      for (int n = 0; n < N; ++n) {
        out.samples(i, n) = w[0] * ref.samples(tri[0], n * stride) + w[1] * ref.samples(tri[1], n * stride) +
                            w[2] * ref.samples(tri[2], n * stride);
      }
    }
  }
  return out;
}

}  // namespace

ErrorStudyReport error_study(const ErrorStudyOptions& options) {
  if (options.ladder.size() < 3) throw ConfigError("error_study: the ladder needs at least 3 levels");
  if (!(options.T > 0.0)) throw ConfigError("error_study: T must be positive");

  std::shared_ptr<const Mesh> ref_mesh;
  SolveResult ref_result;
  int ref_N = 0;
  if (options.self_reference) {
    const LadderLevel last = options.ladder.back();
    ref_mesh = std::make_shared<const Mesh>(build_icosphere(last.level + 1, options.radius));
    ref_N = 2 * last.N;
    CQScheme rs{options.method, ref_N, options.T / ref_N};
    const auto spec = make_formulation(options.label, ref_mesh, point_source_data(options.label, *ref_mesh,
                                                                                   options.source, rs));
    SolveOptions so;
    so.quadrature = options.quadrature;
    ref_result = solve_formulation(spec, rs, so);
  }

  ErrorStudyReport report;
  for (const LadderLevel& lv : options.ladder) {
    auto mesh = std::make_shared<const Mesh>(build_icosphere(lv.level, options.radius));
    CQScheme scheme{options.method, lv.N, options.T / lv.N};
    const auto spec = make_formulation(options.label, mesh, point_source_data(options.label, *mesh, options.source,
                                                                              scheme));
    SolveOptions so;
    so.quadrature = options.quadrature;
    so.observation_points = options.observation_points;
    const SolveResult result = solve_formulation(spec, scheme, so);
    const CausalSignal exact = options.observation_points.empty()
                                   ? CausalSignal::zeros(0, scheme.N, scheme.dt)
                                   : point_source_field(options.observation_points, options.source, scheme);
    ReferenceDensity reference;
    if (options.self_reference) {
      if (ref_N % lv.N != 0) throw ConfigError("error_study: ladder N must divide the reference N");
      const int stride = ref_N / lv.N;
      const TraceOrder order = spec.Xh.is_zero() ? TraceOrder::Plus : TraceOrder::Minus;
      const CausalSignal& dens = order == TraceOrder::Minus ? ref_result.lambda : ref_result.phi;
      reference = [&, stride, order, scheme](const Mesh& fine) {
        return transfer_reference(*ref_mesh, dens, order, fine, stride, scheme.N, scheme.dt);
      };
    } else {
      reference = point_source_reference(options.label, options.source, scheme);
    }
    ErrorStudyRow row = error_study_row(spec, result, scheme, reference, exact, options.quadrature);
    row.level = lv.level;
    report.rows.push_back(row);
  }
  summarize(report);
  return report;
}

// Long-time stability -----------------------------------------------------------

bool exponential_growth_flag(const std::vector<double>& values) {
  const int n = static_cast<int>(values.size());
  if (n < 20) return false;
  const int w = n / 10;
  double overall = 0.0;
  for (double v : values) overall = std::max(overall, v);
  std::array<double, 4> tenth{};
  for (int j = 0; j < 4; ++j) {
    for (int i = n - (4 - j) * w; i < n - (3 - j) * w; ++i) tenth[j] = std::max(tenth[j], values[i]);
  }
  if (tenth[3] == 0.0 || tenth[3] <= 1e-8 * overall) return false;
  for (int j = 0; j < 3; ++j) {
    if (!(tenth[j + 1] > 1.5 * tenth[j])) return false;
  }
  return true;
}

StabilityReport stability_report(const SolveResult& result, double dt, double data_end) {
  StabilityReport rep;
  const int N = result.lambda.N();
  rep.density_norm.assign(N, 0.0);
  rep.field_norm.assign(N, 0.0);
  for (int n = 0; n < N; ++n) {
    const double l = result.lambda_norm.empty() ? result.lambda.samples.col(n).norm() : result.lambda_norm[n];
    const double p = result.phi_norm.empty() ? result.phi.samples.col(n).norm() : result.phi_norm[n];
    rep.density_norm[n] = std::hypot(l, p);
    if (result.field.dim() > 0) rep.field_norm[n] = result.field.samples.col(n).norm();
    const double t = n * dt;
    rep.density_envelope = std::max(rep.density_envelope, rep.density_norm[n] / (1.0 + t));
    rep.field_envelope = std::max(rep.field_envelope, rep.field_norm[n] / (1.0 + t));
    if (t > data_end) {
      rep.tail_density_max = std::max(rep.tail_density_max, rep.density_norm[n]);
      rep.tail_field_max = std::max(rep.tail_field_max, rep.field_norm[n]);
    }
  }
  rep.exponential_growth = exponential_growth_flag(rep.density_norm) || exponential_growth_flag(rep.field_norm);
  return rep;
}

StabilityReport stability_probe(const TransmissionSpec& spec, const CQScheme& scheme, const SolveOptions& options,
                                double data_end) {
  spec.validate();
  const int first_off = static_cast<int>(std::floor(data_end / scheme.dt)) + 1;
  for (int k = 0; k < 4; ++k) {
    if (spec.void_slot[k]) continue;
    const CausalSignal& s = spec.data(static_cast<DataSlot>(k));
    const double scale = max_abs(s);
    for (int n = std::max(first_off, 0); n < s.N(); ++n) {
      if (s.samples.col(n).cwiseAbs().maxCoeff() > 1e-12 * std::max(scale, 1e-300)) {
        throw ConfigError(std::string("stability_probe: ") + slot_name(k) + " is not zero after the data end");
      }
    }
  }
  SolveOptions so = options;
  if (!so.norms) so.norms = std::make_shared<const NormPair>(build_norm_pair(spec.mesh, so.quadrature));
  const SolveResult result = solve_formulation(spec, scheme, so);
  return stability_report(result, scheme.dt, data_end);
}

}  // namespace tdbem
