#include "tdbem/runner.hpp"

#include "tdbem/cq.hpp"
#include "tdbem/error.hpp"
#include "tdbem/evolution.hpp"
#include "tdbem/formulations.hpp"
#include "tdbem/laplace_ops.hpp"
#include "tdbem/mesh.hpp"
#include "tdbem/trace_space.hpp"
#include "tdbem/waveform.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <ostream>
#include <set>
#include <sstream>

namespace tdbem {

namespace {

const std::set<std::string> kKeys = {
    "scenario", "formulation", "mesh", "level", "radius", "screen_n", "screen_side", "mesh_file", "partition",
    "dirichlet_tags", "neumann_tags", "x_tags", "y_tags", "slot_weights", "direct_side", "method", "N", "dt", "T",
    "rho", "contour_points", "waveform", "amplitude", "width", "delay", "duration", "source", "observation_points",
    "quadrature", "seed", "output_dir", "stability", "data_slot_equivalence", "calderon", "calderon_s",
    "sphere_oracle", "cq_orders", "ladder", "self_reference", "operators", "omegas", "sigma", "n", "integrator",
    "tolerance", "data_end", "forcing", "lifting", "smooth_profiles", "trajectory_stride"};

int line_at_offset(const std::string& text, std::size_t offset) {
  offset = std::min(offset, text.size());
  return 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(offset), '\n'));
}

/// Typed accessors that report the key's line on failure.
class Reader {
 public:
  explicit Reader(const ScenarioConfig& c) : c_(c) {}

  bool has(const std::string& key) const { return c_.values.contains(key); }

  double number(const std::string& key, double fallback) const {
    if (!has(key)) return fallback;
    if (!c_.values[key].is_number()) c_.fail(key, "'" + key + "' must be a number");
    return c_.values[key].get<double>();
  }
  int integer(const std::string& key, int fallback) const {
    if (!has(key)) return fallback;
    if (!c_.values[key].is_number_integer()) c_.fail(key, "'" + key + "' must be an integer");
    return c_.values[key].get<int>();
  }
  bool flag(const std::string& key, bool fallback = false) const {
    if (!has(key)) return fallback;
    if (!c_.values[key].is_boolean()) c_.fail(key, "'" + key + "' must be true or false");
    return c_.values[key].get<bool>();
  }
  std::string text(const std::string& key, const std::string& fallback) const {
    if (!has(key)) return fallback;
    if (!c_.values[key].is_string()) c_.fail(key, "'" + key + "' must be a string");
    return c_.values[key].get<std::string>();
  }
  Point point(const nlohmann::json& j, const std::string& key) const {
    if (!j.is_array() || j.size() != 3 || !j[0].is_number() || !j[1].is_number() || !j[2].is_number()) {
      c_.fail(key, "'" + key + "' entries must be [x, y, z]");
    }
    return Point(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
  }
  std::vector<Point> points(const std::string& key) const {
    std::vector<Point> out;
    if (!has(key)) return out;
    if (!c_.values[key].is_array()) c_.fail(key, "'" + key + "' must be a list of [x, y, z]");
    for (const auto& p : c_.values[key]) out.push_back(point(p, key));
    return out;
  }
  std::vector<double> numbers(const std::string& key, std::vector<double> fallback) const {
    if (!has(key)) return fallback;
    std::vector<double> out;
    if (!c_.values[key].is_array()) c_.fail(key, "'" + key + "' must be a list of numbers");
    for (const auto& v : c_.values[key]) {
      if (!v.is_number()) c_.fail(key, "'" + key + "' must be a list of numbers");
      out.push_back(v.get<double>());
    }
    return out;
  }
  std::set<int> tags(const std::string& key) const {
    std::set<int> out;
    if (!has(key)) return out;
    if (!c_.values[key].is_array()) c_.fail(key, "'" + key + "' must be a list of integers");
    for (const auto& v : c_.values[key]) {
      if (!v.is_number_integer()) c_.fail(key, "'" + key + "' must be a list of integers");
      out.insert(v.get<int>());
    }
    return out;
  }
  const ScenarioConfig& config() const { return c_; }

 private:
  const ScenarioConfig& c_;
};

template <class F>
auto anchored(const Reader& r, const std::string& key, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const ConfigError& e) {
    r.config().fail(key, e.what());
  }
}

std::shared_ptr<const Mesh> build_mesh(const Reader& r) {
  const std::string kind = r.text("mesh", "icosphere");
  Mesh mesh;
  if (kind == "icosphere") {
    const int level = r.integer("level", 1);
    const double radius = r.number("radius", 1.0);
    mesh = anchored(r, "level", [&] { return build_icosphere(level, radius); });
  } else if (kind == "screen") {
    const int n = r.integer("screen_n", 4);
    const double side = r.number("screen_side", 1.0);
    mesh = anchored(r, "screen_n", [&] { return build_screen_square(n, side); });
  } else if (kind == "file") {
    const std::string path = r.text("mesh_file", "");
    mesh = anchored(r, "mesh_file", [&] { return read_mesh_file(path); });
  } else {
    r.config().fail("mesh", "unknown mesh '" + kind + "' (icosphere, screen, file)");
  }
  const std::string partition = r.text("partition", "none");
  if (partition == "hemisphere") {
    mesh = tag_partition(mesh, [](const Point& c) { return c.z() > 0.0 ? 1 : 0; });
  } else if (partition != "none") {
    r.config().fail("partition", "unknown partition '" + partition + "' (none, hemisphere)");
  }
  return std::make_shared<const Mesh>(std::move(mesh));
}

CQScheme build_scheme(const Reader& r) {
  CQScheme scheme;
  scheme.method = anchored(r, "method", [&] { return parse_cq_method(r.text("method", "bdf2")); });
  scheme.N = r.integer("N", 0);
  if (scheme.N <= 0) r.config().fail("N", "'N' (number of time steps) must be a positive integer");
  const bool has_dt = r.has("dt"), has_T = r.has("T");
  if (!has_dt && !has_T) r.config().fail("N", "give the step 'dt' or the horizon 'T'");
  scheme.dt = has_dt ? r.number("dt", 0.0) : r.number("T", 0.0) / scheme.N;
  if (!(scheme.dt > 0.0)) r.config().fail(has_dt ? "dt" : "T", "time step must be positive");
  if (has_dt && has_T) {
    const double T = r.number("T", 0.0);
    if (std::abs(scheme.N * scheme.dt - T) > 1e-9 * std::max(1.0, std::abs(T))) {
      r.config().fail("T", "N * dt must equal the declared horizon T");
    }
  }
  scheme.rho = r.number("rho", 0.0);
  scheme.contour_points = r.integer("contour_points", 0);
  anchored(r, "rho", [&] {
    scheme.validate();
    return 0;
  });
  return scheme;
}

QuadratureOptions build_quadrature(const Reader& r) {
  const std::string q = r.text("quadrature", "default");
  if (q == "default") return QuadratureOptions{};
  if (q == "accurate") return QuadratureOptions::accurate();
  r.config().fail("quadrature", "unknown quadrature preset '" + q + "' (default, accurate)");
}

PointSource build_source(const Reader& r) {
  PointSource src;
  if (r.has("source")) src.x0 = r.point(r.config().values["source"], "source");
  src.psi = Bump{r.number("amplitude", 1.0), r.number("width", 1.0), r.number("delay", 0.0)};
  if (!(src.psi.width > 0.0)) r.config().fail("width", "'width' must be positive");
  if (src.psi.delay < 0.0) r.config().fail("delay", "'delay' must be non-negative");
  return src;
}

struct Data {
  CausalSignal alpha, beta;
  bool point_source = false;
  PointSource source;
  double data_end = -1.0;  // negative: not compactly supported
};

Data build_data(const Reader& r, const Mesh& mesh, const CQScheme& scheme) {
  Data d;
  const std::string name = r.text("waveform", "point_source");
  if (name == "point_source") {
    d.point_source = true;
    d.source = build_source(r);
    for (const Point& v : mesh.vertices) {
      if (!((v - d.source.x0).norm() > 1e-9)) r.config().fail("source", "the point source lies on the surface");
    }
    d.alpha = point_source_dirichlet_trace(mesh, d.source, scheme);
    d.beta = point_source_neumann_trace(mesh, d.source, scheme);
    double far = 0.0;
    for (const Point& v : mesh.vertices) far = std::max(far, (v - d.source.x0).norm());
    d.data_end = d.source.psi.end() + far;
    return d;
  }
  nlohmann::json params = nlohmann::json::object();
  for (const char* key : {"amplitude", "width", "delay", "duration"}) {
    if (r.has(key)) params[key] = r.config().values[key];
  }
  const CausalSignal w = anchored(r, "waveform", [&] { return waveform(name, params, scheme); });
  d.alpha = CausalSignal::zeros(mesh.num_vertices(), scheme.N, scheme.dt);
  d.beta = CausalSignal::zeros(mesh.num_triangles(), scheme.N, scheme.dt);
  d.alpha.samples.rowwise() = w.samples.row(0);
  d.beta.samples.rowwise() = w.samples.row(0);
  if (name == "bump") d.data_end = r.number("delay", 0.0) + r.number("width", 1.0);
  return d;
}

TransmissionSpec build_spec(const Reader& r, std::shared_ptr<const Mesh> mesh, const Data& data) {
  const FormulationLabel label =
      anchored(r, "formulation", [&] { return parse_formulation_label(r.text("formulation", "indirect_dirichlet")); });
  if (label != FormulationLabel::Custom) {
    FormulationOptions fo;
    fo.alpha = data.alpha;
    fo.beta = data.beta;
    fo.side = r.text("direct_side", "exterior");
    fo.dirichlet_tags = r.tags("dirichlet_tags");
    fo.neumann_tags = r.tags("neumann_tags");
    return anchored(r, "formulation", [&] { return make_formulation(label, mesh, fo); });
  }
  auto space = [&](const char* key, TraceOrder order) {
    if (!r.has(key)) return full_space(mesh, order);
    Restriction rs;
    rs.tags = r.tags(key);
    if (rs.tags->empty()) {
      rs.tags.reset();
      rs.zero = true;
    }
    return anchored(r, key, [&] { return build_space(mesh, order, rs); });
  };
  const DiscreteTraceSpace X = space("x_tags", TraceOrder::Minus);
  const DiscreteTraceSpace Y = space("y_tags", TraceOrder::Plus);
  const std::vector<double> w = r.numbers("slot_weights", {1.0, 0.0, 0.0, 0.0});
  if (w.size() != 4) r.config().fail("slot_weights", "'slot_weights' needs four entries (alpha1, alpha2, beta1, beta2)");
  auto scaled = [](const CausalSignal& s, double f) {
    CausalSignal out = s;
    out.samples *= f;
    return out;
  };
  return anchored(r, "slot_weights", [&] {
    return make_custom(X, Y, scaled(data.alpha, w[0]), scaled(data.alpha, w[1]), scaled(data.beta, w[2]),
                       scaled(data.beta, w[3]));
  });
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create output directory '" + dir + "': " + ec.message());
}

void write_json(const std::string& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  out << j.dump(2) << "\n";
}

CausalSignal stack(const CausalSignal& a, const CausalSignal& b) {
  CausalSignal out = CausalSignal::zeros(a.dim() + b.dim(), a.N(), a.dt);
  out.samples.topRows(a.dim()) = a.samples;
  out.samples.bottomRows(b.dim()) = b.samples;
  return out;
}

double max_rel_diff(const CausalSignal& a, const CausalSignal& b) {
  const double scale = b.samples.size() ? b.samples.cwiseAbs().maxCoeff() : 0.0;
  const double diff = a.samples.size() ? (a.samples - b.samples).cwiseAbs().maxCoeff() : 0.0;
  return scale > 0.0 ? diff / scale : diff;
}

/// <V(s) 1, 1> on the sphere of radius R: 4 pi R^2 (1 - exp(-2 s R)) / (2 s).
double sphere_single_layer_moment(double R, double s) {
  return 4.0 * std::numbers::pi * R * R * (1.0 - std::exp(-2.0 * s * R)) / (2.0 * s);
}

void say(std::ostream* log, const std::string& msg) {
  if (log) *log << msg << std::endl;
}

nlohmann::json run_solve(const Reader& r, const std::string& out_dir, std::ostream* log) {
  auto mesh = build_mesh(r);
  const CQScheme scheme = build_scheme(r);
  const QuadratureOptions quad = build_quadrature(r);
  const Data data = build_data(r, *mesh, scheme);
  const TransmissionSpec spec = build_spec(r, mesh, data);
  SolveOptions so;
  so.quadrature = quad;
  so.observation_points = r.points("observation_points");
  for (const Point& p : so.observation_points) {
    if (!(distance_to_mesh(*mesh, p) > 0.5 * mesh_stats(*mesh).h_max)) {
      r.config().fail("observation_points", "observation point closer than h/2 to the surface");
    }
  }
  const bool stability = r.flag("stability");
  const bool slots = r.flag("data_slot_equivalence");
  if (stability || slots) so.norms = std::make_shared<const NormPair>(build_norm_pair(mesh, quad));

  std::vector<TransmissionSpec> batch{spec};
  if (slots) {
    TransmissionSpec modified = spec;
    if (!spec.void_slot[kAlpha2] && !spec.Yh.is_zero()) {
      for (int n = 0; n < scheme.N; ++n) {
        const Eigen::VectorXd c = project_best(spec.Yh, spec.alpha2.samples.col(n), *so.norms);
        modified.alpha2.samples.col(n) -= spec.Yh.embed(c);
      }
    }
    if (!spec.void_slot[kBeta2] && !spec.Xh.is_zero()) {
      for (int n = 0; n < scheme.N; ++n) {
        const Eigen::VectorXd c = project_best(spec.Xh, spec.beta2.samples.col(n), *so.norms);
        modified.beta2.samples.col(n) -= spec.Xh.embed(c);
      }
    }
    batch.push_back(modified);
  }
  say(log, "solving " + to_string(spec.label) + ": " + std::to_string(spec.Xh.dim() + spec.Yh.dim()) +
               " unknowns, " + std::to_string(scheme.N) + " steps");
  const std::vector<SolveResult> results = solve_formulations(batch, scheme, so);
  const SolveResult& res = results.front();

  nlohmann::json rep;
  rep["command"] = "solve";
  rep["formulation"] = to_string(spec.label);
  rep["method"] = to_string(scheme.method);
  rep["N"] = scheme.N;
  rep["dt"] = scheme.dt;
  rep["triangles"] = mesh->num_triangles();
  rep["vertices"] = mesh->num_vertices();
  rep["h_max"] = mesh_stats(*mesh).h_max;
  rep["unknowns_X"] = spec.Xh.dim();
  rep["unknowns_Y"] = spec.Yh.dim();
  rep["max_polar_residual"] = res.max_polar_residual;
  rep["lambda_max_abs"] = res.lambda.samples.size() ? res.lambda.samples.cwiseAbs().maxCoeff() : 0.0;
  rep["phi_max_abs"] = res.phi.samples.size() ? res.phi.samples.cwiseAbs().maxCoeff() : 0.0;
  rep["densities_layout"] = "lambda per triangle, then phi per vertex";

  ensure_dir(out_dir);
  write_signal_csv_file(out_dir + "/densities.csv", stack(res.lambda, res.phi));
  if (!so.observation_points.empty()) {
    write_signal_csv_file(out_dir + "/field.csv", res.field);
    rep["field_max_abs"] = res.field.samples.cwiseAbs().maxCoeff();
    if (data.point_source) {
      const CausalSignal exact = point_source_field(so.observation_points, data.source, scheme);
      rep["field_relative_error"] = relative_l2(res.field, exact);
    }
  }
  if (slots) {
    const SolveResult& alt = results[1];
    rep["slot_equivalence_difference"] = std::max(max_rel_diff(alt.lambda, res.lambda), max_rel_diff(alt.phi, res.phi));
  }
  if (stability) {
    double data_end = r.number("data_end", data.data_end);
    if (data_end < 0.0) r.config().fail("stability", "stability needs compactly supported data (bump or point_source)");
    const StabilityReport st = stability_report(res, scheme.dt, data_end);
    rep["stability_data_end"] = data_end;
    rep["stability_density_envelope"] = st.density_envelope;
    rep["stability_field_envelope"] = st.field_envelope;
    rep["stability_tail_density_max"] = st.tail_density_max;
    rep["stability_tail_field_max"] = st.tail_field_max;
    rep["stability_exponential_growth"] = st.exponential_growth;
  }
  if (r.flag("calderon")) {
    const double s = r.number("calderon_s", 2.0);
    const auto cr = anchored(r, "calderon", [&] {
      return calderon_residual(Complex(s, 0.0), full_space(mesh, TraceOrder::Minus), full_space(mesh, TraceOrder::Plus),
                               quad, static_cast<std::uint64_t>(r.integer("seed", 1)));
    });
    rep["calderon_residual_r1"] = cr.r1;
    rep["calderon_residual_r2"] = cr.r2;
  }
  if (r.flag("sphere_oracle")) {
    if (r.text("mesh", "icosphere") != "icosphere") r.config().fail("sphere_oracle", "sphere_oracle needs an icosphere");
    const auto ops = assemble_ambient<double>(*mesh, 1.0, kAmbientV00, QuadratureOptions::accurate());
    const Eigen::VectorXd one = Eigen::VectorXd::Ones(mesh->num_triangles());
    const double value = one.dot(ops.V00 * one);
    const double exact = sphere_single_layer_moment(r.number("radius", 1.0), 1.0);
    rep["sphere_oracle_value"] = value;
    rep["sphere_oracle_exact"] = exact;
    rep["sphere_oracle_relative_error"] = std::abs(value - exact) / exact;
  }
  if (r.flag("cq_orders")) {
    for (CQMethod m : {CQMethod::BDF1, CQMethod::BDF2, CQMethod::Trapezoidal}) {
      rep["cq_orders_" + to_string(m)] = cq_convergence_orders(m, 32, 4, 4.0);
    }
  }
  write_json(out_dir + "/report.json", rep);
  return rep;
}

nlohmann::json run_error_study(const Reader& r, const std::string& out_dir, std::ostream* log) {
  ErrorStudyOptions eo;
  eo.label = anchored(r, "formulation", [&] { return parse_formulation_label(r.text("formulation", "direct_dirichlet")); });
  if (!r.has("ladder") || !r.config().values["ladder"].is_array()) {
    r.config().fail("ladder", "'ladder' must be a list of [level, N] pairs");
  }
  for (const auto& e : r.config().values["ladder"]) {
    if (!e.is_array() || e.size() != 2 || !e[0].is_number_integer() || !e[1].is_number_integer()) {
      r.config().fail("ladder", "'ladder' entries must be [level, N]");
    }
    eo.ladder.push_back({e[0].get<int>(), e[1].get<int>()});
  }
  if (eo.ladder.size() < 3) r.config().fail("ladder", "the ladder needs at least 3 levels");
  eo.T = r.number("T", 7.0);
  eo.radius = r.number("radius", 1.0);
  eo.method = anchored(r, "method", [&] { return parse_cq_method(r.text("method", "bdf2")); });
  eo.source = build_source(r);
  eo.observation_points = r.points("observation_points");
  eo.quadrature = build_quadrature(r);
  eo.self_reference = r.flag("self_reference");
  say(log, "error study over " + std::to_string(eo.ladder.size()) + " levels");
  const ErrorStudyReport er = anchored(r, "ladder", [&] { return error_study(eo); });

  nlohmann::json rep;
  rep["command"] = "error-study";
  rep["formulation"] = to_string(eo.label);
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : er.rows) {
    rows.push_back({{"level", row.level},
                    {"N", row.N},
                    {"dt", row.dt},
                    {"h", row.h},
                    {"density_error", row.density_error},
                    {"majorant", row.majorant},
                    {"ratio", row.ratio},
                    {"field_error", row.field_error}});
  }
  rep["levels"] = rows;
  rep["error_monotone"] = er.monotone;
  rep["error_ratio_spread"] = er.ratio_spread;
  rep["error_ratio_bounded"] = er.ratio_spread <= 10.0;
  ensure_dir(out_dir);
  write_json(out_dir + "/report.json", rep);
  return rep;
}

nlohmann::json run_probe_bounds(const Reader& r, const std::string& out_dir, std::ostream* log) {
  auto mesh = build_mesh(r);
  const QuadratureOptions quad = build_quadrature(r);
  const double sigma = r.number("sigma", 1.0);
  const std::vector<double> omegas = r.numbers("omegas", {1.0, 2.0, 4.0, 8.0, 16.0});
  FrequencyGrid grid;
  for (double w : omegas) grid.s.emplace_back(sigma, w);
  anchored(r, "sigma", [&] {
    grid.validate();
    return 0;
  });
  std::vector<std::string> ops{"V", "W"};
  if (r.has("operators")) {
    ops.clear();
    for (const auto& o : r.config().values["operators"]) {
      if (!o.is_string()) r.config().fail("operators", "'operators' must be a list of names");
      ops.push_back(o.get<std::string>());
    }
  }
  const auto X = full_space(mesh, TraceOrder::Minus);
  const auto Y = full_space(mesh, TraceOrder::Plus);
  nlohmann::json rep;
  rep["command"] = "probe-bounds";
  rep["sigma"] = sigma;
  rep["omegas"] = omegas;
  ensure_dir(out_dir);
  std::ofstream csv(out_dir + "/bounds.csv");
  csv << "operator,re_s,im_s,norm\n";
  for (const std::string& name : ops) {
    OperatorKind kind;
    if (name == "V") kind = OperatorKind::V;
    else if (name == "K") kind = OperatorKind::K;
    else if (name == "Kt") kind = OperatorKind::Kt;
    else if (name == "W") kind = OperatorKind::W;
    else r.config().fail("operators", "unknown operator '" + name + "' (V, K, Kt, W)");
    say(log, "probing " + name);
    const auto rows = bound_probe(kind, grid, X, Y, quad, static_cast<std::uint64_t>(r.integer("seed", 1)));
    std::vector<double> norms;
    for (const auto& row : rows) {
      norms.push_back(row.norm);
      char buf[128];
      std::snprintf(buf, sizeof buf, "%s,%.17g,%.17g,%.17g\n", name.c_str(), row.s.real(), row.s.imag(), row.norm);
      csv << buf;
    }
    rep["norms_" + name] = norms;
    rep["growth_exponent_" + name] = fit_growth_exponent(rows);
  }
  write_json(out_dir + "/report.json", rep);
  return rep;
}

nlohmann::json run_check_hypotheses(const Reader& r, const std::string& out_dir, std::ostream* log) {
  const std::string scenario = r.text("scenario", "wave_system");
  if (scenario != "wave_system") r.config().fail("scenario", "check-hypotheses needs scenario 'wave_system'");
  const int n = r.integer("n", 16);
  const AbstractSystem system = anchored(r, "n", [&] { return builtin_wave_system(n); });
  const double T = r.number("T", 10.0);
  const double dt = r.number("dt", 1e-3);
  if (!(T > 0.0) || !(dt > 0.0)) r.config().fail("T", "'T' and 'dt' must be positive");
  const double data_end = r.number("data_end", 0.5 * T);
  if (!(data_end > 0.0) || data_end > T) r.config().fail("data_end", "'data_end' must lie in (0, T]");
  EvolveOptions eo;
  eo.integrator = anchored(r, "integrator", [&] { return parse_integrator(r.text("integrator", "rk4")); });
  eo.tolerance = r.number("tolerance", eo.tolerance);
  const std::uint64_t seed = static_cast<std::uint64_t>(r.integer("seed", 1));
  const bool forcing = r.flag("forcing", true), lifting = r.flag("lifting", true);
  const Eigen::MatrixXd profiles = wave_system_profiles(n);
  const EvolutionData data =
      random_smooth_data(system, seed, data_end, forcing, lifting, r.flag("smooth_profiles", true) ? &profiles : nullptr);

  say(log, "checking hypotheses for the wave system with n = " + std::to_string(n));
  const HypothesisReport hyp = check_hypotheses(system, static_cast<unsigned>(seed));
  nlohmann::json rep;
  rep["command"] = "check-hypotheses";
  rep["n"] = n;
  rep["C1"] = hyp.C1;
  rep["C2"] = hyp.C2;
  rep["dissipativity_residual"] = hyp.dissipativity_residual;
  rep["surjective_plus"] = hyp.surjective_plus;
  rep["surjective_minus"] = hyp.surjective_minus;
  rep["lifting_ok"] = hyp.lifting_ok;
  rep["C_lift"] = hyp.C_lift;
  rep["G_norm"] = hyp.G_norm;
  rep["failures"] = hyp.failures;
  if (!hyp.ok()) {
    ensure_dir(out_dir);
    write_json(out_dir + "/report.json", rep);
    throw NumericalError("hypotheses violated: " + hyp.failures.front());
  }
  say(log, "evolving to T = " + std::to_string(T));
  const Trajectory traj = evolve(system, data, T, dt, eo);
  const BoundMargins margins = verify_bounds(traj, data, system, hyp);
  rep["integrator"] = to_string(eo.integrator);
  rep["substeps"] = traj.substeps;
  rep["step_error_estimate"] = traj.step_error_estimate;
  rep["max_constraint_residual"] = *std::max_element(traj.constraint_residual.begin(), traj.constraint_residual.end());
  rep["min_margin_8a"] = margins.min_margin_a;
  rep["min_margin_8b"] = margins.min_margin_b;
  rep["min_margin_boundV"] = margins.min_margin_v;
  rep["bounds_hold"] = margins.min_margin() >= -1e-8;
  rep["isometry_drift_after_data"] = norm_drift(traj, system, data_end);
  const Trajectory free = evolve_free(system, profiles.rowwise().sum(), T, dt, eo);
  rep["isometry_drift"] = norm_drift(free, system, 0.0);
  double worst = 0.0;
  const std::array<std::pair<const std::vector<double>*, const std::vector<double>*>, 3> sides = {
      {{&margins.lhs_a, &margins.rhs_a}, {&margins.lhs_b, &margins.rhs_b}, {&margins.lhs_v, &margins.rhs_v}}};
  for (const auto& [lhs, rhs] : sides) {
    for (std::size_t k = 0; k < lhs->size(); ++k) {
      if ((*rhs)[k] > 0.0) worst = std::max(worst, (*lhs)[k] / (*rhs)[k]);
    }
  }
  rep["max_bound_ratio"] = worst;
  if (!lifting) rep["energy_identity_drift"] = energy_identity_drift(traj, data, system);
  ensure_dir(out_dir);
  write_trajectory_csv(out_dir + "/trajectory.csv", traj, system, &margins,
                       std::max(1, r.integer("trajectory_stride", std::max(1, traj.steps / 1000))));
  write_json(out_dir + "/report.json", rep);
  return rep;
}

}  // namespace

std::string to_string(Command command) {
  switch (command) {
    case Command::Solve: return "solve";
    case Command::CheckHypotheses: return "check-hypotheses";
    case Command::ErrorStudy: return "error-study";
    case Command::ProbeBounds: return "probe-bounds";
  }
  return "solve";
}

Command parse_command(const std::string& name) {
  for (Command c : {Command::Solve, Command::CheckHypotheses, Command::ErrorStudy, Command::ProbeBounds}) {
    if (to_string(c) == name) return c;
  }
  throw ConfigError("unknown command '" + name + "'");
}

int ScenarioConfig::line_of(const std::string& key) const {
  const std::string quoted = "\"" + key + "\"";
  const std::size_t pos = text.find(quoted);
  return pos == std::string::npos ? 0 : line_at_offset(text, pos);
}

void ScenarioConfig::fail(const std::string& key, const std::string& message) const {
  const int line = line_of(key);
  throw ConfigError(source + ":" + std::to_string(line > 0 ? line : 1) + ": " + message);
}

ScenarioConfig parse_config(const std::string& text, const std::string& source) {
  ScenarioConfig c;
  c.text = text;
  c.source = source;
  try {
    c.values = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(source + ":" + std::to_string(line_at_offset(text, e.byte > 0 ? e.byte - 1 : 0)) +
                      ": invalid JSON (" + e.what() + ")");
  }
  if (!c.values.is_object()) throw ConfigError(source + ":1: the configuration must be a JSON object");
  for (const auto& [key, value] : c.values.items()) {
    if (!kKeys.count(key)) c.fail(key, "unknown key '" + key + "'");
  }
  return c;
}

ScenarioConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path + ":0: cannot open configuration file");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path);
}

nlohmann::json execute(const ScenarioConfig& config, Command command, const std::string& out_dir, std::ostream* log) {
  const Reader r(config);
  std::string dir = out_dir.empty() ? r.text("output_dir", "") : out_dir;
  if (dir.empty()) dir = "out";
  switch (command) {
    case Command::Solve: return run_solve(r, dir, log);
    case Command::CheckHypotheses: return run_check_hypotheses(r, dir, log);
    case Command::ErrorStudy: return run_error_study(r, dir, log);
    case Command::ProbeBounds: return run_probe_bounds(r, dir, log);
  }
  return {};
}

int run_scenario(const ScenarioConfig& config, Command command, const RunOptions& options, std::ostream& log) {
  try {
    execute(config, command, options.out_dir, options.quiet ? nullptr : &log);
    return 0;
  } catch (const ConfigError& e) {
    log << "configuration error: " << e.what() << std::endl;
    return 2;
  } catch (const NumericalError& e) {
    log << "numerical failure: " << e.what() << std::endl;
    return 3;
  }
}

}  // namespace tdbem
