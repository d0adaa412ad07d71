#include "tdbem/waveform.hpp"

#include "tdbem/error.hpp"

#include <cmath>
#include <numbers>

namespace tdbem {

namespace {

constexpr double kInv4Pi = 0.25 / std::numbers::pi;

double number(const nlohmann::json& params, const char* key, double fallback) {
  if (!params.contains(key)) return fallback;
  if (!params[key].is_number()) throw ConfigError(std::string("waveform parameter '") + key + "' must be a number");
  return params[key].get<double>();
}

}  // namespace

double Bump::operator()(double t, int k) const {
  if (t <= delay || t >= delay + width) return 0.0;
  const double c = std::numbers::pi / width;
  const double th = c * (t - delay);
  const double s = std::sin(th), co = std::cos(th);
  switch (k) {
    case 0: return amplitude * s * s * s * s;
    case 1: return amplitude * 4.0 * c * s * s * s * co;
    case 2: return amplitude * c * c * (12.0 * s * s * co * co - 4.0 * s * s * s * s);
    case 3: return amplitude * c * c * c * (24.0 * s * co * co * co - 40.0 * s * s * s * co);
    default: throw ConfigError("Bump: derivative order must be <= 3");
  }
}

double PointSource::value(const Point& x, double t) const {
  const double r = (x - x0).norm();
  return psi(t - r) * kInv4Pi / r;
}

double PointSource::normal_derivative(const Point& x, const Point& n, double t) const {
  return normal_derivative_dt(x, n, t, 0);
}

double PointSource::normal_derivative_dt(const Point& x, const Point& n, double t, int k) const {
  const Point d = x - x0;
  const double r = d.norm();
  // d/dr [psi(t - r) / (4 pi r)] = -psi'(t - r)/(4 pi r) - psi(t - r)/(4 pi r^2)
  const double dr = -psi(t - r, k + 1) * kInv4Pi / r - psi(t - r, k) * kInv4Pi / (r * r);
  return dr * d.dot(n) / r;
}

CausalSignal point_source_dirichlet_trace(const Mesh& mesh, const PointSource& src, const CQScheme& scheme) {
  CausalSignal s = CausalSignal::zeros(mesh.num_vertices(), scheme.N, scheme.dt);
  for (int n = 0; n < scheme.N; ++n) {
    for (int v = 0; v < mesh.num_vertices(); ++v) s.samples(v, n) = src.value(mesh.vertices[v], n * scheme.dt);
  }
  return s;
}

CausalSignal point_source_neumann_trace(const Mesh& mesh, const PointSource& src, const CQScheme& scheme) {
  CausalSignal s = CausalSignal::zeros(mesh.num_triangles(), scheme.N, scheme.dt);
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const Point c = triangle_centroid(mesh, t);
    const Point nrm = triangle_normal(mesh, t);
    for (int n = 0; n < scheme.N; ++n) s.samples(t, n) = src.normal_derivative(c, nrm, n * scheme.dt);
  }
  return s;
}

CausalSignal point_source_field(const std::vector<Point>& points, const PointSource& src, const CQScheme& scheme) {
  CausalSignal s = CausalSignal::zeros(static_cast<int>(points.size()), scheme.N, scheme.dt);
  for (int n = 0; n < scheme.N; ++n) {
    for (size_t p = 0; p < points.size(); ++p) s.samples(static_cast<int>(p), n) = src.value(points[p], n * scheme.dt);
  }
  return s;
}

CausalSignal waveform(const std::string& name, const nlohmann::json& params, const CQScheme& scheme,
                      const std::vector<Point>& points) {
  scheme.validate();
  if (!params.is_object() && !params.is_null()) throw ConfigError("waveform parameters must be an object");
  const nlohmann::json p = params.is_null() ? nlohmann::json::object() : params;
  if (name == "bump") {
    Bump b{number(p, "amplitude", 1.0), number(p, "width", 1.0), number(p, "delay", 0.0)};
    if (!(b.width > 0.0) || b.delay < 0.0) throw ConfigError("bump: width must be positive and delay >= 0");
    CausalSignal s = CausalSignal::zeros(1, scheme.N, scheme.dt);
    for (int n = 0; n < scheme.N; ++n) s.samples(0, n) = b(n * scheme.dt);
    return s;
  }
  if (name == "ramp") {
    const double a = number(p, "amplitude", 1.0);
    const double dur = number(p, "duration", scheme.N * scheme.dt);
    if (!(dur > 0.0)) throw ConfigError("ramp: duration must be positive");
    CausalSignal s = CausalSignal::zeros(1, scheme.N, scheme.dt);
    for (int n = 0; n < scheme.N; ++n) {
      const double t = std::min(n * scheme.dt, dur);
      s.samples(0, n) = a * t * t;
    }
    return s;
  }
  if (name == "point_source") {
    PointSource src;
    if (p.contains("source")) {
      const auto& x = p["source"];
      if (!x.is_array() || x.size() != 3) throw ConfigError("point_source: 'source' must be [x, y, z]");
      src.x0 = Point(x[0].get<double>(), x[1].get<double>(), x[2].get<double>());
    }
    src.psi = Bump{number(p, "amplitude", 1.0), number(p, "width", 1.0), number(p, "delay", 0.0)};
    if (!(src.psi.width > 0.0) || src.psi.delay < 0.0) {
      throw ConfigError("point_source: width must be positive and delay >= 0");
    }
    for (const Point& x : points) {
      if (!((x - src.x0).norm() > 0.0)) throw ConfigError("point_source: sample point coincides with the source");
    }
    return point_source_field(points, src, scheme);
  }
  throw ConfigError("unknown waveform '" + name + "'");
}

}  // namespace tdbem
