#pragma once

#include "tdbem/cq.hpp"
#include "tdbem/mesh.hpp"

#include "json.hpp"

#include <string>
#include <vector>

namespace tdbem {

/// psi(t) = amplitude * sin^4(pi (t - delay) / width) on [delay, delay + width], zero elsewhere.
struct Bump {
  double amplitude = 1.0;
  double width = 1.0;
  double delay = 0.0;

  /// k-th derivative, k = 0..3.
  double operator()(double t, int k = 0) const;
  double end() const { return delay + width; }
};

/// Causal point source u(x, t) = psi(t - |x - x0|) / (4 pi |x - x0|).
struct PointSource {
  Point x0 = Point::Zero();
  Bump psi;

  double value(const Point& x, double t) const;
  /// Normal derivative n . grad u at x.
  double normal_derivative(const Point& x, const Point& n, double t) const;
  /// Time derivative of order k (k <= 2) of the normal derivative.
  double normal_derivative_dt(const Point& x, const Point& n, double t, int k) const;
};

/// Dirichlet trace of the source at the mesh vertices (ambient P1 samples).
CausalSignal point_source_dirichlet_trace(const Mesh& mesh, const PointSource& src, const CQScheme& scheme);

/// Exterior normal derivative at triangle centroids (ambient P0 samples).
CausalSignal point_source_neumann_trace(const Mesh& mesh, const PointSource& src, const CQScheme& scheme);

/// Exact field samples at points (rows) over the scheme's time grid.
CausalSignal point_source_field(const std::vector<Point>& points, const PointSource& src, const CQScheme& scheme);

/// Named causal waveform sampled on the scheme grid. Names:
///   "bump"         {amplitude, width, delay}: scalar sin^4 window
///   "ramp"         {amplitude, duration}: amplitude * t^2 on [0, duration], then constant
///   "point_source" {source: [x, y, z], amplitude, width, delay}: trace at `points`
CausalSignal waveform(const std::string& name, const nlohmann::json& params, const CQScheme& scheme,
                      const std::vector<Point>& points = {});

}  // namespace tdbem
