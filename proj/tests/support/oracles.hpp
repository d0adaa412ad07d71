#pragma once

// Independent reference computations shared by the unit and acceptance tests.
// Nothing here calls the operator assembly of the library.

#include "tdbem/mesh.hpp"
#include "tdbem/quadrature.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <filesystem>
#include <numbers>
#include <string>
#include <vector>

namespace oracle {

/// <V(s) 1, 1> on the round sphere of radius R from the n = 0 term of the
/// modified spherical Bessel expansion
///   exp(-s|x-y|)/(4 pi |x-y|) = (2s/pi) sum (2n+1)/(4 pi) i_n(s r<) k_n(s r>) P_n.
inline double sphere_moment_bessel(double R, double s) {
  const double z = s * R;
  const double i0 = std::sqrt(std::numbers::pi / (2.0 * z)) * std::cyl_bessel_i(0.5, z);
  const double k0 = std::sqrt(std::numbers::pi / (2.0 * z)) * std::cyl_bessel_k(0.5, z);
  const double area = 4.0 * std::numbers::pi * R * R;
  return area * area * (2.0 * s / std::numbers::pi) / (4.0 * std::numbers::pi) * i0 * k0;
}

/// Closed form of int_T 1/|x - y| dy over a flat triangle (a, b, c).
inline double triangle_inverse_distance(const Eigen::Vector3d& a, const Eigen::Vector3d& b, const Eigen::Vector3d& c,
                                        const Eigen::Vector3d& x) {
  const Eigen::Vector3d n = (b - a).cross(c - a).normalized();
  const double h = (x - a).dot(n);
  const double ah = std::abs(h);
  const Eigen::Vector3d rho = x - h * n;
  const Eigen::Vector3d v[3] = {a, b, c};
  double sum = 0.0;
  for (int i = 0; i < 3; ++i) {
    const Eigen::Vector3d& pm = v[i];
    const Eigen::Vector3d& pp = v[(i + 1) % 3];
    const Eigen::Vector3d l = (pp - pm).normalized();
    const Eigen::Vector3d u = l.cross(n);
    const double P0 = (pp - rho).dot(u);
    if (std::abs(P0) < 1e-14) continue;
    const double lp = (pp - rho).dot(l), lm = (pm - rho).dot(l);
    const double Rp = (x - pp).norm(), Rm = (x - pm).norm();
    const double R02 = P0 * P0 + h * h;
    sum += P0 * std::log((Rp + lp) / (Rm + lm));
    sum -= ah * (std::atan(P0 * lp / (R02 + ah * Rp)) - std::atan(P0 * lm / (R02 + ah * Rm)));
  }
  return sum;
}

struct Sample {
  Eigen::Vector3d x;
  double w;
};

/// Collapsed Gauss points on the 4^levels congruent subtriangles of (a, b, c),
/// weights summing to the area.
inline std::vector<Sample> subdivided_rule(const Eigen::Vector3d& a, const Eigen::Vector3d& b,
                                           const Eigen::Vector3d& c, int levels, int q) {
  struct Tri {
    Eigen::Vector3d a, b, c;
  };
  std::vector<Tri> tris{{a, b, c}};
  for (int k = 0; k < levels; ++k) {
    std::vector<Tri> next;
    for (const Tri& t : tris) {
      const Eigen::Vector3d ab = 0.5 * (t.a + t.b), bc = 0.5 * (t.b + t.c), ca = 0.5 * (t.c + t.a);
      next.push_back({t.a, ab, ca});
      next.push_back({ab, t.b, bc});
      next.push_back({ca, bc, t.c});
      next.push_back({ab, bc, ca});
    }
    tris.swap(next);
  }
  const tdbem::LineRule g = tdbem::gauss_legendre(q);
  std::vector<Sample> out;
  for (const Tri& t : tris) {
    const double area = 0.5 * (t.b - t.a).cross(t.c - t.a).norm();
    for (int i = 0; i < q; ++i) {
      for (int j = 0; j < q; ++j) {
        const double u = g.nodes[i], v = g.nodes[j] * (1.0 - u);
        out.push_back({t.a + u * (t.b - t.a) + v * (t.c - t.a), 2.0 * area * g.weights[i] * g.weights[j] * (1.0 - u)});
      }
    }
  }
  return out;
}

/// int_T exp(-s|x - y|)/|x - y| dy over a flat triangle. In polar coordinates
/// about the projection of x the radial integral is exact,
///   int_0^R exp(-s sqrt(rho^2 + h^2)) / sqrt(rho^2 + h^2) rho drho = (exp(-s|h|) - exp(-s sqrt(R^2 + h^2)))/s,
/// leaving one angular integral per edge, taken along the edge in the
/// variable asinh(l / d) with q Gauss points.
inline double triangle_retarded_potential(const Eigen::Vector3d& a, const Eigen::Vector3d& b, const Eigen::Vector3d& c,
                                          const Eigen::Vector3d& x, double s, const tdbem::LineRule& g) {
  const Eigen::Vector3d n = (b - a).cross(c - a).normalized();
  const double h = (x - a).dot(n);
  const double ah = std::abs(h);
  const Eigen::Vector3d rho = x - h * n;
  const Eigen::Vector3d v[3] = {a, b, c};
  double sum = 0.0;
  for (int i = 0; i < 3; ++i) {
    const Eigen::Vector3d& pm = v[i];
    const Eigen::Vector3d& pp = v[(i + 1) % 3];
    const Eigen::Vector3d l = (pp - pm).normalized();
    const double P0 = (pp - rho).dot(l.cross(n));
    if (std::abs(P0) < 1e-14) continue;
    const double d = std::abs(P0);
    const double u0 = std::asinh((pm - rho).dot(l) / d), u1 = std::asinh((pp - rho).dot(l) / d);
    double part = 0.0;
    for (size_t k = 0; k < g.nodes.size(); ++k) {
      const double ch = std::cosh(u0 + (u1 - u0) * g.nodes[k]);
      part -= g.weights[k] * std::expm1(-s * (std::sqrt(d * d * ch * ch + h * h) - ah)) / ch;
    }
    sum += (P0 > 0.0 ? 1.0 : -1.0) * part * (u1 - u0);
  }
  return std::exp(-s * ah) * sum / s;
}

/// Brute-force <V(s) 1, 1> on a flat mesh: semi-analytic inner integral,
/// subdivided collapsed Gauss outer rule.
inline double flat_mesh_moment(const tdbem::Mesh& mesh, double s, int outer_levels = 2, int outer_q = 14,
                               int angular_q = 24) {
  const int nt = mesh.num_triangles();
  const tdbem::LineRule g = tdbem::gauss_legendre(angular_q);
  double total = 0.0;
  for (int t = 0; t < nt; ++t) {
    const auto& T = mesh.triangles[t];
    const auto outer = subdivided_rule(mesh.vertices[T[0]], mesh.vertices[T[1]], mesh.vertices[T[2]], outer_levels, outer_q);
    for (int r = 0; r < nt; ++r) {
      const auto& R = mesh.triangles[r];
      for (const Sample& p : outer) {
        total += p.w * triangle_retarded_potential(mesh.vertices[R[0]], mesh.vertices[R[1]], mesh.vertices[R[2]], p.x, s, g);
      }
    }
  }
  return total / (4.0 * std::numbers::pi);
}

/// sin^4 window of the given width starting at `delay`.
inline double bump(double t, double amplitude, double width, double delay) {
  if (t <= delay || t >= delay + width) return 0.0;
  return amplitude * std::pow(std::sin(std::numbers::pi * (t - delay) / width), 4);
}

/// Retarded point-source field psi(t - |x - x0|)/(4 pi |x - x0|), rows = points, column n at t = n dt.
inline Eigen::MatrixXd retarded_field(const std::vector<Eigen::Vector3d>& points, const Eigen::Vector3d& x0,
                                      double amplitude, double width, double delay, double dt, int N) {
  Eigen::MatrixXd u(points.size(), N);
  for (size_t i = 0; i < points.size(); ++i) {
    const double r = (points[i] - x0).norm();
    for (int n = 0; n < N; ++n) u(i, n) = bump(n * dt - r, amplitude, width, delay) / (4.0 * std::numbers::pi * r);
  }
  return u;
}

inline double relative_l2(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return (a - b).norm() / b.norm();
}

/// Least-squares slope of log y against log x.
inline double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  double mx = 0.0, my = 0.0;
  for (size_t k = 0; k < x.size(); ++k) {
    mx += std::log(x[k]);
    my += std::log(y[k]);
  }
  mx /= x.size();
  my /= y.size();
  double sxy = 0.0, sxx = 0.0;
  for (size_t k = 0; k < x.size(); ++k) {
    sxy += (std::log(x[k]) - mx) * (std::log(y[k]) - my);
    sxx += (std::log(x[k]) - mx) * (std::log(x[k]) - mx);
  }
  return sxy / sxx;
}

/// Fresh scratch directory under the system temp dir.
inline std::string scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("tdbem_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir.string();
}

}  // namespace oracle
