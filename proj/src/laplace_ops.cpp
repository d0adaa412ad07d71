#include "tdbem/laplace_ops.hpp"

#include "tdbem/error.hpp"
#include "tdbem/parallel.hpp"
#include "tdbem/quadrature.hpp"

#include <Eigen/Geometry>

#include <array>
#include <cmath>
#include <cstdio>
#include <istream>
#include <numbers>
#include <ostream>
#include <random>
#include <sstream>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace tdbem {

namespace {

constexpr double kInv4Pi = 0.25 / std::numbers::pi;

struct Panel {
  std::array<Point, 3> p;
  std::array<int, 3> v;
  Point n;
  Point c;
  double area = 0.0;
  double radius = 0.0;    // max distance from centroid to a vertex
  double diameter = 0.0;  // longest edge
  std::array<Point, 3> curl;
};

struct PanelPoints {
  std::vector<Point> x;
  std::vector<std::array<double, 3>> bary;
  std::vector<double> w;  // includes the panel area
};

std::vector<Panel> make_panels(const Mesh& mesh) {
  std::vector<Panel> panels(mesh.num_triangles());
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    Panel& P = panels[t];
    for (int k = 0; k < 3; ++k) {
      P.v[k] = mesh.triangles[t][k];
      P.p[k] = mesh.vertices[P.v[k]];
    }
    const Point cross = (P.p[1] - P.p[0]).cross(P.p[2] - P.p[0]);
    P.area = 0.5 * cross.norm();
    P.n = cross / (2.0 * P.area);
    P.c = (P.p[0] + P.p[1] + P.p[2]) / 3.0;
    for (int k = 0; k < 3; ++k) {
      P.radius = std::max(P.radius, (P.p[k] - P.c).norm());
      P.diameter = std::max(P.diameter, (P.p[(k + 1) % 3] - P.p[k]).norm());
      const Point grad = P.n.cross(P.p[(k + 2) % 3] - P.p[(k + 1) % 3]) / (2.0 * P.area);
      P.curl[k] = P.n.cross(grad);
    }
  }
  return panels;
}

PanelPoints panel_points(const Panel& P, const TriangleRule& rule) {
  PanelPoints out;
  for (size_t q = 0; q < rule.points.size(); ++q) {
    const double u = rule.points[q][0], v = rule.points[q][1];
    out.x.push_back(P.p[0] + u * (P.p[1] - P.p[0]) + v * (P.p[2] - P.p[0]));
    out.bary.push_back({1.0 - u - v, u, v});
    out.w.push_back(rule.weights[q] * P.area);
  }
  return out;
}

// Shared-vertex classification; perm_i/perm_j list local vertex indices with
// the shared ones first (in matching order).
PairType classify(const Panel& A, const Panel& B, std::array<int, 3>& perm_a, std::array<int, 3>& perm_b) {
  int na = 0;
  std::array<int, 3> sa{}, sb{};
  for (int a = 0; a < 3; ++a) {
    for (int b = 0; b < 3; ++b) {
      if (A.v[a] == B.v[b]) {
        sa[na] = a;
        sb[na] = b;
        ++na;
      }
    }
  }
  if (na == 0) return PairType::Regular;
  if (na == 3) {
    perm_a = {0, 1, 2};
    perm_b = perm_a;
    return PairType::Identical;
  }
  auto complete = [](std::array<int, 3>& perm, const std::array<int, 3>& shared, int n) {
    int k = 0;
    for (; k < n; ++k) perm[k] = shared[k];
    for (int c = 0; c < 3; ++c) {
      bool used = false;
      for (int m = 0; m < n; ++m) used = used || shared[m] == c;
      if (!used) perm[k++] = c;
    }
  };
  complete(perm_a, sa, na);
  complete(perm_b, sb, na);
  return na == 2 ? PairType::Edge : PairType::Vertex;
}

template <class Scalar>
struct PairSums {
  Scalar s0{};
  Scalar s1x[3]{}, s1y[3]{};
  Scalar s2[3][3]{};
  Scalar kij[3]{}, kji[3]{};
  Scalar k11ij[3][3]{}, k11ji[3][3]{};
};

template <class Scalar>
struct Accumulator {
  Scalar s;
  bool need_s1 = false, need_s2 = false, need_k = false, need_k11 = false;

  inline void add(PairSums<Scalar>& sums, const Point& x, const double* bx, const Point& y, const double* by,
                  double w, const Point& ni, const Point& nj) const {
    const Point d = x - y;
    const double r = d.norm();
    const Scalar e = std::exp(-s * r) * (kInv4Pi / r);
    const Scalar ew = w * e;
    sums.s0 += ew;
    if (need_s1) {
      for (int a = 0; a < 3; ++a) {
        sums.s1x[a] += ew * bx[a];
        sums.s1y[a] += ew * by[a];
      }
    }
    if (need_s2) {
      for (int a = 0; a < 3; ++a) {
        const Scalar ea = ew * bx[a];
        for (int b = 0; b < 3; ++b) sums.s2[a][b] += ea * by[b];
      }
    }
    if (need_k) {
      const Scalar g = ew * (1.0 + s * r) / (r * r);
      const Scalar gj = g * d.dot(nj);
      const Scalar gi = -g * d.dot(ni);
      for (int a = 0; a < 3; ++a) {
        sums.kij[a] += gj * by[a];
        sums.kji[a] += gi * bx[a];
      }
      if (need_k11) {
        for (int a = 0; a < 3; ++a) {
          for (int b = 0; b < 3; ++b) {
            sums.k11ij[a][b] += gj * bx[a] * by[b];
            sums.k11ji[a][b] += gi * bx[a] * by[b];
          }
        }
      }
    }
  }
};

}  // namespace

std::string to_string(OperatorKind kind) {
  switch (kind) {
    case OperatorKind::V: return "V";
    case OperatorKind::K: return "K";
    case OperatorKind::Kt: return "Kt";
    case OperatorKind::W: return "W";
    case OperatorKind::SPot: return "S_pot";
    case OperatorKind::DPot: return "D_pot";
  }
  return "?";
}

QuadratureOptions QuadratureOptions::refined() const {
  QuadratureOptions o = *this;
  o.singular_order += 2;
  o.near_degree += 4;
  o.mid_degree += 4;
  o.far_degree += 4;
  o.near_factor *= 1.5;
  o.mid_factor *= 1.5;
  o.potential_near_degree += 4;
  o.potential_far_degree += 4;
  return o;
}

QuadratureOptions QuadratureOptions::accurate() {
  QuadratureOptions o;
  o.singular_order = 6;
  o.near_degree = 8;
  o.mid_degree = 6;
  o.far_degree = 5;
  return o;
}

void FrequencyGrid::validate() const {
  for (const Complex& z : s) {
    if (!(z.real() > 0.0)) throw ConfigError("frequency grid entry with Re s <= 0");
  }
}

template <class Scalar>
AmbientOperators<Scalar> assemble_ambient(const Mesh& mesh, Scalar s, unsigned flags,
                                          const QuadratureOptions& options) {
  if (!(std::real(s) > 0.0)) throw ConfigError("assemble: Re s must be positive");
  using Matrix = typename AmbientOperators<Scalar>::Matrix;
  const int nt = mesh.num_triangles();
  const int nv = mesh.num_vertices();
  const std::vector<Panel> panels = make_panels(mesh);

  const TriangleRule rules[3] = {triangle_rule(options.near_degree), triangle_rule(options.mid_degree),
                                 triangle_rule(options.far_degree)};
  std::vector<PanelPoints> pts[3];
  for (int tier = 0; tier < 3; ++tier) {
    pts[tier].reserve(nt);
    for (const Panel& P : panels) pts[tier].push_back(panel_points(P, rules[tier]));
  }
  const PairRule singular[3] = {singular_pair_rule(PairType::Vertex, options.singular_order),
                                singular_pair_rule(PairType::Edge, options.singular_order),
                                singular_pair_rule(PairType::Identical, options.singular_order)};

  Accumulator<Scalar> acc;
  acc.s = s;
  acc.need_s1 = flags & kAmbientV10;
  acc.need_s2 = flags & (kAmbientV11 | kAmbientW11);
  acc.need_k = flags & (kAmbientK01 | kAmbientK11);
  acc.need_k11 = flags & kAmbientK11;

  auto zeros = [&](unsigned flag, int r, int c) { return (flags & flag) ? Matrix(Matrix::Zero(r, c)) : Matrix(); };
  auto fresh = [&]() {
    AmbientOperators<Scalar> ops;
    ops.flags = flags;
    ops.V00 = zeros(kAmbientV00, nt, nt);
    ops.K01 = zeros(kAmbientK01, nt, nv);
    ops.W11 = zeros(kAmbientW11, nv, nv);
    ops.V11 = zeros(kAmbientV11, nv, nv);
    ops.V10 = zeros(kAmbientV10, nv, nt);
    ops.K11 = zeros(kAmbientK11, nv, nv);
    return ops;
  };

  const int nthreads = std::max(1, std::min(thread_count(), nt));
  std::vector<AmbientOperators<Scalar>> partial(nthreads);
  for (auto& p : partial) p = fresh();

  auto process_pair = [&](AmbientOperators<Scalar>& out, int i, int j) {
    const Panel& A = panels[i];
    const Panel& B = panels[j];
    PairSums<Scalar> sums;
    std::array<int, 3> pa{}, pb{};
    const PairType type = classify(A, B, pa, pb);
    if (type == PairType::Regular) {
      const double dist = std::max(0.0, (A.c - B.c).norm() - A.radius - B.radius);
      const double h = std::max(A.diameter, B.diameter);
      const int tier = dist < options.near_factor * h ? 0 : dist < options.mid_factor * h ? 1 : 2;
      const PanelPoints& X = pts[tier][i];
      const PanelPoints& Y = pts[tier][j];
      for (size_t qx = 0; qx < X.x.size(); ++qx) {
        for (size_t qy = 0; qy < Y.x.size(); ++qy) {
          acc.add(sums, X.x[qx], X.bary[qx].data(), Y.x[qy], Y.bary[qy].data(), X.w[qx] * Y.w[qy], A.n, B.n);
        }
      }
    } else {
      const PairRule& rule = singular[type == PairType::Vertex ? 0 : type == PairType::Edge ? 1 : 2];
      const double area = A.area * B.area;
      const Point ea1 = A.p[pa[1]] - A.p[pa[0]], ea2 = A.p[pa[2]] - A.p[pa[0]];
      const Point eb1 = B.p[pb[1]] - B.p[pb[0]], eb2 = B.p[pb[2]] - B.p[pb[0]];
      for (size_t q = 0; q < rule.weights.size(); ++q) {
        const double ux = rule.x[q][0], vx = rule.x[q][1], uy = rule.y[q][0], vy = rule.y[q][1];
        const Point x = A.p[pa[0]] + ux * ea1 + vx * ea2;
        const Point y = B.p[pb[0]] + uy * eb1 + vy * eb2;
        double bx[3], by[3];
        bx[pa[0]] = 1.0 - ux - vx;
        bx[pa[1]] = ux;
        bx[pa[2]] = vx;
        by[pb[0]] = 1.0 - uy - vy;
        by[pb[1]] = uy;
        by[pb[2]] = vy;
        acc.add(sums, x, bx, y, by, rule.weights[q] * area, A.n, B.n);
      }
    }

    const bool mirror = i != j;
    if (flags & kAmbientV00) {
      out.V00(i, j) += sums.s0;
      if (mirror) out.V00(j, i) += sums.s0;
    }
    if (flags & kAmbientV10) {
      for (int a = 0; a < 3; ++a) {
        out.V10(A.v[a], j) += sums.s1x[a];
        if (mirror) out.V10(B.v[a], i) += sums.s1y[a];
      }
    }
    if (flags & kAmbientV11) {
      for (int a = 0; a < 3; ++a) {
        for (int b = 0; b < 3; ++b) {
          out.V11(A.v[a], B.v[b]) += sums.s2[a][b];
          if (mirror) out.V11(B.v[b], A.v[a]) += sums.s2[a][b];
        }
      }
    }
    if (flags & kAmbientW11) {
      const Scalar s2nn = s * s * A.n.dot(B.n);
      for (int a = 0; a < 3; ++a) {
        for (int b = 0; b < 3; ++b) {
          const Scalar val = A.curl[a].dot(B.curl[b]) * sums.s0 + s2nn * sums.s2[a][b];
          out.W11(A.v[a], B.v[b]) += val;
          if (mirror) out.W11(B.v[b], A.v[a]) += val;
        }
      }
    }
    if (flags & kAmbientK01) {
      for (int a = 0; a < 3; ++a) {
        out.K01(i, B.v[a]) += sums.kij[a];
        if (mirror) out.K01(j, A.v[a]) += sums.kji[a];
      }
    }
    if (flags & kAmbientK11) {
      for (int a = 0; a < 3; ++a) {
        for (int b = 0; b < 3; ++b) {
          out.K11(A.v[a], B.v[b]) += sums.k11ij[a][b];
          if (mirror) out.K11(B.v[b], A.v[a]) += sums.k11ji[a][b];
        }
      }
    }
  };

#ifdef _OPENMP
#pragma omp parallel for schedule(static, 1) num_threads(nthreads)
#endif
  for (int i = 0; i < nt; ++i) {
#ifdef _OPENMP
    const int tid = omp_get_thread_num();
#else
    const int tid = 0;
#endif
    for (int j = i; j < nt; ++j) process_pair(partial[tid], i, j);
  }

  AmbientOperators<Scalar> result = std::move(partial[0]);
  for (int t = 1; t < nthreads; ++t) {
    if (flags & kAmbientV00) result.V00 += partial[t].V00;
    if (flags & kAmbientK01) result.K01 += partial[t].K01;
    if (flags & kAmbientW11) result.W11 += partial[t].W11;
    if (flags & kAmbientV11) result.V11 += partial[t].V11;
    if (flags & kAmbientV10) result.V10 += partial[t].V10;
    if (flags & kAmbientK11) result.K11 += partial[t].K11;
  }
  return result;
}

template AmbientOperators<double> assemble_ambient<double>(const Mesh&, double, unsigned, const QuadratureOptions&);
template AmbientOperators<Complex> assemble_ambient<Complex>(const Mesh&, Complex, unsigned,
                                                             const QuadratureOptions&);

unsigned ambient_flags_for(OperatorKind kind, TraceOrder test, TraceOrder trial) {
  const bool tm = test == TraceOrder::Minus, rm = trial == TraceOrder::Minus;
  switch (kind) {
    case OperatorKind::V:
      if (tm && rm) return kAmbientV00;
      if (!tm && !rm) return kAmbientV11;
      return kAmbientV10;
    case OperatorKind::K:
      if (rm) throw ConfigError("assemble: K needs a Plus trial space");
      return tm ? kAmbientK01 : kAmbientK11;
    case OperatorKind::Kt:
      if (tm) throw ConfigError("assemble: Kt needs a Plus test space");
      return rm ? kAmbientK01 : kAmbientK11;
    case OperatorKind::W:
      if (tm || rm) throw ConfigError("assemble: W needs Plus test and trial spaces");
      return kAmbientW11;
    default:
      throw ConfigError("assemble: potentials are built by potential_matrix");
  }
}

Eigen::MatrixXcd block_from_ambient(OperatorKind kind, const AmbientOperators<Complex>& ops,
                                    const DiscreteTraceSpace& test, const DiscreteTraceSpace& trial) {
  const unsigned flag = ambient_flags_for(kind, test.order, trial.order);
  if (!(ops.flags & flag)) throw ConfigError("block_from_ambient: operator not assembled");
  const bool tm = test.order == TraceOrder::Minus;
  switch (kind) {
    case OperatorKind::V:
      if (flag == kAmbientV00) return restrict_matrix(ops.V00, test, trial);
      if (flag == kAmbientV11) return restrict_matrix(ops.V11, test, trial);
      return tm ? restrict_matrix(ops.V10.transpose(), test, trial) : restrict_matrix(ops.V10, test, trial);
    case OperatorKind::K:
      return tm ? restrict_matrix(ops.K01, test, trial) : restrict_matrix(ops.K11, test, trial);
    case OperatorKind::Kt:
      // Kt pairs an x-normal derivative; by kernel symmetry it is the transpose of K.
      return trial.order == TraceOrder::Minus ? restrict_matrix(ops.K01.transpose(), test, trial)
                                              : restrict_matrix(ops.K11.transpose(), test, trial);
    case OperatorKind::W:
      return restrict_matrix(ops.W11, test, trial);
    default:
      throw ConfigError("block_from_ambient: unsupported kind");
  }
}

FrequencyOperatorBlock assemble(OperatorKind kind, Complex s, const DiscreteTraceSpace& test,
                                const DiscreteTraceSpace& trial, const QuadratureOptions& options) {
  if (!(s.real() > 0.0)) throw ConfigError("assemble: Re s must be positive");
  if (test.mesh != trial.mesh) throw ConfigError("assemble: spaces live on different meshes");
  const unsigned flag = ambient_flags_for(kind, test.order, trial.order);
  FrequencyOperatorBlock block;
  block.kind = kind;
  block.s = s;
  block.test_id = test.id;
  block.trial_id = trial.id;
  if (test.is_zero() || trial.is_zero()) {
    block.matrix = Eigen::MatrixXcd::Zero(test.dim(), trial.dim());
    return block;
  }
  const auto ops = assemble_ambient<Complex>(*test.mesh, s, flag, options);
  block.matrix = block_from_ambient(kind, ops, test, trial);
  return block;
}

namespace {

double point_triangle_distance(const Point& p, const Point& a, const Point& b, const Point& c) {
  const Point ab = b - a, ac = c - a, ap = p - a;
  const double d1 = ab.dot(ap), d2 = ac.dot(ap);
  if (d1 <= 0 && d2 <= 0) return ap.norm();
  const Point bp = p - b;
  const double d3 = ab.dot(bp), d4 = ac.dot(bp);
  if (d3 >= 0 && d4 <= d3) return bp.norm();
  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0 && d1 >= 0 && d3 <= 0) return (p - (a + d1 / (d1 - d3) * ab)).norm();
  const Point cp = p - c;
  const double d5 = ab.dot(cp), d6 = ac.dot(cp);
  if (d6 >= 0 && d5 <= d6) return cp.norm();
  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0 && d2 >= 0 && d6 <= 0) return (p - (a + d2 / (d2 - d6) * ac)).norm();
  const double va = d3 * d6 - d5 * d4;
  if (va <= 0 && (d4 - d3) >= 0 && (d5 - d6) >= 0) {
    const double w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
    return (p - (b + w * (c - b))).norm();
  }
  const double denom = 1.0 / (va + vb + vc);
  const double v = vb * denom, w = vc * denom;
  return (p - (a + v * ab + w * ac)).norm();
}

}  // namespace

double distance_to_mesh(const Mesh& mesh, const Point& p) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& tri : mesh.triangles) {
    best = std::min(best, point_triangle_distance(p, mesh.vertices[tri[0]], mesh.vertices[tri[1]],
                                                  mesh.vertices[tri[2]]));
  }
  return best;
}

FrequencyOperatorBlock potential_matrix(OperatorKind kind, Complex s, const DiscreteTraceSpace& source,
                                        const std::vector<Point>& points, const QuadratureOptions& options) {
  if (!(s.real() > 0.0)) throw ConfigError("potential_matrix: Re s must be positive");
  if (kind == OperatorKind::SPot && source.order != TraceOrder::Minus) {
    throw ConfigError("potential_matrix: S_pot needs a Minus source space");
  }
  if (kind == OperatorKind::DPot && source.order != TraceOrder::Plus) {
    throw ConfigError("potential_matrix: D_pot needs a Plus source space");
  }
  if (kind != OperatorKind::SPot && kind != OperatorKind::DPot) {
    throw ConfigError("potential_matrix: kind must be S_pot or D_pot");
  }
  const Mesh& mesh = *source.mesh;
  const double h = mesh_stats(mesh).h_max;
  for (const Point& p : points) {
    if (!(distance_to_mesh(mesh, p) > 0.5 * h)) {
      throw ConfigError("potential_matrix: evaluation point closer than h/2 to the surface");
    }
  }
  FrequencyOperatorBlock block;
  block.kind = kind;
  block.s = s;
  block.test_id = 0;
  block.trial_id = source.id;
  const int np = static_cast<int>(points.size());
  Eigen::MatrixXcd ambient = Eigen::MatrixXcd::Zero(np, source.ambient_dim);
  if (!source.is_zero() && np > 0) {
    const std::vector<Panel> panels = make_panels(mesh);
    const TriangleRule near_rule = triangle_rule(options.potential_near_degree);
    const TriangleRule far_rule = triangle_rule(options.potential_far_degree);
    std::vector<PanelPoints> near_pts, far_pts;
    for (const Panel& P : panels) {
      near_pts.push_back(panel_points(P, near_rule));
      far_pts.push_back(panel_points(P, far_rule));
    }
#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(std::max(1, thread_count()))
#endif
    for (int ip = 0; ip < np; ++ip) {
      const Point& p = points[ip];
      for (int t = 0; t < mesh.num_triangles(); ++t) {
        const Panel& P = panels[t];
        const double dist = (p - P.c).norm() - P.radius;
        const PanelPoints& Y = dist < options.potential_near_factor * P.diameter ? near_pts[t] : far_pts[t];
        Complex sum0 = 0.0;
        Complex sum1[3] = {0.0, 0.0, 0.0};
        for (size_t q = 0; q < Y.x.size(); ++q) {
          const Point d = p - Y.x[q];
          const double r = d.norm();
          const Complex e = std::exp(-s * r) * (kInv4Pi / r) * Y.w[q];
          if (kind == OperatorKind::SPot) {
            sum0 += e;
          } else {
            const Complex g = e * (1.0 + s * r) / (r * r) * d.dot(P.n);
            for (int a = 0; a < 3; ++a) sum1[a] += g * Y.bary[q][a];
          }
        }
        if (kind == OperatorKind::SPot) {
          ambient(ip, t) += sum0;
        } else {
          for (int a = 0; a < 3; ++a) ambient(ip, P.v[a]) += sum1[a];
        }
      }
    }
  }
  block.matrix.resize(np, source.dim());
  for (int j = 0; j < source.dim(); ++j) block.matrix.col(j) = ambient.col(source.active[j]);
  return block;
}

CalderonResidual calderon_residual(Complex s, const DiscreteTraceSpace& Xh, const DiscreteTraceSpace& Yh,
                                   const Eigen::VectorXd& lambda, const Eigen::VectorXd& phi,
                                   const QuadratureOptions& options) {
  if (!Xh.mesh || Xh.mesh != Yh.mesh) throw ConfigError("calderon_residual: spaces must share a mesh");
  if (!Xh.mesh->closed) throw ConfigError("calderon_residual: identities require a closed surface");
  if (Xh.order != TraceOrder::Minus || Yh.order != TraceOrder::Plus || !Xh.is_full() || !Yh.is_full()) {
    throw ConfigError("calderon_residual: needs the full Minus and Plus spaces");
  }
  if (lambda.size() != Xh.dim() || phi.size() != Yh.dim()) {
    throw ConfigError("calderon_residual: density size mismatch");
  }
  const Mesh& mesh = *Xh.mesh;
  const auto ops = assemble_ambient<Complex>(mesh, s, kAmbientW11 | kAmbientV11 | kAmbientV10 | kAmbientK01 |
                                                          kAmbientK11, options);
  const auto norms = assemble_ambient<double>(mesh, 1.0, kAmbientV11 | kAmbientW11 | kAmbientV00, options);
  const Eigen::MatrixXcd M11 = ambient_p1_mass_matrix(mesh).cast<Complex>();
  const Eigen::MatrixXcd M10 = ambient_duality_matrix(mesh).transpose().cast<Complex>();
  const Eigen::PartialPivLU<Eigen::MatrixXcd> mass(M11);

  const Eigen::VectorXcd ph = phi.cast<Complex>();
  const Eigen::VectorXcd la = lambda.cast<Complex>();

  // V W phi + (K - 1/2)(K + 1/2) phi, tested with P1.
  const Eigen::VectorXcd w_rep = mass.solve(ops.W11 * ph);
  const Eigen::VectorXcd z1 = mass.solve(ops.K11 * ph + 0.5 * (M11 * ph));
  const Eigen::VectorXcd r1 = ops.V11 * w_rep + ops.K11 * z1 - 0.5 * (M11 * z1);

  // W V lambda + (Kt - 1/2)(Kt + 1/2) lambda, tested with P1.
  const Eigen::VectorXcd v_rep = mass.solve(ops.V10 * la);
  const Eigen::VectorXcd z2 = mass.solve(ops.K01.transpose() * la + 0.5 * (M10 * la));
  const Eigen::VectorXcd r2 = ops.W11 * v_rep + ops.K11.transpose() * z2 - 0.5 * (M11 * z2);

  const Eigen::LLT<Eigen::MatrixXd> v1_11(norms.V11);
  const Eigen::LLT<Eigen::MatrixXd> w1(norms.W11);
  if (v1_11.info() != Eigen::Success || w1.info() != Eigen::Success) {
    throw NumericalError("calderon_residual: norm matrices are not positive definite");
  }
  auto dual = [](const Eigen::LLT<Eigen::MatrixXd>& f, const Eigen::VectorXcd& r) {
    const Eigen::VectorXcd y = f.solve(r);
    return std::sqrt(std::max(0.0, std::real(r.dot(y))));
  };
  const double phi_norm = std::sqrt(std::max(0.0, phi.dot(norms.W11 * phi)));
  const double lambda_norm = std::sqrt(std::max(0.0, lambda.dot(norms.V00 * lambda)));
  CalderonResidual out;
  out.r1 = phi_norm > 0.0 ? dual(v1_11, r1) / phi_norm : 0.0;
  out.r2 = lambda_norm > 0.0 ? dual(w1, r2) / lambda_norm : 0.0;
  return out;
}

CalderonResidual calderon_residual(Complex s, const DiscreteTraceSpace& Xh, const DiscreteTraceSpace& Yh,
                                   const QuadratureOptions& options, std::uint64_t seed) {
  if (!Xh.mesh) throw ConfigError("calderon_residual: null mesh");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> coef(-1.0, 1.0);
  // Random quadratic polynomials in the Cartesian coordinates.
  auto random_poly = [&]() {
    std::array<double, 10> c{};
    for (double& v : c) v = coef(rng);
    return [c](const Point& p) {
      const double x = p.x(), y = p.y(), z = p.z();
      return c[0] + c[1] * x + c[2] * y + c[3] * z + c[4] * x * x + c[5] * y * y + c[6] * z * z + c[7] * x * y +
             c[8] * y * z + c[9] * x * z;
    };
  };
  const Eigen::VectorXd lambda = interpolate(*Xh.mesh, TraceOrder::Minus, random_poly());
  const Eigen::VectorXd phi = interpolate(*Xh.mesh, TraceOrder::Plus, random_poly());
  return calderon_residual(s, Xh, Yh, lambda, phi, options);
}

std::vector<BoundProbeRow> bound_probe(OperatorKind kind, const FrequencyGrid& grid, const DiscreteTraceSpace& Xh,
                                       const DiscreteTraceSpace& Yh, const QuadratureOptions& options,
                                       std::uint64_t seed) {
  grid.validate();
  if (Xh.order != TraceOrder::Minus || Yh.order != TraceOrder::Plus || Xh.mesh != Yh.mesh) {
    throw ConfigError("bound_probe: expects a Minus space X and a Plus space Y on one mesh");
  }
  const DiscreteTraceSpace* domain = nullptr;
  const DiscreteTraceSpace* range = nullptr;
  switch (kind) {
    case OperatorKind::V: domain = &Xh; range = &Xh; break;
    case OperatorKind::K: domain = &Yh; range = &Xh; break;
    case OperatorKind::Kt: domain = &Xh; range = &Yh; break;
    case OperatorKind::W: domain = &Yh; range = &Yh; break;
    default: throw ConfigError("bound_probe: kind must be a boundary operator");
  }
  const auto norms = assemble_ambient<double>(*Xh.mesh, 1.0, kAmbientV00 | kAmbientW11, options);
  auto norm_of = [&](const DiscreteTraceSpace& sp) {
    return restrict_matrix(sp.order == TraceOrder::Minus ? norms.V00 : norms.W11, sp, sp);
  };
  const Eigen::MatrixXd A = norm_of(*domain);
  const Eigen::MatrixXd D = norm_of(*range);
  const Eigen::LLT<Eigen::MatrixXd> fa(A), fd(D);
  if (fa.info() != Eigen::Success || fd.info() != Eigen::Success) {
    throw NumericalError("bound_probe: norm matrices are not positive definite");
  }
  std::vector<BoundProbeRow> rows;
  for (const Complex& s : grid.s) {
    const Eigen::MatrixXcd G = assemble(kind, s, *range, *domain, options).matrix;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd;
    Eigen::VectorXcd x(domain->dim());
    for (int k = 0; k < x.size(); ++k) x[k] = Complex(nd(rng), nd(rng));
    double estimate = 0.0;
    for (int it = 0; it < 50; ++it) {
      const double xn = std::sqrt(std::real(x.dot(A.cast<Complex>() * x)));
      x /= xn;
      const Eigen::VectorXcd gx = G * x;
      const Eigen::VectorXcd dg = fd.solve(gx);
      estimate = std::sqrt(std::max(0.0, std::real(gx.dot(dg))));
      x = fa.solve(G.adjoint() * dg);
    }
    rows.push_back({s, estimate});
  }
  return rows;
}

double fit_growth_exponent(const std::vector<BoundProbeRow>& rows) {
  if (rows.size() < 2) throw ConfigError("fit_growth_exponent: needs at least two rows");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = static_cast<double>(rows.size());
  for (const auto& r : rows) {
    const double x = std::log(std::abs(r.s)), y = std::log(r.norm);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

void write_matrix(std::ostream& out, const Eigen::MatrixXcd& m) {
  out << "tdbem-matrix 1\n" << m.rows() << ' ' << m.cols() << '\n';
  char buf[96];
  for (int i = 0; i < m.rows(); ++i) {
    for (int j = 0; j < m.cols(); ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g %.17g\n", m(i, j).real(), m(i, j).imag());
      out << buf;
    }
  }
}

Eigen::MatrixXcd read_matrix(std::istream& in) {
  std::string magic;
  int version = 0;
  long rows = -1, cols = -1;
  if (!(in >> magic >> version) || magic != "tdbem-matrix" || version != 1) {
    throw ConfigError("matrix file: missing 'tdbem-matrix 1' header");
  }
  if (!(in >> rows >> cols) || rows < 0 || cols < 0) throw ConfigError("matrix file: bad dimensions");
  Eigen::MatrixXcd m(rows, cols);
  for (long i = 0; i < rows; ++i) {
    for (long j = 0; j < cols; ++j) {
      std::string re, im;
      if (!(in >> re >> im)) throw ConfigError("matrix file: truncated entries");
      m(i, j) = Complex(std::stod(re), std::stod(im));
    }
  }
  return m;
}

}  // namespace tdbem
