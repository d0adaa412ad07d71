#include "tdbem/mesh.hpp"

#include "tdbem/error.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

namespace tdbem {

namespace {

constexpr int kMaxIcosphereLevel = 7;

std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

double parse_double(const std::string& token, int line_no) {
  try {
    size_t pos = 0;
    double v = std::stod(token, &pos);
    if (pos != token.size()) throw std::invalid_argument(token);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("mesh line " + std::to_string(line_no) + ": bad number '" + token + "'");
  }
}

int parse_int(const std::string& token, int line_no) {
  try {
    size_t pos = 0;
    long v = std::stol(token, &pos);
    if (pos != token.size()) throw std::invalid_argument(token);
    return static_cast<int>(v);
  } catch (const std::exception&) {
    throw ConfigError("mesh line " + std::to_string(line_no) + ": bad integer '" + token + "'");
  }
}

// Directed edge (from, to) -> owning triangle.
std::map<std::pair<int, int>, std::vector<int>> directed_edges(const Mesh& mesh) {
  std::map<std::pair<int, int>, std::vector<int>> out;
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const auto& tri = mesh.triangles[t];
    for (int k = 0; k < 3; ++k) out[{tri[k], tri[(k + 1) % 3]}].push_back(t);
  }
  return out;
}

}  // namespace

double triangle_area(const Mesh& mesh, int t) {
  const auto& tri = mesh.triangles[t];
  const Point& a = mesh.vertices[tri[0]];
  return 0.5 * (mesh.vertices[tri[1]] - a).cross(mesh.vertices[tri[2]] - a).norm();
}

Point triangle_normal(const Mesh& mesh, int t) {
  const auto& tri = mesh.triangles[t];
  const Point& a = mesh.vertices[tri[0]];
  return (mesh.vertices[tri[1]] - a).cross(mesh.vertices[tri[2]] - a).normalized();
}

Point triangle_centroid(const Mesh& mesh, int t) {
  const auto& tri = mesh.triangles[t];
  return (mesh.vertices[tri[0]] + mesh.vertices[tri[1]] + mesh.vertices[tri[2]]) / 3.0;
}

std::vector<Edge> edges(const Mesh& mesh) {
  std::map<std::pair<int, int>, std::vector<int>> undirected;
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const auto& tri = mesh.triangles[t];
    for (int k = 0; k < 3; ++k) {
      int a = tri[k], b = tri[(k + 1) % 3];
      undirected[{std::min(a, b), std::max(a, b)}].push_back(t);
    }
  }
  std::vector<Edge> out;
  out.reserve(undirected.size());
  for (auto& [key, tris] : undirected) out.push_back({key.first, key.second, std::move(tris)});
  return out;
}

double signed_volume(const Mesh& mesh) {
  double vol = 0.0;
  for (const auto& tri : mesh.triangles) {
    Eigen::Matrix3d m;
    m << mesh.vertices[tri[0]], mesh.vertices[tri[1]], mesh.vertices[tri[2]];
    vol += m.determinant() / 6.0;
  }
  return vol;
}

std::vector<bool> boundary_vertices(const Mesh& mesh) {
  std::vector<bool> on_boundary(mesh.vertices.size(), false);
  for (const auto& e : edges(mesh)) {
    if (e.triangles.size() == 1) on_boundary[e.a] = on_boundary[e.b] = true;
  }
  return on_boundary;
}

int connected_components(const Mesh& mesh) {
  std::vector<int> parent(mesh.vertices.size());
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (const auto& tri : mesh.triangles) {
    parent[find(tri[1])] = find(tri[0]);
    parent[find(tri[2])] = find(tri[0]);
  }
  std::vector<bool> used(mesh.vertices.size(), false);
  for (const auto& tri : mesh.triangles) used[tri[0]] = true;
  int count = 0;
  for (size_t v = 0; v < parent.size(); ++v) {
    if (used[v] && find(static_cast<int>(v)) == static_cast<int>(v)) ++count;
  }
  return count;
}

void validate(const Mesh& mesh) {
  const int nv = mesh.num_vertices();
  if (mesh.triangles.empty()) throw ConfigError("mesh has no triangles");
  if (mesh.region_tag.size() != mesh.triangles.size()) {
    throw ConfigError("mesh region_tag size differs from triangle count");
  }
  double scale = 0.0;
  for (const auto& v : mesh.vertices) {
    if (!v.allFinite()) throw ConfigError("mesh vertex with non-finite coordinate");
    scale = std::max(scale, v.cwiseAbs().maxCoeff());
  }
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const auto& tri = mesh.triangles[t];
    for (int k = 0; k < 3; ++k) {
      if (tri[k] < 0 || tri[k] >= nv) {
        throw ConfigError("triangle " + std::to_string(t) + " has invalid vertex index");
      }
    }
    if (tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2]) {
      throw ConfigError("triangle " + std::to_string(t) + " repeats a vertex");
    }
    if (triangle_area(mesh, t) <= 1e-14 * std::max(scale * scale, 1e-300)) {
      throw ConfigError("triangle " + std::to_string(t) + " is degenerate");
    }
  }
  const auto directed = directed_edges(mesh);
  bool has_boundary = false;
  for (const auto& [key, tris] : directed) {
    if (tris.size() > 1) throw ConfigError("edge traversed twice in the same direction");
    auto reverse = directed.find({key.second, key.first});
    if (reverse == directed.end()) has_boundary = true;
  }
  if (mesh.closed) {
    if (has_boundary) throw ConfigError("closed mesh has an edge with a single triangle");
    if (signed_volume(mesh) <= 0.0) throw ConfigError("closed mesh is not outward oriented");
  } else if (!has_boundary) {
    throw ConfigError("open mesh has no boundary edge");
  }
}

Mesh build_icosphere(int subdivision_level, double radius) {
  if (subdivision_level < 0 || subdivision_level > kMaxIcosphereLevel) {
    throw ConfigError("icosphere level must lie in [0, " + std::to_string(kMaxIcosphereLevel) + "]");
  }
  if (!(radius > 0.0)) throw ConfigError("icosphere radius must be positive");

  const double phi = 0.5 * (1.0 + std::sqrt(5.0));
  Mesh mesh;
  mesh.closed = true;
  for (double a : {-1.0, 1.0}) {
    for (double b : {-phi, phi}) {
      mesh.vertices.emplace_back(a, b, 0.0);
      mesh.vertices.emplace_back(0.0, a, b);
      mesh.vertices.emplace_back(b, 0.0, a);
    }
  }
  // Faces are the mutually adjacent triples (edge length 2 before projection).
  for (int i = 0; i < 12; ++i) {
    for (int j = i + 1; j < 12; ++j) {
      for (int k = j + 1; k < 12; ++k) {
        auto adjacent = [&](int p, int q) {
          return std::abs((mesh.vertices[p] - mesh.vertices[q]).norm() - 2.0) < 1e-9;
        };
        if (!adjacent(i, j) || !adjacent(j, k) || !adjacent(i, k)) continue;
        Triangle tri{i, j, k};
        const Point n = (mesh.vertices[j] - mesh.vertices[i]).cross(mesh.vertices[k] - mesh.vertices[i]);
        if (n.dot(mesh.vertices[i] + mesh.vertices[j] + mesh.vertices[k]) < 0.0) std::swap(tri[1], tri[2]);
        mesh.triangles.push_back(tri);
      }
    }
  }
  for (auto& v : mesh.vertices) v = radius * v.normalized();
  mesh.region_tag.assign(mesh.triangles.size(), 0);

  for (int level = 0; level < subdivision_level; ++level) {
    mesh = refine_uniform(mesh);
    for (auto& v : mesh.vertices) v = radius * v.normalized();
  }
  return mesh;
}

Mesh refine_uniform(const Mesh& mesh) {
  Mesh out;
  out.closed = mesh.closed;
  out.vertices = mesh.vertices;
  std::map<std::pair<int, int>, int> midpoint;
  auto mid = [&](int a, int b) {
    auto key = std::make_pair(std::min(a, b), std::max(a, b));
    auto it = midpoint.find(key);
    if (it != midpoint.end()) return it->second;
    int idx = static_cast<int>(out.vertices.size());
    out.vertices.push_back(0.5 * (mesh.vertices[a] + mesh.vertices[b]));
    midpoint.emplace(key, idx);
    return idx;
  };
  out.triangles.reserve(4 * mesh.triangles.size());
  out.region_tag.reserve(4 * mesh.triangles.size());
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const auto [a, b, c] = mesh.triangles[t];
    const int ab = mid(a, b), bc = mid(b, c), ca = mid(c, a);
    out.triangles.push_back({a, ab, ca});
    out.triangles.push_back({b, bc, ab});
    out.triangles.push_back({c, ca, bc});
    out.triangles.push_back({ab, bc, ca});
    for (int k = 0; k < 4; ++k) out.region_tag.push_back(mesh.region_tag[t]);
  }
  return out;
}

Mesh build_screen_square(int n, double side) {
  if (n < 1) throw ConfigError("screen subdivision n must be >= 1");
  if (!(side > 0.0)) throw ConfigError("screen side must be positive");
  Mesh mesh;
  mesh.closed = false;
  const double h = side / n;
  for (int j = 0; j <= n; ++j) {
    for (int i = 0; i <= n; ++i) mesh.vertices.emplace_back(i * h, j * h, 0.0);
  }
  auto id = [n](int i, int j) { return j * (n + 1) + i; };
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < n; ++i) {
      mesh.triangles.push_back({id(i, j), id(i + 1, j), id(i + 1, j + 1)});
      mesh.triangles.push_back({id(i, j), id(i + 1, j + 1), id(i, j + 1)});
    }
  }
  mesh.region_tag.assign(mesh.triangles.size(), 0);
  return mesh;
}

Mesh tag_partition(const Mesh& mesh, const std::function<int(const Point&)>& predicate) {
  Mesh out = mesh;
  for (int t = 0; t < out.num_triangles(); ++t) out.region_tag[t] = predicate(triangle_centroid(out, t));
  return out;
}

MeshStats mesh_stats(const Mesh& mesh) {
  MeshStats stats;
  stats.min_quality = 1.0;
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const auto& tri = mesh.triangles[t];
    const double a = (mesh.vertices[tri[1]] - mesh.vertices[tri[2]]).norm();
    const double b = (mesh.vertices[tri[0]] - mesh.vertices[tri[2]]).norm();
    const double c = (mesh.vertices[tri[0]] - mesh.vertices[tri[1]]).norm();
    const double area = triangle_area(mesh, t);
    stats.h_max = std::max({stats.h_max, a, b, c});
    stats.total_area += area;
    const double inradius = 2.0 * area / (a + b + c);
    const double circumradius = a * b * c / (4.0 * area);
    stats.min_quality = std::min(stats.min_quality, 2.0 * inradius / circumradius);
  }
  return stats;
}

Mesh read_mesh(std::istream& in) {
  Mesh mesh;
  std::string line;
  int line_no = 0;
  bool header = false, have_closed = false;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::string key;
    if (!(ls >> key) || key[0] == '#') continue;
    std::vector<std::string> tok;
    for (std::string s; ls >> s;) tok.push_back(s);
    auto expect = [&](size_t n) {
      if (tok.size() != n) {
        throw ConfigError("mesh line " + std::to_string(line_no) + ": expected " + std::to_string(n) +
                          " fields after '" + key + "'");
      }
    };
    if (!header) {
      if (key != "tdbem-mesh" || tok.size() != 1 || tok[0] != "1") {
        throw ConfigError("mesh line " + std::to_string(line_no) + ": missing 'tdbem-mesh 1' header");
      }
      header = true;
    } else if (key == "v") {
      expect(3);
      mesh.vertices.emplace_back(parse_double(tok[0], line_no), parse_double(tok[1], line_no),
                                 parse_double(tok[2], line_no));
    } else if (key == "t") {
      expect(4);
      mesh.triangles.push_back({parse_int(tok[0], line_no), parse_int(tok[1], line_no), parse_int(tok[2], line_no)});
      mesh.region_tag.push_back(parse_int(tok[3], line_no));
    } else if (key == "closed") {
      expect(1);
      if (tok[0] != "0" && tok[0] != "1") {
        throw ConfigError("mesh line " + std::to_string(line_no) + ": closed must be 0 or 1");
      }
      mesh.closed = tok[0] == "1";
      have_closed = true;
    } else {
      throw ConfigError("mesh line " + std::to_string(line_no) + ": unknown record '" + key + "'");
    }
  }
  if (!header) throw ConfigError("mesh: empty input");
  if (!have_closed) throw ConfigError("mesh: missing 'closed' record");
  validate(mesh);
  return mesh;
}

Mesh read_mesh_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open mesh file '" + path + "'");
  return read_mesh(in);
}

void write_mesh(std::ostream& out, const Mesh& mesh) {
  out << "tdbem-mesh 1\n";
  for (const auto& v : mesh.vertices) {
    out << "v " << format_double(v.x()) << ' ' << format_double(v.y()) << ' ' << format_double(v.z()) << '\n';
  }
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const auto& tri = mesh.triangles[t];
    out << "t " << tri[0] << ' ' << tri[1] << ' ' << tri[2] << ' ' << mesh.region_tag[t] << '\n';
  }
  out << "closed " << (mesh.closed ? 1 : 0) << '\n';
}

void write_mesh_file(const std::string& path, const Mesh& mesh) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write mesh file '" + path + "'");
  write_mesh(out, mesh);
}

}  // namespace tdbem
