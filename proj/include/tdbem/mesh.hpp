#pragma once

#include <Eigen/Core>

#include <array>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

namespace tdbem {

using Point = Eigen::Vector3d;
using Triangle = std::array<int, 3>;

/// Flat triangulated surface. Triangles are oriented so that normals point
/// out of the bounded region for closed meshes.
struct Mesh {
  std::vector<Point> vertices;
  std::vector<Triangle> triangles;
  std::vector<int> region_tag;
  bool closed = false;

  int num_vertices() const { return static_cast<int>(vertices.size()); }
  int num_triangles() const { return static_cast<int>(triangles.size()); }
};

struct MeshStats {
  double h_max = 0.0;
  double total_area = 0.0;
  double min_quality = 0.0;
};

/// Undirected edge (a < b) with the triangles that contain it.
struct Edge {
  int a = 0;
  int b = 0;
  std::vector<int> triangles;
};

/// Throws ConfigError describing the first violated mesh invariant.
void validate(const Mesh& mesh);

Mesh build_icosphere(int subdivision_level, double radius);
Mesh build_screen_square(int n, double side);

/// Returns a copy with region_tag[t] = predicate(centroid of t).
Mesh tag_partition(const Mesh& mesh, const std::function<int(const Point&)>& predicate);

MeshStats mesh_stats(const Mesh& mesh);

/// Midpoint refinement without projection; triangle t becomes 4t..4t+3.
Mesh refine_uniform(const Mesh& mesh);

std::vector<Edge> edges(const Mesh& mesh);
double signed_volume(const Mesh& mesh);
double triangle_area(const Mesh& mesh, int t);
Point triangle_normal(const Mesh& mesh, int t);
Point triangle_centroid(const Mesh& mesh, int t);

/// Vertices lying on an edge that belongs to exactly one triangle.
std::vector<bool> boundary_vertices(const Mesh& mesh);

/// Number of connected components (triangles linked through shared vertices).
int connected_components(const Mesh& mesh);

Mesh read_mesh(std::istream& in);
Mesh read_mesh_file(const std::string& path);
void write_mesh(std::ostream& out, const Mesh& mesh);
void write_mesh_file(const std::string& path, const Mesh& mesh);

}  // namespace tdbem
