#pragma once

#include <Eigen/Core>

#include <vector>

namespace tdbem {

/// Gauss-Legendre nodes and weights on [0, 1].
struct LineRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

/// Rule on the reference triangle {u, v >= 0, u + v <= 1}; weights sum to 1.
struct TriangleRule {
  std::vector<Eigen::Vector2d> points;
  std::vector<double> weights;
  int degree = 0;
};

/// Rule on the product of two reference triangles; weights sum to 1.
struct PairRule {
  std::vector<Eigen::Vector2d> x;
  std::vector<Eigen::Vector2d> y;
  std::vector<double> weights;
};

/// Relative position of two panels. For the singular cases the panels are
/// parametrized so that shared vertices come first in both local orderings.
enum class PairType { Regular, Vertex, Edge, Identical };

LineRule gauss_legendre(int n);

/// Cheapest available rule that integrates polynomials of total degree
/// `degree` exactly (symmetric rules up to degree 5, collapsed Gauss above).
TriangleRule triangle_rule(int degree);

/// Collapsed (Duffy) tensor Gauss rule with q x q points, exact to degree 2q - 2.
TriangleRule collapsed_gauss_rule(int q);

/// Relative-coordinate (Sauter-Schwab) rule with q Gauss points per axis.
PairRule singular_pair_rule(PairType type, int q);

}  // namespace tdbem
