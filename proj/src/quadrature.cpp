#include "tdbem/quadrature.hpp"

#include "tdbem/error.hpp"

#include <cmath>
#include <numbers>

namespace tdbem {

namespace {

void add_orbit3(TriangleRule& rule, double a, double w) {
  const double b = 1.0 - 2.0 * a;
  rule.points.emplace_back(a, a);
  rule.points.emplace_back(b, a);
  rule.points.emplace_back(a, b);
  for (int k = 0; k < 3; ++k) rule.weights.push_back(w);
}

}  // namespace

LineRule gauss_legendre(int n) {
  if (n < 1) throw ConfigError("Gauss-Legendre order must be >= 1");
  LineRule rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      if (n == 1) p0 = 1.0;
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    rule.nodes[i] = 0.5 * (1.0 - x);
    rule.nodes[n - 1 - i] = 0.5 * (1.0 + x);
    rule.weights[i] = rule.weights[n - 1 - i] = 0.5 * w;
  }
  return rule;
}

TriangleRule collapsed_gauss_rule(int q) {
  const LineRule g = gauss_legendre(q);
  TriangleRule rule;
  rule.degree = 2 * q - 2;
  for (int a = 0; a < q; ++a) {
    for (int b = 0; b < q; ++b) {
      const double u = g.nodes[a];
      rule.points.emplace_back(u, (1.0 - u) * g.nodes[b]);
      rule.weights.push_back(2.0 * g.weights[a] * g.weights[b] * (1.0 - u));
    }
  }
  return rule;
}

TriangleRule triangle_rule(int degree) {
  TriangleRule rule;
  if (degree <= 1) {
    rule.points.emplace_back(1.0 / 3.0, 1.0 / 3.0);
    rule.weights.push_back(1.0);
    rule.degree = 1;
  } else if (degree == 2) {
    add_orbit3(rule, 1.0 / 6.0, 1.0 / 3.0);
    rule.degree = 2;
  } else if (degree <= 4) {
    add_orbit3(rule, 0.445948490915965, 0.223381589678011);
    add_orbit3(rule, 0.091576213509771, 0.109951743655322);
    rule.degree = 4;
  } else if (degree == 5) {
    rule.points.emplace_back(1.0 / 3.0, 1.0 / 3.0);
    rule.weights.push_back(0.225);
    add_orbit3(rule, 0.470142064105115, 0.132394152788506);
    add_orbit3(rule, 0.101286507323456, 0.125939180544827);
    rule.degree = 5;
  } else {
    rule = collapsed_gauss_rule((degree + 3) / 2);
  }
  return rule;
}

PairRule singular_pair_rule(PairType type, int q) {
  if (type == PairType::Regular) throw ConfigError("singular_pair_rule needs a singular pair type");
  if (q < 1) throw ConfigError("singular quadrature order must be >= 1");
  const LineRule g = gauss_legendre(q);
  PairRule rule;
  const int cases = type == PairType::Identical ? 6 : type == PairType::Edge ? 5 : 2;
  for (int c = 0; c < cases; ++c) {
    for (int i0 = 0; i0 < q; ++i0) {
      for (int i1 = 0; i1 < q; ++i1) {
        for (int i2 = 0; i2 < q; ++i2) {
          for (int i3 = 0; i3 < q; ++i3) {
            const double xi = g.nodes[i0], e1 = g.nodes[i1], e2 = g.nodes[i2], e3 = g.nodes[i3];
            const double w = g.weights[i0] * g.weights[i1] * g.weights[i2] * g.weights[i3];
            Eigen::Vector2d x, y;
            double jac = 0.0;
            if (type == PairType::Identical) {
              jac = xi * xi * xi * e1 * e1 * e2;
              switch (c) {
                case 0:
                  x = {xi * e1 * (1 - e2), xi * (1 - e1 * (1 - e2))};
                  y = {xi * e1 * (1 - e2 * e3), xi * (1 - e1)};
                  break;
                case 1:
                  x = {xi * e1 * (1 - e2 * e3), xi * (1 - e1)};
                  y = {xi * e1 * (1 - e2), xi * (1 - e1 * (1 - e2))};
                  break;
                case 2:
                  x = {xi * (1 - e1 * (1 - e2 * (1 - e3))), xi * e1 * (1 - e2 * (1 - e3))};
                  y = {xi * (1 - e1), xi * e1 * (1 - e2)};
                  break;
                case 3:
                  x = {xi * (1 - e1), xi * e1 * (1 - e2)};
                  y = {xi * (1 - e1 * (1 - e2 * (1 - e3))), xi * e1 * (1 - e2 * (1 - e3))};
                  break;
                case 4:
                  x = {xi * (1 - e1), xi * e1 * (1 - e2 * e3)};
                  y = {xi * (1 - e1 * (1 - e2)), xi * e1 * (1 - e2)};
                  break;
                default:
                  x = {xi * (1 - e1 * (1 - e2)), xi * e1 * (1 - e2)};
                  y = {xi * (1 - e1), xi * e1 * (1 - e2 * e3)};
                  break;
              }
            } else if (type == PairType::Edge) {
              jac = xi * xi * xi * e1 * e1 * (c == 0 ? 1.0 : e2);
              switch (c) {
                case 0:
                  x = {xi * (1 - e1 * e3), xi * e1 * e3};
                  y = {xi * (1 - e1), xi * e1 * (1 - e2)};
                  break;
                case 1:
                  x = {xi * (1 - e1), xi * e1};
                  y = {xi * (1 - e1 * e2), xi * e1 * e2 * (1 - e3)};
                  break;
                case 2:
                  x = {xi * (1 - e1), xi * e1 * (1 - e2)};
                  y = {xi * (1 - e1 * e2 * e3), xi * e1 * e2 * e3};
                  break;
                case 3:
                  x = {xi * (1 - e1 * e2), xi * e1 * e2 * (1 - e3)};
                  y = {xi * (1 - e1), xi * e1};
                  break;
                default:
                  x = {xi * (1 - e1), xi * e1 * (1 - e2 * e3)};
                  y = {xi * (1 - e1 * e2), xi * e1 * e2};
                  break;
              }
            } else {
              jac = xi * xi * xi * e2;
              x = {xi * (1 - e1), xi * e1};
              y = {xi * e2 * (1 - e3), xi * e2 * e3};
              if (c == 1) std::swap(x, y);
            }
            rule.x.push_back(x);
            rule.y.push_back(y);
            rule.weights.push_back(4.0 * jac * w);
          }
        }
      }
    }
  }
  return rule;
}

}  // namespace tdbem
