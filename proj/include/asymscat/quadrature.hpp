#pragma once

#include <vector>

namespace asymscat {

struct QuadratureRule {
  enum class Kind { Trapezoid, GaussLegendre };
  Kind kind = Kind::GaussLegendre;
  std::vector<double> nodes;
  std::vector<double> weights;

  int size() const { return static_cast<int>(nodes.size()); }

  template <class F>
  double integrate(F&& f) const {
    double s = 0.0;
    for (std::size_t i = 0; i < nodes.size(); ++i) s += weights[i] * f(nodes[i]);
    return s;
  }
};

/// Gauss-Legendre rule with m nodes mapped to [a, b].
QuadratureRule gauss_legendre(int m, double a, double b);
/// Equispaced rule on one full period [0, period); exact for trigonometric
/// polynomials of degree < m.
QuadratureRule periodic_trapezoid(int m, double period);

}  // namespace asymscat
