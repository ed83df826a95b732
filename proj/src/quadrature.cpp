#include "asymscat/quadrature.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace asymscat {

QuadratureRule gauss_legendre(int m, double a, double b) {
  if (m < 2) throw std::invalid_argument("gauss_legendre: need at least 2 nodes");
  QuadratureRule q;
  q.kind = QuadratureRule::Kind::GaussLegendre;
  q.nodes.resize(m);
  q.weights.resize(m);
  const double half = 0.5 * (b - a), mid = 0.5 * (b + a);
  for (int i = 0; i < (m + 1) / 2; ++i) {
    // Tricomi initial guess, then Newton on P_m
    double z = std::cos(std::numbers::pi * (i + 0.75) / (m + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = z;
      for (int k = 2; k <= m; ++k) {
        const double p2 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      if (m == 1) p1 = z;
      dp = m * (z * p1 - p0) / (z * z - 1.0);
      const double dz = p1 / dp;
      z -= dz;
      if (std::abs(dz) < 1e-16) break;
    }
    {
      double p0 = 1.0, p1 = z;
      for (int k = 2; k <= m; ++k) {
        const double p2 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = m * (z * p1 - p0) / (z * z - 1.0);
    }
    const double w = 2.0 / ((1.0 - z * z) * dp * dp);
    q.nodes[i] = mid - half * z;
    q.nodes[m - 1 - i] = mid + half * z;
    q.weights[i] = q.weights[m - 1 - i] = w * half;
  }
  return q;
}

QuadratureRule periodic_trapezoid(int m, double period) {
  if (m < 2) throw std::invalid_argument("periodic_trapezoid: need at least 2 nodes");
  QuadratureRule q;
  q.kind = QuadratureRule::Kind::Trapezoid;
  q.nodes.resize(m);
  q.weights.assign(m, period / m);
  for (int i = 0; i < m; ++i) q.nodes[i] = period * i / m;
  return q;
}

}  // namespace asymscat
