#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "asymscat/laplacian_symbols.hpp"
#include "asymscat/sphere_fields.hpp"

namespace asymscat {

/// gamma(t) = rho (u cos(t/rho) + v sin(t/rho)), unit speed, period 2 pi rho.
struct GreatCircle {
  Eigen::VectorXd u, v;
  double rho = 1.0;

  /// Throws std::invalid_argument unless u, v are orthonormal to 1e-12.
  static GreatCircle make(const Eigen::VectorXd& u, const Eigen::VectorXd& v, double rho);
  Eigen::VectorXd point(double t) const;
  Eigen::VectorXd tangent(double t) const;
  double period() const;
  /// Same circle started theta0 (in s = t/rho) later.
  GreatCircle rotated(double theta0) const;
};

/// Seeded great-circle family. On S^2 the frames come from a Halton sequence
/// mapped to rotations; in higher dimensions from seeded Gaussian frames.
std::vector<GreatCircle> geodesic_family(const SphereSpec& spec, int count, std::uint64_t seed);

struct TransformValue {
  double value = 0.0;
  double richardson = 0.0;  // |Q_M - Q_2M|
  bool under_resolved = false;
};

struct QuadratureOptions {
  int gauss_nodes = 64;
  int trapezoid_nodes = 256;
  double resolution_tol = 1e-10;
  bool check = true;  // run the M vs 2M comparison
};

/// Weighted integrand on the energy circle: f(tau, mu, y) with mu an ambient
/// covector tangent at y.
using ScalarSymbol = std::function<double(double tau, const Eigen::VectorXd& mu, const Eigen::VectorXd& y)>;

/// int_0^{pi rho} f(|lambda| cos s, |lambda| sin s gamma'(t), gamma(t)) sin(s)^{k-1} dt, s = t / rho.
TransformValue weighted_symbol_transform(const ScalarSymbol& f, const GreatCircle& g, int k, double lambda,
                                         const QuadratureOptions& q = {});
/// Quadratic tau-independent symbol: |lambda|^2 int T_k(gamma, gamma', gamma') sin(s)^{k+1} dt.
TransformValue weighted_symbol_transform(const SymbolQuadratic& f, const GreatCircle& g, int k, double lambda,
                                         const QuadratureOptions& q = {});

/// int_0^{pi rho} W(gamma)(gamma', gamma') sin(t/rho)^m dt.
TransformValue tensor_transform(const BoundaryField& W, const GreatCircle& g, int m, const QuadratureOptions& q = {});
TransformValue tensor_transform(const FieldEvaluator& W, const GreatCircle& g, int m, const QuadratureOptions& q = {});
/// Scalar analogue: int_0^{pi rho} f(gamma) sin(t/rho)^m dt.
TransformValue scalar_transform(const FieldEvaluator& f, const GreatCircle& g, int m, const QuadratureOptions& q = {});

/// int_0^{2 pi rho} p(gamma) W(gamma)(gamma', gamma') dt by the periodic trapezoid rule.
TransformValue moment_transform(const BoundaryField& W, const GreatCircle& g, const Poly& p,
                                const QuadratureOptions& q = {});
TransformValue moment_transform(const FieldEvaluator& W, const GreatCircle& g, const Poly& p,
                                const QuadratureOptions& q = {});

struct ShiftOdeReport {
  double residual = 0.0;   // max_alpha |I_m'' + c I_m - m(m-1) I_{m-2}|
  double endpoint0 = 0.0;  // max |I_0' - (G(a+pi) - G(a))|
  double endpoint1 = 0.0;  // max |I_1 + I_1'' - (G(a+pi) + G(a))|
  bool under_resolved = false;
  std::vector<double> alpha, I;  // I_m on the grid
};

/// Requires rho = 1 and alpha_count >= 64. `literal_coefficient` uses c = m
/// (as printed) instead of m^2.
ShiftOdeReport shift_ode_residual(const BoundaryField& W, const GreatCircle& g, int m, int alpha_count = 64,
                                  bool literal_coefficient = false, const QuadratureOptions& q = {});

// ---- samples ---------------------------------------------------------------------

struct RaySample {
  int geodesic = 0;  // index into RaySampleSet::geodesics
  int m = 0;         // weight exponent
  double lambda = 1.0;
  double value = 0.0;
  int moment = -1;   // full-period moment row (index into the caller's moment list), -1 if weighted
};

struct RaySampleSet {
  enum class Provenance { ForwardSimulated, Ingested };
  Provenance provenance = Provenance::ForwardSimulated;
  std::vector<GreatCircle> geodesics;
  std::vector<RaySample> samples;
};

/// Integer power with sin^0 = 1.
double sin_power(double s, int m);

}  // namespace asymscat
