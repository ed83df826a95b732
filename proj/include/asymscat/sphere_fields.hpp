#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "asymscat/poly.hpp"

namespace asymscat {

/// Boundary sphere S^{n-1} of radius rho inside R^n.
struct SphereSpec {
  int n = 3;
  double rho = 1.0;
  /// Maximum ambient degree of any stored field component.
  int degree_cap = 40;

  int boundary_dim() const { return n - 1; }
  double rho2() const { return rho * rho; }
  void validate() const;
  bool operator==(const SphereSpec&) const = default;
};

enum class Rank { Scalar, Covector, Vector, Sym2 };

int tensor_order(Rank r);
std::string rank_name(Rank r);
Rank rank_from_name(const std::string& s);

/// Field on the boundary sphere with ambient polynomial components. Vector,
/// covector and sym2 fields are expected to be tangential (see project_tangential).
class BoundaryField {
 public:
  BoundaryField() = default;
  BoundaryField(Rank rank, const SphereSpec& spec);

  static BoundaryField scalar(const SphereSpec& spec, Poly p);
  static BoundaryField vector(const SphereSpec& spec, std::vector<Poly> comps, Rank r = Rank::Vector);
  static BoundaryField sym2(const SphereSpec& spec, const std::vector<std::vector<Poly>>& comps);

  Rank rank() const { return rank_; }
  const SphereSpec& spec() const { return spec_; }
  int component_count() const { return static_cast<int>(comps_.size()); }

  const Poly& comp(int i) const { return comps_.at(i); }
  const Poly& comp(int i, int j) const { return comps_.at(i * spec_.n + j); }
  /// Raw component storage: 1 (scalar), n (vector/covector), n*n row-major (sym2).
  const std::vector<Poly>& components() const { return comps_; }

  void set(int i, Poly p);
  /// Sets both (i,j) and (j,i) of a sym2 field.
  void set(int i, int j, Poly p);

  int degree() const;
  bool is_zero() const;
  /// Throws DegreeOverflow when the stored degree exceeds spec.degree_cap.
  void check_cap(const char* where) const;

  double eval_scalar(const Eigen::VectorXd& x) const;
  Eigen::VectorXd eval_vector(const Eigen::VectorXd& x) const;
  Eigen::MatrixXd eval_sym2(const Eigen::VectorXd& x) const;
  /// Flat component values at x (same layout as components()).
  Eigen::VectorXd eval_flat(const Eigen::VectorXd& x) const;

  BoundaryField& operator+=(const BoundaryField& o);
  BoundaryField& operator-=(const BoundaryField& o);
  BoundaryField& operator*=(double s);
  friend BoundaryField operator+(BoundaryField a, const BoundaryField& b) { return a += b; }
  friend BoundaryField operator-(BoundaryField a, const BoundaryField& b) { return a -= b; }
  friend BoundaryField operator*(BoundaryField a, double s) { return a *= s; }
  friend BoundaryField operator*(double s, BoundaryField a) { return a *= s; }
  /// Pointwise product with a scalar polynomial.
  BoundaryField times(const Poly& p) const;

 private:
  void check_same(const BoundaryField& o) const;

  Rank rank_ = Rank::Scalar;
  SphereSpec spec_;
  std::vector<Poly> comps_;
};

// ---- construction helpers ------------------------------------------------

Poly constant_poly(const SphereSpec& spec, double c);
Poly coordinate_poly(const SphereSpec& spec, int i);

/// Tangential projector delta_ij - x_i x_j / rho^2; as a sym2 field this is the
/// round metric g_eps induced on the radius-rho sphere.
BoundaryField projector(const SphereSpec& spec);
inline BoundaryField round_metric(const SphereSpec& spec) { return projector(spec); }

/// P M P for sym2 M, P v for vectors/covectors; scalars returned unchanged.
BoundaryField project_tangential(const BoundaryField& m);

/// (even, odd) parts under pullback by the antipodal map.
std::pair<BoundaryField, BoundaryField> antipodal_parity_split(const BoundaryField& t);

// ---- extrinsic calculus --------------------------------------------------

/// Tangential gradient components grad f - x (x.grad f)/rho^2, exact on the sphere.
std::vector<Poly> tangential_gradient(const Poly& f, const SphereSpec& spec);
BoundaryField gradient(const BoundaryField& f);
/// Covariant derivative of a tangent vector field: result(c, a) = nabla_c X_a.
std::vector<Poly> covariant_derivative(const BoundaryField& x);
BoundaryField lie_derivative_round_metric(const BoundaryField& x);
BoundaryField divergence(const BoundaryField& t);
/// Laplace-Beltrami div grad (non-positive spectrum).
BoundaryField laplace_beltrami(const BoundaryField& f);
BoundaryField trace(const BoundaryField& k);

/// div div K + Delta_+ Tr K - c Tr K with Delta_+ = -div grad. Vanishes for
/// Lie derivatives of the round metric at c = (n_b - 1)/rho^2.
BoundaryField michel_residual(const BoundaryField& k, double c);

struct MichelCalibration {
  double c_star = 0.0;
  double fit_residual = 0.0;  // sup-norm of the residual at c_star over the calibration set
};
/// Least-squares fit of c over michel_residual(L_X g_eps, c) = 0 for the given X.
MichelCalibration calibrate_michel_constant(const std::vector<BoundaryField>& generators,
                                            const std::vector<Eigen::VectorXd>& points);

// ---- sampling -----------------------------------------------------------

/// Deterministic point set on the sphere (Fibonacci lattice for n = 3).
/// Flattened evaluator for repeated point evaluation of one field.
class FieldEvaluator {
 public:
  FieldEvaluator() = default;
  explicit FieldEvaluator(const BoundaryField& f);

  int component_count() const { return static_cast<int>(start_.size()) - 1; }
  /// All raw components at x (length component_count()).
  void eval(const double* x, double* out) const;
  double scalar(const double* x) const;
  /// v^T W(x) v for a sym2 field.
  double quadratic(const double* x, const double* v) const;

 private:
  void powers(const double* x, double* pw) const;
  int n_ = 0, deg_ = 0;
  std::vector<int> start_;            // term ranges per component
  std::vector<std::uint8_t> exps_;    // n_ per term
  std::vector<double> coefs_;
};

/// q(x) = p(R^T x) for an orthogonal R.
Poly rotate_poly(const Poly& p, const Eigen::MatrixXd& R);
/// Push-forward under the isometry x -> R x: f'(x) = R . f(R^T x), tensor slots rotated.
BoundaryField rotate_field(const BoundaryField& f, const Eigen::MatrixXd& R);

std::vector<Eigen::VectorXd> sample_points(const SphereSpec& spec, int count);
/// Max absolute component value over the given points.
double sup_norm(const BoundaryField& f, const std::vector<Eigen::VectorXd>& points);
/// Max |value| of g(V,V)-style tangential residual: max over points of |P f(x) nu| for sym2.
double normal_leakage(const BoundaryField& f, const std::vector<Eigen::VectorXd>& points);

Poly random_poly(const SphereSpec& spec, int degree, std::mt19937_64& rng, double scale = 1.0);
/// Random tangent vector field P v with v of ambient degree <= degree.
BoundaryField random_tangent_vector(const SphereSpec& spec, int degree, std::mt19937_64& rng,
                                    double scale = 1.0);
/// Random tangential sym2 field P M P with M of ambient degree <= degree.
BoundaryField random_sym2(const SphereSpec& spec, int degree, std::mt19937_64& rng, double scale = 1.0);

}  // namespace asymscat
