#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace asymscat {

constexpr int kMaxAmbient = 8;
using Exponent = std::array<std::uint8_t, kMaxAmbient>;

int total_degree(const Exponent& e);

/// Raised when an exact polynomial operation would exceed the configured degree cap.
class DegreeOverflow : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Real polynomial in the ambient coordinates of R^n, restricted to the sphere
/// |x|^2 = rho^2. Terms are kept in canonical form: the exponent of the last
/// variable is at most one (x_n^2 is rewritten as rho^2 - x_1^2 - ... - x_{n-1}^2),
/// so two polynomials agree on the sphere iff their canonical forms agree.
class Poly {
 public:
  Poly() = default;
  Poly(int nvars, double rho2);

  static Poly constant(int nvars, double rho2, double c);
  static Poly coordinate(int nvars, double rho2, int i);
  static Poly monomial(int nvars, double rho2, const Exponent& e, double c);

  int nvars() const { return n_; }
  double rho2() const { return rho2_; }
  const std::map<Exponent, double>& terms() const { return terms_; }
  bool is_zero() const { return terms_.empty(); }
  int degree() const;
  double max_abs_coef() const;

  /// Adds c * x^e, reducing e to canonical form.
  void add_term(const Exponent& e, double c);

  double eval(std::span<const double> x) const;

  /// Ambient partial derivative of this representative.
  Poly derivative(int i) const;
  /// Euler operator x . grad (degree-weighted coefficients).
  Poly euler() const;
  Poly even_part() const;
  Poly odd_part() const;

  Poly& operator+=(const Poly& o);
  Poly& operator-=(const Poly& o);
  Poly& operator*=(double s);
  friend Poly operator+(Poly a, const Poly& b) { return a += b; }
  friend Poly operator-(Poly a, const Poly& b) { return a -= b; }
  friend Poly operator*(Poly a, double s) { return a *= s; }
  friend Poly operator*(double s, Poly a) { return a *= s; }
  friend Poly operator*(const Poly& a, const Poly& b);
  Poly operator-() const { return *this * -1.0; }

  /// Drops coefficients below rel * max|coef|.
  void prune(double rel = 1e-14);

 private:
  void check_compatible(const Poly& o) const;

  int n_ = 0;
  double rho2_ = 1.0;
  std::map<Exponent, double> terms_;
};

/// All canonical exponents of total degree <= deg, ordered by degree.
std::vector<Exponent> canonical_monomials(int nvars, int deg);

}  // namespace asymscat
