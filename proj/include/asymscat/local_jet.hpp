#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <memory>
#include <unordered_map>
#include <vector>

#include "asymscat/poly.hpp"

namespace asymscat {

constexpr int kMaxJetVars = 8;
using JetExponent = std::array<std::uint8_t, kMaxJetVars>;

/// Monomial layout and product tables for truncated Taylor polynomials in
/// nvars variables of total degree <= order. Monomials are graded by degree, so
/// "degree <= d" is always an index prefix.
class JetSpace {
 public:
  static std::shared_ptr<const JetSpace> get(int nvars, int order);

  int nvars() const { return nvars_; }
  int order() const { return order_; }
  int size() const { return static_cast<int>(mons_.size()); }
  const JetExponent& monomial(int i) const { return mons_[i]; }
  int degree_of(int i) const { return deg_[i]; }
  /// Number of monomials of degree <= d.
  int prefix(int d) const;
  /// -1 when the exponent is out of range.
  int index(const JetExponent& e) const;

  /// out += a * b truncated at total degree max_deg.
  void mul_add(const double* a, const double* b, double* out, int max_deg) const;
  /// Index of m_i - e_v, or -1.
  int lower(int v, int i) const { return lower_[v * size() + i]; }
  /// Index of m_i + e_v, or -1 past the order.
  int raise(int v, int i) const { return raise_[v * size() + i]; }

  JetSpace(int nvars, int order);

 private:
  int nvars_, order_;
  std::vector<JetExponent> mons_;
  std::vector<int> deg_;
  std::vector<int> offset_;
  std::vector<int> mul_start_;  // per i, offset into mul_
  std::vector<int> mul_;
  std::vector<int> lower_, raise_;
  std::unordered_map<std::uint64_t, int> lookup_;
};

using JetSpacePtr = std::shared_ptr<const JetSpace>;

/// Truncated multivariate Taylor polynomial on a JetSpace.
class LocalJet {
 public:
  LocalJet() = default;
  explicit LocalJet(JetSpacePtr sp);

  static LocalJet constant(JetSpacePtr sp, double c);
  static LocalJet variable(JetSpacePtr sp, int v);

  const JetSpacePtr& space() const { return sp_; }
  bool valid() const { return sp_ != nullptr; }
  double operator[](int i) const { return c_[i]; }
  double& operator[](int i) { return c_[i]; }
  const std::vector<double>& coefficients() const { return c_; }
  double coef(const JetExponent& e) const;
  double value() const { return c_.empty() ? 0.0 : c_[0]; }
  /// Lowest degree with a nonzero coefficient (order + 1 for the zero jet).
  int valuation() const;
  double max_abs() const;

  LocalJet& operator+=(const LocalJet& o);
  LocalJet& operator-=(const LocalJet& o);
  LocalJet& operator*=(double s);
  LocalJet& operator+=(double s);
  friend LocalJet operator+(LocalJet a, const LocalJet& b) { return a += b; }
  friend LocalJet operator-(LocalJet a, const LocalJet& b) { return a -= b; }
  friend LocalJet operator*(LocalJet a, double s) { return a *= s; }
  friend LocalJet operator*(double s, LocalJet a) { return a *= s; }
  friend LocalJet operator+(LocalJet a, double s) { return a += s; }
  friend LocalJet operator-(LocalJet a) { return a *= -1.0; }
  friend LocalJet operator*(const LocalJet& a, const LocalJet& b);

  LocalJet derivative(int v) const;
  /// Multiply by t_v^p (terms past the order drop).
  LocalJet times_var(int v, int p = 1) const;
  /// Divide by t_v, dropping terms with no t_v factor.
  LocalJet div_var(int v) const;
  LocalJet truncated(int max_deg) const;
  /// Coefficient of t_v^p as a jet independent of t_v.
  LocalJet var_coefficient(int v, int p) const;

  LocalJet reciprocal() const;
  LocalJet sqrt() const;
  /// sum_k c_k (this - value())^k, i.e. a power series around the constant term.
  LocalJet series_about_constant(const std::vector<double>& c) const;

  double eval(const std::vector<double>& t) const;

 private:
  JetSpacePtr sp_;
  std::vector<double> c_;
};

/// Precomputed powers of substitution jets; compose(f) evaluates f(subs) for
/// any f on the source space. Substitutions with zero constant terms keep the
/// truncation exact.
class Substitution {
 public:
  Substitution(JetSpacePtr source, std::vector<LocalJet> subs);
  LocalJet compose(const LocalJet& f) const;

 private:
  JetSpacePtr src_;
  std::vector<LocalJet> powers_;  // indexed by source monomial
};

/// Evaluate an ambient polynomial at jet-valued coordinates.
LocalJet eval_poly(const Poly& p, const std::vector<LocalJet>& z);

/// Dense square matrix of jets, row-major.
struct JetMatrix {
  int dim = 0;
  std::vector<LocalJet> m;
  LocalJet& operator()(int i, int j) { return m[i * dim + j]; }
  const LocalJet& operator()(int i, int j) const { return m[i * dim + j]; }
  Eigen::MatrixXd value() const;
};

JetMatrix jet_identity(const JetSpacePtr& sp, int dim);
JetMatrix operator*(const JetMatrix& a, const JetMatrix& b);
JetMatrix operator+(const JetMatrix& a, const JetMatrix& b);
JetMatrix operator-(const JetMatrix& a, const JetMatrix& b);
/// Gauss-Jordan elimination pivoting on the constant terms. Throws
/// std::domain_error when the constant part is singular.
JetMatrix jet_inverse(const JetMatrix& a);
LocalJet jet_det(const JetMatrix& a);
LocalJet jet_trace(const JetMatrix& a);

}  // namespace asymscat
