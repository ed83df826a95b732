#include "asymscat/poly.hpp"

#include <algorithm>
#include <cmath>

namespace asymscat {

int total_degree(const Exponent& e) {
  int d = 0;
  for (auto v : e) d += v;
  return d;
}

Poly::Poly(int nvars, double rho2) : n_(nvars), rho2_(rho2) {
  if (nvars < 1 || nvars > kMaxAmbient) throw std::invalid_argument("Poly: unsupported variable count");
}

Poly Poly::constant(int nvars, double rho2, double c) {
  Poly p(nvars, rho2);
  p.add_term(Exponent{}, c);
  return p;
}

Poly Poly::coordinate(int nvars, double rho2, int i) {
  Poly p(nvars, rho2);
  Exponent e{};
  e[i] = 1;
  p.add_term(e, 1.0);
  return p;
}

Poly Poly::monomial(int nvars, double rho2, const Exponent& e, double c) {
  Poly p(nvars, rho2);
  p.add_term(e, c);
  return p;
}

int Poly::degree() const {
  int d = -1;
  for (const auto& [e, c] : terms_) d = std::max(d, total_degree(e));
  return d;
}

double Poly::max_abs_coef() const {
  double m = 0.0;
  for (const auto& [e, c] : terms_) m = std::max(m, std::abs(c));
  return m;
}

void Poly::add_term(const Exponent& e, double c) {
  if (c == 0.0) return;
  const int last = n_ - 1;
  if (e[last] >= 2) {
    Exponent base = e;
    base[last] -= 2;
    add_term(base, c * rho2_);
    for (int i = 0; i < last; ++i) {
      Exponent t = base;
      t[i] += 2;
      add_term(t, -c);
    }
    return;
  }
  auto [it, inserted] = terms_.try_emplace(e, c);
  if (!inserted) {
    it->second += c;
    if (it->second == 0.0) terms_.erase(it);
  }
}

double Poly::eval(std::span<const double> x) const {
  if (terms_.empty()) return 0.0;
  const int deg = degree();
  // powers[i][k] = x_i^k
  std::array<std::array<double, 64>, kMaxAmbient> pw{};
  if (deg >= 64) throw DegreeOverflow("Poly::eval: degree too large");
  for (int i = 0; i < n_; ++i) {
    pw[i][0] = 1.0;
    for (int k = 1; k <= deg; ++k) pw[i][k] = pw[i][k - 1] * x[i];
  }
  double s = 0.0;
  for (const auto& [e, c] : terms_) {
    double m = c;
    for (int i = 0; i < n_; ++i) m *= pw[i][e[i]];
    s += m;
  }
  return s;
}

Poly Poly::derivative(int i) const {
  Poly d(n_, rho2_);
  for (const auto& [e, c] : terms_) {
    if (e[i] == 0) continue;
    Exponent t = e;
    t[i] -= 1;
    d.add_term(t, c * e[i]);
  }
  return d;
}

Poly Poly::euler() const {
  Poly d(n_, rho2_);
  for (const auto& [e, c] : terms_) {
    const int k = total_degree(e);
    if (k > 0) d.terms_.emplace(e, c * k);
  }
  return d;
}

Poly Poly::even_part() const {
  Poly d(n_, rho2_);
  for (const auto& [e, c] : terms_)
    if (total_degree(e) % 2 == 0) d.terms_.emplace(e, c);
  return d;
}

Poly Poly::odd_part() const {
  Poly d(n_, rho2_);
  for (const auto& [e, c] : terms_)
    if (total_degree(e) % 2 == 1) d.terms_.emplace(e, c);
  return d;
}

void Poly::check_compatible(const Poly& o) const {
  if (o.n_ != n_ || o.rho2_ != rho2_) throw std::invalid_argument("Poly: mismatched sphere");
}

Poly& Poly::operator+=(const Poly& o) {
  if (n_ == 0) {
    *this = o;
    return *this;
  }
  if (o.n_ == 0) return *this;
  check_compatible(o);
  for (const auto& [e, c] : o.terms_) add_term(e, c);
  return *this;
}

Poly& Poly::operator-=(const Poly& o) {
  if (o.n_ == 0) return *this;
  if (n_ == 0) {
    *this = Poly(o.n_, o.rho2_);
  }
  check_compatible(o);
  for (const auto& [e, c] : o.terms_) add_term(e, -c);
  return *this;
}

Poly& Poly::operator*=(double s) {
  if (s == 0.0) {
    terms_.clear();
    return *this;
  }
  for (auto& [e, c] : terms_) c *= s;
  return *this;
}

Poly operator*(const Poly& a, const Poly& b) {
  if (a.n_ == 0 || b.n_ == 0) return Poly{};
  a.check_compatible(b);
  Poly r(a.n_, a.rho2_);
  for (const auto& [ea, ca] : a.terms_) {
    for (const auto& [eb, cb] : b.terms_) {
      Exponent e;
      for (int i = 0; i < kMaxAmbient; ++i) e[i] = static_cast<std::uint8_t>(ea[i] + eb[i]);
      r.add_term(e, ca * cb);
    }
  }
  r.prune();
  return r;
}

void Poly::prune(double rel) {
  const double cut = rel * max_abs_coef();
  std::erase_if(terms_, [cut](const auto& kv) { return std::abs(kv.second) <= cut; });
}

std::vector<Exponent> canonical_monomials(int nvars, int deg) {
  std::vector<Exponent> out;
  for (int d = 0; d <= deg; ++d) {
    // enumerate exponents of total degree d with last exponent <= 1
    std::vector<Exponent> layer;
    Exponent e{};
    auto rec = [&](auto&& self, int var, int remaining) -> void {
      if (var == nvars - 1) {
        if (remaining <= 1) {
          e[var] = static_cast<std::uint8_t>(remaining);
          layer.push_back(e);
          e[var] = 0;
        }
        return;
      }
      for (int k = remaining; k >= 0; --k) {
        e[var] = static_cast<std::uint8_t>(k);
        self(self, var + 1, remaining - k);
      }
      e[var] = 0;
    };
    rec(rec, 0, d);
    out.insert(out.end(), layer.begin(), layer.end());
  }
  return out;
}

}  // namespace asymscat
