#include "asymscat/local_jet.hpp"

#include <cmath>
#include <map>
#include <mutex>
#include <stdexcept>

namespace asymscat {

namespace {

std::uint64_t encode(const JetExponent& e, int nvars, int base) {
  std::uint64_t key = 0;
  for (int v = 0; v < nvars; ++v) key = key * base + e[v];
  return key;
}

std::mutex& registry_mutex() {
  static std::mutex m;
  return m;
}

std::map<std::pair<int, int>, std::shared_ptr<const JetSpace>>& registry() {
  static std::map<std::pair<int, int>, std::shared_ptr<const JetSpace>> r;
  return r;
}

void enumerate(int nvars, int deg, int v, JetExponent& cur, std::vector<JetExponent>& out) {
  if (v == nvars - 1) {
    cur[v] = static_cast<std::uint8_t>(deg);
    out.push_back(cur);
    return;
  }
  for (int a = deg; a >= 0; --a) {
    cur[v] = static_cast<std::uint8_t>(a);
    enumerate(nvars, deg - a, v + 1, cur, out);
  }
  cur[v] = 0;
}

}  // namespace

JetSpace::JetSpace(int nvars, int order) : nvars_(nvars), order_(order) {
  if (nvars < 1 || nvars > kMaxJetVars) throw std::invalid_argument("JetSpace: bad variable count");
  if (order < 0 || order > 60) throw std::invalid_argument("JetSpace: bad order");
  for (int d = 0; d <= order; ++d) {
    offset_.push_back(static_cast<int>(mons_.size()));
    JetExponent cur{};
    enumerate(nvars, d, 0, cur, mons_);
  }
  offset_.push_back(static_cast<int>(mons_.size()));
  for (const auto& m : mons_) {
    int d = 0;
    for (int v = 0; v < nvars; ++v) d += m[v];
    deg_.push_back(d);
  }
}

std::shared_ptr<const JetSpace> JetSpace::get(int nvars, int order) {
  std::lock_guard<std::mutex> lock(registry_mutex());
  auto& reg = registry();
  auto it = reg.find({nvars, order});
  if (it != reg.end()) return it->second;

  auto sp = std::make_shared<JetSpace>(nvars, order);
  const int n = sp->size();
  for (int i = 0; i < n; ++i) sp->lookup_[encode(sp->mons_[i], nvars, order + 1)] = i;
  auto lookup = [&](const JetExponent& e) {
    auto f = sp->lookup_.find(encode(e, nvars, order + 1));
    return f == sp->lookup_.end() ? -1 : f->second;
  };

  sp->mul_start_.resize(n + 1);
  int total = 0;
  for (int i = 0; i < n; ++i) {
    sp->mul_start_[i] = total;
    total += sp->prefix(order - sp->deg_[i]);
  }
  sp->mul_start_[n] = total;
  sp->mul_.resize(total);
  for (int i = 0; i < n; ++i) {
    const int lim = sp->prefix(order - sp->deg_[i]);
    for (int j = 0; j < lim; ++j) {
      JetExponent e{};
      for (int v = 0; v < nvars; ++v) e[v] = static_cast<std::uint8_t>(sp->mons_[i][v] + sp->mons_[j][v]);
      sp->mul_[sp->mul_start_[i] + j] = lookup(e);
    }
  }
  sp->lower_.assign(static_cast<std::size_t>(nvars) * n, -1);
  sp->raise_.assign(static_cast<std::size_t>(nvars) * n, -1);
  for (int v = 0; v < nvars; ++v) {
    for (int i = 0; i < n; ++i) {
      JetExponent e = sp->mons_[i];
      if (e[v] > 0) {
        --e[v];
        sp->lower_[v * n + i] = lookup(e);
        ++e[v];
      }
      if (sp->deg_[i] < order) {
        ++e[v];
        sp->raise_[v * n + i] = lookup(e);
      }
    }
  }
  reg[{nvars, order}] = sp;
  return sp;
}

int JetSpace::prefix(int d) const {
  if (d < 0) return 0;
  if (d > order_) return size();
  return offset_[d + 1];
}

int JetSpace::index(const JetExponent& e) const {
  int d = 0;
  for (int v = 0; v < nvars_; ++v) d += e[v];
  for (int v = nvars_; v < kMaxJetVars; ++v)
    if (e[v] != 0) return -1;
  if (d > order_) return -1;
  auto f = lookup_.find(encode(e, nvars_, order_ + 1));
  return f == lookup_.end() ? -1 : f->second;
}

void JetSpace::mul_add(const double* a, const double* b, double* out, int max_deg) const {
  if (max_deg > order_) max_deg = order_;
  const int n = size();
  thread_local std::vector<int> nzb;
  nzb.clear();
  const int blim = prefix(max_deg);
  for (int j = 0; j < blim; ++j)
    if (b[j] != 0.0) nzb.push_back(j);
  if (nzb.empty()) return;
  const int alim = prefix(max_deg - deg_[nzb.front()]);
  for (int i = 0; i < alim && i < n; ++i) {
    const double ai = a[i];
    if (ai == 0.0) continue;
    const int lim = prefix(max_deg - deg_[i]);
    const int* row = &mul_[mul_start_[i]];
    for (int j : nzb) {
      if (j >= lim) break;
      out[row[j]] += ai * b[j];
    }
  }
}

// ---- LocalJet -----------------------------------------------------------

LocalJet::LocalJet(JetSpacePtr sp) : sp_(std::move(sp)), c_(sp_->size(), 0.0) {}

LocalJet LocalJet::constant(JetSpacePtr sp, double c) {
  LocalJet j(std::move(sp));
  j.c_[0] = c;
  return j;
}

LocalJet LocalJet::variable(JetSpacePtr sp, int v) {
  LocalJet j(sp);
  if (sp->order() >= 1) j.c_[sp->raise(v, 0)] = 1.0;
  return j;
}

double LocalJet::coef(const JetExponent& e) const {
  const int i = sp_->index(e);
  return i < 0 ? 0.0 : c_[i];
}

int LocalJet::valuation() const {
  for (int i = 0; i < static_cast<int>(c_.size()); ++i)
    if (c_[i] != 0.0) return sp_->degree_of(i);
  return sp_ ? sp_->order() + 1 : 0;
}

double LocalJet::max_abs() const {
  double m = 0.0;
  for (double v : c_) m = std::max(m, std::abs(v));
  return m;
}

LocalJet& LocalJet::operator+=(const LocalJet& o) {
  if (!o.valid()) return *this;
  if (!valid()) return *this = o;
  for (std::size_t i = 0; i < c_.size(); ++i) c_[i] += o.c_[i];
  return *this;
}

LocalJet& LocalJet::operator-=(const LocalJet& o) {
  if (!o.valid()) return *this;
  if (!valid()) {
    *this = o;
    return *this *= -1.0;
  }
  for (std::size_t i = 0; i < c_.size(); ++i) c_[i] -= o.c_[i];
  return *this;
}

LocalJet& LocalJet::operator*=(double s) {
  for (double& v : c_) v *= s;
  return *this;
}

LocalJet& LocalJet::operator+=(double s) {
  c_.at(0) += s;
  return *this;
}

LocalJet operator*(const LocalJet& a, const LocalJet& b) {
  if (!a.valid()) return a;
  if (!b.valid()) return b;
  LocalJet out(a.sp_);
  a.sp_->mul_add(a.c_.data(), b.c_.data(), out.c_.data(), a.sp_->order());
  return out;
}

LocalJet LocalJet::derivative(int v) const {
  LocalJet out(sp_);
  for (int i = 0; i < sp_->size(); ++i) {
    const int lo = sp_->lower(v, i);
    if (lo >= 0 && c_[i] != 0.0) out.c_[lo] = c_[i] * sp_->monomial(i)[v];
  }
  return out;
}

LocalJet LocalJet::times_var(int v, int p) const {
  LocalJet out = *this;
  for (int k = 0; k < p; ++k) {
    LocalJet next(sp_);
    for (int i = 0; i < sp_->size(); ++i) {
      const int hi = sp_->raise(v, i);
      if (hi >= 0) next.c_[hi] = out.c_[i];
    }
    out = std::move(next);
  }
  return out;
}

LocalJet LocalJet::div_var(int v) const {
  LocalJet out(sp_);
  for (int i = 0; i < sp_->size(); ++i) {
    const int lo = sp_->lower(v, i);
    if (lo >= 0) out.c_[lo] = c_[i];
  }
  return out;
}

LocalJet LocalJet::truncated(int max_deg) const {
  LocalJet out = *this;
  for (int i = sp_->prefix(max_deg); i < sp_->size(); ++i) out.c_[i] = 0.0;
  return out;
}

LocalJet LocalJet::var_coefficient(int v, int p) const {
  LocalJet out(sp_);
  for (int i = 0; i < sp_->size(); ++i) {
    if (sp_->monomial(i)[v] != p || c_[i] == 0.0) continue;
    JetExponent e = sp_->monomial(i);
    e[v] = 0;
    out.c_[sp_->index(e)] = c_[i];
  }
  return out;
}

LocalJet LocalJet::series_about_constant(const std::vector<double>& c) const {
  LocalJet delta = *this;
  delta.c_[0] = 0.0;
  const int val = delta.valuation();
  int terms = static_cast<int>(c.size()) - 1;
  if (val >= 1) terms = std::min(terms, sp_->order() / val);
  LocalJet out = LocalJet::constant(sp_, c[terms]);
  for (int k = terms - 1; k >= 0; --k) {
    out = out * delta;
    out.c_[0] += c[k];
  }
  return out;
}

LocalJet LocalJet::reciprocal() const {
  const double a0 = value();
  if (a0 == 0.0) throw std::domain_error("LocalJet::reciprocal: zero constant term");
  std::vector<double> c(sp_->order() + 1);
  double p = 1.0 / a0;
  for (auto& ck : c) {
    ck = p;
    p *= -1.0 / a0;
  }
  return series_about_constant(c);
}

LocalJet LocalJet::sqrt() const {
  const double a0 = value();
  if (a0 <= 0.0) throw std::domain_error("LocalJet::sqrt: non-positive constant term");
  std::vector<double> c(sp_->order() + 1);
  double binom = 1.0, p = std::sqrt(a0);
  for (int k = 0; k < static_cast<int>(c.size()); ++k) {
    c[k] = binom * p;
    binom *= (0.5 - k) / (k + 1);
    p /= a0;
  }
  return series_about_constant(c);
}

double LocalJet::eval(const std::vector<double>& t) const {
  double s = 0.0;
  for (int i = 0; i < sp_->size(); ++i) {
    if (c_[i] == 0.0) continue;
    double term = c_[i];
    const auto& m = sp_->monomial(i);
    for (int v = 0; v < sp_->nvars(); ++v)
      for (int k = 0; k < m[v]; ++k) term *= t[v];
    s += term;
  }
  return s;
}

// ---- composition --------------------------------------------------------

Substitution::Substitution(JetSpacePtr source, std::vector<LocalJet> subs) : src_(std::move(source)) {
  if (static_cast<int>(subs.size()) != src_->nvars())
    throw std::invalid_argument("Substitution: one jet per source variable required");
  const auto& target = subs.front().space();
  powers_.resize(src_->size());
  powers_[0] = LocalJet::constant(target, 1.0);
  for (int i = 1; i < src_->size(); ++i) {
    const auto& m = src_->monomial(i);
    int v = 0;
    while (m[v] == 0) ++v;
    powers_[i] = powers_[src_->lower(v, i)] * subs[v];
  }
}

LocalJet Substitution::compose(const LocalJet& f) const {
  LocalJet out(powers_[0].space());
  const int m = out.space()->size();
  for (int i = 0; i < src_->size(); ++i) {
    const double fi = f[i];
    if (fi == 0.0) continue;
    const auto& p = powers_[i].coefficients();
    for (int k = 0; k < m; ++k) out[k] += fi * p[k];
  }
  return out;
}

LocalJet eval_poly(const Poly& p, const std::vector<LocalJet>& z) {
  const auto& sp = z.front().space();
  LocalJet out(sp);
  std::vector<std::vector<LocalJet>> pw(z.size());
  for (const auto& [e, coef] : p.terms()) {
    LocalJet term = LocalJet::constant(sp, coef);
    for (std::size_t v = 0; v < z.size(); ++v) {
      if (e[v] == 0) continue;
      auto& tbl = pw[v];
      if (tbl.empty()) tbl.push_back(LocalJet::constant(sp, 1.0));
      while (static_cast<int>(tbl.size()) <= e[v]) tbl.push_back(tbl.back() * z[v]);
      term = term * tbl[e[v]];
    }
    out += term;
  }
  return out;
}

// ---- matrices -----------------------------------------------------------

Eigen::MatrixXd JetMatrix::value() const {
  Eigen::MatrixXd v(dim, dim);
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j < dim; ++j) v(i, j) = (*this)(i, j).value();
  return v;
}

JetMatrix jet_identity(const JetSpacePtr& sp, int dim) {
  JetMatrix r{dim, std::vector<LocalJet>(dim * dim, LocalJet(sp))};
  for (int i = 0; i < dim; ++i) r(i, i) = LocalJet::constant(sp, 1.0);
  return r;
}

JetMatrix operator*(const JetMatrix& a, const JetMatrix& b) {
  const auto& sp = a.m.front().space();
  JetMatrix r{a.dim, std::vector<LocalJet>(a.dim * a.dim, LocalJet(sp))};
  for (int i = 0; i < a.dim; ++i)
    for (int j = 0; j < a.dim; ++j)
      for (int k = 0; k < a.dim; ++k) r(i, j) += a(i, k) * b(k, j);
  return r;
}

JetMatrix operator+(const JetMatrix& a, const JetMatrix& b) {
  JetMatrix r = a;
  for (std::size_t i = 0; i < r.m.size(); ++i) r.m[i] += b.m[i];
  return r;
}

JetMatrix operator-(const JetMatrix& a, const JetMatrix& b) {
  JetMatrix r = a;
  for (std::size_t i = 0; i < r.m.size(); ++i) r.m[i] -= b.m[i];
  return r;
}

JetMatrix jet_inverse(const JetMatrix& a) {
  const int d = a.dim;
  JetMatrix w = a;
  JetMatrix inv = jet_identity(a.m.front().space(), d);
  for (int col = 0; col < d; ++col) {
    int piv = col;
    for (int r = col + 1; r < d; ++r)
      if (std::abs(w(r, col).value()) > std::abs(w(piv, col).value())) piv = r;
    if (std::abs(w(piv, col).value()) < 1e-300) throw std::domain_error("jet_inverse: singular leading matrix");
    if (piv != col)
      for (int j = 0; j < d; ++j) {
        std::swap(w(piv, j), w(col, j));
        std::swap(inv(piv, j), inv(col, j));
      }
    const LocalJet rp = w(col, col).reciprocal();
    for (int j = 0; j < d; ++j) {
      w(col, j) = w(col, j) * rp;
      inv(col, j) = inv(col, j) * rp;
    }
    for (int r = 0; r < d; ++r) {
      if (r == col) continue;
      const LocalJet f = w(r, col);
      if (f.max_abs() == 0.0) continue;
      for (int j = 0; j < d; ++j) {
        w(r, j) -= f * w(col, j);
        inv(r, j) -= f * inv(col, j);
      }
    }
  }
  return inv;
}

LocalJet jet_det(const JetMatrix& a) {
  const int d = a.dim;
  JetMatrix w = a;
  LocalJet det = LocalJet::constant(a.m.front().space(), 1.0);
  for (int col = 0; col < d; ++col) {
    int piv = col;
    for (int r = col + 1; r < d; ++r)
      if (std::abs(w(r, col).value()) > std::abs(w(piv, col).value())) piv = r;
    if (std::abs(w(piv, col).value()) < 1e-300) throw std::domain_error("jet_det: singular leading matrix");
    if (piv != col) {
      for (int j = 0; j < d; ++j) std::swap(w(piv, j), w(col, j));
      det *= -1.0;
    }
    det = det * w(col, col);
    const LocalJet rp = w(col, col).reciprocal();
    for (int r = col + 1; r < d; ++r) {
      const LocalJet f = w(r, col) * rp;
      for (int j = col; j < d; ++j) w(r, j) -= f * w(col, j);
    }
  }
  return det;
}

LocalJet jet_trace(const JetMatrix& a) {
  LocalJet t(a.m.front().space());
  for (int i = 0; i < a.dim; ++i) t += a(i, i);
  return t;
}

}  // namespace asymscat
