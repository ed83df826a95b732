#include "asymscat/sphere_fields.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace asymscat {

void SphereSpec::validate() const {
  if (n < 3) throw std::invalid_argument("SphereSpec: n must be >= 3");
  if (n > kMaxAmbient) throw std::invalid_argument("SphereSpec: n too large");
  if (!(rho > 0.0)) throw std::invalid_argument("SphereSpec: rho must be positive");
  if (degree_cap < 0) throw std::invalid_argument("SphereSpec: degree cap must be >= 0");
}

int tensor_order(Rank r) {
  switch (r) {
    case Rank::Scalar: return 0;
    case Rank::Covector:
    case Rank::Vector: return 1;
    case Rank::Sym2: return 2;
  }
  return 0;
}

std::string rank_name(Rank r) {
  switch (r) {
    case Rank::Scalar: return "scalar";
    case Rank::Covector: return "covector";
    case Rank::Vector: return "vector";
    case Rank::Sym2: return "sym2";
  }
  return "scalar";
}

Rank rank_from_name(const std::string& s) {
  if (s == "scalar") return Rank::Scalar;
  if (s == "covector") return Rank::Covector;
  if (s == "vector") return Rank::Vector;
  if (s == "sym2") return Rank::Sym2;
  throw std::invalid_argument("unknown rank '" + s + "'");
}

namespace {

int count_for(Rank r, int n) {
  switch (tensor_order(r)) {
    case 0: return 1;
    case 1: return n;
    default: return n * n;
  }
}

}  // namespace

BoundaryField::BoundaryField(Rank rank, const SphereSpec& spec) : rank_(rank), spec_(spec) {
  spec_.validate();
  comps_.assign(count_for(rank, spec.n), Poly(spec.n, spec.rho2()));
}

BoundaryField BoundaryField::scalar(const SphereSpec& spec, Poly p) {
  BoundaryField f(Rank::Scalar, spec);
  f.set(0, std::move(p));
  return f;
}

BoundaryField BoundaryField::vector(const SphereSpec& spec, std::vector<Poly> comps, Rank r) {
  if (tensor_order(r) != 1) throw std::invalid_argument("BoundaryField::vector: rank must be first order");
  if (static_cast<int>(comps.size()) != spec.n) throw std::invalid_argument("BoundaryField::vector: need n components");
  BoundaryField f(r, spec);
  for (int i = 0; i < spec.n; ++i) f.set(i, std::move(comps[i]));
  return f;
}

BoundaryField BoundaryField::sym2(const SphereSpec& spec, const std::vector<std::vector<Poly>>& comps) {
  BoundaryField f(Rank::Sym2, spec);
  for (int i = 0; i < spec.n; ++i)
    for (int j = i; j < spec.n; ++j) f.set(i, j, comps.at(i).at(j));
  return f;
}

void BoundaryField::set(int i, Poly p) {
  if (p.nvars() == 0) p = Poly(spec_.n, spec_.rho2());
  comps_.at(i) = std::move(p);
}

void BoundaryField::set(int i, int j, Poly p) {
  if (rank_ != Rank::Sym2) throw std::logic_error("set(i,j) on non-sym2 field");
  if (p.nvars() == 0) p = Poly(spec_.n, spec_.rho2());
  comps_.at(i * spec_.n + j) = p;
  comps_.at(j * spec_.n + i) = std::move(p);
}

int BoundaryField::degree() const {
  int d = -1;
  for (const auto& p : comps_) d = std::max(d, p.degree());
  return d;
}

bool BoundaryField::is_zero() const {
  for (const auto& p : comps_)
    if (!p.is_zero()) return false;
  return true;
}

void BoundaryField::check_cap(const char* where) const {
  const int d = degree();
  if (d > spec_.degree_cap)
    throw DegreeOverflow(std::string(where) + ": degree " + std::to_string(d) + " exceeds cap " +
                         std::to_string(spec_.degree_cap));
}

double BoundaryField::eval_scalar(const Eigen::VectorXd& x) const {
  return comps_.at(0).eval(std::span<const double>(x.data(), x.size()));
}

Eigen::VectorXd BoundaryField::eval_flat(const Eigen::VectorXd& x) const {
  Eigen::VectorXd v(comps_.size());
  std::span<const double> xs(x.data(), x.size());
  for (std::size_t i = 0; i < comps_.size(); ++i) v[i] = comps_[i].eval(xs);
  return v;
}

Eigen::VectorXd BoundaryField::eval_vector(const Eigen::VectorXd& x) const { return eval_flat(x); }

Eigen::MatrixXd BoundaryField::eval_sym2(const Eigen::VectorXd& x) const {
  const int n = spec_.n;
  Eigen::MatrixXd m(n, n);
  std::span<const double> xs(x.data(), x.size());
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j) m(i, j) = m(j, i) = comps_[i * n + j].eval(xs);
  return m;
}

void BoundaryField::check_same(const BoundaryField& o) const {
  if (o.rank_ != rank_ || !(o.spec_ == spec_)) throw std::invalid_argument("BoundaryField: mismatched rank or sphere");
}

BoundaryField& BoundaryField::operator+=(const BoundaryField& o) {
  check_same(o);
  for (std::size_t i = 0; i < comps_.size(); ++i) comps_[i] += o.comps_[i];
  return *this;
}

BoundaryField& BoundaryField::operator-=(const BoundaryField& o) {
  check_same(o);
  for (std::size_t i = 0; i < comps_.size(); ++i) comps_[i] -= o.comps_[i];
  return *this;
}

BoundaryField& BoundaryField::operator*=(double s) {
  for (auto& p : comps_) p *= s;
  return *this;
}

BoundaryField BoundaryField::times(const Poly& p) const {
  BoundaryField r = *this;
  for (auto& c : r.comps_) c = c * p;
  return r;
}

Poly constant_poly(const SphereSpec& spec, double c) { return Poly::constant(spec.n, spec.rho2(), c); }
Poly coordinate_poly(const SphereSpec& spec, int i) { return Poly::coordinate(spec.n, spec.rho2(), i); }

BoundaryField projector(const SphereSpec& spec) {
  BoundaryField p(Rank::Sym2, spec);
  const double inv = 1.0 / spec.rho2();
  for (int i = 0; i < spec.n; ++i) {
    for (int j = i; j < spec.n; ++j) {
      Poly c = coordinate_poly(spec, i) * coordinate_poly(spec, j) * (-inv);
      if (i == j) c += constant_poly(spec, 1.0);
      p.set(i, j, std::move(c));
    }
  }
  return p;
}

namespace {

// x . v / rho^2 for a polynomial vector v
Poly normal_component(const std::vector<Poly>& v, const SphereSpec& spec) {
  Poly s(spec.n, spec.rho2());
  for (int a = 0; a < spec.n; ++a) s += coordinate_poly(spec, a) * v[a];
  return s * (1.0 / spec.rho2());
}

std::vector<Poly> project_vec(std::vector<Poly> v, const SphereSpec& spec) {
  const Poly nc = normal_component(v, spec);
  for (int a = 0; a < spec.n; ++a) v[a] -= coordinate_poly(spec, a) * nc;
  return v;
}

}  // namespace

BoundaryField project_tangential(const BoundaryField& m) {
  const SphereSpec& spec = m.spec();
  const int n = spec.n;
  switch (tensor_order(m.rank())) {
    case 0: return m;
    case 1: {
      auto v = project_vec(m.components(), spec);
      auto out = BoundaryField::vector(spec, std::move(v), m.rank());
      out.check_cap("project_tangential");
      return out;
    }
    default: {
      // rows first, then columns
      std::vector<std::vector<Poly>> rows(n);
      for (int i = 0; i < n; ++i) {
        std::vector<Poly> r(n);
        for (int j = 0; j < n; ++j) r[j] = m.comp(i, j);
        rows[i] = project_vec(std::move(r), spec);
      }
      std::vector<std::vector<Poly>> out(n, std::vector<Poly>(n));
      for (int j = 0; j < n; ++j) {
        std::vector<Poly> col(n);
        for (int i = 0; i < n; ++i) col[i] = rows[i][j];
        col = project_vec(std::move(col), spec);
        for (int i = 0; i < n; ++i) out[i][j] = col[i];
      }
      // symmetrize to remove rounding asymmetry
      BoundaryField f(Rank::Sym2, spec);
      for (int i = 0; i < n; ++i)
        for (int j = i; j < n; ++j) f.set(i, j, (out[i][j] + out[j][i]) * 0.5);
      f.check_cap("project_tangential");
      return f;
    }
  }
}

std::pair<BoundaryField, BoundaryField> antipodal_parity_split(const BoundaryField& t) {
  BoundaryField even(t.rank(), t.spec());
  BoundaryField odd(t.rank(), t.spec());
  const bool flip = tensor_order(t.rank()) % 2 == 1;
  for (int i = 0; i < t.component_count(); ++i) {
    const Poly& p = t.comp(i);
    even.set(i, flip ? p.odd_part() : p.even_part());
    odd.set(i, flip ? p.even_part() : p.odd_part());
  }
  return {even, odd};
}

std::vector<Poly> tangential_gradient(const Poly& f, const SphereSpec& spec) {
  const Poly e = f.euler() * (1.0 / spec.rho2());
  std::vector<Poly> g(spec.n);
  for (int c = 0; c < spec.n; ++c) g[c] = f.derivative(c) - coordinate_poly(spec, c) * e;
  return g;
}

BoundaryField gradient(const BoundaryField& f) {
  if (f.rank() != Rank::Scalar) throw std::invalid_argument("gradient: scalar field expected");
  auto out = BoundaryField::vector(f.spec(), tangential_gradient(f.comp(0), f.spec()));
  out.check_cap("gradient");
  return out;
}

std::vector<Poly> covariant_derivative(const BoundaryField& x) {
  if (tensor_order(x.rank()) != 1) throw std::invalid_argument("covariant_derivative: vector field expected");
  const SphereSpec& spec = x.spec();
  const int n = spec.n;
  // J(c, a) = T_c X_a, then project the a slot.
  std::vector<std::vector<Poly>> jt(n);  // jt[a][c]
  for (int a = 0; a < n; ++a) jt[a] = tangential_gradient(x.comp(a), spec);
  std::vector<Poly> out(n * n);
  for (int c = 0; c < n; ++c) {
    std::vector<Poly> row(n);
    for (int a = 0; a < n; ++a) row[a] = jt[a][c];
    row = project_vec(std::move(row), spec);
    for (int a = 0; a < n; ++a) out[c * n + a] = std::move(row[a]);
  }
  return out;
}

BoundaryField lie_derivative_round_metric(const BoundaryField& x) {
  const SphereSpec& spec = x.spec();
  const int n = spec.n;
  const auto nab = covariant_derivative(x);
  BoundaryField k(Rank::Sym2, spec);
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j) k.set(i, j, nab[i * n + j] + nab[j * n + i]);
  k.check_cap("lie_derivative_round_metric");
  return k;
}

BoundaryField divergence(const BoundaryField& t) {
  const SphereSpec& spec = t.spec();
  const int n = spec.n;
  if (tensor_order(t.rank()) == 1) {
    Poly s(n, spec.rho2());
    for (int c = 0; c < n; ++c) s += tangential_gradient(t.comp(c), spec)[c];
    auto out = BoundaryField::scalar(spec, std::move(s));
    out.check_cap("divergence");
    return out;
  }
  if (t.rank() == Rank::Sym2) {
    std::vector<Poly> v(n, Poly(n, spec.rho2()));
    for (int c = 0; c < n; ++c) {
      for (int b = 0; b < n; ++b) {
        // only the c-th tangential derivative of K_cb is needed
        const Poly& kcb = t.comp(c, b);
        const Poly e = kcb.euler() * (1.0 / spec.rho2());
        v[b] += kcb.derivative(c) - coordinate_poly(spec, c) * e;
      }
    }
    auto out = BoundaryField::vector(spec, project_vec(std::move(v), spec), Rank::Covector);
    out.check_cap("divergence");
    return out;
  }
  throw std::invalid_argument("divergence: unsupported rank");
}

BoundaryField laplace_beltrami(const BoundaryField& f) { return divergence(gradient(f)); }

BoundaryField trace(const BoundaryField& k) {
  if (k.rank() != Rank::Sym2) throw std::invalid_argument("trace: sym2 expected");
  Poly s(k.spec().n, k.spec().rho2());
  for (int i = 0; i < k.spec().n; ++i) s += k.comp(i, i);
  return BoundaryField::scalar(k.spec(), std::move(s));
}

BoundaryField michel_residual(const BoundaryField& k, double c) {
  if (k.rank() != Rank::Sym2) throw std::invalid_argument("michel_residual: sym2 expected");
  const BoundaryField tr = trace(k);
  BoundaryField r = divergence(divergence(k));
  r -= laplace_beltrami(tr);
  r -= tr * c;
  r.check_cap("michel_residual");
  return r;
}

MichelCalibration calibrate_michel_constant(const std::vector<BoundaryField>& generators,
                                            const std::vector<Eigen::VectorXd>& points) {
  // residual(c) = A - c T with A = div div K + Delta_+ Tr K; minimize sum over samples.
  double num = 0.0, den = 0.0;
  std::vector<std::pair<BoundaryField, BoundaryField>> parts;
  for (const auto& x : generators) {
    const BoundaryField k = lie_derivative_round_metric(x);
    BoundaryField a = michel_residual(k, 0.0);
    BoundaryField t = trace(k);
    for (const auto& p : points) {
      const double av = a.eval_scalar(p), tv = t.eval_scalar(p);
      num += av * tv;
      den += tv * tv;
    }
    parts.emplace_back(std::move(a), std::move(t));
  }
  MichelCalibration cal;
  cal.c_star = den > 0.0 ? num / den : 0.0;
  for (const auto& [a, t] : parts)
    for (const auto& p : points)
      cal.fit_residual = std::max(cal.fit_residual, std::abs(a.eval_scalar(p) - cal.c_star * t.eval_scalar(p)));
  return cal;
}

FieldEvaluator::FieldEvaluator(const BoundaryField& f) : n_(f.spec().n) {
  start_.push_back(0);
  for (const auto& c : f.components()) {
    for (const auto& [e, v] : c.terms()) {
      for (int i = 0; i < n_; ++i) {
        exps_.push_back(e[i]);
        deg_ = std::max(deg_, static_cast<int>(e[i]));
      }
      coefs_.push_back(v);
    }
    start_.push_back(static_cast<int>(coefs_.size()));
  }
}

void FieldEvaluator::powers(const double* x, double* pw) const {
  for (int i = 0; i < n_; ++i) {
    double* row = pw + i * (deg_ + 1);
    row[0] = 1.0;
    for (int k = 1; k <= deg_; ++k) row[k] = row[k - 1] * x[i];
  }
}

void FieldEvaluator::eval(const double* x, double* out) const {
  thread_local std::vector<double> pw;
  pw.resize(static_cast<size_t>(n_) * (deg_ + 1));
  powers(x, pw.data());
  const int stride = deg_ + 1;
  for (int c = 0; c + 1 < static_cast<int>(start_.size()); ++c) {
    double s = 0.0;
    for (int t = start_[c]; t < start_[c + 1]; ++t) {
      double m = coefs_[t];
      const std::uint8_t* e = &exps_[static_cast<size_t>(t) * n_];
      for (int i = 0; i < n_; ++i) m *= pw[i * stride + e[i]];
      s += m;
    }
    out[c] = s;
  }
}

double FieldEvaluator::scalar(const double* x) const {
  double v = 0.0;
  eval(x, &v);
  return v;
}

double FieldEvaluator::quadratic(const double* x, const double* v) const {
  thread_local std::vector<double> w;
  w.resize(static_cast<size_t>(component_count()));
  eval(x, w.data());
  double s = 0.0;
  for (int i = 0; i < n_; ++i)
    for (int j = 0; j < n_; ++j) s += v[i] * w[i * n_ + j] * v[j];
  return s;
}

Poly rotate_poly(const Poly& p, const Eigen::MatrixXd& R) {
  const int n = p.nvars();
  std::vector<Poly> y;  // y_i = (R^T x)_i
  for (int i = 0; i < n; ++i) {
    Poly yi(n, p.rho2());
    for (int j = 0; j < n; ++j) yi += Poly::coordinate(n, p.rho2(), j) * R(j, i);
    y.push_back(yi);
  }
  Poly out(n, p.rho2());
  for (const auto& [e, c] : p.terms()) {
    Poly t = Poly::constant(n, p.rho2(), c);
    for (int i = 0; i < n; ++i)
      for (int q = 0; q < e[i]; ++q) t = t * y[i];
    out += t;
  }
  return out;
}

BoundaryField rotate_field(const BoundaryField& f, const Eigen::MatrixXd& R) {
  const auto& spec = f.spec();
  const int n = spec.n;
  std::vector<Poly> rc;
  for (const auto& c : f.components()) rc.push_back(rotate_poly(c, R));
  if (f.rank() == Rank::Scalar) return BoundaryField::scalar(spec, rc[0]);
  if (f.rank() == Rank::Sym2) {
    std::vector<std::vector<Poly>> m(n, std::vector<Poly>(n, Poly(n, spec.rho2())));
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b)
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < n; ++j)
            if (R(a, i) != 0.0 && R(b, j) != 0.0) m[a][b] += rc[i * n + j] * (R(a, i) * R(b, j));
    return BoundaryField::sym2(spec, m);
  }
  std::vector<Poly> v(n, Poly(n, spec.rho2()));
  for (int a = 0; a < n; ++a)
    for (int i = 0; i < n; ++i) v[a] += rc[i] * R(a, i);
  return BoundaryField::vector(spec, v, f.rank());
}

std::vector<Eigen::VectorXd> sample_points(const SphereSpec& spec, int count) {
  std::vector<Eigen::VectorXd> pts;
  pts.reserve(count);
  if (spec.n == 3) {
    const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
    for (int i = 0; i < count; ++i) {
      const double z = 1.0 - (2.0 * i + 1.0) / count;
      const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
      const double th = golden * i;
      Eigen::VectorXd p(3);
      p << r * std::cos(th), r * std::sin(th), z;
      pts.push_back(spec.rho * p);
    }
    return pts;
  }
  std::mt19937_64 rng(0x5eed5eedULL);
  std::normal_distribution<double> nd;
  for (int i = 0; i < count; ++i) {
    Eigen::VectorXd p(spec.n);
    for (int a = 0; a < spec.n; ++a) p[a] = nd(rng);
    pts.push_back(spec.rho * p.normalized());
  }
  return pts;
}

double sup_norm(const BoundaryField& f, const std::vector<Eigen::VectorXd>& points) {
  double m = 0.0;
  for (const auto& p : points) m = std::max(m, f.eval_flat(p).cwiseAbs().maxCoeff());
  return m;
}

double normal_leakage(const BoundaryField& f, const std::vector<Eigen::VectorXd>& points) {
  double m = 0.0;
  for (const auto& p : points) {
    const Eigen::VectorXd nu = p / f.spec().rho;
    if (f.rank() == Rank::Sym2)
      m = std::max(m, (f.eval_sym2(p) * nu).cwiseAbs().maxCoeff());
    else if (tensor_order(f.rank()) == 1)
      m = std::max(m, std::abs(f.eval_vector(p).dot(nu)));
  }
  return m;
}

Poly random_poly(const SphereSpec& spec, int degree, std::mt19937_64& rng, double scale) {
  std::normal_distribution<double> nd(0.0, scale);
  Poly p(spec.n, spec.rho2());
  for (const auto& e : canonical_monomials(spec.n, degree)) p.add_term(e, nd(rng));
  return p;
}

BoundaryField random_tangent_vector(const SphereSpec& spec, int degree, std::mt19937_64& rng, double scale) {
  std::vector<Poly> v(spec.n);
  for (auto& c : v) c = random_poly(spec, degree, rng, scale);
  return project_tangential(BoundaryField::vector(spec, std::move(v)));
}

BoundaryField random_sym2(const SphereSpec& spec, int degree, std::mt19937_64& rng, double scale) {
  BoundaryField m(Rank::Sym2, spec);
  for (int i = 0; i < spec.n; ++i)
    for (int j = i; j < spec.n; ++j) m.set(i, j, random_poly(spec, degree, rng, scale));
  return project_tangential(m);
}

}  // namespace asymscat
