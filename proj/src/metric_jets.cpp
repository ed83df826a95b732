#include "asymscat/metric_jets.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "asymscat/normal_form.hpp"

namespace asymscat {

// ---- JetSeries ------------------------------------------------------------------

JetSeries::JetSeries(Rank r, const SphereSpec& s, int order) : rank(r), spec(s) {
  if (order < 0) throw std::invalid_argument("JetSeries: negative order");
  coeffs.assign(order + 1, BoundaryField(r, s));
}

BoundaryField JetSeries::at(int j) const {
  if (j >= 0 && j <= order()) return coeffs[j];
  return BoundaryField(rank, spec);
}

JetSeries JetSeries::truncated(int ord) const {
  JetSeries out(rank, spec, ord);
  for (int j = 0; j <= std::min(ord, order()); ++j) out.coeffs[j] = coeffs[j];
  return out;
}

JetSeries& JetSeries::operator+=(const JetSeries& o) {
  if (o.rank != rank) throw std::invalid_argument("JetSeries: rank mismatch");
  if (o.order() > order()) coeffs.resize(o.order() + 1, BoundaryField(rank, spec));
  for (int j = 0; j <= o.order(); ++j) coeffs[j] += o.coeffs[j];
  return *this;
}

JetSeries& JetSeries::operator-=(const JetSeries& o) {
  if (o.rank != rank) throw std::invalid_argument("JetSeries: rank mismatch");
  if (o.order() > order()) coeffs.resize(o.order() + 1, BoundaryField(rank, spec));
  for (int j = 0; j <= o.order(); ++j) coeffs[j] -= o.coeffs[j];
  return *this;
}

JetSeries& JetSeries::operator*=(double s) {
  for (auto& c : coeffs) c *= s;
  return *this;
}

JetSeries times(const JetSeries& scalar, const JetSeries& t) {
  if (scalar.rank != Rank::Scalar) throw std::invalid_argument("times: first factor must be scalar");
  const int ord = std::min(scalar.order(), t.order());
  JetSeries out(t.rank, t.spec, ord);
  for (int j = 0; j <= ord; ++j)
    for (int i = 0; i <= j; ++i)
      if (!scalar[i].is_zero()) out[j] += t[j - i].times(scalar[i].comp(0));
  for (auto& c : out.coeffs) c.check_cap("times");
  return out;
}

JetSeries reciprocal(const JetSeries& s) {
  if (s.rank != Rank::Scalar) throw std::invalid_argument("reciprocal: scalar series required");
  const Poly& lead = s[0].comp(0);
  if (lead.degree() > 0) throw std::domain_error("reciprocal: leading coefficient is not constant");
  if (lead.is_zero()) throw std::domain_error("reciprocal: leading coefficient vanishes");
  const double c0 = lead.terms().begin()->second;
  JetSeries r(Rank::Scalar, s.spec, s.order());
  r[0] = BoundaryField::scalar(s.spec, constant_poly(s.spec, 1.0 / c0));
  for (int j = 1; j <= s.order(); ++j) {
    Poly acc(s.spec.n, s.spec.rho2());
    for (int i = 1; i <= j; ++i) acc += s[i].comp(0) * r[j - i].comp(0);
    r[j] = BoundaryField::scalar(s.spec, acc * (-1.0 / c0));
    r[j].check_cap("reciprocal");
  }
  return r;
}

// ---- charts ---------------------------------------------------------------------

ChartFrame ChartFrame::at(const SphereSpec& spec, const Eigen::VectorXd& x) {
  if (x.size() != spec.n) throw std::invalid_argument("ChartFrame: point dimension mismatch");
  ChartFrame f;
  f.rho = spec.rho;
  f.nu = x.normalized();
  f.point = spec.rho * f.nu;
  // Gram-Schmidt over the coordinate axes least aligned with nu
  std::vector<int> axes(spec.n);
  for (int i = 0; i < spec.n; ++i) axes[i] = i;
  std::sort(axes.begin(), axes.end(), [&](int a, int b) { return std::abs(f.nu[a]) < std::abs(f.nu[b]); });
  f.E.resize(spec.n, spec.n - 1);
  for (int d = 0; d < spec.n - 1; ++d) {
    Eigen::VectorXd v = Eigen::VectorXd::Unit(spec.n, axes[d]);
    for (int pass = 0; pass < 2; ++pass) {
      v -= f.nu * f.nu.dot(v);
      for (int e = 0; e < d; ++e) v -= f.E.col(e) * f.E.col(e).dot(v);
    }
    f.E.col(d) = v.normalized();
  }
  return f;
}

LocalContext::LocalContext(const SphereSpec& spec, const Eigen::VectorXd& point, int jet_order)
    : spec_(spec), frame_(ChartFrame::at(spec, point)), sp_(JetSpace::get(spec.n, jet_order)) {
  const int n = spec.n, nb = n - 1;
  // sqrt(rho^2 - |s|^2)
  LocalJet r2 = LocalJet::constant(sp_, spec.rho2());
  for (int d = 0; d < nb; ++d) r2 -= s(d) * s(d);
  const LocalJet root = r2.sqrt();
  chart_.assign(n, LocalJet(sp_));
  for (int b = 0; b < n; ++b) {
    LocalJet c = root * frame_.nu[b];
    for (int d = 0; d < nb; ++d) c += s(d) * frame_.E(b, d);
    chart_[b] = std::move(c);
  }
  dchart_.assign(n * nb, LocalJet(sp_));
  for (int b = 0; b < n; ++b)
    for (int d = 0; d < nb; ++d) dchart_[b * nb + d] = chart_[b].derivative(1 + d);
}

LocalJet LocalContext::restrict(const Poly& p) const {
  LocalJet out(sp_);
  for (const auto& [e, coef] : p.terms()) {
    auto it = powers_.find(e);
    if (it == powers_.end() && total_degree(e) == 0) it = powers_.emplace(e, LocalJet::constant(sp_, 1.0)).first;
    if (it == powers_.end()) {
      // build z^e from a cached lower monomial
      Exponent lower = e;
      int v = 0;
      while (lower[v] == 0) ++v;
      --lower[v];
      LocalJet base;
      if (total_degree(lower) == 0) {
        base = LocalJet::constant(sp_, 1.0);
      } else {
        Poly unit(p.nvars(), p.rho2());
        unit.add_term(lower, 1.0);
        // canonical exponents stay canonical when lowered
        base = restrict(unit);
      }
      it = powers_.emplace(e, base * chart_[v]).first;
    }
    out += it->second * coef;
  }
  return out;
}

std::vector<LocalJet> LocalContext::chart_inverse(const std::vector<LocalJet>& y) const {
  std::vector<LocalJet> s(nb(), LocalJet(sp_));
  for (int d = 0; d < nb(); ++d)
    for (int b = 0; b < spec_.n; ++b) s[d] += y[b] * frame_.E(b, d);
  return s;
}

// ---- local maps -----------------------------------------------------------------

LocalDiffeo local_identity(const LocalContext& ctx) {
  return LocalDiffeo{LocalJet::constant(ctx.space(), 1.0), std::vector<LocalJet>(ctx.nb(), LocalJet(ctx.space()))};
}

Substitution substitution_of(const LocalDiffeo& phi) {
  const auto& sp = phi.u.space();
  std::vector<LocalJet> subs;
  subs.push_back(phi.u.times_var(0));
  for (std::size_t d = 0; d < phi.eta.size(); ++d) subs.push_back(LocalJet::variable(sp, 1 + d) + phi.eta[d]);
  return Substitution(sp, std::move(subs));
}

LocalMetric pullback_local(const LocalMetric& g, const LocalDiffeo& phi, const Substitution& sub) {
  const int nb = static_cast<int>(phi.eta.size());
  const auto& sp = phi.u.space();

  const LocalJet A = sub.compose(g.A);
  std::vector<LocalJet> W(nb);
  for (int c = 0; c < nb; ++c) W[c] = sub.compose(g.W[c]);
  JetMatrix H{nb, std::vector<LocalJet>(nb * nb)};
  for (int c = 0; c < nb; ++c)
    for (int e = c; e < nb; ++e) H(c, e) = H(e, c) = sub.compose(g.H(c, e));

  const LocalJet& u = phi.u;
  const LocalJet xX = u + u.derivative(0).times_var(0);
  std::vector<LocalJet> du(nb), du_over_x(nb), sX(nb);
  for (int d = 0; d < nb; ++d) {
    du[d] = u.derivative(1 + d);
    du_over_x[d] = du[d].div_var(0);
    sX[d] = phi.eta[d].derivative(0);
  }
  auto J = [&](int c, int d) {
    LocalJet j = phi.eta[c].derivative(1 + d);
    if (c == d) j += 1.0;
    return j;
  };
  std::vector<LocalJet> Jm(nb * nb);
  for (int c = 0; c < nb; ++c)
    for (int d = 0; d < nb; ++d) Jm[c * nb + d] = J(c, d);

  const LocalJet inv_u = u.reciprocal();
  const LocalJet inv_u2 = inv_u * inv_u;
  const LocalJet inv_u4 = inv_u2 * inv_u2;

  // H(sigma_X, .) and W . sigma_X reused below
  std::vector<LocalJet> HsX(nb, LocalJet(sp));
  for (int c = 0; c < nb; ++c)
    for (int e = 0; e < nb; ++e) HsX[c] += H(c, e) * sX[e];
  LocalJet WsX(sp), sHs(sp);
  for (int c = 0; c < nb; ++c) {
    WsX += W[c] * sX[c];
    sHs += HsX[c] * sX[c];
  }

  LocalMetric out;
  out.A = A * xX * xX * inv_u4 + (WsX * xX + sHs).times_var(0, 2) * inv_u2;

  const LocalJet AxX4 = A * xX * inv_u4;
  out.W.assign(nb, LocalJet(sp));
  for (int d = 0; d < nb; ++d) {
    LocalJet t(sp);
    for (int c = 0; c < nb; ++c) {
      t += W[c] * (xX * Jm[c * nb + d]);
      t += W[c] * sX[c] * du[d].times_var(0);
      t += HsX[c] * Jm[c * nb + d] * 2.0;
    }
    out.W[d] = AxX4 * du_over_x[d] * 2.0 + t * inv_u2;
  }

  out.H = JetMatrix{nb, std::vector<LocalJet>(nb * nb)};
  const LocalJet Au4 = A * inv_u4;
  for (int d = 0; d < nb; ++d)
    for (int e = d; e < nb; ++e) {
      LocalJet t(sp);
      LocalJet wj(sp);
      for (int c = 0; c < nb; ++c) wj += W[c] * (du[d] * Jm[c * nb + e] + du[e] * Jm[c * nb + d]);
      t += wj.times_var(0) * 0.5;
      for (int c = 0; c < nb; ++c) {
        LocalJet hj(sp);
        for (int f = 0; f < nb; ++f) hj += H(c, f) * Jm[f * nb + e];
        t += Jm[c * nb + d] * hj;
      }
      out.H(d, e) = out.H(e, d) = Au4 * du[d] * du[e] + t * inv_u2;
    }
  return out;
}

LocalMetric pullback_local(const LocalMetric& g, const LocalDiffeo& phi) {
  return pullback_local(g, phi, substitution_of(phi));
}

LocalDiffeo compose_local(const LocalDiffeo& outer, const LocalDiffeo& inner, const Substitution& inner_sub) {
  LocalDiffeo out;
  out.u = inner.u * inner_sub.compose(outer.u);
  out.eta.resize(inner.eta.size());
  for (std::size_t d = 0; d < inner.eta.size(); ++d) out.eta[d] = inner.eta[d] + inner_sub.compose(outer.eta[d]);
  return out;
}

LocalDiffeo compose_local(const LocalDiffeo& outer, const LocalDiffeo& inner) {
  return compose_local(outer, inner, substitution_of(inner));
}

LocalDiffeo inverse_local(const LocalDiffeo& psi) {
  const auto& sp = psi.u.space();
  LocalDiffeo phi{LocalJet::constant(sp, 1.0), std::vector<LocalJet>(psi.eta.size(), LocalJet(sp))};
  // each sweep fixes at least one more total degree
  for (int it = 0; it <= sp->order() + 1; ++it) {
    const Substitution sub = substitution_of(phi);
    LocalDiffeo next;
    next.u = sub.compose(psi.u).reciprocal();
    for (const auto& e : psi.eta) next.eta.push_back(-sub.compose(e));
    double change = (next.u - phi.u).max_abs();
    for (std::size_t d = 0; d < psi.eta.size(); ++d) change = std::max(change, (next.eta[d] - phi.eta[d]).max_abs());
    phi = std::move(next);
    if (change == 0.0) break;
  }
  return phi;
}

PointCoefficients point_coefficients(const LocalMetric& m, const LocalContext& ctx, int order) {
  const auto& sp = ctx.space();
  const int nb = ctx.nb();
  const auto& E = ctx.frame().E;
  PointCoefficients pc;
  pc.point = ctx.frame().point;
  for (int j = 0; j <= order; ++j) {
    JetExponent e{};
    e[0] = static_cast<std::uint8_t>(j);
    const int idx = sp->index(e);
    if (idx < 0) throw std::invalid_argument("point_coefficients: order exceeds the jet order");
    pc.a.push_back(m.A[idx]);
    Eigen::VectorXd w = Eigen::VectorXd::Zero(nb);
    Eigen::MatrixXd h(nb, nb);
    for (int d = 0; d < nb; ++d) {
      w[d] = m.W[d][idx];
      for (int f = 0; f < nb; ++f) h(d, f) = m.H(d, f)[idx];
    }
    pc.cross.push_back(E * w);
    pc.h.push_back(E * h * E.transpose());
  }
  return pc;
}

// ---- MetricJet ------------------------------------------------------------------

struct MetricJet::Node {
  Kind kind = Kind::Polynomial;
  SphereSpec spec;
  int order = 0;
  JetSeries a, cross, h;
  MetricJet base;
  CollarDiffeoJet phi;
};

struct CollarDiffeoJet::Node {
  Kind kind = Kind::Identity;
  SphereSpec spec;
  int order = 0;
  JetSeries U, V;
  CollarDiffeoJet first, second;
  MetricJet metric;
  int stage = 0;
};

int default_jet_order(int order) { return order + 4; }

MetricJet MetricJet::polynomial(const SphereSpec& spec, int order, JetSeries a, JetSeries cross, JetSeries h) {
  spec.validate();
  if (order < 0) throw std::invalid_argument("MetricJet: negative order");
  if (a.rank != Rank::Scalar || cross.rank != Rank::Covector || h.rank != Rank::Sym2)
    throw std::invalid_argument("MetricJet: block ranks must be scalar/covector/sym2");
  auto node = std::make_shared<Node>();
  node->kind = Kind::Polynomial;
  node->spec = spec;
  node->order = order;
  node->a = a.truncated(order);
  node->cross = cross.truncated(order);
  node->h = h.truncated(order);
  MetricJet g;
  g.node_ = node;
  g.jet_order_ = default_jet_order(order);
  return g;
}

MetricJet MetricJet::round_model(const SphereSpec& spec, int order) {
  JetSeries a(Rank::Scalar, spec, order), c(Rank::Covector, spec, order), h(Rank::Sym2, spec, order);
  a[0] = BoundaryField::scalar(spec, constant_poly(spec, 1.0));
  h[0] = round_metric(spec);
  return polynomial(spec, order, a, c, h);
}

MetricJet MetricJet::pullback(const MetricJet& g, const CollarDiffeoJet& phi) {
  if (!(g.spec() == phi.spec())) throw std::invalid_argument("pullback: sphere mismatch");
  if (phi.order() < g.order()) throw std::invalid_argument("pullback: diffeomorphism order below metric order");
  if (phi.is_identity()) return g;
  auto node = std::make_shared<Node>();
  node->kind = Kind::Pullback;
  node->spec = g.spec();
  node->order = g.order();
  node->base = g;
  node->phi = phi;
  MetricJet out;
  out.node_ = node;
  out.jet_order_ = g.jet_order_;
  return out;
}

MetricJet MetricJet::normal_form_of(const MetricJet& g, int order) {
  auto node = std::make_shared<Node>();
  node->kind = Kind::NormalForm;
  node->spec = g.spec();
  node->order = order;
  node->base = g;
  MetricJet out;
  out.node_ = node;
  out.jet_order_ = std::max(g.jet_order_, default_jet_order(order));
  return out;
}

MetricJet::Kind MetricJet::kind() const { return node_->kind; }
const SphereSpec& MetricJet::spec() const { return node_->spec; }
int MetricJet::order() const { return node_->order; }

MetricJet MetricJet::with_jet_order(int k) const {
  MetricJet g = *this;
  g.jet_order_ = k;
  return g;
}

const JetSeries& MetricJet::a() const {
  if (kind() != Kind::Polynomial) throw std::logic_error("MetricJet: block data only stored for polynomial jets");
  return node_->a;
}
const JetSeries& MetricJet::cross() const {
  if (kind() != Kind::Polynomial) throw std::logic_error("MetricJet: block data only stored for polynomial jets");
  return node_->cross;
}
const JetSeries& MetricJet::h() const {
  if (kind() != Kind::Polynomial) throw std::logic_error("MetricJet: block data only stored for polynomial jets");
  return node_->h;
}

LocalMetric MetricJet::localize(const LocalContext& ctx) const {
  const auto& n = *node_;
  if (n.kind == Kind::Pullback) return pullback_local(n.base.localize(ctx), n.phi.localize(ctx));
  if (n.kind == Kind::NormalForm) return normalize_local(n.base.localize(ctx), n.order).metric;

  const auto& sp = ctx.space();
  const int nb = ctx.nb(), dim = n.spec.n;
  LocalMetric m;
  m.A = LocalJet(sp);
  m.W.assign(nb, LocalJet(sp));
  m.H = JetMatrix{nb, std::vector<LocalJet>(nb * nb, LocalJet(sp))};
  for (int j = 0; j <= n.order; ++j) {
    if (!n.a[j].is_zero()) m.A += ctx.restrict(n.a[j].comp(0)).times_var(0, j);
    if (!n.cross[j].is_zero()) {
      std::vector<LocalJet> w(dim);
      for (int b = 0; b < dim; ++b) w[b] = ctx.restrict(n.cross[j].comp(b));
      for (int d = 0; d < nb; ++d) {
        LocalJet t(sp);
        for (int b = 0; b < dim; ++b) t += w[b] * ctx.dchart(b, d);
        m.W[d] += t.times_var(0, j);
      }
    }
    if (!n.h[j].is_zero()) {
      // h_bc dc^c/ds_e first, then contract with dc^b/ds_d
      std::vector<LocalJet> hb(dim * nb, LocalJet(sp));
      for (int b = 0; b < dim; ++b)
        for (int c = 0; c < dim; ++c) {
          const Poly& p = n.h[j].comp(b, c);
          if (p.is_zero()) continue;
          const LocalJet hbc = ctx.restrict(p);
          for (int e = 0; e < nb; ++e) hb[b * nb + e] += hbc * ctx.dchart(c, e);
        }
      for (int d = 0; d < nb; ++d)
        for (int e = d; e < nb; ++e) {
          LocalJet t(sp);
          for (int b = 0; b < dim; ++b) t += ctx.dchart(b, d) * hb[b * nb + e];
          t = t.times_var(0, j);
          m.H(d, e) += t;
          if (e != d) m.H(e, d) += t;
        }
    }
  }
  return m;
}

LocalContext MetricJet::context_at(const Eigen::VectorXd& p) const { return LocalContext(spec(), p, jet_order_); }

PointCoefficients MetricJet::coefficients_at(const Eigen::VectorXd& p) const {
  const LocalContext ctx = context_at(p);
  return point_coefficients(localize(ctx), ctx, order());
}

// ---- CollarDiffeoJet ------------------------------------------------------------

CollarDiffeoJet CollarDiffeoJet::identity(const SphereSpec& spec, int order) {
  auto node = std::make_shared<Node>();
  node->kind = Kind::Identity;
  node->spec = spec;
  node->order = order;
  CollarDiffeoJet d;
  d.node_ = node;
  return d;
}

CollarDiffeoJet CollarDiffeoJet::series(const SphereSpec& spec, int order, JetSeries U, JetSeries V) {
  if (U.rank != Rank::Scalar || V.rank != Rank::Vector)
    throw std::invalid_argument("CollarDiffeoJet::series: U scalar, V vector required");
  const auto pts = sample_points(spec, 24);
  for (int j = 0; j <= V.order(); ++j)
    if (normal_leakage(V[j], pts) > 1e-10) throw std::invalid_argument("CollarDiffeoJet::series: V is not tangential");
  auto node = std::make_shared<Node>();
  node->kind = Kind::Series;
  node->spec = spec;
  node->order = order;
  node->U = U.truncated(order + 2);
  node->V = V.truncated(order + 1);
  CollarDiffeoJet d;
  d.node_ = node;
  return d;
}

CollarDiffeoJet CollarDiffeoJet::stage_map(const SphereSpec& spec, int order, int r, const BoundaryField& F,
                                           const BoundaryField& G) {
  JetSeries U(Rank::Scalar, spec, r + 2), V(Rank::Vector, spec, r + 1);
  U[r + 2] = F;
  V[r + 1] = G;
  return series(spec, std::max(order, r + 1), U, V);
}

CollarDiffeoJet CollarDiffeoJet::defining_function_change(const SphereSpec& spec, int order,
                                                          const BoundaryField& alpha) {
  JetSeries U(Rank::Scalar, spec, 1), V(Rank::Vector, spec, 0);
  U[1] = alpha;
  return inverse(series(spec, order, U, V));
}

CollarDiffeoJet CollarDiffeoJet::compose(const CollarDiffeoJet& a, const CollarDiffeoJet& b) {
  if (!(a.spec() == b.spec())) throw std::invalid_argument("compose: sphere mismatch");
  if (a.is_identity()) return b;
  if (b.is_identity()) return a;
  auto node = std::make_shared<Node>();
  node->kind = Kind::Composite;
  node->spec = a.spec();
  node->order = std::min(a.order(), b.order());
  node->first = a;
  node->second = b;
  CollarDiffeoJet d;
  d.node_ = node;
  return d;
}

CollarDiffeoJet CollarDiffeoJet::inverse(const CollarDiffeoJet& a) {
  if (a.is_identity()) return a;
  auto node = std::make_shared<Node>();
  node->kind = Kind::Inverse;
  node->spec = a.spec();
  node->order = a.order();
  node->first = a;
  CollarDiffeoJet d;
  d.node_ = node;
  return d;
}

CollarDiffeoJet CollarDiffeoJet::normal_form_map(const MetricJet& g, int order) {
  auto node = std::make_shared<Node>();
  node->kind = Kind::NormalFormMap;
  node->spec = g.spec();
  node->order = order;
  node->metric = g;
  CollarDiffeoJet d;
  d.node_ = node;
  return d;
}

CollarDiffeoJet CollarDiffeoJet::stage_of(const MetricJet& g, int r, int order) {
  auto node = std::make_shared<Node>();
  node->kind = Kind::StageOf;
  node->spec = g.spec();
  node->order = order;
  node->metric = g;
  node->stage = r;
  CollarDiffeoJet d;
  d.node_ = node;
  return d;
}

CollarDiffeoJet::Kind CollarDiffeoJet::kind() const { return node_->kind; }
const SphereSpec& CollarDiffeoJet::spec() const { return node_->spec; }
int CollarDiffeoJet::order() const { return node_->order; }
const JetSeries& CollarDiffeoJet::U() const {
  if (kind() != Kind::Series) throw std::logic_error("CollarDiffeoJet: series data only for series maps");
  return node_->U;
}
const JetSeries& CollarDiffeoJet::V() const {
  if (kind() != Kind::Series) throw std::logic_error("CollarDiffeoJet: series data only for series maps");
  return node_->V;
}

LocalDiffeo CollarDiffeoJet::localize(const LocalContext& ctx) const {
  const auto& n = *node_;
  const auto& sp = ctx.space();
  switch (n.kind) {
    case Kind::Identity: return local_identity(ctx);
    case Kind::Composite: return compose_local(n.second.localize(ctx), n.first.localize(ctx));
    case Kind::Inverse: return inverse_local(n.first.localize(ctx));
    case Kind::NormalFormMap: return normalize_local(n.metric.localize(ctx), n.order).map;
    case Kind::StageOf: return stage_map_local(stage_solve_local(n.metric.localize(ctx), n.stage));
    case Kind::Series: break;
  }
  const int dim = n.spec.n;
  LocalDiffeo d;
  d.u = LocalJet::constant(sp, 1.0);
  for (int j = 1; j <= n.U.order(); ++j)
    if (!n.U[j].is_zero()) d.u += ctx.restrict(n.U[j].comp(0)).times_var(0, j);
  std::vector<LocalJet> z = ctx.chart();
  bool moved = false;
  for (int j = 1; j <= n.V.order(); ++j) {
    if (n.V[j].is_zero()) continue;
    moved = true;
    for (int b = 0; b < dim; ++b) z[b] += ctx.restrict(n.V[j].comp(b)).times_var(0, j);
  }
  d.eta.assign(ctx.nb(), LocalJet(sp));
  if (!moved) return d;
  LocalJet r2(sp);
  for (int b = 0; b < dim; ++b) r2 += z[b] * z[b];
  const LocalJet scale = r2.sqrt().reciprocal() * n.spec.rho;
  for (auto& zb : z) zb = zb * scale;
  const auto s = ctx.chart_inverse(z);
  for (int e = 0; e < ctx.nb(); ++e) {
    LocalJet eta = s[e] - ctx.s(e);
    // the map fixes the boundary exactly; drop rounding in the X^0 part
    eta -= eta.var_coefficient(0, 0);
    d.eta[e] = std::move(eta);
  }
  return d;
}

PointDiffeo CollarDiffeoJet::at(const Eigen::VectorXd& p, int jet_order) const {
  if (jet_order < 0) jet_order = default_jet_order(order());
  const LocalContext ctx(spec(), p, jet_order);
  const LocalDiffeo d = localize(ctx);
  const auto& sp = ctx.space();
  PointDiffeo pd;
  pd.point = ctx.frame().point;
  for (int j = 0; j <= order() + 2; ++j) {
    JetExponent e{};
    e[0] = static_cast<std::uint8_t>(j);
    const int idx = sp->index(e);
    if (idx < 0) break;
    pd.u.push_back(d.u[idx]);
    Eigen::VectorXd w(ctx.nb());
    for (int c = 0; c < ctx.nb(); ++c) w[c] = d.eta[c][idx];
    pd.eta.push_back(ctx.frame().E * w);
  }
  return pd;
}

MetricJet pullback_collar(const MetricJet& g, const CollarDiffeoJet& phi) { return MetricJet::pullback(g, phi); }

CollarDiffeoJet compose_diffeos(const CollarDiffeoJet& a, const CollarDiffeoJet& b) {
  return CollarDiffeoJet::compose(a, b);
}

// ---- det / inverse ------------------------------------------------------------

PointDetInverse jet_det_inverse(const JetSeries& h, const Eigen::VectorXd& point, int k) {
  if (h.rank != Rank::Sym2) throw std::invalid_argument("jet_det_inverse: sym2 series required");
  const ChartFrame fr = ChartFrame::at(h.spec, point);
  const int nb = h.spec.n - 1, N = h.order();
  auto sp = JetSpace::get(1, N);
  std::vector<Eigen::MatrixXd> hc;
  for (int j = 0; j <= N; ++j) hc.push_back(fr.E.transpose() * h[j].eval_sym2(fr.point) * fr.E);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(hc[0]);
  if (es.eigenvalues().minCoeff() <= 1e-12 * std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff())) {
    std::ostringstream os;
    os << "jet_det_inverse: h_0 singular at point [" << fr.point.transpose() << "]";
    throw std::domain_error(os.str());
  }
  JetMatrix m{nb, std::vector<LocalJet>(nb * nb, LocalJet(sp))};
  for (int j = 0; j <= N; ++j)
    for (int a = 0; a < nb; ++a)
      for (int b = 0; b < nb; ++b) {
        JetExponent e{};
        e[0] = static_cast<std::uint8_t>(j);
        m(a, b)[sp->index(e)] = hc[j](a, b);
      }
  const LocalJet det = jet_det(m);
  const JetMatrix inv = jet_inverse(m);
  PointDetInverse out;
  for (int j = 0; j <= N; ++j) {
    out.det.push_back(det[j]);
    Eigen::MatrixXd ij(nb, nb);
    for (int a = 0; a < nb; ++a)
      for (int b = 0; b < nb; ++b) ij(a, b) = inv(a, b)[j];
    out.inv.push_back(fr.E * ij * fr.E.transpose());
  }
  if (k >= 0 && k <= N) {
    const Eigen::MatrixXd h0i = hc[0].inverse();
    out.tau_k = (h0i * hc[k]).trace();
    out.b_k = fr.E * (h0i * hc[k] * h0i) * fr.E.transpose();
  }
  return out;
}

// ---- validation ---------------------------------------------------------------

int detect_stage(const std::vector<PointCoefficients>& pcs, int order, double tol) {
  auto cross_ok = [&](int j) {
    for (const auto& pc : pcs)
      if (pc.cross[j].cwiseAbs().maxCoeff() > tol) return false;
    return true;
  };
  auto a_ok = [&](int j) {
    for (const auto& pc : pcs)
      if (std::abs(pc.a[j] - (j == 0 ? 1.0 : 0.0)) > tol) return false;
    return true;
  };
  for (int j = 0; j <= std::min(1, order); ++j)
    if (!a_ok(j)) return -1;
  int r = 0;
  while (r <= order) {
    // stage r + 1 needs cross_r = 0 and a_{r+2} = delta
    if (!cross_ok(r)) break;
    if (r + 2 <= order && !a_ok(r + 2)) break;
    ++r;
  }
  return r;
}

ScatteringReport scattering_report(const std::vector<PointCoefficients>& pcs, const SphereSpec& spec, int order,
                                   double tol) {
  ScatteringReport rep;
  const int N = order;
  const double rho2 = spec.rho2();
  rep.margin = std::numeric_limits<double>::infinity();
  for (const auto& pc : pcs) {
    const ChartFrame fr = ChartFrame::at(spec, pc.point);
    const Eigen::MatrixXd h0 = fr.E.transpose() * pc.h[0] * fr.E;
    rep.margin = std::min(rep.margin, rho2 * Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(h0).eigenvalues().minCoeff());
    for (int j = 0; j <= N; ++j) {
      rep.max_cross = std::max(rep.max_cross, pc.cross[j].cwiseAbs().maxCoeff());
      rep.max_a_defect = std::max(rep.max_a_defect, std::abs(pc.a[j] - (j == 0 ? 1.0 : 0.0)));
    }
  }
  rep.raw_stage = detect_stage(pcs, N, tol);
  rep.stage = std::min(rep.raw_stage, N);
  rep.scattering_form = rep.raw_stage >= 0 && rep.margin > 0.0;
  rep.normal_form = rep.raw_stage == N + 1;
  std::ostringstream os;
  if (rep.raw_stage < 0)
    os << "normal block does not start as 1 + O(x^2)";
  else if (!(rep.margin > 0.0))
    os << "h_0 is not positive definite (margin " << rep.margin << ")";
  else if (rep.normal_form)
    os << "normal form through order " << N;
  else
    os << "stage " << rep.stage;
  rep.message = os.str();
  return rep;
}

ScatteringReport validate_scattering_form(const MetricJet& g, const std::vector<Eigen::VectorXd>& points,
                                          double tol) {
  std::vector<PointCoefficients> pcs(points.size());
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < static_cast<int>(points.size()); ++i) pcs[i] = g.coefficients_at(points[i]);
  return scattering_report(pcs, g.spec(), g.order(), tol);
}

ScatteringReport validate_scattering_form(const MetricJet& g, int sample_count, double tol) {
  return validate_scattering_form(g, sample_points(g.spec(), sample_count), tol);
}

MetricJet random_metric_jet(const SphereSpec& spec, int order, std::mt19937_64& rng, int field_degree, double scale) {
  JetSeries a(Rank::Scalar, spec, order), c(Rank::Covector, spec, order), h(Rank::Sym2, spec, order);
  a[0] = BoundaryField::scalar(spec, constant_poly(spec, 1.0));
  for (int j = 2; j <= order; ++j) a[j] = BoundaryField::scalar(spec, random_poly(spec, field_degree, rng, scale));
  for (int j = 0; j <= order; ++j) {
    const auto v = random_tangent_vector(spec, field_degree, rng, scale);
    c[j] = BoundaryField::vector(spec, v.components(), Rank::Covector);
  }
  const auto pts = sample_points(spec, 64);
  // shrink the perturbation until h_0 stays well inside the positive cone
  const BoundaryField pert = random_sym2(spec, field_degree, rng, 0.5 * scale);
  for (double t = 1.0;; t *= 0.5) {
    h[0] = round_metric(spec) + pert * t;
    double lo = 1e300;
    for (const auto& p : pts) {
      const ChartFrame fr = ChartFrame::at(spec, p);
      lo = std::min(lo, Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(fr.E.transpose() * h[0].eval_sym2(p) * fr.E)
                            .eigenvalues()
                            .minCoeff());
    }
    if (lo > 0.5) break;
  }
  for (int j = 1; j <= order; ++j) h[j] = random_sym2(spec, field_degree, rng, scale);
  return MetricJet::polynomial(spec, order, a, c, h);
}

CollarDiffeoJet random_admissible_diffeo(const SphereSpec& spec, int order, std::mt19937_64& rng, int field_degree,
                                         double scale) {
  JetSeries U(Rank::Scalar, spec, order + 2), V(Rank::Vector, spec, order + 1);
  for (int j = 2; j <= order + 2; ++j) U[j] = BoundaryField::scalar(spec, random_poly(spec, field_degree, rng, scale));
  for (int j = 1; j <= order + 1; ++j) V[j] = random_tangent_vector(spec, field_degree, rng, scale);
  return CollarDiffeoJet::series(spec, order, U, V);
}

}  // namespace asymscat
