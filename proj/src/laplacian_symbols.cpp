#include "asymscat/laplacian_symbols.hpp"

#include <cmath>
#include <random>
#include <sstream>
#include <stdexcept>

#include "asymscat/normal_form.hpp"

namespace asymscat {

namespace {

// drop every term with an X power above p
LocalJet x_truncate(const LocalJet& f, int p) {
  LocalJet out = f;
  const auto& sp = f.space();
  for (int i = 0; i < sp->size(); ++i)
    if (sp->monomial(i)[0] > p) out[i] = 0.0;
  return out;
}

JetMatrix map_entries(const JetMatrix& a, LocalJet (*f)(const LocalJet&, int), int arg) {
  JetMatrix out = a;
  for (auto& e : out.m) e = f(e, arg);
  return out;
}

LocalJet coefficient_only(const LocalJet& f, int p) { return f.var_coefficient(0, p); }

// (1/sq) sum_ij d_i (sq M^{ij} d_j u) over the chart variables
LocalJet tangential_form(const LocalJet& sq, const LocalJet& inv_sq, const JetMatrix& M, const LocalJet& u) {
  const int nb = M.dim;
  std::vector<LocalJet> du(nb);
  for (int j = 0; j < nb; ++j) du[j] = u.derivative(1 + j);
  LocalJet acc(u.space());
  for (int i = 0; i < nb; ++i) {
    LocalJet flux(u.space());
    for (int j = 0; j < nb; ++j) flux += M(i, j) * du[j];
    acc += (sq * flux).derivative(1 + i);
  }
  return inv_sq * acc;
}

}  // namespace

OperatorJet OperatorJet::laplacian(const MetricJet& g) {
  OperatorJet op;
  op.kind_ = Kind::Definitional;
  op.g_ = g;
  return op;
}

OperatorJet OperatorJet::structured(const MetricJet& g, int k) {
  if (k < 2) throw std::invalid_argument("structured_laplacian_jet: perturbation order k must be >= 2");
  OperatorJet op;
  op.kind_ = Kind::Structured;
  op.g_ = g;
  op.k_ = k;
  return op;
}

OperatorJet laplacian_jet(const MetricJet& g) { return OperatorJet::laplacian(g); }
OperatorJet structured_laplacian_jet(const MetricJet& g, int k) { return OperatorJet::structured(g, k); }

LocalJet OperatorJet::apply_local(const LocalContext& ctx, const LocalMetric& gl, const LocalJet& u) const {
  const auto& sp = ctx.space();
  const int nb = ctx.nb(), n = ctx.spec().n;
  const LocalJet ux = u.derivative(0);

  if (kind_ == Kind::Definitional) {
    // g = S M S with S = diag(x^-2, x^-1, ...), M = [[A, x W/2], [x W/2, H]], so
    // g^{-1} = S^-1 M^-1 S^-1 and sqrt(det g) = sqrt(det M) x^{-(n+1)}.
    JetMatrix M{n, std::vector<LocalJet>(n * n, LocalJet(sp))};
    M(0, 0) = gl.A;
    for (int d = 0; d < nb; ++d) {
      M(0, 1 + d) = M(1 + d, 0) = gl.W[d].times_var(0, 1) * 0.5;
      for (int e = 0; e < nb; ++e) M(1 + d, 1 + e) = gl.H(d, e);
    }
    const JetMatrix Mi = jet_inverse(M);
    const LocalJet sq = jet_det(M).sqrt();
    const LocalJet inv_sq = sq.reciprocal();
    std::vector<LocalJet> du(nb);
    for (int d = 0; d < nb; ++d) du[d] = u.derivative(1 + d);
    // V_0 = sq x^3 P with P = x Mi00 u_x + Mi0d u_d
    LocalJet P = (Mi(0, 0) * ux).times_var(0, 1);
    for (int d = 0; d < nb; ++d) P += Mi(0, 1 + d) * du[d];
    const LocalJet sqP = sq * P;
    LocalJet acc = sqP.times_var(0, 3).derivative(0) - sqP.times_var(0, 2) * static_cast<double>(n + 1);
    for (int d = 0; d < nb; ++d) {
      LocalJet flux = (Mi(1 + d, 0) * ux).times_var(0, 1);
      for (int e = 0; e < nb; ++e) flux += Mi(1 + d, 1 + e) * du[e];
      acc += (sq * flux).times_var(0, 2).derivative(1 + d);
    }
    return inv_sq * acc;
  }

  // structured expansion
  const int k = k_;
  const JetMatrix H0 = map_entries(gl.H, x_truncate, k - 1);
  const JetMatrix Hk = map_entries(gl.H, coefficient_only, k);
  const JetMatrix H0i = jet_inverse(H0);
  const JetMatrix Bk = H0i * Hk * H0i;
  const LocalJet tau = jet_trace(H0i * Hk);
  const LocalJet sq0 = jet_det(H0).sqrt(), inv_sq0 = sq0.reciprocal();
  const LocalJet sqH = jet_det(gl.H).sqrt(), inv_sqH = sqH.reciprocal();

  // x^{n+1}/sqrt(det H) d_x sqrt(det H) x^{-(n+1)} x^4 d_x
  const LocalJet t = sqH * ux;
  LocalJet out = inv_sqH * (t.times_var(0, 4).derivative(0) - t.times_var(0, 3) * static_cast<double>(n + 1));
  out += tangential_form(sq0, inv_sq0, H0i, u).times_var(0, 2);
  LocalJet pert = -tangential_form(sq0, inv_sq0, Bk, u);
  JetMatrix tH0i = H0i;
  for (auto& e : tH0i.m) e = tau * e;
  pert += 0.5 * tangential_form(sq0, inv_sq0, tH0i, u);
  pert -= 0.5 * (tau * tangential_form(sq0, inv_sq0, H0i, u));
  out += pert.times_var(0, k + 2);
  return out;
}

LocalJet localize_test_jet(const LocalContext& ctx, const JetSeries& u) {
  LocalJet out(ctx.space());
  for (int j = 0; j <= u.order(); ++j)
    if (!u[j].is_zero()) out += ctx.restrict(u[j].comp(0)).times_var(0, j);
  return out;
}

namespace {

std::vector<double> x_coefficients(const LocalJet& f, int N) {
  std::vector<double> c(N + 1, 0.0);
  const auto& sp = f.space();
  for (int j = 0; j <= N; ++j) {
    JetExponent e{};
    e[0] = static_cast<std::uint8_t>(j);
    const int idx = sp->index(e);
    if (idx >= 0) c[j] = f[idx];
  }
  return c;
}

}  // namespace

std::vector<double> OperatorJet::apply_at(const JetSeries& u, const Eigen::VectorXd& p) const {
  const LocalContext ctx = g_.context_at(p);
  const LocalMetric gl = g_.localize(ctx);
  return x_coefficients(apply_local(ctx, gl, localize_test_jet(ctx, u)), order());
}

std::vector<JetSeries> probe_battery(const SphereSpec& spec, int count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<JetSeries> out;
  for (int i = 0; i < count; ++i) {
    const int xo = (i % 3 == 0) ? 0 : 2;
    JetSeries u(Rank::Scalar, spec, xo);
    for (int j = 0; j <= xo; ++j) u[j] = BoundaryField::scalar(spec, random_poly(spec, 3, rng, 1.0));
    out.push_back(std::move(u));
  }
  return out;
}

double ProbeReport::max_through(int j) const {
  double m = 0.0;
  for (int i = 0; i <= j && i < static_cast<int>(max_by_order.size()); ++i) m = std::max(m, max_by_order[i]);
  return m;
}

ProbeReport probe_difference(const OperatorJet& p1, const OperatorJet& p2, const std::vector<JetSeries>& battery,
                             const std::vector<Eigen::VectorXd>& points, double tol) {
  const int N = std::min(p1.order(), p2.order());
  const int K = std::max(p1.metric().jet_order(), p2.metric().jet_order());
  ProbeReport rep;
  rep.max_by_order.assign(N + 1, 0.0);
  const int nb = static_cast<int>(battery.size());
  for (const auto& p : points) {
    const LocalContext ctx(p1.metric().spec(), p, K);
    const LocalMetric g1 = p1.metric().localize(ctx), g2 = p2.metric().localize(ctx);
    // restriction caches are not thread-safe; localize the probes first
    std::vector<LocalJet> us;
    us.reserve(nb);
    for (const auto& u : battery) us.push_back(localize_test_jet(ctx, u));
    std::vector<std::vector<double>> diff(nb);
#pragma omp parallel for schedule(dynamic)
    for (int i = 0; i < nb; ++i)
      diff[i] = x_coefficients(p1.apply_local(ctx, g1, us[i]) - p2.apply_local(ctx, g2, us[i]), N);
    for (const auto& d : diff)
      for (int j = 0; j <= N; ++j) rep.max_by_order[j] = std::max(rep.max_by_order[j], std::abs(d[j]));
  }
  for (int j = 0; j <= N; ++j)
    if (rep.max_by_order[j] > tol) {
      rep.first_disagreement = j;
      break;
    }
  return rep;
}

// ---- symbols ------------------------------------------------------------------

namespace {

Eigen::MatrixXd tangent_inverse(const Eigen::MatrixXd& h0, const Eigen::MatrixXd& E) {
  return E * (E.transpose() * h0 * E).inverse() * E.transpose();
}

}  // namespace

Eigen::MatrixXd SymbolQuadratic::B_at(const Eigen::VectorXd& y) const {
  if (B) return B->eval_sym2(y);
  const auto c1 = g1.coefficients_at(y), c2 = g2.coefficients_at(y);
  const ChartFrame fr = ChartFrame::at(spec, y);
  const Eigen::MatrixXd h0i = tangent_inverse(c1.h[0], fr.E);
  return h0i * (c1.h[k] - c2.h[k]) * h0i;
}

double SymbolQuadratic::eval(const Eigen::VectorXd& y, const Eigen::VectorXd& mu) const {
  return mu.dot(B_at(y) * mu);
}

SymbolQuadratic difference_symbol(const MetricJet& g1, const MetricJet& g2, int k, int sample_count, double tol) {
  if (!(g1.spec() == g2.spec())) throw std::invalid_argument("difference_symbol: sphere mismatch");
  if (k < 2) throw std::invalid_argument("difference_symbol: k must be >= 2");
  if (k > g1.order() || k > g2.order()) throw std::invalid_argument("difference_symbol: k exceeds the jet order");
  const auto& spec = g1.spec();
  SymbolQuadratic sq;
  sq.spec = spec;
  sq.k = k;
  sq.lambda_degree = k + 1;
  sq.g1 = g1;
  sq.g2 = g2;
  auto disagree = [](int j) {
    std::ostringstream os;
    os << "difference_symbol: tangential blocks differ at order " << j;
    return std::invalid_argument(os.str());
  };
  if (g1.kind() == MetricJet::Kind::Polynomial && g2.kind() == MetricJet::Kind::Polynomial) {
    for (int j = 0; j < k; ++j) {
      const BoundaryField d = g1.h().at(j) - g2.h().at(j);
      for (const auto& c : d.components())
        if (c.max_abs_coef() > tol) throw disagree(j);
    }
    const double c = round_factor(g1.h()[0]);
    if (c != 0.0) {
      sq.B = project_tangential(g1.h().at(k) - g2.h().at(k)) * (1.0 / (c * c));
      return sq;
    }
  }
  const auto pts = sample_points(spec, sample_count);
  std::vector<PointCoefficients> c1(pts.size()), c2(pts.size());
  for (size_t i = 0; i < pts.size(); ++i) {
    c1[i] = g1.coefficients_at(pts[i]);
    c2[i] = g2.coefficients_at(pts[i]);
  }
  for (int j = 0; j < k; ++j)
    for (size_t i = 0; i < pts.size(); ++i)
      if ((c1[i].h[j] - c2[i].h[j]).cwiseAbs().maxCoeff() > tol) throw disagree(j);
  return sq;
}

Eigen::MatrixXd probed_symbol_at(const MetricJet& g1, const MetricJet& g2, int k, const Eigen::VectorXd& p) {
  const OperatorJet d1 = laplacian_jet(g1), d2 = laplacian_jet(g2);
  const int K = std::max({g1.jet_order(), g2.jet_order(), k + 4});
  const LocalContext ctx(g1.spec(), p, K);
  const LocalMetric l1 = g1.localize(ctx), l2 = g2.localize(ctx);
  const int nb = ctx.nb();
  JetExponent e{};
  e[0] = static_cast<std::uint8_t>(k + 2);
  const int idx = ctx.space()->index(e);
  Eigen::MatrixXd Bc(nb, nb);
  for (int a = 0; a < nb; ++a)
    for (int b = a; b < nb; ++b) {
      const LocalJet u = ctx.s(a) * ctx.s(b);
      const LocalJet diff = d1.apply_local(ctx, l1, u) - d2.apply_local(ctx, l2, u);
      Bc(a, b) = Bc(b, a) = -0.5 * diff[idx];
    }
  return ctx.frame().E * Bc * ctx.frame().E.transpose();
}

}  // namespace asymscat
