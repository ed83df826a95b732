#include "asymscat/normal_form.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace asymscat {

namespace {

int xpow_index(const JetSpacePtr& sp, int j) {
  JetExponent e{};
  e[0] = static_cast<std::uint8_t>(j);
  return sp->index(e);
}

double cross_norm_at(const LocalMetric& g, int j) {
  const int idx = xpow_index(g.A.space(), j);
  if (idx < 0) return 0.0;
  double s = 0.0;
  for (const auto& w : g.W) s += w[idx] * w[idx];
  return std::sqrt(s);
}

double a_at(const LocalMetric& g, int j) {
  const int idx = xpow_index(g.A.space(), j);
  return idx < 0 ? 0.0 : g.A[idx];
}

}  // namespace

LocalStage stage_solve_local(const LocalMetric& g, int r) {
  const int nb = static_cast<int>(g.W.size());
  JetMatrix h0{nb, std::vector<LocalJet>(nb * nb)};
  for (int d = 0; d < nb * nb; ++d) h0.m[d] = g.H.m[d].var_coefficient(0, 0);
  std::vector<LocalJet> wr(nb);
  for (int d = 0; d < nb; ++d) wr[d] = g.W[d].var_coefficient(0, r);
  const JetMatrix h0inv = jet_inverse(h0);

  LocalStage st;
  st.r = r;
  const double k = -1.0 / (2.0 * (r + 1));
  st.G.assign(nb, LocalJet(g.A.space()));
  for (int d = 0; d < nb; ++d) {
    for (int e = 0; e < nb; ++e) st.G[d] += h0inv(d, e) * wr[e];
    st.G[d] *= k;
  }
  st.F = g.A.var_coefficient(0, r + 2);
  if (r == 0) {
    for (int d = 0; d < nb; ++d) {
      st.F += wr[d] * st.G[d];
      for (int e = 0; e < nb; ++e) st.F += h0(d, e) * st.G[d] * st.G[e];
    }
    st.F *= -0.5;
  } else {
    st.F *= k;
  }
  return st;
}

LocalDiffeo stage_map_local(const LocalStage& st) {
  LocalDiffeo d;
  d.u = st.F.times_var(0, st.r + 2) + 1.0;
  for (const auto& g : st.G) d.eta.push_back(g.times_var(0, st.r + 1));
  return d;
}

namespace {

LocalNormalization run_stages(const LocalMetric& g, int order, const LocalContext* ctx,
                              std::vector<PointCoefficients>* snapshots) {
  const auto& sp = g.A.space();
  LocalNormalization out;
  out.metric = g;
  out.map = LocalDiffeo{LocalJet::constant(sp, 1.0), std::vector<LocalJet>(g.W.size(), LocalJet(sp))};
  if (snapshots) snapshots->push_back(point_coefficients(out.metric, *ctx, order));
  for (int r = 0; r <= order; ++r) {
    StageResidual res;
    res.r = r;
    res.cross_before = cross_norm_at(out.metric, r);
    res.a_before = std::abs(a_at(out.metric, r + 2));
    const LocalDiffeo phi = stage_map_local(stage_solve_local(out.metric, r));
    const Substitution sub = substitution_of(phi);
    out.metric = pullback_local(out.metric, phi, sub);
    out.map = compose_local(out.map, phi, sub);
    res.cross_after = cross_norm_at(out.metric, r);
    res.a_after = std::abs(a_at(out.metric, r + 2));
    out.stages.push_back(res);
    if (snapshots) snapshots->push_back(point_coefficients(out.metric, *ctx, order));
  }
  return out;
}

}  // namespace

LocalNormalization normalize_local(const LocalMetric& g, int order) { return run_stages(g, order, nullptr, nullptr); }

// ---- global stage solve ---------------------------------------------------------

double StageSolution::F_at(const Eigen::VectorXd& p) const {
  if (F_field) return F_field->eval_scalar(p);
  const LocalContext ctx = metric.context_at(p);
  return stage_solve_local(metric.localize(ctx), r).F.value();
}

Eigen::VectorXd StageSolution::G_at(const Eigen::VectorXd& p) const {
  if (G_field) return G_field->eval_vector(p);
  const LocalContext ctx = metric.context_at(p);
  const auto st = stage_solve_local(metric.localize(ctx), r);
  Eigen::VectorXd g(ctx.nb());
  for (int d = 0; d < ctx.nb(); ++d) g[d] = st.G[d].value();
  return ctx.frame().E * g;
}

CollarDiffeoJet StageSolution::map() const {
  const int ord = std::max(metric.order(), r + 1);
  if (F_field && G_field) return CollarDiffeoJet::stage_map(metric.spec(), ord, r, *F_field, *G_field);
  return CollarDiffeoJet::stage_of(metric, r, ord);
}

double round_factor(const BoundaryField& h0) {
  const auto& spec = h0.spec();
  const auto pts = sample_points(spec, 1);
  const ChartFrame fr = ChartFrame::at(spec, pts[0]);
  const double c = (fr.E.transpose() * h0.eval_sym2(fr.point) * fr.E).trace() / (spec.n - 1);
  BoundaryField diff = h0 - round_metric(spec) * c;
  for (const auto& p : diff.components())
    if (p.max_abs_coef() > 1e-14 * std::max(1.0, std::abs(c))) return 0.0;
  return c;
}

StageSolution stage_solve(const MetricJet& g, int r) {
  if (r < 0) throw std::invalid_argument("stage_solve: negative stage");
  StageSolution st;
  st.r = r;
  st.metric = g;
  const auto& spec = g.spec();
  for (const auto& p : sample_points(spec, 12)) {
    const auto pc = g.coefficients_at(p);
    const ChartFrame fr = ChartFrame::at(spec, p);
    const double lo =
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(fr.E.transpose() * pc.h[0] * fr.E).eigenvalues().minCoeff();
    if (!(lo > 1e-12)) {
      std::ostringstream os;
      os << "stage_solve: h_0 singular at point [" << fr.point.transpose() << "]";
      throw std::domain_error(os.str());
    }
  }
  if (g.kind() != MetricJet::Kind::Polynomial) return st;
  const double c = round_factor(g.h()[0]);
  if (c == 0.0) return st;
  const BoundaryField w = g.cross().at(r);
  BoundaryField G = BoundaryField::vector(spec, w.components(), Rank::Vector) * (-1.0 / (2.0 * (r + 1) * c));
  BoundaryField F = g.a().at(r + 2);
  if (r == 0) {
    Poly extra(spec.n, spec.rho2());
    for (int b = 0; b < spec.n; ++b) extra += w.comp(b) * G.comp(b) + G.comp(b) * G.comp(b) * c;
    F = (F + BoundaryField::scalar(spec, extra)) * -0.5;
  } else {
    F = F * (-1.0 / (2.0 * (r + 1)));
  }
  st.F_field = F;
  st.G_field = G;
  return st;
}

// ---- normalize --------------------------------------------------------------------

NormalizeResult normalize(const MetricJet& g, int order, const std::vector<Eigen::VectorXd>& points, double tol) {
  if (order > g.order()) throw std::invalid_argument("normalize: target order exceeds the metric order");
  NormalizeResult res;
  const auto rep0 = validate_scattering_form(g, points, tol);
  if (!rep0.scattering_form) throw std::invalid_argument("normalize: input not in scattering form: " + rep0.message);
  if (rep0.normal_form) {
    res.g_nf = g;
    res.phi = CollarDiffeoJet::identity(g.spec(), order);
    res.report = rep0;
    return res;
  }
  const MetricJet gk = g.with_jet_order(std::max(g.jet_order(), default_jet_order(order)));
  const int np = static_cast<int>(points.size());
  std::vector<std::vector<PointCoefficients>> snaps(np);
  std::vector<std::vector<StageResidual>> resid(np);
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < np; ++i) {
    const LocalContext ctx = gk.context_at(points[i]);
    auto ln = run_stages(gk.localize(ctx), order, &ctx, &snaps[i]);
    resid[i] = std::move(ln.stages);
  }
  std::vector<PointCoefficients> at(np);
  auto stage_at = [&](int snap) {
    for (int i = 0; i < np; ++i) at[i] = snaps[i][snap];
    return detect_stage(at, order, tol);
  };
  int before = stage_at(0);
  for (int r = 0; r <= order; ++r) {
    StageLedgerRow row;
    row.r = r;
    row.stage_before = before;
    row.stage_after = stage_at(r + 1);
    for (int i = 0; i < np; ++i) {
      row.cross_before = std::max(row.cross_before, resid[i][r].cross_before);
      row.cross_after = std::max(row.cross_after, resid[i][r].cross_after);
      row.a_before = std::max(row.a_before, resid[i][r].a_before);
      row.a_after = std::max(row.a_after, resid[i][r].a_after);
    }
    res.ledger.push_back(row);
    if (row.stage_after < r + 1) {
      std::ostringstream os;
      os << "normalize: stage " << r << " left the detected stage at " << row.stage_after;
      throw std::runtime_error(os.str());
    }
    before = row.stage_after;
  }
  res.g_nf = MetricJet::normal_form_of(gk, order);
  res.phi = CollarDiffeoJet::normal_form_map(gk, order);
  for (int i = 0; i < np; ++i) at[i] = snaps[i].back();
  res.report = scattering_report(at, g.spec(), order, tol);
  return res;
}

NormalizeResult normalize(const MetricJet& g, int order, int sample_count, double tol) {
  return normalize(g, order, sample_points(g.spec(), sample_count), tol);
}

bool check_normal(const MetricJet& g, const std::vector<Eigen::VectorXd>& points, double tol) {
  return validate_scattering_form(g, points, tol).normal_form;
}

bool check_normal(const MetricJet& g, int sample_count, double tol) {
  return check_normal(g, sample_points(g.spec(), sample_count), tol);
}

}  // namespace asymscat
