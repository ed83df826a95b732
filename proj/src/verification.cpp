#include "asymscat/verification.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <random>
#include <stdexcept>

#include "asymscat/laplacian_symbols.hpp"
#include "asymscat/normal_form.hpp"
#include "asymscat/ray_transform.hpp"
#include "asymscat/recovery_pipeline.hpp"
#include "asymscat/tomography.hpp"

namespace asymscat {

namespace {

const SphereSpec kS2{3, 1.0, 40};
constexpr int kN = 6;

std::string fmt(const char* f, double a) {
  char buf[96];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

// accumulates "name value < bound" clauses and the overall verdict
struct Sheet {
  CheckResult r;
  bool ok = true;
  void below(const std::string& name, double v, double bound) { clause(name, v, bound, v < bound, "<"); }
  void above(const std::string& name, double v, double bound) { clause(name, v, bound, v > bound, ">"); }
  void equal(const std::string& name, double v, double want) {
    clause(name, v, want, v == want, "==");
  }
  void note(const std::string& name, double v) {
    r.values.push_back({name, v});
    if (!r.detail.empty()) r.detail += "; ";
    r.detail += name + " = " + fmt("%.6g", v);
  }
  void clause(const std::string& name, double v, double bound, bool good, const char* rel) {
    ok = ok && good;
    r.values.push_back({name, v});
    if (!r.detail.empty()) r.detail += "; ";
    r.detail += name + " " + fmt("%.3g", v) + " " + rel + " " + fmt("%.3g", bound);
  }
};

Poly cpoly(const SphereSpec& s, double c) { return constant_poly(s, c); }

MetricJet with_blocks(const SphereSpec& s, int N, const std::vector<std::pair<int, double>>& a_terms,
                      const std::vector<std::pair<int, BoundaryField>>& cross_terms) {
  JetSeries a(Rank::Scalar, s, N), c(Rank::Covector, s, N), h(Rank::Sym2, s, N);
  a[0] = BoundaryField::scalar(s, cpoly(s, 1.0));
  h[0] = round_metric(s);
  for (const auto& [j, v] : a_terms) a[j] = BoundaryField::scalar(s, cpoly(s, v));
  for (const auto& [j, w] : cross_terms) c[j] = BoundaryField::vector(s, w.components(), Rank::Covector);
  return MetricJet::polynomial(s, N, a, c, h);
}

// normal-form polynomial jet, h_0 round or perturbed
MetricJet normal_jet(const SphereSpec& s, int N, std::mt19937_64& rng, bool round_h0) {
  JetSeries a(Rank::Scalar, s, N), c(Rank::Covector, s, N), h(Rank::Sym2, s, N);
  a[0] = BoundaryField::scalar(s, cpoly(s, 1.0));
  h[0] = round_metric(s);
  if (!round_h0) h[0] = h[0] + random_sym2(s, 2, rng, 0.08);
  for (int j = 1; j <= N; ++j) h[j] = random_sym2(s, 2, rng, 0.3);
  return MetricJet::polynomial(s, N, a, c, h);
}

MetricJet with_h(const MetricJet& g, int j, const BoundaryField& D) {
  JetSeries h = g.h();
  h[j] = h[j] + D;
  return MetricJet::polynomial(g.spec(), g.order(), g.a(), g.cross(), h);
}

// ---- acceptance ---------------------------------------------------------------------

void normal_form(Sheet& s, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  double cross = 0, adef = 0;
  bool steps = true, normal = true;
  for (int i = 0; i < 20; ++i) {
    const auto res = normalize(random_metric_jet(kS2, kN, rng), kN);
    cross = std::max(cross, res.report.max_cross);
    adef = std::max(adef, res.report.max_a_defect);
    normal = normal && res.report.normal_form;
    for (const auto& row : res.ledger) steps = steps && row.stage_after == row.stage_before + 1;
  }
  s.below("max cross", cross, 1e-9);
  s.below("max |a - 1|", adef, 1e-9);
  s.equal("stages +1 each", steps ? 1 : 0, 1);
  s.equal("normal form", normal ? 1 : 0, 1);
}

double stage_F_error() {
  double worst = 0;
  for (double c : {0.8, -1.3}) {
    const auto st = stage_solve(with_blocks(kS2, kN, {{3, c}}, {}), 1);
    for (const auto& p : sample_points(kS2, 8)) worst = std::max(worst, std::abs(st.F_at(p) + c / 4));
  }
  return worst;
}

double stage_G_error(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  double worst = 0;
  for (int t = 0; t < 2; ++t) {
    const auto w = random_tangent_vector(kS2, 2, rng, 1.0);
    const auto st = stage_solve(with_blocks(kS2, kN, {}, {{0, w}}), 0);
    for (const auto& p : sample_points(kS2, 8)) worst = std::max(worst, (st.G_at(p) + 0.5 * w.eval_vector(p)).norm());
  }
  return worst;
}

void stage_formulas(Sheet& s, std::uint64_t seed) {
  s.below("|F + c/4|", stage_F_error(), 1e-12);
  s.below("|G + c/2|", stage_G_error(seed), 1e-12);
}

void laplacian(Sheet& s, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const auto battery = probe_battery(kS2, 3 * (kN + 1), seed + 1);
  const auto pts = sample_points(kS2, 6);
  for (int k : {2, 3}) {
    const auto g = normal_jet(kS2, kN, rng, false);
    const auto rep = probe_difference(laplacian_jet(g), structured_laplacian_jet(g, k), battery, pts, 1e-9);
    const std::string K = "k=" + std::to_string(k);
    s.below(K + " through k+2", rep.max_through(k + 2), 1e-9);
    s.equal(K + " first differs", rep.first_disagreement, k + 3);
  }
}

void symbol(Sheet& s, std::uint64_t seed) {
  const auto pts = sample_points(kS2, 5);
  double worst = 0;
  for (int i = 0; i < 10; ++i) {
    std::mt19937_64 rng(seed * 1000 + static_cast<std::uint64_t>(i));
    const int k = 2 + i % 3;
    const auto g1 = normal_jet(kS2, kN, rng, i % 2 == 0);
    const auto g2 = with_h(g1, k, random_sym2(kS2, 2, rng, 0.5));
    const auto sym = difference_symbol(g1, g2, k);
    for (const auto& p : pts) worst = std::max(worst, (sym.B_at(p) - probed_symbol_at(g1, g2, k, p)).cwiseAbs().maxCoeff());
  }
  s.below("|B - probed|", worst, 1e-9);
}

void shift_ode(Sheet& s, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  double worst = 0;
  for (int t = 0; t < 3; ++t) {
    const auto W = random_sym2(kS2, 3, rng, 1.0);
    const auto g = geodesic_family(kS2, 3, seed + static_cast<std::uint64_t>(t))[t];
    for (int m : {2, 3, 4}) worst = std::max(worst, shift_ode_residual(W, g, m).residual);
  }
  Eigen::VectorXd u(3), v(3);
  u << 1, 0, 0;
  v << 0, 1, 0;
  const double lit = shift_ode_residual(round_metric(kS2), GreatCircle::make(u, v, 1.0), 2, 64, true).residual;
  s.below("residual (m^2)", worst, 1e-9);
  s.above("residual (literal m)", lit, 0.1);
}

double lie_full_period(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const Poly one = cpoly(kS2, 1.0);
  const auto geos = geodesic_family(kS2, 50, seed + 3);
  double worst = 0;
  for (int i = 0; i < 10; ++i) {
    const auto L = lie_derivative_round_metric(random_tangent_vector(kS2, 3, rng, 1.0));
    for (const auto& g : geos) worst = std::max(worst, std::abs(moment_transform(L, g, one).value));
  }
  return worst;
}

double moment_ratio(std::uint64_t seed) {
  const auto be = tensor_basis(kS2, 4, BasisParity::Even);
  const auto op = build_forward(be, geodesic_family(kS2, 4 * be.size(), seed), -1, moment_polys(kS2, 2));
  return nullspace_analysis(op, be).sigma_ratio;
}

void michel_kernel(Sheet& s, std::uint64_t seed) {
  s.below("full-period |I(L_X g)|", lie_full_period(seed), 1e-10);
  s.above("moment sigma ratio", moment_ratio(seed), 1e-6);
}

void michel_identity(Sheet& s, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<BoundaryField> calib;
  for (int i = 0; i < 20; ++i) calib.push_back(random_tangent_vector(kS2, 2, rng));
  const auto cal = calibrate_michel_constant(calib, sample_points(kS2, 40));
  const auto pts = sample_points(kS2, 120);
  double worst = 0;
  for (int i = 0; i < 20; ++i) {
    const auto L = lie_derivative_round_metric(random_tangent_vector(kS2, 3, rng));
    worst = std::max(worst, sup_norm(michel_residual(L, cal.c_star), pts));
  }
  s.below("held-out residual", worst, 1e-8);
  s.note("c*", cal.c_star);
}

void layer_stripping(Sheet& s, std::uint64_t seed) {
  const auto sc = make_scenario(seed, 4, 4);
  const auto rep = layer_strip(sc, 1.0);
  s.equal("aborted", rep.aborted ? 1 : 0, 0);
  double worst = rep.orders.size() == 3 ? 0.0 : 1.0;
  for (const auto& o : rep.orders) worst = std::max(worst, o.error);
  s.below("max sup error D2..D4", worst, 1e-5);
  // rerun with k_max = 3: orders 2 and 3 must come out identical
  Scenario t = sc;
  t.k_max = 3;
  t.h2 = sc.h2.truncated(3);
  t.D.resize(4);
  const auto short_rep = layer_strip(t, 1.0);
  const auto pts = sample_points(sc.spec(), 50);
  double drift = short_rep.orders.size() == 2 ? 0.0 : 1.0;
  for (size_t i = 0; i < short_rep.orders.size() && i < rep.orders.size(); ++i)
    drift = std::max(drift, sup_norm(short_rep.orders[i].D_hat - rep.orders[i].D_hat, pts));
  s.below("earlier-order drift", drift, 1e-14);
}

void two_energies(Sheet& s, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const auto pts = sample_points(kS2, 40);
  double worst = 0;
  for (double l2 : {std::sqrt(2.0)})
    for (int k : {2, 3}) {
      const double l1 = 1.0;
      const auto a = random_sym2(kS2, 3, rng, 1.0);
      const auto b = round_metric(kS2).times(random_poly(kS2, 2, rng, 1.0));
      const auto sep = separate_two_energies(a * std::pow(l1, k + 1) + b * std::pow(l1, k - 1), l1,
                                             a * std::pow(l2, k + 1) + b * std::pow(l2, k - 1), l2, k);
      worst = std::max({worst, sup_norm(sep.metric - a, pts), sup_norm(sep.potential - b, pts)});
    }
  const auto p = separate_two_energies(3.0, 1.0, 18.0, 2.0, 2);
  worst = std::max({worst, std::abs(p.metric - 2.0), std::abs(p.potential - 1.0)});
  s.below("separation error", worst, 1e-10);
}

void gauge(Sheet& s, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const auto g = random_metric_jet(kS2, kN, rng);
  double worst = 0;
  for (int i = 0; i < 10; ++i) worst = std::max(worst, gauge_check(g, random_admissible_diffeo(kS2, kN, rng)).difference);
  const auto alpha = BoundaryField::scalar(kS2, coordinate_poly(kS2, 0) * 0.5);
  s.below("admissible max diff", worst, 1e-8);
  s.above("defining-function change", gauge_check(g, alpha).difference, 1e-3);
}

void dense_orbit(Sheet& s, std::uint64_t) {
  s.below("fill distance rho=sqrt2", dense_orbit_residues(0.3, std::sqrt(2.0), 200).fill_distance, 0.05);
  s.equal("residues rho=1", static_cast<double>(dense_orbit_residues(0.3, 1.0, 200).residues.size()), 2);
}

// ---- identities ------------------------------------------------------------------

void stage_F(Sheet& s, std::uint64_t seed) {
  // r = 0: F cancels x^2 in the normal block after the stage map
  std::mt19937_64 rng(seed);
  const auto g = random_metric_jet(kS2, kN, rng);
  const auto pg = pullback_collar(g, stage_solve(g, 0).map());
  double a2 = 0;
  for (const auto& p : sample_points(kS2, 12)) a2 = std::max(a2, std::abs(pg.coefficients_at(p).a[2]));
  s.below("a_2 after stage 0", a2, 1e-10);
  s.below("|F + c/4| (r=1)", stage_F_error(), 1e-12);
}

void stage_G(Sheet& s, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const auto g = random_metric_jet(kS2, kN, rng);
  const auto pg = pullback_collar(g, stage_solve(g, 0).map());
  double c0 = 0;
  for (const auto& p : sample_points(kS2, 12)) c0 = std::max(c0, pg.coefficients_at(p).cross[0].cwiseAbs().maxCoeff());
  s.below("cross_0 after stage 0", c0, 1e-10);
  s.below("|G + c/2|", stage_G_error(seed), 1e-12);
}

// h = h_0 + x^k H_k + x^{k+1} R against frame-level inverses
void det_inverse(Sheet& s, std::uint64_t seed, bool det) {
  std::mt19937_64 rng(seed);
  double worst = 0;
  for (int k : {2, 3}) {
    JetSeries h(Rank::Sym2, kS2, kN);
    h[0] = round_metric(kS2) + random_sym2(kS2, 2, rng, 0.08);
    h[k] = random_sym2(kS2, 2, rng, 0.5);
    for (int j = k + 1; j <= kN; ++j) h[j] = random_sym2(kS2, 1, rng, 0.3);
    for (const auto& p : sample_points(kS2, 8)) {
      const auto di = jet_det_inverse(h, p, k);
      const ChartFrame fr = ChartFrame::at(kS2, p);
      const Eigen::MatrixXd H0 = fr.E.transpose() * h[0].eval_sym2(p) * fr.E;
      const Eigen::MatrixXd Hk = fr.E.transpose() * h[k].eval_sym2(p) * fr.E;
      const Eigen::MatrixXd H0i = H0.inverse();
      if (det) {
        worst = std::max(worst, std::abs(di.det[0] - H0.determinant()));
        for (int j = 1; j < k; ++j) worst = std::max(worst, std::abs(di.det[j]));
        worst = std::max(worst, std::abs(di.det[k] - H0.determinant() * (H0i * Hk).trace()));
      } else {
        const Eigen::MatrixXd Bk = fr.E * (H0i * Hk * H0i) * fr.E.transpose();
        worst = std::max(worst, (di.inv[0] - fr.E * H0i * fr.E.transpose()).cwiseAbs().maxCoeff());
        for (int j = 1; j < k; ++j) worst = std::max(worst, di.inv[j].cwiseAbs().maxCoeff());
        worst = std::max(worst, (di.inv[k] + Bk).cwiseAbs().maxCoeff());
      }
    }
  }
  s.below(det ? "det expansion" : "inverse expansion", worst, 1e-12);
}

void weighted_injectivity(Sheet& s, std::uint64_t seed) {
  const auto b = tensor_basis(kS2, 4);
  for (int m : {3, 4}) {
    const auto rep = nullspace_analysis(build_forward(b, geodesic_family(kS2, 3 * b.size(), seed), m), b);
    s.equal("m=" + std::to_string(m) + " kernel dim", static_cast<double>(rep.kernel.size()), 0);
    s.above("m=" + std::to_string(m) + " sigma ratio", rep.sigma_ratio, 1e-6);
  }
}

void moment_vanishing(Sheet& s, std::uint64_t seed) {
  // even fields with vanishing degree <= 2 moments: only zero
  s.below("full-period |I(L_X g)|", lie_full_period(seed), 1e-10);
  s.above("moment sigma ratio (even)", moment_ratio(seed), 1e-6);
}

void pole_system(Sheet& s, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const Poly x1 = coordinate_poly(kS2, 0), x2 = coordinate_poly(kS2, 1);
  double worst = 0;
  for (int i = 0; i < 5; ++i) {
    const auto F = random_sym2(kS2, 2, rng, 1.0);
    for (const Poly& p : {x1 * x1, x1 * x2}) {
      const auto r = pole_system_residual(F, p);
      worst = std::max(worst, std::abs(r.relation - r.direct));
    }
  }
  s.below("corrected vs direct", worst, 1e-10);
  s.equal("pole system rank", pole_system_rank(kS2), 3);
  s.note("printed form at g_eps, x1^2", pole_system_residual(round_metric(kS2), x1 * x1).printed);
}

using Runner = void (*)(Sheet&, std::uint64_t);

struct Entry {
  const char* id;
  const char* title;
  Runner run;
  double time_limit = 0;  // seconds, 0 = none
};

const std::vector<Entry>& acceptance_table() {
  static const std::vector<Entry> t = {
      {"normal-form", "normal form on 20 random jets", normal_form, 10},
      {"stage-formulas", "stage formulas, analytic cases", stage_formulas},
      {"laplacian-expansion", "Laplacian expansion through k+2", laplacian, 30},
      {"symbol-extraction", "symbol vs probing oracle, 10 pairs", symbol},
      {"shift-ode", "shift ODE with m^2, literal m fails", shift_ode},
      {"michel-kernel", "Lie kernel and moment injectivity", michel_kernel, 60},
      {"michel-identity", "calibrated Michel identity", michel_identity},
      {"layer-stripping", "layer stripping D2..D4", layer_stripping, 300},
      {"two-energies", "two-energy separation", two_energies},
      {"gauge", "gauge invariance and defining function", gauge},
      {"dense-orbit", "dense orbits on irrational radius", dense_orbit},
  };
  return t;
}

const std::vector<Entry>& identity_table() {
  static const std::vector<Entry> t = {
      {"stage-F", "normal-block stage solve", stage_F},
      {"stage-G", "cross-block stage solve", stage_G},
      {"laplacian-expansion", "Laplacian expansion", laplacian},
      {"inverse-expansion", "inverse of h to order k", [](Sheet& s, std::uint64_t seed) { det_inverse(s, seed, false); }},
      {"det-expansion", "det of h to order k", [](Sheet& s, std::uint64_t seed) { det_inverse(s, seed, true); }},
      {"symbol", "principal symbol of the difference", symbol},
      {"weighted-injectivity", "weighted half-period transform", weighted_injectivity},
      {"moment-vanishing", "full-period moments", moment_vanishing},
      {"shift-ode", "shift ODE", shift_ode},
      {"michel", "Michel identity", michel_identity},
      {"pole-system", "pole system (corrected form)", pole_system},
  };
  return t;
}

CheckResult run(const std::vector<Entry>& table, const std::string& id, std::uint64_t seed) {
  for (const auto& e : table) {
    if (id != e.id) continue;
    Sheet s;
    s.r.id = e.id;
    s.r.title = e.title;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      e.run(s, seed);
    } catch (const std::exception& ex) {
      s.ok = false;
      s.r.detail += std::string(s.r.detail.empty() ? "" : "; ") + "exception: " + ex.what();
    }
    s.r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (e.time_limit > 0) s.below("seconds", s.r.seconds, e.time_limit);
    s.r.pass = s.ok;
    return s.r;
  }
  throw std::invalid_argument("unknown check '" + id + "'");
}

std::vector<std::string> ids(const std::vector<Entry>& t) {
  std::vector<std::string> out;
  for (const auto& e : t) out.push_back(e.id);
  return out;
}

}  // namespace

std::vector<std::string> acceptance_ids() { return ids(acceptance_table()); }
std::vector<std::string> identity_ids() { return ids(identity_table()); }
CheckResult run_acceptance(const std::string& id, std::uint64_t seed) { return run(acceptance_table(), id, seed); }
CheckResult run_identity(const std::string& id, std::uint64_t seed) { return run(identity_table(), id, seed); }

}  // namespace asymscat
