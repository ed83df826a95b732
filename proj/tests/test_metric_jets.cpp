#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include "asymscat/normal_form.hpp"

using namespace asymscat;

namespace {

Poly cpoly(const SphereSpec& s, double c) { return constant_poly(s, c); }

BoundaryField const_sym2(const SphereSpec& s, const Eigen::MatrixXd& m) {
  std::vector<std::vector<Poly>> c(s.n, std::vector<Poly>(s.n, cpoly(s, 0.0)));
  for (int i = 0; i < s.n; ++i)
    for (int j = 0; j < s.n; ++j) c[i][j] = cpoly(s, m(i, j));
  return project_tangential(BoundaryField::sym2(s, c));
}

BoundaryField scalar_field(const SphereSpec& s, double c) { return BoundaryField::scalar(s, cpoly(s, c)); }

// largest coefficient difference of two metric jets through order N on the points
double jet_distance(const MetricJet& g1, const MetricJet& g2, const std::vector<Eigen::VectorXd>& pts, int N) {
  double d = 0.0;
  for (const auto& p : pts) {
    const auto c1 = g1.coefficients_at(p), c2 = g2.coefficients_at(p);
    for (int j = 0; j <= N; ++j) {
      d = std::max(d, std::abs(c1.a[j] - c2.a[j]));
      d = std::max(d, (c1.cross[j] - c2.cross[j]).cwiseAbs().maxCoeff());
      d = std::max(d, (c1.h[j] - c2.h[j]).cwiseAbs().maxCoeff());
    }
  }
  return d;
}

MetricJet with_blocks(const SphereSpec& s, int N, const std::vector<std::pair<int, double>>& a_terms,
                      const std::vector<std::pair<int, BoundaryField>>& cross_terms) {
  JetSeries a(Rank::Scalar, s, N), c(Rank::Covector, s, N), h(Rank::Sym2, s, N);
  a[0] = scalar_field(s, 1.0);
  h[0] = round_metric(s);
  for (const auto& [j, v] : a_terms) a[j] = scalar_field(s, v);
  for (const auto& [j, w] : cross_terms) c[j] = BoundaryField::vector(s, w.components(), Rank::Covector);
  return MetricJet::polynomial(s, N, a, c, h);
}

}  // namespace

TEST_CASE("jet_det_inverse: constant block is inverted exactly") {
  SphereSpec s{3, 1.0, 40};
  JetSeries h(Rank::Sym2, s, 3);
  h[0] = round_metric(s) * 2.0;
  for (const auto& p : sample_points(s, 6)) {
    const auto di = jet_det_inverse(h, p, 1);
    CHECK(di.det[0] == doctest::Approx(4.0).epsilon(1e-14));
    const Eigen::MatrixXd P = Eigen::MatrixXd::Identity(3, 3) - p * p.transpose();
    CHECK((di.inv[0] - 0.5 * P).cwiseAbs().maxCoeff() < 1e-14);
    for (int j = 1; j <= 3; ++j) {
      CHECK(std::abs(di.det[j]) < 1e-15);
      CHECK(di.inv[j].cwiseAbs().maxCoeff() < 1e-15);
    }
  }
}

TEST_CASE("jet_det_inverse: planted diagonal perturbation at order 2") {
  SphereSpec s{3, 1.0, 40};
  const double a = 0.3, b = -0.7;
  JetSeries h(Rank::Sym2, s, 5);
  h[0] = round_metric(s);
  Eigen::MatrixXd D = Eigen::MatrixXd::Zero(3, 3);
  D(0, 0) = a;
  D(1, 1) = b;
  h[2] = const_sym2(s, D);
  Eigen::VectorXd pole(3);
  pole << 0, 0, 1;
  const auto di = jet_det_inverse(h, pole, 2);
  CHECK(di.det[0] == doctest::Approx(1.0));
  CHECK(std::abs(di.det[1]) < 1e-15);
  CHECK(di.det[2] == doctest::Approx(a + b).epsilon(1e-13));
  CHECK(di.det[4] == doctest::Approx(a * b).epsilon(1e-13));
  CHECK(di.tau_k == doctest::Approx(a + b).epsilon(1e-13));
  CHECK((di.inv[2] + D).cwiseAbs().maxCoeff() < 1e-14);
  CHECK((di.b_k - D).cwiseAbs().maxCoeff() < 1e-14);
  Eigen::MatrixXd D2 = D * D;
  CHECK((di.inv[4] - D2).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("jet_det_inverse: random order-6 series against a convolution oracle") {
  SphereSpec s{3, 1.3, 40};
  std::mt19937_64 rng(11);
  const int N = 6;
  JetSeries h(Rank::Sym2, s, N);
  h[0] = round_metric(s) + random_sym2(s, 2, rng, 0.05);
  for (int j = 1; j <= N; ++j) h[j] = random_sym2(s, 2, rng, 0.3);
  for (const auto& p : sample_points(s, 8)) {
    const auto di = jet_det_inverse(h, p, 3);
    const ChartFrame fr = ChartFrame::at(s, p);
    std::vector<Eigen::MatrixXd> hc;
    for (int j = 0; j <= N; ++j) hc.push_back(fr.E.transpose() * h[j].eval_sym2(p) * fr.E);
    double worst = 0.0, worst_det = 0.0;
    for (int m = 0; m <= N; ++m) {
      Eigen::MatrixXd prod = Eigen::MatrixXd::Zero(2, 2);
      double det = 0.0;
      for (int i = 0; i <= m; ++i) {
        prod += hc[i] * (fr.E.transpose() * di.inv[m - i] * fr.E);
        det += hc[i](0, 0) * hc[m - i](1, 1) - hc[i](0, 1) * hc[m - i](1, 0);
      }
      if (m == 0) prod -= Eigen::MatrixXd::Identity(2, 2);
      worst = std::max(worst, prod.cwiseAbs().maxCoeff());
      worst_det = std::max(worst_det, std::abs(det - di.det[m]));
    }
    CHECK(worst < 1e-10);
    CHECK(worst_det < 1e-12);
    // first-order structure at k = 3
    const Eigen::MatrixXd h0i = hc[0].inverse();
    CHECK(std::abs(di.tau_k - (h0i * hc[3]).trace()) < 1e-12);
  }
}

TEST_CASE("jet_det_inverse: singular leading block names the point") {
  SphereSpec s{3, 1.0, 40};
  JetSeries h(Rank::Sym2, s, 2);
  Eigen::MatrixXd D = Eigen::MatrixXd::Zero(3, 3);
  D(0, 0) = 1.0;
  h[0] = const_sym2(s, D);
  Eigen::VectorXd pole(3);
  pole << 0, 0, 1;
  try {
    jet_det_inverse(h, pole, 1);
    FAIL("expected a domain_error");
  } catch (const std::domain_error& e) {
    CHECK(std::string(e.what()).find("[") != std::string::npos);
  }
}

TEST_CASE("pullback: identity leaves the jet unchanged") {
  SphereSpec s{3, 1.0, 40};
  std::mt19937_64 rng(3);
  auto g = random_metric_jet(s, 5, rng);
  auto pg = pullback_collar(g, CollarDiffeoJet::identity(s, 5));
  CHECK(jet_distance(g, pg, sample_points(s, 6), 5) < 1e-14);
}

TEST_CASE("pullback: constant normal displacement on the round model") {
  SphereSpec s{3, 1.0, 40};
  const double c = 0.37;
  auto g = MetricJet::round_model(s, 6);
  for (int r : {0, 1, 2}) {
    auto phi = CollarDiffeoJet::stage_map(s, 6, r, scalar_field(s, c), BoundaryField::vector(s, {cpoly(s, 0), cpoly(s, 0), cpoly(s, 0)}));
    auto pg = pullback_collar(g, phi);
    for (const auto& p : sample_points(s, 5)) {
      const auto pc = pg.coefficients_at(p);
      CHECK(pc.a[0] == doctest::Approx(1.0).epsilon(1e-14));
      for (int j = 1; j < r + 2; ++j) CHECK(std::abs(pc.a[j]) < 1e-14);
      // the leading change of the normal block is 2(r+1) F
      CHECK(pc.a[r + 2] == doctest::Approx(2.0 * (r + 1) * c).epsilon(1e-13));
      for (int j = 0; j <= 6; ++j) CHECK(pc.cross[j].cwiseAbs().maxCoeff() < 1e-13);
    }
  }
}

TEST_CASE("pullback: planted cross term is removed by its stage map") {
  SphereSpec s{3, 1.0, 40};
  std::mt19937_64 rng(5);
  for (int r : {0, 2}) {
    const auto w = random_tangent_vector(s, 2, rng, 0.4);
    auto g = with_blocks(s, 6, {{r + 2, 0.25}}, {{r, w}});
    auto st = stage_solve(g, r);
    REQUIRE(st.G_field.has_value());
    auto pg = pullback_collar(g, st.map());
    for (const auto& p : sample_points(s, 8)) {
      const auto pc = pg.coefficients_at(p);
      for (int j = 0; j <= r; ++j) CHECK(pc.cross[j].cwiseAbs().maxCoeff() < 1e-12);
      CHECK(std::abs(pc.a[r + 2]) < 1e-12);
      // the polynomial solve agrees with the pointwise one
      CHECK((st.G_at(p) + 0.5 / (r + 1) * w.eval_vector(p)).cwiseAbs().maxCoeff() < 1e-13);
    }
  }
}

TEST_CASE("pullback preserves the scattering class") {
  SphereSpec s{3, 1.0, 40};
  std::mt19937_64 rng(7);
  auto g = random_metric_jet(s, 5, rng);
  auto psi = random_admissible_diffeo(s, 5, rng);
  auto rep = validate_scattering_form(pullback_collar(g, psi), 24);
  CHECK(rep.scattering_form);
  CHECK(rep.margin > 0.0);
}

TEST_CASE("compose: functoriality of pullback") {
  SphereSpec s{3, 1.2, 40};
  std::mt19937_64 rng(13);
  const int N = 5;
  auto g = random_metric_jet(s, N, rng);
  auto p1 = random_admissible_diffeo(s, N, rng);
  auto p2 = random_admissible_diffeo(s, N, rng);
  auto lhs = pullback_collar(g, compose_diffeos(p1, p2));
  auto rhs = pullback_collar(pullback_collar(g, p2), p1);
  CHECK(jet_distance(lhs, rhs, sample_points(s, 6), N) < 1e-10);

  auto p3 = random_admissible_diffeo(s, N, rng);
  auto assoc1 = compose_diffeos(compose_diffeos(p1, p2), p3);
  auto assoc2 = compose_diffeos(p1, compose_diffeos(p2, p3));
  CHECK(jet_distance(pullback_collar(g, assoc1), pullback_collar(g, assoc2), sample_points(s, 4), N) < 1e-10);
}

TEST_CASE("compose: identity and inverse") {
  SphereSpec s{3, 1.0, 40};
  std::mt19937_64 rng(17);
  const int N = 6;
  auto phi = random_admissible_diffeo(s, N, rng);
  auto id = CollarDiffeoJet::identity(s, N);
  CHECK(compose_diffeos(id, phi).kind() == CollarDiffeoJet::Kind::Series);
  for (const auto& p : sample_points(s, 5)) {
    const auto a = compose_diffeos(id, phi).at(p), b = phi.at(p);
    for (size_t j = 0; j < a.u.size(); ++j) CHECK(a.u[j] == b.u[j]);
    const auto e = compose_diffeos(phi, CollarDiffeoJet::inverse(phi)).at(p);
    CHECK(e.u[0] == doctest::Approx(1.0));
    for (int j = 1; j <= N + 1; ++j) CHECK(std::abs(e.u[j]) < 1e-12);
    for (int j = 0; j <= N + 1; ++j) CHECK(e.eta[j].cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("compose: two constant stage maps by hand") {
  // a: x = X + c0 X^3, b: x = X + c1 X^4; b o a gives X + c0 X^3 + c1 X^4 + 4 c0 c1 X^6
  SphereSpec s{3, 1.0, 40};
  const double c0 = 0.3, c1 = -0.45;
  const auto zero = BoundaryField::vector(s, {cpoly(s, 0), cpoly(s, 0), cpoly(s, 0)});
  auto a = CollarDiffeoJet::stage_map(s, 6, 0, scalar_field(s, c0), zero);
  auto b = CollarDiffeoJet::stage_map(s, 6, 1, scalar_field(s, c1), zero);
  const auto p = sample_points(s, 3)[2];
  const auto ba = compose_diffeos(a, b).at(p);
  CHECK(ba.u[2] == doctest::Approx(c0));
  CHECK(ba.u[3] == doctest::Approx(c1));
  CHECK(std::abs(ba.u[4]) < 1e-14);
  CHECK(ba.u[5] == doctest::Approx(4 * c0 * c1));
  const auto ab = compose_diffeos(b, a).at(p);
  CHECK(ab.u[5] == doctest::Approx(3 * c0 * c1));
  CHECK(ab.u[1] == 0.0);
}

TEST_CASE("compose: stage maps with tangential parts keep the displacement profile") {
  SphereSpec s{3, 1.0, 40};
  std::mt19937_64 rng(19);
  auto a = CollarDiffeoJet::stage_map(s, 6, 0, BoundaryField::scalar(s, random_poly(s, 2, rng, 0.3)),
                                      random_tangent_vector(s, 2, rng, 0.3));
  auto b = CollarDiffeoJet::stage_map(s, 6, 1, BoundaryField::scalar(s, random_poly(s, 2, rng, 0.3)),
                                      random_tangent_vector(s, 2, rng, 0.3));
  for (const auto& p : sample_points(s, 5)) {
    const auto d = compose_diffeos(a, b).at(p);
    CHECK(d.u[0] == doctest::Approx(1.0));
    CHECK(std::abs(d.u[1]) < 1e-15);  // x o Phi = X + O(X^3)
    CHECK(d.eta[0].cwiseAbs().maxCoeff() < 1e-15);
    // order-1 displacement is the stage-0 G alone
    CHECK((d.eta[1] - a.at(p).eta[1]).cwiseAbs().maxCoeff() < 1e-14);
  }
}

TEST_CASE("validate: round model, planted terms") {
  SphereSpec s{3, 1.5, 40};
  auto rep = validate_scattering_form(MetricJet::round_model(s, 6));
  CHECK(rep.scattering_form);
  CHECK(rep.normal_form);
  CHECK(rep.stage == 6);
  CHECK(rep.margin == doctest::Approx(s.rho2()).epsilon(1e-12));
  CHECK(check_normal(MetricJet::round_model(s, 6)));

  CHECK(validate_scattering_form(with_blocks(s, 6, {{2, 0.5}}, {})).stage == 0);
  std::mt19937_64 rng(23);
  auto w = random_tangent_vector(s, 1, rng, 1.0);
  auto g3 = with_blocks(s, 6, {}, {{3, w}});
  auto rep3 = validate_scattering_form(g3);
  CHECK(rep3.stage == 3);
  CHECK_FALSE(rep3.normal_form);
  CHECK_FALSE(check_normal(g3));

  JetSeries a(Rank::Scalar, s, 2), c(Rank::Covector, s, 2), h(Rank::Sym2, s, 2);
  a[0] = scalar_field(s, 1.0);
  a[1] = scalar_field(s, 0.1);
  h[0] = round_metric(s);
  CHECK_FALSE(validate_scattering_form(MetricJet::polynomial(s, 2, a, c, h)).scattering_form);
}

TEST_CASE("stage_solve: worked examples") {
  SphereSpec s{3, 1.0, 40};
  const double c = 0.8;
  auto g = with_blocks(s, 6, {{3, c}}, {});
  auto st = stage_solve(g, 1);
  for (const auto& p : sample_points(s, 6)) {
    CHECK(st.F_at(p) == doctest::Approx(-c / 4).epsilon(1e-14));
    CHECK(st.G_at(p).norm() < 1e-15);
  }
  std::mt19937_64 rng(29);
  auto w = random_tangent_vector(s, 2, rng, 1.0);
  auto g0 = with_blocks(s, 6, {}, {{0, w}});
  auto st0 = stage_solve(g0, 0);
  for (const auto& p : sample_points(s, 6)) CHECK((st0.G_at(p) + 0.5 * w.eval_vector(p)).norm() < 1e-14);
}

TEST_CASE("stage_solve: random jet, one stage") {
  SphereSpec s{3, 1.0, 40};
  std::mt19937_64 rng(31);
  auto g = random_metric_jet(s, 6, rng);
  auto st = stage_solve(g, 0);
  CHECK_FALSE(st.F_field.has_value());  // h_0 is not round, pointwise path
  auto pg = pullback_collar(g, st.map());
  double worst = 0.0;
  for (const auto& p : sample_points(s, 12)) {
    const auto pc = pg.coefficients_at(p);
    worst = std::max({worst, pc.cross[0].cwiseAbs().maxCoeff(), std::abs(pc.a[2])});
  }
  CHECK(worst < 1e-10);
  CHECK(validate_scattering_form(pg).raw_stage == 1);
}

TEST_CASE("stage_solve: singular h_0 is rejected") {
  SphereSpec s{3, 1.0, 40};
  JetSeries a(Rank::Scalar, s, 2), c(Rank::Covector, s, 2), h(Rank::Sym2, s, 2);
  a[0] = scalar_field(s, 1.0);
  Eigen::MatrixXd D = Eigen::MatrixXd::Zero(3, 3);
  D(0, 0) = 1.0;
  h[0] = const_sym2(s, D);
  CHECK_THROWS_AS(stage_solve(MetricJet::polynomial(s, 2, a, c, h), 0), std::domain_error);
}

TEST_CASE("normalize: staged ledger and normal output") {
  SphereSpec s{3, 1.0, 40};
  std::mt19937_64 rng(37);
  auto g = random_metric_jet(s, 6, rng);
  auto res = normalize(g, 6);
  REQUIRE(res.ledger.size() == 7);
  for (const auto& row : res.ledger) {
    CHECK(row.stage_after == row.stage_before + 1);
    CHECK(row.cross_after < 1e-10);
    CHECK(row.a_after < 1e-10);
  }
  CHECK(res.report.normal_form);
  CHECK(check_normal(res.g_nf));
  CHECK(jet_distance(res.g_nf, pullback_collar(g, res.phi), sample_points(s, 5), 6) < 1e-10);
  for (const auto& p : sample_points(s, 5)) {
    const auto d = res.phi.at(p);
    CHECK(std::abs(d.u[1]) < 1e-15);
    CHECK(d.eta[0].norm() < 1e-15);
  }
}

TEST_CASE("normalize: already normal input gives the identity") {
  SphereSpec s{3, 1.0, 40};
  auto g = MetricJet::round_model(s, 6);
  auto res = normalize(g, 6);
  CHECK(res.phi.is_identity());
  CHECK(res.ledger.empty());
}

TEST_CASE("normalize: idempotence") {
  SphereSpec s{3, 1.0, 40};
  std::mt19937_64 rng(41);
  auto g = random_metric_jet(s, 5, rng);
  auto first = normalize(g, 5);
  auto second = normalize(first.g_nf, 5);
  CHECK(second.phi.is_identity());
  CHECK(jet_distance(first.g_nf, second.g_nf, sample_points(s, 4), 5) < 1e-12);
}

TEST_CASE("normalize: gauge invariance under admissible collar maps") {
  SphereSpec s{3, 1.0, 40};
  std::mt19937_64 rng(43);
  const int N = 6;
  auto g0 = normalize(random_metric_jet(s, N, rng), N).g_nf;
  for (int trial = 0; trial < 2; ++trial) {
    auto psi = random_admissible_diffeo(s, N, rng);
    auto g = pullback_collar(g0, psi);
    CHECK_FALSE(check_normal(g));
    auto res = normalize(g, N);
    CHECK(jet_distance(res.g_nf, g0, sample_points(s, 6), N) < 1e-9);
  }
}

TEST_CASE("normalize: a new defining function changes the h-jet") {
  SphereSpec s{3, 1.0, 40};
  std::mt19937_64 rng(47);
  const int N = 5;
  auto g0 = normalize(random_metric_jet(s, N, rng), N).g_nf;
  auto alpha = BoundaryField::scalar(s, random_poly(s, 2, rng, 0.5));
  auto g = pullback_collar(g0, CollarDiffeoJet::defining_function_change(s, N, alpha));
  auto res = normalize(g, N);
  CHECK(res.report.normal_form);
  double diff = 0.0;
  for (const auto& p : sample_points(s, 6)) {
    const auto a = res.g_nf.coefficients_at(p), b = g0.coefficients_at(p);
    for (int j = 1; j <= N; ++j) diff = std::max(diff, (a.h[j] - b.h[j]).cwiseAbs().maxCoeff());
  }
  CHECK(diff > 1e-3);
}

TEST_CASE("normalize: map coefficients are stable in the order") {
  SphereSpec s{3, 1.0, 40};
  std::mt19937_64 rng(53);
  auto g = random_metric_jet(s, 8, rng);
  auto m6 = CollarDiffeoJet::normal_form_map(g, 6), m7 = CollarDiffeoJet::normal_form_map(g, 7);
  for (const auto& p : sample_points(s, 4)) {
    const auto a = m6.at(p, 12), b = m7.at(p, 12);
    for (int j = 0; j <= 8; ++j) CHECK_MESSAGE(std::abs(a.u[j] - b.u[j]) < 1e-12, j);
    for (int j = 0; j <= 7; ++j) CHECK((a.eta[j] - b.eta[j]).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("pullback: tangential determinant picks up the squared Jacobian") {
  // with u = 1 and no cross block, H' = J^T (H o phi) J
  SphereSpec s{3, 1.0, 40};
  std::mt19937_64 rng(59);
  JetSeries a(Rank::Scalar, s, 4), c(Rank::Covector, s, 4), h(Rank::Sym2, s, 4);
  a[0] = scalar_field(s, 1.0);
  h[0] = round_metric(s) + random_sym2(s, 2, rng, 0.05);
  for (int j = 1; j <= 4; ++j) h[j] = random_sym2(s, 2, rng, 0.2);
  auto g = MetricJet::polynomial(s, 4, a, c, h);
  JetSeries U(Rank::Scalar, s, 0), V(Rank::Vector, s, 2);
  V[1] = random_tangent_vector(s, 2, rng, 0.3);
  V[2] = random_tangent_vector(s, 2, rng, 0.3);
  auto phi = CollarDiffeoJet::series(s, 4, U, V);
  for (const auto& p : sample_points(s, 4)) {
    const LocalContext ctx = g.context_at(p);
    const LocalMetric gl = g.localize(ctx);
    const LocalDiffeo d = phi.localize(ctx);
    const Substitution sub = substitution_of(d);
    const LocalMetric pl = pullback_local(gl, d, sub);
    const int nb = ctx.nb();
    JetMatrix Hs{nb, std::vector<LocalJet>(nb * nb)}, J{nb, std::vector<LocalJet>(nb * nb)};
    for (int i = 0; i < nb * nb; ++i) Hs.m[i] = sub.compose(gl.H.m[i]);
    for (int i = 0; i < nb; ++i)
      for (int k = 0; k < nb; ++k) J(i, k) = d.eta[i].derivative(1 + k) + (i == k ? 1.0 : 0.0);
    const LocalJet lhs = jet_det(pl.H), dj = jet_det(J);
    const LocalJet rhs = jet_det(Hs) * dj * dj;
    // compare the pure-X coefficients through order 4
    for (int j = 0; j <= 4; ++j) CHECK(std::abs(lhs.var_coefficient(0, j).value() - rhs.var_coefficient(0, j).value()) < 1e-12);
  }
}
