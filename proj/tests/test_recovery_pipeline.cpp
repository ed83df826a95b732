#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include "asymscat/recovery_pipeline.hpp"

using namespace asymscat;

namespace {

double max_h_diff(const MetricJet& a, const MetricJet& b, int N) {
  double d = 0.0;
  for (const auto& p : sample_points(a.spec(), 5)) {
    const auto ca = a.coefficients_at(p), cb = b.coefficients_at(p);
    for (int j = 0; j <= N; ++j) d = std::max(d, (ca.h[j] - cb.h[j]).cwiseAbs().maxCoeff());
  }
  return d;
}

Scenario truncated(const Scenario& sc, int k) {
  Scenario t = sc;
  t.k_max = k;
  t.h2 = sc.h2.truncated(k);
  t.D.resize(k + 1);
  return t;
}

}  // namespace

TEST_CASE("make_scenario: deterministic, valid, agrees through order 1") {
  const auto a = make_scenario(5, 3, 3), b = make_scenario(5, 3, 3), c = make_scenario(6, 3, 3);
  const auto pts = sample_points(a.spec(), 20);
  CHECK(sup_norm(a.D[3] - b.D[3], pts) == 0.0);
  CHECK(sup_norm(a.D[3] - c.D[3], pts) > 1e-3);
  for (const auto& g : {a.g1(), a.g2()}) {
    const auto rep = validate_scattering_form(g);
    CHECK(rep.scattering_form);
    CHECK(rep.normal_form);
  }
  CHECK(max_h_diff(a.g1(), a.g2(), 1) == 0.0);
  CHECK(max_h_diff(a.g1(), a.g2(), 2) > 1e-3);
  CHECK_THROWS_AS(make_scenario(1, 1, 2), std::invalid_argument);
}

TEST_CASE("make_scenario: zero differences and projective mode") {
  ScenarioOptions z;
  z.zero_differences = true;
  const auto sc = make_scenario(3, 3, 2, z);
  CHECK(max_h_diff(sc.g1(), sc.g2(), 3) == 0.0);

  ScenarioOptions p;
  p.projective = true;
  p.with_potential = true;
  const auto pr = make_scenario(3, 3, 3, p);
  for (int j = 2; j <= 3; ++j) {
    CHECK(antipodal_parity_split(pr.D[j]).second.is_zero());
    CHECK(antipodal_parity_split(pr.V[j]).second.is_zero());
  }
}

TEST_CASE("layer_strip: zero data gives zero") {
  ScenarioOptions z;
  z.zero_differences = true;
  const auto sc = make_scenario(4, 3, 3, z);
  const auto rep = layer_strip(sc, 1.0);
  REQUIRE_FALSE(rep.aborted);
  REQUIRE(rep.orders.size() == 2);
  for (const auto& o : rep.orders) {
    CHECK(o.error < 1e-12);
    // zero-data soundness
    CHECK(o.error <= 10 * std::max(o.data_norm, 1e-15) / o.diag.sigma_min);
  }
}

TEST_CASE("layer_strip: planted D_2") {
  const auto sc = make_scenario(8, 2, 4);
  const auto rep = layer_strip(sc, 1.0);
  REQUIRE(rep.orders.size() == 1);
  CHECK(rep.orders[0].order == 2);
  CHECK(rep.orders[0].error < 1e-6);
  CHECK(rep.orders[0].sigma_ratio > 1e-6);
  CHECK_FALSE(rep.note.empty());
}

TEST_CASE("layer_strip: orders 2..4, mixed parity, later orders leave earlier ones alone") {
  const auto sc = make_scenario(11, 4, 4);
  const auto rep = layer_strip(sc, std::sqrt(2.0));
  REQUIRE_FALSE(rep.aborted);
  REQUIRE(rep.orders.size() == 3);
  for (size_t i = 0; i < rep.orders.size(); ++i) {
    CHECK(rep.orders[i].order == static_cast<int>(i) + 2);
    CHECK(rep.orders[i].error < 1e-5);
  }
  const auto short_rep = layer_strip(truncated(sc, 3), std::sqrt(2.0));
  REQUIRE(short_rep.orders.size() == 2);
  const auto pts = sample_points(sc.spec(), 50);
  for (int i = 0; i < 2; ++i) CHECK(sup_norm(short_rep.orders[i].D_hat - rep.orders[i].D_hat, pts) < 1e-14);
}

TEST_CASE("layer_strip: projective scenario on the even basis") {
  ScenarioOptions p;
  p.projective = true;
  const auto rep = layer_strip(make_scenario(12, 3, 4, p), 1.0);
  REQUIRE_FALSE(rep.aborted);
  for (const auto& o : rep.orders) CHECK(o.error < 1e-6);
}

TEST_CASE("layer_strip: the full-period channel loses the Lie part") {
  ScenarioOptions p;
  p.projective = true;
  const auto sc = make_scenario(13, 2, 4, p);
  StripOptions opt;
  opt.channel = Channel::FullPeriod;
  const auto aborted = layer_strip(sc, 1.0, opt);
  CHECK(aborted.aborted);
  CHECK(aborted.message.find("order 2") != std::string::npos);

  opt.abort_on_kernel = false;
  const auto rep = layer_strip(sc, 1.0, opt);
  REQUIRE(rep.orders.size() == 1);
  const auto& o = rep.orders[0];
  REQUIRE(o.kernel.has_value());
  CHECK(o.kernel->lie_dimension > 0);
  CHECK(o.kernel->kernel.size() == static_cast<size_t>(o.kernel->lie_dimension));
  CHECK(o.kernel->kernel_to_odd_lie < 1e-4);
  CHECK(o.error > 1e-3);

  // restoring the degree-2 moments closes the kernel on even fields
  opt.channel = Channel::FullPeriodMoments;
  const auto fixed = layer_strip(sc, 1.0, opt);
  CHECK(fixed.orders[0].diag.nullity == 0);
  CHECK(fixed.orders[0].error < 1e-6);
}

TEST_CASE("layer_strip: small noise stays small") {
  StripOptions opt;
  opt.noise = 1e-10;
  const auto rep = layer_strip(make_scenario(14, 2, 3), 1.0, opt);
  CHECK(rep.orders[0].error < 1e-6);
}

TEST_CASE("separate_two_energies: closed forms and errors") {
  const auto p = separate_two_energies(3.0, 1.0, 18.0, 2.0, 2);
  CHECK(p.metric == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(p.potential == doctest::Approx(1.0).epsilon(1e-15));
  // pure metric
  const double l1 = 1.3, l2 = 0.7;
  const auto q = separate_two_energies(5.0 * std::pow(l1, 4), l1, 5.0 * std::pow(l2, 4), l2, 3);
  CHECK(q.metric == doctest::Approx(5.0).epsilon(1e-14));
  CHECK(std::abs(q.potential) < 1e-13);
  CHECK_THROWS_AS(separate_two_energies(1.0, 1.0, 2.0, -1.0, 2), std::invalid_argument);
  CHECK_THROWS_AS(separate_two_energies(1.0, 0.0, 2.0, 1.0, 2), std::invalid_argument);
}

TEST_CASE("separate_two_energies: random field pairs round-trip") {
  const SphereSpec s{3, 1.0, 40};
  std::mt19937_64 rng(31);
  const auto pts = sample_points(s, 40);
  for (int k : {2, 3}) {
    const auto a = random_sym2(s, 3, rng, 1.0), b = round_metric(s).times(random_poly(s, 2, rng, 1.0));
    const double l1 = 1.0, l2 = std::sqrt(2.0);
    const auto s1 = a * std::pow(l1, k + 1) + b * std::pow(l1, k - 1);
    const auto s2 = a * std::pow(l2, k + 1) + b * std::pow(l2, k - 1);
    const auto sep = separate_two_energies(s1, l1, s2, l2, k);
    CHECK(sup_norm(sep.metric - a, pts) < 1e-10);
    CHECK(sup_norm(sep.potential - b, pts) < 1e-10);
  }
}

TEST_CASE("separating first then stripping equals stripping the metric channel") {
  ScenarioOptions o;
  o.with_potential = true;
  const auto sc = make_scenario(17, 3, 3, o);
  const auto two = strip_two_energies(sc, 1.0, std::sqrt(2.0));
  const auto one = layer_strip(sc, 1.0);
  REQUIRE_FALSE(two.metric.aborted);
  REQUIRE(two.metric.orders.size() == one.orders.size());
  const auto pts = sample_points(sc.spec(), 50);
  for (size_t i = 0; i < one.orders.size(); ++i) {
    CHECK(sup_norm(two.metric.orders[i].D_hat - one.orders[i].D_hat, pts) < 1e-8);
    CHECK(two.metric.orders[i].error < 1e-6);
  }
  for (int j = 2; j <= 3; ++j) CHECK(two.potential_error[j] < 1e-6);
}

TEST_CASE("gauge_check: admissible maps and a defining-function change") {
  const SphereSpec s{3, 1.0, 40};
  std::mt19937_64 rng(37);
  const int N = 5;
  const auto g = random_metric_jet(s, N, rng);
  CHECK(gauge_check(g, CollarDiffeoJet::identity(s, N)).difference < 1e-12);
  const auto psi = random_admissible_diffeo(s, N, rng);
  const auto rep = gauge_check(g, psi);
  CHECK(rep.invariant);
  CHECK(rep.difference < 1e-8);
  const auto alpha = BoundaryField::scalar(s, coordinate_poly(s, 0) * 0.5);
  const auto neg = gauge_check(g, alpha);
  CHECK_FALSE(neg.invariant);
  CHECK(neg.difference > 1e-3);
}
