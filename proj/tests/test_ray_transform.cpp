#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <numbers>
#include <random>

#include "asymscat/ray_transform.hpp"

using namespace asymscat;

namespace {

constexpr double kPi = std::numbers::pi;

GreatCircle equator(double rho = 1.0) {
  Eigen::VectorXd u(3), v(3);
  u << 1, 0, 0;
  v << 0, 1, 0;
  return GreatCircle::make(u, v, rho);
}

// closed form int_0^pi sin^m
double sin_integral(int m) {
  if (m == 0) return kPi;
  if (m == 1) return 2.0;
  return (m - 1.0) / m * sin_integral(m - 2);
}

BoundaryField odd_sym2(const SphereSpec& s, std::mt19937_64& rng) {
  BoundaryField W = random_sym2(s, 3, rng, 1.0);
  std::vector<std::vector<Poly>> c(s.n, std::vector<Poly>(s.n));
  for (int i = 0; i < s.n; ++i)
    for (int j = 0; j < s.n; ++j) c[i][j] = W.comp(i, j).odd_part();
  return BoundaryField::sym2(s, c);
}

}  // namespace

TEST_CASE("great circles: unit speed, closed, validated") {
  SphereSpec s{3, 1.7, 40};
  for (const auto& g : geodesic_family(s, 20, 4)) {
    for (double t : {0.0, 0.4, 2.9}) {
      CHECK(g.point(t).norm() == doctest::Approx(s.rho).epsilon(1e-14));
      CHECK(g.tangent(t).norm() == doctest::Approx(1.0).epsilon(1e-14));
      CHECK(std::abs(g.point(t).dot(g.tangent(t))) < 1e-13);
      CHECK((g.point(t) - g.point(t + g.period())).norm() < 1e-12);
      // tangent is the derivative of the point
      const double h = 1e-6;
      CHECK(((g.point(t + h) - g.point(t - h)) / (2 * h) - g.tangent(t)).norm() < 1e-8);
    }
  }
  Eigen::VectorXd u(3), v(3);
  u << 1, 0, 0;
  v << 1, 1, 0;
  CHECK_THROWS_AS(GreatCircle::make(u, v.normalized(), 1.0), std::invalid_argument);
}

TEST_CASE("geodesic family is seeded") {
  SphereSpec s{3, 1.0, 40};
  const auto a = geodesic_family(s, 5, 11), b = geodesic_family(s, 5, 11), c = geodesic_family(s, 5, 12);
  CHECK((a[3].u - b[3].u).norm() == 0.0);
  CHECK((a[3].u - c[3].u).norm() > 1e-3);
  SphereSpec s4{4, 1.0, 40};
  for (const auto& g : geodesic_family(s4, 5, 1)) CHECK(std::abs(g.u.dot(g.v)) < 1e-12);
}

TEST_CASE("weighted symbol transform: closed forms") {
  auto g = equator();
  const double lam = 1.7;
  auto zero = [](double, const Eigen::VectorXd&, const Eigen::VectorXd&) { return 0.0; };
  CHECK(weighted_symbol_transform(zero, g, 2, lam).value == 0.0);
  auto energy = [](double tau, const Eigen::VectorXd& mu, const Eigen::VectorXd&) { return tau * tau + mu.squaredNorm(); };
  auto tv = weighted_symbol_transform(energy, g, 2, lam);
  CHECK(tv.value == doctest::Approx(2 * lam * lam).epsilon(1e-13));
  CHECK_FALSE(tv.under_resolved);

  SphereSpec s{3, 1.0, 40};
  SymbolQuadratic T;
  T.spec = s;
  T.k = 2;
  T.B = round_metric(s);
  CHECK(weighted_symbol_transform(T, g, 2, lam).value == doctest::Approx(4.0 / 3.0 * lam * lam).epsilon(1e-13));
  // the quadratic path equals the generic path with mu = lambda sin s gamma'
  auto quad = [&](double, const Eigen::VectorXd& mu, const Eigen::VectorXd& y) { return T.eval(y, mu); };
  std::mt19937_64 rng(3);
  T.B = random_sym2(s, 3, rng, 1.0);
  for (const auto& gg : geodesic_family(s, 4, 2))
    for (int k : {2, 3, 4})
      CHECK(weighted_symbol_transform(T, gg, k, lam).value ==
            doctest::Approx(weighted_symbol_transform(quad, gg, k, lam).value).epsilon(1e-12));
}

TEST_CASE("tensor transform: constant integrand and parity") {
  SphereSpec s{3, 1.0, 40};
  CHECK(tensor_transform(round_metric(s), equator(), 2).value == doctest::Approx(kPi / 2).epsilon(1e-14));
  for (int m = 0; m <= 5; ++m)
    CHECK(tensor_transform(round_metric(s), equator(), m).value == doctest::Approx(sin_integral(m)).epsilon(1e-13));
  std::mt19937_64 rng(5);
  const auto W = odd_sym2(s, rng);
  const Poly one = constant_poly(s, 1.0);
  for (const auto& g : geodesic_family(s, 10, 3)) CHECK(std::abs(moment_transform(W, g, one).value) < 1e-12);
}

TEST_CASE("tensor transform: radius rho uses unit-speed time") {
  SphereSpec s{3, 2.0, 40};
  // g_eps(gamma', gamma') = 1, int_0^{2 pi} sin^2(t/2) dt = pi
  CHECK(tensor_transform(round_metric(s), equator(2.0), 2).value == doctest::Approx(kPi).epsilon(1e-13));
}

TEST_CASE("Lie derivatives of g_eps have zero full-period transform") {
  SphereSpec s{3, 1.0, 40};
  std::mt19937_64 rng(7);
  const Poly one = constant_poly(s, 1.0);
  for (int i = 0; i < 3; ++i) {
    const auto L = lie_derivative_round_metric(random_tangent_vector(s, 3, rng, 1.0));
    for (const auto& g : geodesic_family(s, 10, 100 + i)) CHECK(std::abs(moment_transform(L, g, one).value) < 1e-10);
  }
}

TEST_CASE("moment transform: closed forms") {
  SphereSpec s{3, 1.0, 40};
  CHECK(moment_transform(round_metric(s), equator(), constant_poly(s, 1.0)).value ==
        doctest::Approx(2 * kPi).epsilon(1e-14));
  const Poly x1sq = coordinate_poly(s, 0) * coordinate_poly(s, 0);
  CHECK(moment_transform(round_metric(s), equator(), x1sq).value == doctest::Approx(kPi).epsilon(1e-14));
}

TEST_CASE("transforms converge under node doubling") {
  SphereSpec s{3, 1.0, 40};
  std::mt19937_64 rng(9);
  const auto W = random_sym2(s, 4, rng, 1.0);
  for (const auto& g : geodesic_family(s, 6, 8))
    for (int m : {0, 3, 5}) {
      QuadratureOptions q;
      q.gauss_nodes = 4 * (4 + 2 + m + 2);  // projected degree 4 + 2
      const auto tv = tensor_transform(W, g, m, q);
      CHECK(tv.richardson < 1e-12);
      CHECK_FALSE(tv.under_resolved);
    }
  QuadratureOptions coarse;
  coarse.gauss_nodes = 3;
  CHECK(tensor_transform(W, geodesic_family(s, 1, 8)[0], 5, coarse).under_resolved);
}

TEST_CASE("full-period transforms are invariant under reparametrization") {
  SphereSpec s{3, 1.0, 40};
  std::mt19937_64 rng(13);
  const auto W = random_sym2(s, 3, rng, 1.0);
  const Poly p = random_poly(s, 2, rng, 1.0);
  for (const auto& g : geodesic_family(s, 5, 21)) {
    const double a = moment_transform(W, g, p).value, b = moment_transform(W, g.rotated(1.234), p).value;
    CHECK(std::abs(a - b) < 1e-10);
  }
}

TEST_CASE("shift ODE: m^2 coefficient on bandlimited tensors") {
  SphereSpec s{3, 1.0, 40};
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 2; ++trial) {
    const auto W = random_sym2(s, 3, rng, 1.0);
    const auto g = geodesic_family(s, 3, 40 + trial)[trial];
    for (int m : {2, 3, 4}) {
      const auto rep = shift_ode_residual(W, g, m);
      CHECK(rep.residual < 1e-9);
      CHECK_FALSE(rep.under_resolved);
      CHECK(rep.endpoint0 < 1e-9);
      CHECK(rep.endpoint1 < 1e-9);
    }
  }
}

TEST_CASE("shift ODE: round metric constants and the literal coefficient") {
  SphereSpec s{3, 1.0, 40};
  for (int m : {2, 3, 4}) {
    const auto rep = shift_ode_residual(round_metric(s), equator(), m);
    for (double v : rep.I) CHECK(v == doctest::Approx(sin_integral(m)).epsilon(1e-13));
    CHECK(rep.residual < 1e-10);
  }
  const auto lit = shift_ode_residual(round_metric(s), equator(), 2, 64, true);
  // |2 (pi/2) - 2 pi| = pi
  CHECK(lit.residual == doctest::Approx(kPi).epsilon(1e-10));
  CHECK(lit.residual > 0.1);
}

TEST_CASE("shift ODE: the k = 0 identity by closed form") {
  // on the equator x_1 g_eps gives G(t) = cos t, so I_0(a) = -2 sin a
  SphereSpec s{3, 1.0, 40};
  const BoundaryField W = round_metric(s).times(coordinate_poly(s, 0));
  const auto rep = shift_ode_residual(W, equator(), 0);
  for (size_t i = 0; i < rep.alpha.size(); ++i) CHECK(rep.I[i] == doctest::Approx(-2 * std::sin(rep.alpha[i])).epsilon(1e-12));
  CHECK(rep.endpoint0 < 1e-10);
  CHECK(rep.endpoint1 < 1e-10);
  CHECK(shift_ode_residual(BoundaryField(Rank::Sym2, s), equator(), 3).residual == 0.0);
  CHECK_THROWS_AS(shift_ode_residual(W, equator(2.0), 2), std::invalid_argument);
  CHECK_THROWS_AS(shift_ode_residual(W, equator(), 2, 32), std::invalid_argument);
}
