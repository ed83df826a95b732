#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <omp.h>

#include <cmath>
#include <numbers>
#include <random>

#include "asymscat/tomography.hpp"

using namespace asymscat;

namespace {

constexpr double kPi = std::numbers::pi;
const SphereSpec S2{3, 1.0, 40};

GreatCircle equator() {
  Eigen::VectorXd u(3), v(3);
  u << 1, 0, 0;
  v << 0, 1, 0;
  return GreatCircle::make(u, v, 1.0);
}

// hand-built basis from explicit fields
TensorBasis custom_basis(const std::vector<BoundaryField>& fs) {
  TensorBasis b;
  b.spec = fs.at(0).spec();
  b.rank = fs[0].rank();
  b.fields = fs;
  b.parity.assign(fs.size(), 0);
  return b;
}

BoundaryField planted(const TensorBasis& b, std::mt19937_64& rng) {
  std::normal_distribution<double> nd;
  Eigen::VectorXd c(b.size());
  for (int i = 0; i < b.size(); ++i) c[i] = nd(rng);
  return b.combine(c);
}

double field_error(const BoundaryField& a, const BoundaryField& b) { return sup_norm(a - b, sample_points(a.spec(), 300)); }

}  // namespace

TEST_CASE("tensor basis: independent, parity split adds up") {
  for (int D : {2, 3, 4}) {
    const auto all = tensor_basis(S2, D), even = tensor_basis(S2, D, BasisParity::Even),
               odd = tensor_basis(S2, D, BasisParity::Odd);
    CHECK(all.gram_min_eigenvalue > 1e-10);
    CHECK(even.size() + odd.size() == all.size());
    for (int p : even.parity) CHECK(p == 0);
    for (const auto& f : even.fields) CHECK(antipodal_parity_split(f).second.is_zero());
    for (const auto& f : all.fields) CHECK(normal_leakage(f, sample_points(S2, 20)) < 1e-13);
  }
  // sym2 tangential fields with degree <= 0 components: P e_i e_j P spans 6 candidates, all independent
  CHECK(tensor_basis(S2, 0).size() == 6);
  CHECK(scalar_basis(S2, 4).size() == 25);  // harmonics of degree <= 4 on S^2
}

TEST_CASE("build_forward: one constant element on the equator") {
  const auto b = custom_basis({round_metric(S2)});
  const auto op = build_forward(b, {equator()}, 2);
  REQUIRE(op.A.rows() == 1);
  REQUIRE(op.A.cols() == 1);
  CHECK(op.A(0, 0) == doctest::Approx(kPi / 2).epsilon(1e-14));
  CHECK_THROWS_AS(build_forward(TensorBasis{}, {equator()}, 2), std::invalid_argument);
  CHECK_THROWS_AS(build_forward(b, {}, 2), std::invalid_argument);
}

TEST_CASE("build_forward matches direct quadrature entry by entry") {
  const auto b = tensor_basis(S2, 3);
  const auto geo = geodesic_family(S2, 12, 5);
  RowPlan plan;
  plan.weights = {0, 3, 4};
  plan.moments = moment_polys(S2, 2);
  auto rows = expand_plan(plan, static_cast<int>(geo.size()));
  for (size_t i = 0; i < rows.size(); i += 3) rows[i].lambda = 1.3;
  const auto fast = build_forward(b, geo, rows, plan.moments);
  const auto ref = build_forward_serial(b, geo, rows, plan.moments);
  const double scale = ref.A.cwiseAbs().maxCoeff();
  CHECK((fast.A - ref.A).cwiseAbs().maxCoeff() < 1e-12 * scale);

  // thread count does not change the result
  const int saved = omp_get_max_threads();
  omp_set_num_threads(1);
  const auto one = build_forward(b, geo, rows, plan.moments);
  omp_set_num_threads(3);
  const auto three = build_forward(b, geo, rows, plan.moments);
  omp_set_num_threads(saved);
  CHECK((one.A - three.A).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("scalar assembly matches direct quadrature") {
  const auto b = scalar_basis(S2, 4);
  const auto geo = geodesic_family(S2, 8, 6);
  RowPlan plan;
  plan.weights = {1, 2};
  plan.moments = {constant_poly(S2, 1.0), coordinate_poly(S2, 2)};
  const auto rows = expand_plan(plan, 8);
  const auto fast = build_forward(b, geo, rows, plan.moments), ref = build_forward_serial(b, geo, rows, plan.moments);
  CHECK((fast.A - ref.A).cwiseAbs().maxCoeff() < 1e-12 * ref.A.cwiseAbs().maxCoeff());
}

TEST_CASE("Lie-derivative columns vanish under full-period rows") {
  std::mt19937_64 rng(21);
  std::vector<BoundaryField> lie;
  for (int i = 0; i < 5; ++i) lie.push_back(lie_derivative_round_metric(random_tangent_vector(S2, 3, rng, 1.0)));
  const auto b = custom_basis(lie);
  const auto op = build_forward(b, geodesic_family(S2, 40, 3), -1, {constant_poly(S2, 1.0)});
  for (int j = 0; j < b.size(); ++j) CHECK(op.A.col(j).norm() < 1e-9);
}

TEST_CASE("full-period kernel is odd fields plus Lie derivatives") {
  const auto b = tensor_basis(S2, 4);
  const auto op = build_forward(b, geodesic_family(S2, 4 * b.size(), 8), -1, {constant_poly(S2, 1.0)});
  const auto rep = nullspace_analysis(op, b);
  CHECK(rep.kernel.size() == static_cast<size_t>(rep.odd_lie_dimension));
  CHECK(rep.kernel_to_odd_lie < 1e-4);
  CHECK(rep.odd_lie_to_kernel < 1e-4);
  for (const auto& kv : rep.kernel) CHECK(kv.odd_lie_distance < 1e-4);

  // even basis: the kernel is exactly the Lie part
  const auto be = tensor_basis(S2, 4, BasisParity::Even);
  const auto ope = build_forward(be, geodesic_family(S2, 4 * be.size(), 9), -1, {constant_poly(S2, 1.0)});
  const auto re = nullspace_analysis(ope, be);
  CHECK(re.odd_dimension == 0);
  CHECK(re.lie_dimension > 0);
  CHECK(re.kernel.size() == static_cast<size_t>(re.lie_dimension));
  for (const auto& kv : re.kernel) {
    CHECK(kv.lie_distance < 1e-4);
    CHECK(kv.odd_fraction == 0.0);
  }
}

TEST_CASE("degree <= 2 moments make the even operator injective") {
  const auto be = tensor_basis(S2, 4, BasisParity::Even);
  const auto op = build_forward(be, geodesic_family(S2, 4 * be.size(), 10), -1, moment_polys(S2, 2));
  const auto rep = nullspace_analysis(op, be);
  CHECK(rep.kernel.empty());
  CHECK(rep.sigma_ratio > 1e-6);
}

TEST_CASE("weighted half-period operator has trivial kernel") {
  const auto b = tensor_basis(S2, 4);
  for (int m : {3, 4}) {
    const auto op = build_forward(b, geodesic_family(S2, 4 * b.size(), 11), m);
    const auto rep = nullspace_analysis(op, b);
    CHECK(rep.kernel.empty());
    CHECK(rep.sigma_ratio > 1e-6);
  }
}

TEST_CASE("reconstruct_tensor: zero data, planted field, linearity") {
  const auto b = tensor_basis(S2, 4);
  const auto geo = geodesic_family(S2, 3 * b.size(), 12);
  RowPlan plan;
  plan.weights = {3};

  auto zero = simulate_samples(BoundaryField(Rank::Sym2, S2), geo, plan);
  const auto z = reconstruct_tensor(zero, b);
  CHECK(z.field.is_zero());
  const auto none = reconstruct_tensor(RaySampleSet{}, b);
  CHECK(none.field.is_zero());

  std::mt19937_64 rng(13);
  const BoundaryField W = planted(b, rng);
  auto data = simulate_samples(W, geo, plan);
  const auto r = reconstruct_tensor(data, b);
  CHECK(field_error(r.field, W) < 1e-6);
  CHECK_FALSE(r.diag.inconsistent);
  CHECK(r.diag.nullity == 0);
  CHECK(r.diag.relative_residual < 1e-10);

  for (auto& s : data.samples) s.value *= 3.0;
  const auto r3 = reconstruct_tensor(data, b);
  CHECK((r3.diag.coeffs - 3.0 * r.diag.coeffs).norm() < 1e-13 * r3.diag.coeffs.norm());
}

TEST_CASE("reconstruct_tensor: symbol samples carry lambda^2") {
  const auto b = tensor_basis(S2, 2);
  const auto geo = geodesic_family(S2, 3 * b.size(), 14);
  std::mt19937_64 rng(15);
  const BoundaryField W = planted(b, rng);
  RowPlan plan;
  plan.weights = {3};
  const auto data = simulate_samples(W, geo, plan, std::sqrt(2.0));
  // same values as the symbol transform with k = 2
  SymbolQuadratic T;
  T.spec = S2;
  T.k = 2;
  T.B = W;
  CHECK(data.samples[4].value ==
        doctest::Approx(weighted_symbol_transform(T, geo[data.samples[4].geodesic], 2, std::sqrt(2.0)).value)
            .epsilon(1e-12));
  CHECK(field_error(reconstruct_tensor(data, b).field, W) < 1e-6);
}

TEST_CASE("reconstruct_tensor: Lie contamination recovered with moment rows") {
  const auto be = tensor_basis(S2, 4, BasisParity::Even);
  std::mt19937_64 rng(17);
  // an even Lie-derivative field inside the span
  const Eigen::MatrixXd Ql = lie_subspace(be);
  REQUIRE(Ql.cols() > 0);
  const Eigen::MatrixXd R = be.whitening();
  const Eigen::VectorXd lc = R.triangularView<Eigen::Upper>().solve(Ql.col(0));
  const BoundaryField W = planted(be, rng) + be.combine(lc) * 5.0;
  const auto geo = geodesic_family(S2, 3 * be.size(), 18);
  RowPlan plan;
  plan.moments = moment_polys(S2, 2);
  const auto r = reconstruct_tensor(simulate_samples(W, geo, plan), be, plan.moments);
  CHECK(field_error(r.field, W) < 1e-6);

  // without the moments the Lie part is lost and reported as kernel
  RowPlan bare;
  bare.moments = {constant_poly(S2, 1.0)};
  const auto rb = reconstruct_tensor(simulate_samples(W, geo, bare), be, bare.moments);
  CHECK(rb.diag.nullity > 0);
  CHECK(field_error(rb.field, W) > 1e-2);
}

TEST_CASE("reconstruct_tensor: geodesic families and oversampling agree") {
  const auto b = tensor_basis(S2, 3);
  std::mt19937_64 rng(19);
  const BoundaryField W = planted(b, rng);
  RowPlan plan;
  plan.weights = {3};
  const int count = 3 * b.size();
  // disjoint Halton windows
  const auto a = reconstruct_tensor(simulate_samples(W, geodesic_family(S2, count, 1), plan), b);
  const auto c = reconstruct_tensor(simulate_samples(W, geodesic_family(S2, count, 2), plan), b);
  const auto d = reconstruct_tensor(simulate_samples(W, geodesic_family(S2, 2 * count, 1), plan), b);
  CHECK(field_error(a.field, c.field) < 1e-6);
  CHECK((a.diag.coeffs - d.diag.coeffs).norm() < 1e-8);
}

TEST_CASE("reconstruct_tensor: data outside the span is flagged") {
  const auto b = tensor_basis(S2, 2);
  std::mt19937_64 rng(23);
  const BoundaryField W = random_sym2(S2, 5, rng, 1.0);
  RowPlan plan;
  plan.weights = {3};
  const auto r = reconstruct_tensor(simulate_samples(W, geodesic_family(S2, 3 * b.size(), 3), plan), b);
  CHECK(r.diag.inconsistent);
  CHECK_FALSE(r.diag.warning.empty());
  CHECK(r.field.rank() == Rank::Sym2);
}

TEST_CASE("reconstruct_scalar: zero, planted even, odd lands in kernel") {
  const auto b = scalar_basis(S2, 4);
  const auto geo = geodesic_family(S2, 3 * b.size(), 25);
  RowPlan plan;
  plan.weights = {1};
  CHECK(reconstruct_scalar(simulate_samples(BoundaryField(Rank::Scalar, S2), geo, plan), b).field.is_zero());

  std::mt19937_64 rng(27);
  const auto V = BoundaryField::scalar(S2, random_poly(S2, 4, rng, 1.0).even_part());
  CHECK(field_error(reconstruct_scalar(simulate_samples(V, geo, plan), b).field, V) < 1e-6);

  // full-period rows have even weight: odd scalars are invisible
  RowPlan full;
  full.moments = {constant_poly(S2, 1.0)};
  const auto O = BoundaryField::scalar(S2, random_poly(S2, 3, rng, 1.0).odd_part());
  const auto r = reconstruct_scalar(simulate_samples(O, geo, full), b, full.moments);
  CHECK(field_error(r.field, BoundaryField(Rank::Scalar, S2)) < 1e-9);
  const int odd = static_cast<int>(std::count(b.parity.begin(), b.parity.end(), 1));
  CHECK(r.diag.nullity >= odd);
  // the planted odd scalar lies in the reported kernel
  Eigen::MatrixXd K(b.size(), static_cast<Eigen::Index>(r.diag.kernel.size()));
  for (size_t i = 0; i < r.diag.kernel.size(); ++i) K.col(static_cast<Eigen::Index>(i)) = r.diag.kernel[i];
  double res = 0.0;
  const Eigen::VectorXd oc = b.coordinates(O, &res);
  CHECK(res < 1e-12);
  const Eigen::VectorXd proj = K * (K.transpose() * oc);
  CHECK((oc - proj).norm() < 1e-8 * oc.norm());
}

TEST_CASE("dense orbit residues") {
  const auto r1 = dense_orbit_residues(0.3, 1.0, 200);
  REQUIRE(r1.residues.size() == 2);
  CHECK(r1.residues[0] == doctest::Approx(0.3));
  CHECK(r1.residues[1] == doctest::Approx(0.3 + kPi));
  CHECK(dense_orbit_residues(0.3, 0.5, 200).residues.size() <= 2);
  const auto r2 = dense_orbit_residues(0.3, std::sqrt(2.0), 200);
  CHECK(r2.fill_distance < 0.05);
  for (size_t i = 1; i < r2.residues.size(); ++i) CHECK(r2.residues[i] > r2.residues[i - 1]);
  // three-gap: consecutive gaps take at most three values
  std::vector<double> gaps;
  for (size_t i = 0; i < r2.residues.size(); ++i) {
    const double next = i + 1 < r2.residues.size() ? r2.residues[i + 1] : r2.residues[0] + r2.period;
    const double gp = next - r2.residues[i];
    bool seen = false;
    for (double x : gaps) seen |= std::abs(x - gp) < 1e-9;
    if (!seen) gaps.push_back(gp);
  }
  CHECK(gaps.size() <= 3);
  // vanishing on the orbit forces a bandlimited integrand to vanish only when irrational
  CHECK(orbit_interpolation_sigma(r2, std::sqrt(2.0), 8) > 0.1);
  CHECK(orbit_interpolation_sigma(r1, 1.0, 1) == 0.0);
}

TEST_CASE("pole system: hand values and controls") {
  const Poly x1sq = coordinate_poly(S2, 0) * coordinate_poly(S2, 0);
  const Poly x1x2 = coordinate_poly(S2, 0) * coordinate_poly(S2, 1);
  const auto z = pole_system_residual(BoundaryField(Rank::Sym2, S2), x1sq);
  CHECK(z.relation == 0.0);
  CHECK(z.direct == 0.0);
  // F = g_eps, p = x_1^2: 2 F_11 - 2 tr F = 2 - 4; printed 2 + 4 - 16 * 2
  const auto g = pole_system_residual(round_metric(S2), x1sq);
  CHECK(g.relation == doctest::Approx(-2.0).epsilon(1e-13));
  CHECK(g.direct == doctest::Approx(-2.0).epsilon(1e-12));
  CHECK(g.printed == doctest::Approx(-26.0).epsilon(1e-13));
  CHECK(pole_system_residual(round_metric(S2), x1x2).direct == doctest::Approx(0.0));

  std::mt19937_64 rng(29);
  for (int i = 0; i < 3; ++i) {
    const auto F = random_sym2(S2, 2, rng, 1.0);
    for (const Poly& p : {x1sq, x1x2}) {
      const auto r = pole_system_residual(F, p);
      CHECK(r.relation == doctest::Approx(r.direct).epsilon(1e-10));
      CHECK(std::abs(r.relation) > 1e-6);
    }
  }
  CHECK_THROWS_AS(pole_system_residual(round_metric(S2), coordinate_poly(S2, 0)), std::invalid_argument);
  CHECK(pole_system_rank(S2) == 3);
  CHECK(pole_system_rank(SphereSpec{4, 1.3, 40}) == 6);
}
