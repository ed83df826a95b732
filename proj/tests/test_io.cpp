#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <random>

#include "asymscat/io.hpp"

using namespace asymscat;

namespace {

const SphereSpec S2{3, 1.0, 40};

std::string pointer_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const SchemaError& e) {
    return e.pointer();
  }
  return "<no error>";
}

}  // namespace

TEST_CASE("floats keep 17 significant digits and round-trip") {
  const json j = {{"x", 0.1}, {"y", 1.0 / 3.0}, {"n", 3}};
  const std::string s = dump_json(j);
  CHECK(s.find("0.10000000000000001") != std::string::npos);
  CHECK(s.find("0.33333333333333331") != std::string::npos);
  CHECK(s.find("\"n\": 3") != std::string::npos);
  const json back = parse_json(s);
  CHECK(back["y"].get<double>() == 1.0 / 3.0);
  CHECK(dump_json(back) == s);
}

TEST_CASE("fields round-trip exactly") {
  std::mt19937_64 rng(3);
  for (const auto& f : {random_sym2(S2, 3, rng, 1.0), BoundaryField::scalar(S2, random_poly(S2, 4, rng)),
                        random_tangent_vector(S2, 2, rng), BoundaryField(Rank::Sym2, S2)}) {
    const auto g = field_from_json(parse_json(dump_json(field_to_json(f))));
    CHECK(g.rank() == f.rank());
    CHECK((g - f).is_zero());
  }
  const SphereSpec big{4, 1.5, 40};
  const auto f = random_sym2(big, 2, rng, 1.0);
  const auto g = field_from_json(field_to_json(f));
  CHECK(g.spec() == big);
  CHECK((g - f).is_zero());
}

TEST_CASE("field schema errors carry the offending path") {
  json good = field_to_json(round_metric(S2));
  CHECK(pointer_of([&] { field_from_json(json::array()); }) == "");
  json j = good;
  j.erase("rank");
  CHECK(pointer_of([&] { field_from_json(j); }) == "/rank");
  j = good;
  j["rank"] = "tensor3";
  CHECK(pointer_of([&] { field_from_json(j); }) == "/rank");
  j = good;
  j["components"][1]["index"] = json::array({0});
  CHECK(pointer_of([&] { field_from_json(j); }) == "/components/1/index");
  j = good;
  j["components"][0]["monomials"][0]["exp"] = json::array({1, 2});
  CHECK(pointer_of([&] { field_from_json(j); }) == "/components/0/monomials/0/exp");
  j = good;
  j["components"][0]["monomials"][0]["coef"] = "1";
  CHECK(pointer_of([&] { field_from_json(j); }) == "/components/0/monomials/0/coef");
  j = good;
  j["components"][1]["index"] = json::array({0, 7});
  CHECK(pointer_of([&] { field_from_json(j); }) == "/components/1/index/1");
  j = good;
  j["components"].push_back(j["components"][0]);
  CHECK(pointer_of([&] { field_from_json(j); }) == "/components/" + std::to_string(good["components"].size()) + "/index");
  CHECK(pointer_of([&] { parse_json("{\"rank\": "); }) == "");
}

TEST_CASE("metric jets: polynomial verbatim, normal forms fitted or sampled") {
  std::mt19937_64 rng(5);
  const auto g = random_metric_jet(S2, 3, rng);
  const json j = metric_to_json(g);
  CHECK(j["kind"] == "polynomial");
  CHECK(j["r"] == 0);
  const auto back = metric_from_json(parse_json(dump_json(j)));
  for (const auto& p : sample_points(S2, 4)) {
    const auto a = g.coefficients_at(p), b = back.coefficients_at(p);
    for (int k = 0; k <= 3; ++k) CHECK((a.h[k] - b.h[k]).cwiseAbs().maxCoeff() == 0.0);
  }
  json bad = j;
  bad["cross"][1]["rank"] = 2;
  CHECK(pointer_of([&] { metric_from_json(bad); }) == "/cross/1/rank");
  bad = j;
  bad.erase("h");
  CHECK(pointer_of([&] { metric_from_json(bad); }) == "/h");

  // round h_0 with polynomial data at low order: the fit is exact
  JetSeries a(Rank::Scalar, S2, 3), c(Rank::Covector, S2, 3), h(Rank::Sym2, S2, 3);
  a[0] = BoundaryField::scalar(S2, constant_poly(S2, 1.0));
  a[2] = BoundaryField::scalar(S2, random_poly(S2, 1, rng, 0.2));
  h[0] = round_metric(S2);
  for (int k = 1; k <= 3; ++k) h[k] = random_sym2(S2, 1, rng, 0.2);
  const auto res = normalize(MetricJet::polynomial(S2, 3, a, c, h), 3);
  const json nf = metric_to_json(res.g_nf);
  REQUIRE(nf["kind"] == "polynomial");
  CHECK(nf["fit"]["residual"].get<double>() < 1e-9);
  const auto nfb = metric_from_json(nf);
  double d = 0;
  for (const auto& p : sample_points(S2, 7)) {
    const auto x = nfb.coefficients_at(p), y = res.g_nf.coefficients_at(p);
    for (int k = 0; k <= 3; ++k) d = std::max(d, (x.h[k] - y.h[k]).cwiseAbs().maxCoeff());
  }
  CHECK(d < 1e-9);

  // non-round h_0: not polynomial, written as point samples and refused on input
  const auto gn = normalize(random_metric_jet(S2, 3, rng), 3).g_nf;
  FitOptions fo;
  fo.max_degree = 4;
  const json s = metric_to_json(gn, fo);
  CHECK(s["kind"] == "sampled");
  CHECK(s["samples"].size() == 12u);
  CHECK(pointer_of([&] { metric_from_json(s); }) == "/kind");
}

TEST_CASE("collar maps") {
  std::mt19937_64 rng(9);
  const auto id = diffeo_from_json(diffeo_to_json(CollarDiffeoJet::identity(S2, 4)), S2);
  CHECK(id.is_identity());
  const auto psi = random_admissible_diffeo(S2, 4, rng);
  const json j = diffeo_to_json(psi);
  REQUIRE(j["kind"] == "series");
  const auto back = diffeo_from_json(parse_json(dump_json(j)), S2);
  for (const auto& p : sample_points(S2, 4)) {
    const auto a = psi.at(p), b = back.at(p);
    for (size_t k = 0; k < a.u.size(); ++k) CHECK(a.u[k] == doctest::Approx(b.u[k]).epsilon(1e-15));
  }
  const json s = diffeo_to_json(CollarDiffeoJet::inverse(psi), 3);
  CHECK(s["kind"] == "sampled");
  CHECK(pointer_of([&] { diffeo_from_json(s, S2); }) == "/kind");
}

TEST_CASE("geodesics and samples") {
  const auto geos = geodesic_family(S2, 5, 3);
  const auto back = geodesics_from_json(parse_json(dump_json(geodesics_to_json(geos))), 1.0);
  REQUIRE(back.size() == 5);
  for (size_t i = 0; i < 5; ++i) CHECK((back[i].u - geos[i].u).norm() == 0.0);
  json bad = geodesics_to_json(geos);
  bad[2]["v"] = bad[2]["u"];
  CHECK(pointer_of([&] { geodesics_from_json(bad, 1.0); }) == "/2");
  bad = geodesics_to_json(geos);
  bad[1]["u"][0] = "x";
  CHECK(pointer_of([&] { geodesics_from_json(bad, 1.0); }) == "/1/u/0");

  RaySampleSet s;
  s.samples = {{0, 3, 1.0, 0.1, -1}, {1, 0, 1.4142135623730951, -2.5e-17, 4}};
  const std::string csv = samples_to_csv(s);
  CHECK(csv.rfind("geodesic_index,m,lambda,value,moment\n", 0) == 0);
  const auto rows = samples_from_csv(csv);
  REQUIRE(rows.size() == 2);
  CHECK(rows[1].lambda == s.samples[1].lambda);
  CHECK(rows[1].value == s.samples[1].value);
  CHECK(rows[1].moment == 4);
  CHECK(rows[0].moment == -1);
  CHECK(samples_from_csv("geodesic_index,m,lambda,value\n2,3,1,0.5\n")[0].geodesic == 2);
  CHECK(pointer_of([] { samples_from_csv("a,b\n"); }) == "/header");
  CHECK(pointer_of([] { samples_from_csv("geodesic_index,m,lambda,value\n0,3,1,0.5\n1,3,1,zz\n"); }) == "/rows/1/value");
  CHECK(pointer_of([] { samples_from_csv("geodesic_index,m,lambda,value\n0,3.5,1,0.5\n"); }) == "/rows/0/m");
  CHECK(pointer_of([] { samples_from_csv("geodesic_index,m,lambda,value\n0,3,1\n"); }) == "/rows/0");
}

TEST_CASE("scenario round-trip reproduces the strip") {
  ScenarioOptions o;
  o.with_potential = true;
  const auto sc = make_scenario(21, 3, 3, o);
  const json j = scenario_to_json(sc);
  const auto back = scenario_from_json(parse_json(dump_json(j)));
  CHECK(dump_json(scenario_to_json(back)) == dump_json(j));
  const auto pts = sample_points(S2, 30);
  for (int k = 2; k <= 3; ++k) {
    CHECK(sup_norm(back.D[k] - sc.D[k], pts) == 0.0);
    CHECK(sup_norm(back.V[k] - sc.V[k], pts) == 0.0);
  }
  const auto a = layer_strip(sc, 1.0), b = layer_strip(back, 1.0);
  CHECK(dump_json(report_to_json(a)) == dump_json(report_to_json(b)));
  json bad = j;
  bad["D"].erase(1);
  CHECK(pointer_of([&] { scenario_from_json(bad); }) == "/D");
  bad = j;
  bad["k_max"] = 1;
  CHECK(pointer_of([&] { scenario_from_json(bad); }) == "/k_max");
}
