// Command-line front end. Exit codes: 0 ok, 1 usage/io, 2 schema, 3 numerical.
#include <omp.h>

#include <cmath>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <optional>
#include <set>

#include "CLI11.hpp"
#include "asymscat/io.hpp"
#include "asymscat/verification.hpp"

using namespace asymscat;

namespace {

struct NumericalError : std::runtime_error {
  json details;
  NumericalError(const std::string& m, json d = json::object()) : std::runtime_error(m), details(std::move(d)) {}
};

// ASYMSCAT_TOL replaces every default tolerance; --tol beats both
double default_tol(double dflt) {
  if (const char* e = std::getenv("ASYMSCAT_TOL")) {
    char* end = nullptr;
    const double v = std::strtod(e, &end);
    if (end != e && *end == '\0' && v > 0 && std::isfinite(v)) return v;
    throw std::runtime_error(std::string("ASYMSCAT_TOL is not a positive number: '") + e + "'");
  }
  return dflt;
}

double tol_or(double flag, double dflt) { return flag > 0 ? flag : default_tol(dflt); }

void emit(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") std::cout << text;
  else write_text_file(path, text);
}

SphereSpec spec_of(int n, double rho) {
  SphereSpec s{n, rho, 40};
  s.validate();
  return s;
}

BasisParity parity_from(const std::string& p) {
  if (p == "all") return BasisParity::All;
  if (p == "even") return BasisParity::Even;
  if (p == "odd") return BasisParity::Odd;
  throw CLI::ValidationError("--parity", "expected all, even or odd");
}

// a BoundaryField, or a symbol document carrying "B"
BoundaryField sigma_from(const std::string& path) {
  const json j = read_json_file(path);
  if (j.is_object() && j.contains("B")) return field_from_json(j["B"], "/B");
  return field_from_json(j);
}

MetricJet normal_input(const MetricJet& g, int order, double tol) {
  const auto rep = validate_scattering_form(g, 12, tol);
  if (!rep.scattering_form) throw NumericalError("input is not a scattering metric: " + rep.message);
  return rep.normal_form ? g : normalize(g, order, 12, tol).g_nf;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"asymscat: boundary normal forms, symbols, X-ray tomography and layer stripping"};
  app.require_subcommand(1);
  app.fallthrough();
  std::uint64_t seed = 7;
  int threads = 0;
  double tol_flag = 0;
  app.add_option("--seed", seed, "seed for every random choice")->capture_default_str();
  app.add_option("--threads", threads, "cap on OpenMP threads (results do not depend on it)");
  app.add_option("--tol", tol_flag, "override default tolerances (also ASYMSCAT_TOL)");

  std::function<void()> run;

  // normalize
  auto* nz = app.add_subcommand("normalize", "normal form of a collar-form metric jet");
  std::string nz_in, nz_out, nz_diffeo, nz_ledger;
  int nz_order = 6;
  nz->add_option("--in", nz_in, "MetricJet JSON")->required();
  nz->add_option("--order", nz_order, "x-order N")->capture_default_str();
  nz->add_option("--out", nz_out, "normal-form MetricJet JSON");
  nz->add_option("--diffeo", nz_diffeo, "collar map JSON");
  nz->add_option("--ledger", nz_ledger, "per-stage residual CSV");
  nz->callback([&] {
    run = [&] {
      const double tol = tol_or(tol_flag, 1e-9);
      const MetricJet g = metric_from_json(read_json_file(nz_in));
      if (nz_order < 0 || nz_order > g.order()) throw NumericalError("--order must lie in [0, N of the input]");
      const auto rep = validate_scattering_form(g, 12, tol);
      if (!rep.scattering_form) throw NumericalError("input is not a scattering metric: " + rep.message);
      NormalizeResult res;
      try {
        res = normalize(g, nz_order, 12, tol);
      } catch (const std::exception& e) {
        throw NumericalError(e.what());
      }
      emit(nz_out, dump_json(metric_to_json(res.g_nf)));
      if (!nz_diffeo.empty()) emit(nz_diffeo, dump_json(diffeo_to_json(res.phi)));
      if (!nz_ledger.empty()) {
        std::string csv = "stage,stage_before,stage_after,cross_before,cross_after,a_before,a_after\n";
        char buf[256];
        for (const auto& r : res.ledger) {
          std::snprintf(buf, sizeof buf, "%d,%d,%d,%.17g,%.17g,%.17g,%.17g\n", r.r, r.stage_before, r.stage_after,
                        r.cross_before, r.cross_after, r.a_before, r.a_after);
          csv += buf;
        }
        emit(nz_ledger, csv);
      }
      if (!res.report.normal_form) throw NumericalError("normal form not reached: " + res.report.message);
    };
  });

  // symbol
  auto* sy = app.add_subcommand("symbol", "principal symbol of Delta_{g1} - Delta_{g2} at order k");
  std::string sy_g1, sy_g2, sy_out;
  int sy_k = 2;
  sy->add_option("--g1", sy_g1)->required();
  sy->add_option("--g2", sy_g2)->required();
  sy->add_option("--k", sy_k)->capture_default_str();
  sy->add_option("--out", sy_out);
  sy->callback([&] {
    run = [&] {
      const double tol = tol_or(tol_flag, 1e-9);
      const MetricJet a = metric_from_json(read_json_file(sy_g1)), b = metric_from_json(read_json_file(sy_g2));
      const int N = std::min(a.order(), b.order());
      if (sy_k < 2 || sy_k > N) throw NumericalError("--k must lie in [2, N]");
      SymbolQuadratic s;
      try {
        s = difference_symbol(normal_input(a, N, tol), normal_input(b, N, tol), sy_k, 12, tol);
      } catch (const std::invalid_argument& e) {
        throw NumericalError(e.what());
      }
      emit(sy_out, dump_json(symbol_to_json(s)));
    };
  });

  // transform
  auto* tr = app.add_subcommand("transform", "forward transform samples of a sym2 or scalar field");
  std::string tr_field, tr_geo, tr_geo_out, tr_out;
  int tr_count = 0, tr_moments = -1;
  std::vector<int> tr_weights;
  double tr_lambda = 1.0;
  tr->add_option("--in,--field", tr_field, "BoundaryField JSON")->required();
  tr->add_option("--geodesics", tr_geo, "geodesic set JSON (else a seeded family)");
  tr->add_option("--count", tr_count, "seeded geodesic count (default 3 x basis-size heuristic: 100)");
  tr->add_option("--weight", tr_weights, "half-period weight exponents");
  tr->add_option("--moments", tr_moments, "full-period moment degree (-1: none)")->capture_default_str();
  tr->add_option("--lambda", tr_lambda)->capture_default_str();
  tr->add_option("--out", tr_out, "samples CSV");
  tr->add_option("--geodesics-out", tr_geo_out, "write the geodesic set used");
  tr->callback([&] {
    run = [&] {
      const BoundaryField f = field_from_json(read_json_file(tr_field));
      if (f.rank() != Rank::Sym2 && f.rank() != Rank::Scalar) throw NumericalError("transform needs a sym2 or scalar field");
      const SphereSpec& s = f.spec();
      std::vector<GreatCircle> geos = tr_geo.empty() ? geodesic_family(s, tr_count > 0 ? tr_count : 100, seed)
                                                     : geodesics_from_json(read_json_file(tr_geo), s.rho);
      if (tr_weights.empty() && tr_moments < 0) tr_weights = {3};
      RowPlan plan{tr_weights, tr_moments >= 0 ? moment_polys(s, tr_moments) : std::vector<Poly>{}};
      const RaySampleSet ss = simulate_samples(f, geos, plan, tr_lambda);
      emit(tr_out, samples_to_csv(ss));
      if (!tr_geo_out.empty()) emit(tr_geo_out, dump_json(geodesics_to_json(geos)));
    };
  });

  // reconstruct
  auto* rc = app.add_subcommand("reconstruct", "truncated-SVD inversion of transform samples");
  std::string rc_samples, rc_geo, rc_out, rc_report, rc_rank = "sym2", rc_parity = "all";
  int rc_degree = 4, rc_moments = -1, rc_n = 3;
  std::vector<int> rc_weights;
  double rc_rho = 1.0;
  rc->add_option("--samples", rc_samples, "samples CSV")->required();
  rc->add_option("--geodesics", rc_geo, "geodesic set JSON")->required();
  rc->add_option("--basis-degree", rc_degree)->capture_default_str();
  rc->add_option("--weight", rc_weights, "keep only half-period rows with these weights (default: all)");
  rc->add_option("--moments", rc_moments, "moment degree the moment rows index into (-1: drop moment rows)")
      ->capture_default_str();
  rc->add_option("--rank", rc_rank, "sym2 or scalar")->capture_default_str();
  rc->add_option("--parity", rc_parity, "all, even or odd basis")->capture_default_str();
  rc->add_option("--n", rc_n, "ambient dimension")->capture_default_str();
  rc->add_option("--rho", rc_rho, "sphere radius")->capture_default_str();
  rc->add_option("--out", rc_out, "reconstructed BoundaryField JSON");
  rc->add_option("--report", rc_report, "diagnostics JSON");
  rc->callback([&] {
    run = [&] {
      const SphereSpec s = spec_of(rc_n, rc_rho);
      RaySampleSet set;
      set.provenance = RaySampleSet::Provenance::Ingested;
      set.geodesics = geodesics_from_json(read_json_file(rc_geo), s.rho);
      const auto moments = rc_moments >= 0 ? moment_polys(s, rc_moments) : std::vector<Poly>{};
      const std::set<int> keep(rc_weights.begin(), rc_weights.end());
      const auto rows = samples_from_csv(read_text_file(rc_samples));
      for (size_t i = 0; i < rows.size(); ++i) {
        const auto& r = rows[i];
        const std::string p = "/rows/" + std::to_string(i);
        if (r.geodesic >= static_cast<int>(set.geodesics.size())) throw SchemaError(p + "/geodesic_index", "no such geodesic");
        if (r.moment >= 0) {
          if (rc_moments < 0) continue;
          if (r.moment >= static_cast<int>(moments.size())) throw SchemaError(p + "/moment", "moment index beyond --moments");
        } else if (!keep.empty() && !keep.count(r.m)) {
          continue;
        }
        set.samples.push_back(r);
      }
      const TensorBasis basis = rc_rank == "scalar" ? scalar_basis(s, rc_degree, parity_from(rc_parity))
                                                    : tensor_basis(s, rc_degree, parity_from(rc_parity));
      if (rc_rank != "scalar" && rc_rank != "sym2") throw CLI::ValidationError("--rank", "expected sym2 or scalar");
      std::vector<RowMeta> meta;
      Eigen::VectorXd b(static_cast<Eigen::Index>(set.samples.size()));
      for (size_t i = 0; i < set.samples.size(); ++i) {
        const auto& r = set.samples[i];
        meta.push_back({r.geodesic, r.m, r.moment, r.lambda});
        b[static_cast<Eigen::Index>(i)] = r.value;
      }
      ForwardOperator A;
      if (meta.empty()) A.A.resize(0, basis.size());
      else A = build_forward(basis, set.geodesics, meta, moments);
      const auto rec = solve_truncated(A, b, basis, 1e-10, tol_or(tol_flag, 1e-8));
      json report{{"basis_size", basis.size()}, {"diagnostics", diagnostics_to_json(rec.diag)}, {"kernel", nullptr}};
      if (rec.diag.nullity > 0 && basis.rank == Rank::Sym2) report["kernel"] = nullspace_to_json(nullspace_analysis(A, basis));
      emit(rc_out, dump_json(field_to_json(rec.field)));
      if (!rc_report.empty()) emit(rc_report, dump_json(report));
      if (rec.diag.inconsistent) throw NumericalError("data inconsistent with the basis span", report["diagnostics"]);
      if (rec.diag.nullity > 0)
        throw NumericalError("operator has a kernel of dimension " + std::to_string(rec.diag.nullity), report["diagnostics"]);
    };
  });

  // scenario
  auto* sc = app.add_subcommand("scenario", "generate a seeded metric pair with planted differences");
  int sc_k = 4, sc_degree = 4, sc_n = 3;
  double sc_rho = 1.0, sc_scale = 0.1;
  bool sc_proj = false, sc_pot = false, sc_zero = false;
  std::string sc_out;
  sc->add_option("--k-max", sc_k)->capture_default_str();
  sc->add_option("--basis-degree", sc_degree)->capture_default_str();
  sc->add_option("--n", sc_n)->capture_default_str();
  sc->add_option("--rho", sc_rho)->capture_default_str();
  sc->add_option("--difference-scale", sc_scale)->capture_default_str();
  sc->add_flag("--projective", sc_proj, "even planted fields and basis");
  sc->add_flag("--with-potential", sc_pot, "plant potential differences");
  sc->add_flag("--zero-differences", sc_zero);
  sc->add_option("--out", sc_out);
  sc->callback([&] {
    run = [&] {
      ScenarioOptions o;
      o.spec = spec_of(sc_n, sc_rho);
      o.projective = sc_proj;
      o.with_potential = sc_pot;
      o.zero_differences = sc_zero;
      o.difference_scale = sc_scale;
      if (sc_k < 2) throw CLI::ValidationError("--k-max", "must be >= 2");
      emit(sc_out, dump_json(scenario_to_json(make_scenario(seed, sc_k, sc_degree, o))));
    };
  });

  // strip
  auto* st = app.add_subcommand("strip", "layer-strip a scenario order by order");
  std::string st_in, st_out, st_channel = "weighted+moments";
  double st_lambda = 1.0, st_lambda2 = 0, st_noise = 0;
  int st_factor = 3;
  bool st_keep = false;
  st->add_option("--scenario,--in", st_in)->required();
  st->add_option("--lambda", st_lambda)->capture_default_str();
  st->add_option("--lambda2", st_lambda2, "second energy: separate metric and potential first");
  st->add_option("--channel", st_channel, "weighted, weighted+moments, full-period, full-period+moments")
      ->capture_default_str();
  st->add_option("--geodesic-factor", st_factor)->capture_default_str();
  st->add_option("--noise", st_noise, "additive Gaussian noise std")->capture_default_str();
  st->add_flag("--keep-going", st_keep, "do not abort on a kernel");
  st->add_option("--out", st_out);
  st->callback([&] {
    run = [&] {
      const Scenario s = scenario_from_json(read_json_file(st_in));
      StripOptions o;
      try {
        o.channel = channel_from_name(st_channel);
      } catch (const std::invalid_argument& e) {
        throw CLI::ValidationError("--channel", e.what());
      }
      o.geodesic_factor = st_factor;
      o.geodesic_seed = seed;
      o.noise = st_noise;
      o.abort_on_kernel = !st_keep;
      json out;
      RecoveryReport rep;
      if (st_lambda2 != 0) {
        if (s.V.empty()) throw NumericalError("two-energy strip needs a scenario with a potential");
        TwoEnergyReport two;
        try {
          two = strip_two_energies(s, st_lambda, st_lambda2, o);
        } catch (const std::invalid_argument& e) {
          throw NumericalError(e.what());
        }
        rep = two.metric;
        out = report_to_json(rep);
        json pot = json::array();
        for (size_t j = 2; j < two.V_hat.size(); ++j)
          pot.push_back({{"order", j}, {"V_hat", field_to_json(two.V_hat[j])}, {"error", two.potential_error[j]}});
        out["potential"] = pot;
      } else {
        rep = layer_strip(s, st_lambda, o);
        out = report_to_json(rep);
      }
      out["channel"] = channel_name(o.channel);
      out["lambda"] = st_lambda;
      emit(st_out, dump_json(out));
      if (rep.aborted) throw NumericalError(rep.message);
    };
  });

  // separate
  auto* sp = app.add_subcommand("separate", "split two-energy data into metric and potential parts");
  std::string sp_s1, sp_s2, sp_out;
  int sp_k = 2;
  double sp_l1 = 1.0, sp_l2 = std::sqrt(2.0);
  sp->add_option("--sigma1", sp_s1, "field or symbol JSON at lambda1")->required();
  sp->add_option("--sigma2", sp_s2, "field or symbol JSON at lambda2")->required();
  sp->add_option("--k", sp_k)->capture_default_str();
  sp->add_option("--lambda1", sp_l1)->capture_default_str();
  sp->add_option("--lambda2", sp_l2)->capture_default_str();
  sp->add_option("--out", sp_out);
  sp->callback([&] {
    run = [&] {
      const BoundaryField a = sigma_from(sp_s1), b = sigma_from(sp_s2);
      if (a.rank() != b.rank() || !(a.spec() == b.spec())) throw SchemaError("", "sigma1 and sigma2 differ in rank or sphere");
      SeparatedFields f;
      try {
        f = separate_two_energies(a, sp_l1, b, sp_l2, sp_k);
      } catch (const std::invalid_argument& e) {
        throw NumericalError(e.what());
      }
      emit(sp_out, dump_json({{"k", sp_k},
                              {"lambda1", sp_l1},
                              {"lambda2", sp_l2},
                              {"metric", field_to_json(f.metric)},
                              {"potential", field_to_json(f.potential)}}));
    };
  });

  // verify
  auto* vf = app.add_subcommand("verify", "run the identity and acceptance suites");
  std::string vf_suite = "all", vf_out;
  vf->add_option("--suite", vf_suite, "all, identities or acceptance")->capture_default_str();
  vf->add_option("--out", vf_out, "report JSON");
  vf->callback([&] {
    run = [&] {
      std::vector<std::pair<std::string, bool>> plan;  // (id, identity table?)
      if (vf_suite == "all" || vf_suite == "identities")
        for (const auto& id : identity_ids()) plan.push_back({id, true});
      if (vf_suite == "acceptance") {
        for (const auto& id : acceptance_ids()) plan.push_back({id, false});
      } else if (vf_suite == "all") {
        // theorem-level checks not already covered by an identity row
        for (const char* id : {"normal-form", "layer-stripping", "two-energies", "gauge", "dense-orbit"}) plan.push_back({id, false});
      } else if (vf_suite != "identities") {
        throw CLI::ValidationError("--suite", "expected all, identities or acceptance");
      }
      if (std::getenv("ASYMSCAT_TOL")) std::cout << "note: ASYMSCAT_TOL does not change the pinned verify thresholds\n";
      json rows = json::array();
      bool all = true;
      for (const auto& [id, ident] : plan) {
        const CheckResult r = ident ? run_identity(id, seed) : run_acceptance(id, seed);
        all = all && r.pass;
        std::printf("%-4s  %-22s %7.2fs  %s\n", r.pass ? "PASS" : "FAIL", r.id.c_str(), r.seconds, r.detail.c_str());
        std::fflush(stdout);
        json vals = json::object();
        for (const auto& [k, v] : r.values)
          if (k != "seconds") vals[k] = v;  // timings would break byte-identical reruns
        rows.push_back({{"id", r.id}, {"title", r.title}, {"pass", r.pass}, {"values", vals}});
      }
      std::printf("%s: %zu checks\n", all ? "all passed" : "FAILURES", plan.size());
      if (!vf_out.empty()) emit(vf_out, dump_json({{"seed", seed}, {"suite", vf_suite}, {"checks", rows}, {"pass", all}}));
      if (!all) throw NumericalError("verification failed");
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }
  if (threads > 0) omp_set_num_threads(threads);
  try {
    run();
  } catch (const SchemaError& e) {
    std::cerr << dump_json({{"error", "schema"}, {"pointer", e.pointer()}, {"message", e.what()}}, 0);
    return 2;
  } catch (const NumericalError& e) {
    std::cerr << dump_json({{"error", "numerical"}, {"message", e.what()}, {"details", e.details}}, 0);
    return 3;
  } catch (const CLI::Error& e) {
    std::cerr << dump_json({{"error", "usage"}, {"message", e.what()}}, 0);
    return 1;
  } catch (const std::domain_error& e) {
    std::cerr << dump_json({{"error", "numerical"}, {"message", e.what()}}, 0);
    return 3;
  } catch (const std::exception& e) {
    std::cerr << dump_json({{"error", "io"}, {"message", e.what()}}, 0);
    return 1;
  }
  return 0;
}
