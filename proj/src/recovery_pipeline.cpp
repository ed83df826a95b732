#include "asymscat/recovery_pipeline.hpp"

#include <chrono>
#include <cmath>
#include <random>
#include <stdexcept>

#include "asymscat/quadrature.hpp"

namespace asymscat {

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

BoundaryField planted_field(const TensorBasis& b, std::mt19937_64& rng, double scale) {
  std::normal_distribution<double> nd;
  Eigen::VectorXd c(b.size());
  for (int i = 0; i < b.size(); ++i) c[i] = scale * nd(rng);
  return b.combine(c);
}

// h0 B h0 as polynomial matrices
BoundaryField sandwich(const BoundaryField& h0, const BoundaryField& B) {
  const SphereSpec& s = B.spec();
  const int n = s.n;
  if (const double c = round_factor(h0); c != 0.0) return project_tangential(B) * (c * c);
  std::vector<std::vector<Poly>> hb(n, std::vector<Poly>(n, Poly(n, s.rho2())));
  for (int i = 0; i < n; ++i)
    for (int b = 0; b < n; ++b)
      for (int a = 0; a < n; ++a) hb[i][b] += h0.comp(i, a) * B.comp(a, b);
  std::vector<std::vector<Poly>> out(n, std::vector<Poly>(n, Poly(n, s.rho2())));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int b = 0; b < n; ++b) out[i][j] += hb[i][b] * h0.comp(b, j);
  return BoundaryField::sym2(s, out);
}

RowPlan channel_plan(Channel c, const SphereSpec& spec, int k) {
  RowPlan p;
  switch (c) {
    case Channel::Weighted: p.weights = {k + 1}; break;
    case Channel::WeightedMoments:
      p.weights = {k + 1};
      p.moments = moment_polys(spec, 2);
      break;
    case Channel::FullPeriod: p.moments = {constant_poly(spec, 1.0)}; break;
    case Channel::FullPeriodMoments: p.moments = moment_polys(spec, 2); break;
  }
  return p;
}

}  // namespace

std::string channel_name(Channel c) {
  switch (c) {
    case Channel::Weighted: return "weighted";
    case Channel::WeightedMoments: return "weighted+moments";
    case Channel::FullPeriod: return "full-period";
    case Channel::FullPeriodMoments: return "full-period+moments";
  }
  return "?";
}

Channel channel_from_name(const std::string& s) {
  for (Channel c : {Channel::Weighted, Channel::WeightedMoments, Channel::FullPeriod, Channel::FullPeriodMoments})
    if (channel_name(c) == s) return c;
  throw std::invalid_argument("unknown channel: " + s);
}

// ---- scenarios ---------------------------------------------------------------------

MetricJet Scenario::g_with(const std::vector<BoundaryField>& diffs, int upto) const {
  const SphereSpec& s = spec();
  JetSeries a(Rank::Scalar, s, k_max), c(Rank::Covector, s, k_max), h = h2;
  a[0] = BoundaryField::scalar(s, constant_poly(s, 1.0));
  for (int j = 2; j <= std::min(upto, k_max); ++j)
    if (j < static_cast<int>(diffs.size())) h[j] = h[j] + diffs[j];
  return MetricJet::polynomial(s, k_max, a, c, h);
}

MetricJet Scenario::g1() const { return g_with(D, k_max); }
MetricJet Scenario::g2() const { return g_with({}, 0); }

Scenario make_scenario(std::uint64_t seed, int k_max, int basis_degree, const ScenarioOptions& opt) {
  if (k_max < 2) throw std::invalid_argument("make_scenario: k_max must be >= 2");
  if (basis_degree < 0) throw std::invalid_argument("make_scenario: negative basis degree");
  opt.spec.validate();
  Scenario sc;
  sc.seed = seed;
  sc.k_max = k_max;
  sc.basis_degree = basis_degree;
  sc.options = opt;
  const SphereSpec& s = opt.spec;
  std::mt19937_64 rng(seed);
  const BasisParity par = sc.parity();
  const TensorBasis tb = tensor_basis(s, basis_degree, par);

  sc.h2 = JetSeries(Rank::Sym2, s, k_max);
  sc.h2[0] = round_metric(s);
  // shared background: bandlimited and (projective) even like the planted data
  for (int j = 1; j <= k_max; ++j) sc.h2[j] = planted_field(tb, rng, 0.1);
  sc.D.assign(k_max + 1, BoundaryField(Rank::Sym2, s));
  for (int j = 2; j <= k_max; ++j) {
    const BoundaryField d = planted_field(tb, rng, opt.difference_scale);
    if (!opt.zero_differences) sc.D[j] = d;
  }
  if (opt.with_potential) {
    const TensorBasis sb = scalar_basis(s, basis_degree, par);
    sc.V.assign(k_max + 1, BoundaryField(Rank::Scalar, s));
    for (int j = 2; j <= k_max; ++j) {
      const BoundaryField v = planted_field(sb, rng, opt.difference_scale);
      if (!opt.zero_differences) sc.V[j] = v;
    }
  }
  return sc;
}

// ---- forward data ------------------------------------------------------------------

RaySampleSet simulate_order_data(const SymbolQuadratic& T, const BoundaryField* V, const std::vector<GreatCircle>& geodesics,
                                 Channel channel, int k, double lambda, const QuadratureOptions& q) {
  if (k < 2) throw std::invalid_argument("simulate_order_data: k must be >= 2");
  if (lambda == 0.0) throw std::invalid_argument("simulate_order_data: lambda must be nonzero");
  const RowPlan plan = channel_plan(channel, T.spec, k);
  const auto rows = expand_plan(plan, static_cast<int>(geodesics.size()));
  const double L = std::abs(lambda), extra = std::pow(L, k - 1);
  QuadratureOptions qq = q;
  qq.check = false;
  std::optional<FieldEvaluator> Bev, Vev;
  if (T.B) Bev.emplace(*T.B);
  if (V) Vev.emplace(*V);

  RaySampleSet out;
  out.geodesics = geodesics;
  out.samples.resize(rows.size());
  const int per = static_cast<int>(plan.weights.size() + plan.moments.size());
  const QuadratureRule trap = periodic_trapezoid(qq.trapezoid_nodes, 1.0);
#pragma omp parallel for schedule(dynamic)
  for (int gi = 0; gi < static_cast<int>(geodesics.size()); ++gi) {
    const GreatCircle& g = geodesics[gi];
    // integrand on the trapezoid grid, shared by all moment rows of this geodesic
    std::vector<double> G, w;
    std::vector<Eigen::VectorXd> X;
    if (!plan.moments.empty()) {
      for (int k2 = 0; k2 < trap.size(); ++k2) {
        const double t = trap.nodes[k2] * g.period();
        const Eigen::VectorXd x = g.point(t), d = g.tangent(t);
        G.push_back(Bev ? Bev->quadratic(x.data(), d.data()) : d.dot(T.B_at(x) * d));
        w.push_back(trap.weights[k2] * g.period());
        X.push_back(x);
      }
    }
    for (int c = 0; c < per; ++c) {
      const int i = gi * per + c;
      const RowMeta& r = rows[i];
      double v = 0.0;
      if (r.moment < 0) {
        v = weighted_symbol_transform(T, g, k, lambda, qq).value * extra;
        if (Vev) v += scalar_transform(*Vev, g, k - 1, qq).value * extra;
      } else {
        const Poly& p = plan.moments[r.moment];
        double I = 0.0;
        for (size_t k2 = 0; k2 < G.size(); ++k2) I += w[k2] * p.eval(std::span<const double>(X[k2].data(), X[k2].size())) * G[k2];
        v = I * L * L * extra;
      }
      out.samples[i] = RaySample{r.geodesic, r.moment < 0 ? k + 1 : 0, lambda, v, r.moment};
    }
  }
  return out;
}

// ---- layer stripping ---------------------------------------------------------------

namespace {

struct StripContext {
  TensorBasis basis;
  std::vector<GreatCircle> geodesics;
  std::vector<Eigen::VectorXd> check_points;
};

StripContext strip_context(const Scenario& sc, const StripOptions& opt) {
  StripContext c;
  c.basis = tensor_basis(sc.spec(), sc.basis_degree, sc.parity());
  c.geodesics = geodesic_family(sc.spec(), opt.geodesic_factor * c.basis.size(), sc.seed * 7919 + opt.geodesic_seed);
  c.check_points = sample_points(sc.spec(), 300);
  return c;
}

// samples carry rows scaled |lambda|^2 (lambda = 1 after separation)
OrderRecovery recover_order(int j, const RaySampleSet& data, const Scenario& sc, const StripContext& ctx,
                            const std::vector<Poly>& moments, const StripOptions& opt) {
  const auto t0 = std::chrono::steady_clock::now();
  OrderRecovery rec;
  rec.order = j;
  std::vector<RowMeta> rows;
  Eigen::VectorXd b(static_cast<Eigen::Index>(data.samples.size()));
  for (size_t i = 0; i < data.samples.size(); ++i) {
    const auto& s = data.samples[i];
    rows.push_back({s.geodesic, s.m, s.moment, s.lambda});
    b[static_cast<Eigen::Index>(i)] = s.value;
  }
  rec.data_norm = b.norm();
  const ForwardOperator A = build_forward(ctx.basis, data.geodesics, rows, moments, opt.quadrature);
  const Reconstruction r = solve_truncated(A, b, ctx.basis);
  rec.diag = r.diag;
  rec.sigma_ratio = r.diag.sigma_max > 0 ? r.diag.sigma_min / r.diag.sigma_max : 0.0;
  if (r.diag.nullity > 0) rec.kernel = nullspace_analysis(A, ctx.basis);
  rec.D_hat = sandwich(sc.h2[0], r.field);
  rec.error = sup_norm(rec.D_hat - sc.D.at(j), ctx.check_points);
  rec.seconds = seconds_since(t0);
  return rec;
}

void add_noise(RaySampleSet& d, double noise, std::uint64_t seed) {
  if (noise <= 0.0) return;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, noise);
  for (auto& s : d.samples) s.value += nd(rng);
}

bool should_abort(const OrderRecovery& rec, const StripOptions& opt, std::string& msg) {
  if (!opt.abort_on_kernel) return false;
  if (rec.diag.nullity > 0 || rec.sigma_ratio < opt.min_sigma_ratio) {
    msg = "order " + std::to_string(rec.order) + ": sigma_min/sigma_max = " + std::to_string(rec.sigma_ratio) +
          " with " + std::to_string(rec.diag.nullity) + " dropped directions";
    return true;
  }
  return false;
}

const char* kConstantNote =
    "forward data simulated at the principal-symbol level; results hold modulo the fixed nonzero constant "
    "relating the symbol of S_1 - S_2 to the weighted transform";

}  // namespace

RecoveryReport layer_strip(const Scenario& sc, double lambda, const StripOptions& opt) {
  if (lambda == 0.0) throw std::invalid_argument("layer_strip: lambda must be nonzero");
  const auto t0 = std::chrono::steady_clock::now();
  const StripContext ctx = strip_context(sc, opt);
  RecoveryReport rep;
  rep.geodesic_count = static_cast<int>(ctx.geodesics.size());
  rep.basis_size = ctx.basis.size();
  rep.note = kConstantNote;
  const MetricJet g1 = sc.g1();
  std::vector<BoundaryField> Dhat(sc.k_max + 1, BoundaryField(Rank::Sym2, sc.spec()));
  const double L = std::abs(lambda);
  for (int j = 2; j <= sc.k_max; ++j) {
    SymbolQuadratic T;
    try {
      // lower orders of the second jet replaced by what has been recovered so far
      T = difference_symbol(g1, sc.g_with(Dhat, j - 1), j, 12, 1e-6);
    } catch (const std::invalid_argument& e) {
      rep.aborted = true;
      rep.message = std::string("order ") + std::to_string(j) + ": " + e.what();
      break;
    }
    RaySampleSet data = simulate_order_data(T, nullptr, ctx.geodesics, opt.channel, j, lambda, opt.quadrature);
    add_noise(data, opt.noise, sc.seed + 1000 * j);
    for (auto& s : data.samples) s.value /= std::pow(L, j - 1);
    OrderRecovery rec = recover_order(j, data, sc, ctx, channel_plan(opt.channel, sc.spec(), j).moments, opt);
    Dhat[j] = rec.D_hat;
    rep.orders.push_back(std::move(rec));
    if (should_abort(rep.orders.back(), opt, rep.message)) {
      rep.aborted = true;
      break;
    }
  }
  rep.runtime = seconds_since(t0);
  return rep;
}

// ---- two energies --------------------------------------------------------------------

namespace {

struct TwoByTwo {
  double p11, p12, p21, p22, det;
};

TwoByTwo energy_system(double lambda1, double lambda2, int k) {
  if (k < 1) throw std::invalid_argument("separate_two_energies: k must be >= 1");
  const double L1 = std::abs(lambda1), L2 = std::abs(lambda2);
  if (L1 == 0.0 || L2 == 0.0) throw std::invalid_argument("separate_two_energies: lambda must be nonzero");
  if (std::abs(L1 * L1 - L2 * L2) <= 1e-12 * std::max(L1 * L1, L2 * L2))
    throw std::invalid_argument("separate_two_energies: singular system, lambda_1^2 = lambda_2^2");
  TwoByTwo s;
  s.p11 = std::pow(L1, k + 1);
  s.p12 = std::pow(L1, k - 1);
  s.p21 = std::pow(L2, k + 1);
  s.p22 = std::pow(L2, k - 1);
  s.det = s.p11 * s.p22 - s.p12 * s.p21;
  return s;
}

}  // namespace

SeparatedPair separate_two_energies(double sigma1, double lambda1, double sigma2, double lambda2, int k) {
  const TwoByTwo s = energy_system(lambda1, lambda2, k);
  return {(s.p22 * sigma1 - s.p12 * sigma2) / s.det, (s.p11 * sigma2 - s.p21 * sigma1) / s.det};
}

SeparatedFields separate_two_energies(const BoundaryField& sigma1, double lambda1, const BoundaryField& sigma2,
                                      double lambda2, int k) {
  const TwoByTwo s = energy_system(lambda1, lambda2, k);
  return {sigma1 * (s.p22 / s.det) - sigma2 * (s.p12 / s.det), sigma2 * (s.p11 / s.det) - sigma1 * (s.p21 / s.det)};
}

std::pair<RaySampleSet, RaySampleSet> separate_two_energies(const RaySampleSet& s1, const RaySampleSet& s2, int k) {
  if (s1.samples.size() != s2.samples.size())
    throw std::invalid_argument("separate_two_energies: sample sets differ in size");
  std::pair<RaySampleSet, RaySampleSet> out;
  out.first.geodesics = s1.geodesics;
  out.second.geodesics = s1.geodesics;
  out.first.provenance = out.second.provenance = s1.provenance;
  for (size_t i = 0; i < s1.samples.size(); ++i) {
    const RaySample &a = s1.samples[i], &b = s2.samples[i];
    if (a.geodesic != b.geodesic || a.m != b.m || a.moment != b.moment)
      throw std::invalid_argument("separate_two_energies: rows differ at sample " + std::to_string(i));
    const SeparatedPair p = separate_two_energies(a.value, a.lambda, b.value, b.lambda, k);
    out.first.samples.push_back(RaySample{a.geodesic, a.m, 1.0, p.metric, a.moment});
    // the potential channel has weight k - 1 and no moment rows
    if (a.moment < 0) out.second.samples.push_back(RaySample{a.geodesic, k - 1, 1.0, p.potential, -1});
  }
  return out;
}

TwoEnergyReport strip_two_energies(const Scenario& sc, double lambda1, double lambda2, const StripOptions& opt) {
  const auto t0 = std::chrono::steady_clock::now();
  const StripContext ctx = strip_context(sc, opt);
  const TensorBasis sbasis = scalar_basis(sc.spec(), sc.basis_degree, sc.parity());
  TwoEnergyReport out;
  RecoveryReport& rep = out.metric;
  rep.geodesic_count = static_cast<int>(ctx.geodesics.size());
  rep.basis_size = ctx.basis.size();
  rep.note = kConstantNote;
  const MetricJet g1 = sc.g1();
  std::vector<BoundaryField> Dhat(sc.k_max + 1, BoundaryField(Rank::Sym2, sc.spec()));
  out.V_hat.assign(sc.k_max + 1, BoundaryField(Rank::Scalar, sc.spec()));
  out.potential_error.assign(sc.k_max + 1, 0.0);
  for (int j = 2; j <= sc.k_max; ++j) {
    SymbolQuadratic T;
    try {
      T = difference_symbol(g1, sc.g_with(Dhat, j - 1), j, 12, 1e-6);
    } catch (const std::invalid_argument& e) {
      rep.aborted = true;
      rep.message = std::string("order ") + std::to_string(j) + ": " + e.what();
      break;
    }
    const BoundaryField* V = sc.V.empty() ? nullptr : &sc.V[j];
    const auto d1 = simulate_order_data(T, V, ctx.geodesics, opt.channel, j, lambda1, opt.quadrature);
    const auto d2 = simulate_order_data(T, V, ctx.geodesics, opt.channel, j, lambda2, opt.quadrature);
    const auto [metric, potential] = separate_two_energies(d1, d2, j);
    OrderRecovery rec = recover_order(j, metric, sc, ctx, channel_plan(opt.channel, sc.spec(), j).moments, opt);
    Dhat[j] = rec.D_hat;
    if (!potential.samples.empty()) {
      const auto pr = reconstruct_scalar(potential, sbasis, {}, opt.quadrature);
      out.V_hat[j] = pr.field;
      const BoundaryField truth = V ? *V : BoundaryField(Rank::Scalar, sc.spec());
      out.potential_error[j] = sup_norm(pr.field - truth, ctx.check_points);
    }
    rep.orders.push_back(std::move(rec));
    if (should_abort(rep.orders.back(), opt, rep.message)) {
      rep.aborted = true;
      break;
    }
  }
  rep.runtime = seconds_since(t0);
  return out;
}

// ---- gauge ------------------------------------------------------------------------------

namespace {

GaugeReport compare_normal_forms(const MetricJet& g, const MetricJet& moved, int sample_count, double tol) {
  GaugeReport rep;
  rep.order = g.order();
  const auto pts = sample_points(g.spec(), sample_count);
  const MetricJet a = normalize(g, g.order(), pts).g_nf, b = normalize(moved, g.order(), pts).g_nf;
  for (const auto& p : pts) {
    const auto ca = a.coefficients_at(p), cb = b.coefficients_at(p);
    for (int j = 0; j <= rep.order; ++j) rep.difference = std::max(rep.difference, (ca.h[j] - cb.h[j]).cwiseAbs().maxCoeff());
  }
  rep.invariant = rep.difference < tol;
  return rep;
}

}  // namespace

GaugeReport gauge_check(const MetricJet& g, const CollarDiffeoJet& psi, int sample_count, double tol) {
  return compare_normal_forms(g, pullback_collar(g, psi), sample_count, tol);
}

GaugeReport gauge_check(const MetricJet& g, const BoundaryField& alpha, int sample_count, double tol) {
  return compare_normal_forms(g, pullback_collar(g, CollarDiffeoJet::defining_function_change(g.spec(), g.order(), alpha)),
                              sample_count, tol);
}

}  // namespace asymscat
