#include "asymscat/io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace asymscat {

namespace {

void dump_rec(const json& j, int indent, int depth, std::string& out) {
  const std::string pad = indent > 0 ? std::string(static_cast<size_t>(indent * (depth + 1)), ' ') : "";
  const std::string close_pad = indent > 0 ? std::string(static_cast<size_t>(indent * depth), ' ') : "";
  const char* nl = indent > 0 ? "\n" : "";
  switch (j.type()) {
    case json::value_t::object: {
      if (j.empty()) { out += "{}"; return; }
      out += "{";
      out += nl;
      bool first = true;
      for (auto it = j.begin(); it != j.end(); ++it) {
        if (!first) { out += ","; out += nl; }
        first = false;
        out += pad + json(it.key()).dump() + (indent > 0 ? ": " : ":");
        dump_rec(it.value(), indent, depth + 1, out);
      }
      out += nl + close_pad + "}";
      return;
    }
    case json::value_t::array: {
      if (j.empty()) { out += "[]"; return; }
      // short numeric arrays stay on one line
      bool flat = j.size() <= 16;
      for (const auto& v : j) flat = flat && v.is_primitive();
      out += "[";
      if (!flat) out += nl;
      bool first = true;
      for (const auto& v : j) {
        if (!first) { out += ","; out += flat ? (indent > 0 ? " " : "") : nl; }
        first = false;
        if (!flat) out += pad;
        dump_rec(v, indent, depth + 1, out);
      }
      if (!flat) out += nl + close_pad;
      out += "]";
      return;
    }
    case json::value_t::number_float: {
      const double v = j.get<double>();
      if (!std::isfinite(v)) { out += "null"; return; }
      char buf[40];
      std::snprintf(buf, sizeof buf, "%.17g", v);
      out += buf;
      return;
    }
    default:
      out += j.dump();
  }
}

std::string child(const std::string& ptr, const std::string& key) { return ptr + "/" + key; }
std::string child(const std::string& ptr, size_t i) { return ptr + "/" + std::to_string(i); }

const json& require(const json& j, const std::string& ptr, const char* key) {
  if (!j.is_object()) throw SchemaError(ptr, "expected an object");
  auto it = j.find(key);
  if (it == j.end()) throw SchemaError(child(ptr, key), std::string("missing required key '") + key + "'");
  return *it;
}

double number(const json& j, const std::string& ptr) {
  if (!j.is_number()) throw SchemaError(ptr, "expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) throw SchemaError(ptr, "non-finite number");
  return v;
}

long integer(const json& j, const std::string& ptr) {
  if (!j.is_number_integer()) throw SchemaError(ptr, "expected an integer");
  return j.get<long>();
}

const json& array(const json& j, const std::string& ptr) {
  if (!j.is_array()) throw SchemaError(ptr, "expected an array");
  return j;
}

bool flag(const json& j, const char* key, bool dflt, const std::string& ptr) {
  auto it = j.find(key);
  if (it == j.end()) return dflt;
  if (!it->is_boolean()) throw SchemaError(child(ptr, key), "expected a boolean");
  return it->get<bool>();
}

json vec(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

Eigen::VectorXd vec_from(const json& j, int n, const std::string& ptr) {
  array(j, ptr);
  if (static_cast<int>(j.size()) != n) throw SchemaError(ptr, "expected " + std::to_string(n) + " entries");
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v(i) = number(j[i], child(ptr, static_cast<size_t>(i)));
  return v;
}

json series_to_json(const JetSeries& s) {
  json a = json::array();
  for (const auto& f : s.coeffs) a.push_back(field_to_json(f));
  return a;
}

JetSeries series_from_json(const json& j, Rank r, const SphereSpec& spec, int N, const std::string& ptr) {
  array(j, ptr);
  if (static_cast<int>(j.size()) > N + 1) throw SchemaError(ptr, "more than N + 1 coefficients");
  JetSeries s(r, spec, N);
  for (size_t i = 0; i < j.size(); ++i) {
    const std::string p = child(ptr, i);
    BoundaryField f = field_from_json(j[i], p);
    if (f.rank() != r) throw SchemaError(child(p, "rank"), "expected rank " + rank_name(r));
    if (!(f.spec() == spec)) throw SchemaError(p, "sphere (n, rho) differs from the rest of the jet");
    s[static_cast<int>(i)] = std::move(f);
  }
  return s;
}

// ---- fitting -----------------------------------------------------------------------

struct Fitter {
  SphereSpec spec;
  FitOptions opt;
  std::vector<Exponent> monos;
  std::vector<Eigen::VectorXd> pts, hold;
  Eigen::MatrixXd Phi, PhiH;

  Fitter(const SphereSpec& s, const FitOptions& o) : spec(s), opt(o) {
    monos = canonical_monomials(s.n, o.max_degree);
    pts = sample_points(s, static_cast<int>(2 * monos.size()) + 8);
    // an offset lattice for held-out checks
    Eigen::MatrixXd R = Eigen::MatrixXd::Identity(s.n, s.n);
    const double c = std::cos(0.37), sn = std::sin(0.37);
    R(0, 0) = c; R(0, 1) = -sn; R(1, 0) = sn; R(1, 1) = c;
    for (const auto& p : sample_points(s, o.holdout)) hold.push_back(R * p);
    Phi = design(pts);
    PhiH = design(hold);
  }

  Eigen::MatrixXd design(const std::vector<Eigen::VectorXd>& P) const {
    Eigen::MatrixXd M(P.size(), monos.size());
    for (size_t i = 0; i < P.size(); ++i)
      for (size_t k = 0; k < monos.size(); ++k) {
        double v = 1.0;
        for (int d = 0; d < spec.n; ++d)
          for (int e = 0; e < monos[k][d]; ++e) v *= P[i](d);
        M(i, k) = v;
      }
    return M;
  }

  // Y: values at pts, YH: values at hold; columns are flat components.
  std::pair<Eigen::MatrixXd, FitResult> fit(const Eigen::MatrixXd& Y, const Eigen::MatrixXd& YH) const {
    Eigen::MatrixXd best;
    FitResult res{0, std::numeric_limits<double>::infinity()};
    for (int d = opt.min_degree; d <= opt.max_degree; ++d) {
      size_t m = 0;
      while (m < monos.size() && total_degree(monos[m]) <= d) ++m;
      Eigen::MatrixXd C = Phi.leftCols(m).colPivHouseholderQr().solve(Y);
      const double r = Y.cols() ? (PhiH.leftCols(m) * C - YH).cwiseAbs().maxCoeff() : 0.0;
      if (r < res.residual) {
        res = {d, r};
        best = Eigen::MatrixXd::Zero(monos.size(), Y.cols());
        best.topRows(m) = C;
      }
      if (r < opt.tol) break;
    }
    return {best, res};
  }

  Poly poly(const Eigen::MatrixXd& C, Eigen::Index col) const {
    Poly p(spec.n, spec.rho2());
    for (size_t k = 0; k < monos.size(); ++k)
      if (C(k, col) != 0.0) p.add_term(monos[k], C(k, col));
    p.prune(1e-13);
    return p;
  }

  BoundaryField field(Rank r, const Eigen::MatrixXd& C, Eigen::Index first) const {
    BoundaryField f(r, spec);
    const int comps = r == Rank::Scalar ? 1 : r == Rank::Sym2 ? spec.n * spec.n : spec.n;
    if (r == Rank::Sym2) {
      for (int i = 0; i < spec.n; ++i)
        for (int j = i; j < spec.n; ++j)
          f.set(i, j, (poly(C, first + i * spec.n + j) + poly(C, first + j * spec.n + i)) * 0.5);
    } else {
      for (int i = 0; i < comps; ++i) f.set(i, poly(C, first + i));
    }
    return f;
  }
};

json fit_json(const FitResult& r) { return {{"degree", r.degree}, {"residual", r.residual}}; }

}  // namespace

std::string dump_json(const json& j, int indent) {
  std::string out;
  dump_rec(j, indent, 0, out);
  out += "\n";
  return out;
}

json parse_json(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw SchemaError("", std::string("malformed JSON at byte ") + std::to_string(e.byte) + ": " + e.what());
  }
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json read_json_file(const std::string& path) { return parse_json(read_text_file(path)); }

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << text;
}

// ---- fields ------------------------------------------------------------------------

json field_to_json(const BoundaryField& f) {
  const SphereSpec& s = f.spec();
  json comps = json::array();
  auto emit = [&](const Poly& p, json index) {
    if (p.is_zero()) return;
    json monos = json::array();
    for (const auto& [e, c] : p.terms()) {
      json ex = json::array();
      for (int d = 0; d < s.n; ++d) ex.push_back(static_cast<int>(e[d]));
      monos.push_back({{"exp", ex}, {"coef", c}});
    }
    comps.push_back({{"index", index}, {"monomials", monos}});
  };
  switch (f.rank()) {
    case Rank::Scalar: emit(f.comp(0), json::array()); break;
    case Rank::Vector:
    case Rank::Covector:
      for (int i = 0; i < s.n; ++i) emit(f.comp(i), json::array({i}));
      break;
    case Rank::Sym2:
      for (int i = 0; i < s.n; ++i)
        for (int j = i; j < s.n; ++j) emit(f.comp(i, j), json::array({i, j}));
      break;
  }
  return {{"rank", rank_name(f.rank())}, {"n", s.n}, {"rho", s.rho}, {"components", comps}};
}

BoundaryField field_from_json(const json& j, const std::string& ptr) {
  const json& rk = require(j, ptr, "rank");
  if (!rk.is_string()) throw SchemaError(child(ptr, "rank"), "expected a string");
  Rank rank;
  try {
    rank = rank_from_name(rk.get<std::string>());
  } catch (const std::invalid_argument& e) {
    throw SchemaError(child(ptr, "rank"), e.what());
  }
  SphereSpec spec;
  spec.n = static_cast<int>(integer(require(j, ptr, "n"), child(ptr, "n")));
  spec.rho = number(require(j, ptr, "rho"), child(ptr, "rho"));
  if (spec.n < 2 || spec.n > kMaxAmbient) throw SchemaError(child(ptr, "n"), "n out of range");
  if (spec.rho <= 0) throw SchemaError(child(ptr, "rho"), "rho must be positive");
  BoundaryField f(rank, spec);
  const std::string cp = child(ptr, "components");
  const json& comps = array(require(j, ptr, "components"), cp);
  const size_t arity = static_cast<size_t>(tensor_order(rank));
  std::vector<bool> seen(static_cast<size_t>(spec.n * spec.n), false);
  for (size_t c = 0; c < comps.size(); ++c) {
    const std::string p = child(cp, c);
    const std::string ip = child(p, "index");
    const json& idx = array(require(comps[c], p, "index"), ip);
    if (idx.size() != arity) throw SchemaError(ip, "index needs " + std::to_string(arity) + " entries for rank " + rank_name(rank));
    std::vector<int> ix;
    for (size_t k = 0; k < idx.size(); ++k) {
      const long v = integer(idx[k], child(ip, k));
      if (v < 0 || v >= spec.n) throw SchemaError(child(ip, k), "index out of range");
      ix.push_back(static_cast<int>(v));
    }
    Poly poly(spec.n, spec.rho2());
    const std::string mp = child(p, "monomials");
    const json& monos = array(require(comps[c], p, "monomials"), mp);
    for (size_t m = 0; m < monos.size(); ++m) {
      const std::string q = child(mp, m);
      const std::string ep = child(q, "exp");
      const json& ex = array(require(monos[m], q, "exp"), ep);
      if (static_cast<int>(ex.size()) != spec.n) throw SchemaError(ep, "exponent needs n entries");
      Exponent e{};
      for (int d = 0; d < spec.n; ++d) {
        const long v = integer(ex[d], child(ep, static_cast<size_t>(d)));
        if (v < 0 || v > 255) throw SchemaError(child(ep, static_cast<size_t>(d)), "exponent out of range");
        e[d] = static_cast<std::uint8_t>(v);
      }
      poly.add_term(e, number(require(monos[m], q, "coef"), child(q, "coef")));
    }
    const int a = ix.empty() ? 0 : ix[0], b = ix.size() > 1 ? ix[1] : 0;
    const size_t key = static_cast<size_t>(std::min(a, b) * spec.n + std::max(a, b));
    if (seen[key]) throw SchemaError(ip, "duplicate component");
    seen[key] = true;
    try {
      if (rank == Rank::Sym2) f.set(a, b, poly);
      else f.set(a, poly);
    } catch (const std::exception& e) {
      throw SchemaError(p, e.what());
    }
  }
  try {
    f.check_cap("field_from_json");
  } catch (const DegreeOverflow& e) {
    throw SchemaError(cp, e.what());
  }
  return f;
}

// ---- metric jets --------------------------------------------------------------------

json metric_to_json(const MetricJet& g, const FitOptions& fopt) {
  const SphereSpec& s = g.spec();
  const int N = g.order();
  json out;
  out["N"] = N;
  out["r"] = validate_scattering_form(g).stage;
  if (g.kind() == MetricJet::Kind::Polynomial) {
    out["a"] = series_to_json(g.a());
    out["cross"] = series_to_json(g.cross());
    out["h"] = series_to_json(g.h());
    out["kind"] = "polynomial";
    out["fit"] = nullptr;
    return out;
  }
  const Fitter F(s, fopt);
  const int per = 1 + s.n + s.n * s.n;
  auto values = [&](const std::vector<Eigen::VectorXd>& P) {
    Eigen::MatrixXd Y(P.size(), per * (N + 1));
    for (size_t i = 0; i < P.size(); ++i) {
      const auto pc = g.coefficients_at(P[i]);
      for (int j = 0; j <= N; ++j) {
        const Eigen::Index c0 = per * j;
        Y(i, c0) = pc.a[j];
        Y.block(i, c0 + 1, 1, s.n) = pc.cross[j].transpose();
        for (int a = 0; a < s.n; ++a)
          for (int b = 0; b < s.n; ++b) Y(i, c0 + 1 + s.n + a * s.n + b) = pc.h[j](a, b);
      }
    }
    return Y;
  };
  const auto [C, res] = F.fit(values(F.pts), values(F.hold));
  out["fit"] = fit_json(res);
  if (!(res.residual < fopt.accept)) {
    // not polynomial at any affordable degree: point samples instead
    out["kind"] = "sampled";
    json samples = json::array();
    for (const auto& p : sample_points(s, fopt.samples)) {
      const auto pc = g.coefficients_at(p);
      json cr = json::array(), hh = json::array();
      for (int j = 0; j <= N; ++j) {
        cr.push_back(vec(pc.cross[j]));
        json m = json::array();
        for (int r = 0; r < s.n; ++r) m.push_back(vec(pc.h[j].row(r).transpose()));
        hh.push_back(m);
      }
      samples.push_back({{"point", vec(p)}, {"a", pc.a}, {"cross", cr}, {"h", hh}});
    }
    out["samples"] = samples;
    return out;
  }
  out["kind"] = "polynomial";
  JetSeries a(Rank::Scalar, s, N), c(Rank::Covector, s, N), h(Rank::Sym2, s, N);
  for (int j = 0; j <= N; ++j) {
    a[j] = F.field(Rank::Scalar, C, per * j);
    c[j] = F.field(Rank::Covector, C, per * j + 1);
    h[j] = F.field(Rank::Sym2, C, per * j + 1 + s.n);
  }
  out["a"] = series_to_json(a);
  out["cross"] = series_to_json(c);
  out["h"] = series_to_json(h);
  return out;
}

MetricJet metric_from_json(const json& j, const std::string& ptr) {
  const long N = integer(require(j, ptr, "N"), child(ptr, "N"));
  if (N < 0 || N > 20) throw SchemaError(child(ptr, "N"), "N out of range");
  if (j.contains("kind") && j["kind"] == "sampled")
    throw SchemaError(child(ptr, "kind"), "sampled metric jets are output only");
  if (j.contains("r")) {
    const long r = integer(j["r"], child(ptr, "r"));
    if (r < 0) throw SchemaError(child(ptr, "r"), "stage must be non-negative");
  }
  const json& h = array(require(j, ptr, "h"), child(ptr, "h"));
  if (h.empty()) throw SchemaError(child(ptr, "h"), "h_0 is required");
  const SphereSpec spec = field_from_json(h[0], child(child(ptr, "h"), 0)).spec();
  const int n = static_cast<int>(N);
  JetSeries a = series_from_json(require(j, ptr, "a"), Rank::Scalar, spec, n, child(ptr, "a"));
  JetSeries c = series_from_json(require(j, ptr, "cross"), Rank::Covector, spec, n, child(ptr, "cross"));
  JetSeries hs = series_from_json(h, Rank::Sym2, spec, n, child(ptr, "h"));
  try {
    return MetricJet::polynomial(spec, n, a, c, hs);
  } catch (const std::invalid_argument& e) {
    throw SchemaError(ptr, e.what());
  }
}

json diffeo_to_json(const CollarDiffeoJet& phi, int sample_count) {
  json out;
  out["N"] = phi.order();
  if (phi.is_identity()) {
    out["kind"] = "identity";
    out["U"] = json::array();
    out["V"] = json::array();
    return out;
  }
  if (phi.kind() == CollarDiffeoJet::Kind::Series) {
    out["kind"] = "series";
    out["U"] = series_to_json(phi.U());
    out["V"] = series_to_json(phi.V());
    return out;
  }
  out["kind"] = "sampled";
  json samples = json::array();
  for (const auto& p : sample_points(phi.spec(), sample_count)) {
    const auto d = phi.at(p);
    json eta = json::array();
    for (const auto& e : d.eta) eta.push_back(vec(e));
    samples.push_back({{"point", vec(p)}, {"u", d.u}, {"eta", eta}});
  }
  out["samples"] = samples;
  return out;
}

CollarDiffeoJet diffeo_from_json(const json& j, const SphereSpec& spec, const std::string& ptr) {
  const long N = integer(require(j, ptr, "N"), child(ptr, "N"));
  if (N < 0 || N > 20) throw SchemaError(child(ptr, "N"), "N out of range");
  const int n = static_cast<int>(N);
  if (j.contains("kind") && j["kind"] == "sampled")
    throw SchemaError(child(ptr, "kind"), "sampled diffeomorphisms are output only");
  const json& U = array(require(j, ptr, "U"), child(ptr, "U"));
  const json& V = array(require(j, ptr, "V"), child(ptr, "V"));
  if (U.empty() && V.empty()) return CollarDiffeoJet::identity(spec, n);
  try {
    return CollarDiffeoJet::series(spec, n, series_from_json(U, Rank::Scalar, spec, n + 2, child(ptr, "U")),
                                   series_from_json(V, Rank::Vector, spec, n + 1, child(ptr, "V")));
  } catch (const std::invalid_argument& e) {
    throw SchemaError(ptr, e.what());
  }
}

json symbol_to_json(const SymbolQuadratic& s, const FitOptions& fopt) {
  json out{{"k", s.k}, {"lambda_degree", s.lambda_degree}, {"tau_independent", s.tau_independent}};
  if (s.B) {
    out["B"] = field_to_json(*s.B);
    out["fit"] = nullptr;
    return out;
  }
  const Fitter F(s.spec, fopt);
  const int nn = s.spec.n * s.spec.n;
  auto values = [&](const std::vector<Eigen::VectorXd>& P) {
    Eigen::MatrixXd Y(P.size(), nn);
    for (size_t i = 0; i < P.size(); ++i) {
      const Eigen::MatrixXd B = s.B_at(P[i]);
      for (int a = 0; a < s.spec.n; ++a)
        for (int b = 0; b < s.spec.n; ++b) Y(i, a * s.spec.n + b) = B(a, b);
    }
    return Y;
  };
  const auto [C, res] = F.fit(values(F.pts), values(F.hold));
  out["B"] = field_to_json(F.field(Rank::Sym2, C, 0));
  out["fit"] = fit_json(res);
  return out;
}

// ---- geodesics and samples ------------------------------------------------------------

json geodesics_to_json(const std::vector<GreatCircle>& g) {
  json a = json::array();
  for (const auto& c : g) a.push_back({{"u", vec(c.u)}, {"v", vec(c.v)}});
  return a;
}

std::vector<GreatCircle> geodesics_from_json(const json& j, double rho, const std::string& ptr) {
  array(j, ptr);
  std::vector<GreatCircle> out;
  for (size_t i = 0; i < j.size(); ++i) {
    const std::string p = child(ptr, i);
    const json& u = require(j[i], p, "u");
    const int n = static_cast<int>(array(u, child(p, "u")).size());
    const Eigen::VectorXd uu = vec_from(u, n, child(p, "u"));
    const Eigen::VectorXd vv = vec_from(require(j[i], p, "v"), n, child(p, "v"));
    try {
      out.push_back(GreatCircle::make(uu, vv, rho));
    } catch (const std::invalid_argument& e) {
      throw SchemaError(p, e.what());
    }
  }
  return out;
}

std::string samples_to_csv(const RaySampleSet& s) {
  bool moments = false;
  for (const auto& r : s.samples) moments |= r.moment >= 0;
  std::string out = moments ? "geodesic_index,m,lambda,value,moment\n" : "geodesic_index,m,lambda,value\n";
  char buf[128];
  for (const auto& r : s.samples) {
    std::snprintf(buf, sizeof buf, "%d,%d,%.17g,%.17g", r.geodesic, r.m, r.lambda, r.value);
    out += buf;
    if (moments) out += "," + std::to_string(r.moment);
    out += "\n";
  }
  return out;
}

std::vector<RaySample> samples_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw SchemaError("/header", "empty samples file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  bool moments;
  if (line == "geodesic_index,m,lambda,value") moments = false;
  else if (line == "geodesic_index,m,lambda,value,moment") moments = true;
  else throw SchemaError("/header", "expected header geodesic_index,m,lambda,value[,moment]");
  static const char* names[] = {"geodesic_index", "m", "lambda", "value", "moment"};
  std::vector<RaySample> out;
  size_t row = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ls(line);
    for (std::string c; std::getline(ls, c, ',');) cells.push_back(c);
    const std::string rp = "/rows/" + std::to_string(row);
    if (cells.size() != (moments ? 5u : 4u)) throw SchemaError(rp, "wrong number of columns");
    auto num = [&](int k) {
      try {
        size_t used = 0;
        const double v = std::stod(cells[k], &used);
        if (used != cells[k].size() || !std::isfinite(v)) throw std::invalid_argument("x");
        return v;
      } catch (const std::exception&) {
        throw SchemaError(rp + "/" + names[k], "not a number: '" + cells[k] + "'");
      }
    };
    auto whole = [&](int k) {
      const double v = num(k);
      if (v != std::floor(v)) throw SchemaError(rp + "/" + names[k], "expected an integer");
      return static_cast<int>(v);
    };
    RaySample s;
    s.geodesic = whole(0);
    s.m = whole(1);
    s.lambda = num(2);
    s.value = num(3);
    s.moment = moments ? whole(4) : -1;
    if (s.geodesic < 0) throw SchemaError(rp + "/geodesic_index", "negative index");
    if (s.m < 0) throw SchemaError(rp + "/m", "negative weight");
    out.push_back(s);
    ++row;
  }
  return out;
}

// ---- scenario ------------------------------------------------------------------------

json scenario_to_json(const Scenario& sc) {
  const auto& o = sc.options;
  json D = json::array(), V = json::array();
  for (int j = 2; j < static_cast<int>(sc.D.size()); ++j) D.push_back(field_to_json(sc.D[j]));
  for (int j = 2; j < static_cast<int>(sc.V.size()); ++j) V.push_back(field_to_json(sc.V[j]));
  return {{"seed", sc.seed},
          {"k_max", sc.k_max},
          {"basis_degree", sc.basis_degree},
          {"options",
           {{"n", o.spec.n},
            {"rho", o.spec.rho},
            {"projective", o.projective},
            {"zero_differences", o.zero_differences},
            {"with_potential", o.with_potential},
            {"difference_scale", o.difference_scale}}},
          {"lambdas", sc.lambdas},
          {"D", D},
          {"V", V},
          {"g1", metric_to_json(sc.g1())},
          {"g2", metric_to_json(sc.g2())}};
}

Scenario scenario_from_json(const json& j) {
  Scenario sc;
  const json& seed = require(j, "", "seed");
  if (!seed.is_number_unsigned() && !(seed.is_number_integer() && seed.get<long>() >= 0))
    throw SchemaError("/seed", "expected a non-negative integer");
  sc.seed = seed.get<std::uint64_t>();
  sc.k_max = static_cast<int>(integer(require(j, "", "k_max"), "/k_max"));
  if (sc.k_max < 2) throw SchemaError("/k_max", "k_max must be >= 2");
  sc.basis_degree = static_cast<int>(integer(require(j, "", "basis_degree"), "/basis_degree"));
  const json& o = require(j, "", "options");
  sc.options.spec.n = static_cast<int>(integer(require(o, "/options", "n"), "/options/n"));
  sc.options.spec.rho = number(require(o, "/options", "rho"), "/options/rho");
  sc.options.projective = flag(o, "projective", false, "/options");
  sc.options.zero_differences = flag(o, "zero_differences", false, "/options");
  sc.options.with_potential = flag(o, "with_potential", false, "/options");
  if (o.contains("difference_scale")) sc.options.difference_scale = number(o["difference_scale"], "/options/difference_scale");
  if (j.contains("lambdas")) {
    sc.lambdas.clear();
    const json& l = array(j["lambdas"], "/lambdas");
    for (size_t i = 0; i < l.size(); ++i) sc.lambdas.push_back(number(l[i], child("/lambdas", i)));
  }
  const SphereSpec& s = sc.spec();
  const MetricJet g2 = metric_from_json(require(j, "", "g2"), "/g2");
  if (!(g2.spec().n == s.n && g2.spec().rho == s.rho)) throw SchemaError("/g2", "sphere differs from options");
  if (g2.order() != sc.k_max) throw SchemaError("/g2/N", "g2 order must equal k_max");
  sc.h2 = g2.h();
  sc.D.assign(sc.k_max + 1, BoundaryField(Rank::Sym2, s));
  const json& D = array(require(j, "", "D"), "/D");
  if (static_cast<int>(D.size()) != sc.k_max - 1) throw SchemaError("/D", "expected k_max - 1 differences (orders 2..k_max)");
  for (size_t i = 0; i < D.size(); ++i) {
    BoundaryField f = field_from_json(D[i], child("/D", i));
    if (f.rank() != Rank::Sym2) throw SchemaError(child(child("/D", i), "rank"), "expected sym2");
    sc.D[i + 2] = f;
  }
  if (j.contains("V")) {
    const json& V = array(j["V"], "/V");
    if (!V.empty()) {
      if (static_cast<int>(V.size()) != sc.k_max - 1) throw SchemaError("/V", "expected k_max - 1 potential differences");
      sc.V.assign(sc.k_max + 1, BoundaryField(Rank::Scalar, s));
      for (size_t i = 0; i < V.size(); ++i) sc.V[i + 2] = field_from_json(V[i], child("/V", i));
    }
  }
  return sc;
}

// ---- reports ------------------------------------------------------------------------

json diagnostics_to_json(const ReconstructionDiagnostics& d) {
  return {{"residual", d.residual},   {"relative_residual", d.relative_residual},
          {"sigma_max", d.sigma_max}, {"sigma_min", d.sigma_min},
          {"cutoff", d.cutoff},       {"rank", d.rank},
          {"nullity", d.nullity},     {"rows", d.rows},
          {"inconsistent", d.inconsistent}, {"warning", d.warning},
          {"amplification", d.sigma_min > 0 ? d.sigma_max / d.sigma_min : 0.0}};
}

json nullspace_to_json(const NullspaceReport& r) {
  json k = json::array();
  for (const auto& v : r.kernel)
    k.push_back({{"sigma", v.sigma}, {"odd_fraction", v.odd_fraction}, {"lie_distance", v.lie_distance},
                 {"odd_lie_distance", v.odd_lie_distance}});
  return {{"threshold", r.threshold},
          {"sigma_ratio", r.sigma_ratio},
          {"rank", r.rank},
          {"kernel_dimension", r.kernel.size()},
          {"kernel", k},
          {"odd_dimension", r.odd_dimension},
          {"lie_dimension", r.lie_dimension},
          {"odd_lie_dimension", r.odd_lie_dimension},
          {"kernel_to_odd_lie", r.kernel_to_odd_lie},
          {"odd_lie_to_kernel", r.odd_lie_to_kernel}};
}

json report_to_json(const RecoveryReport& r) {
  json orders = json::array();
  for (const auto& o : r.orders) {
    json e{{"order", o.order},
           {"D_hat", field_to_json(o.D_hat)},
           {"error", o.error},
           {"sigma_ratio", o.sigma_ratio},
           {"data_norm", o.data_norm},
           {"diagnostics", diagnostics_to_json(o.diag)},
           {"kernel", o.kernel ? nullspace_to_json(*o.kernel) : json(nullptr)}};
    orders.push_back(e);
  }
  // runtimes are left out so reruns are byte-identical
  return {{"orders", orders},         {"aborted", r.aborted},
          {"message", r.message},     {"geodesic_count", r.geodesic_count},
          {"basis_size", r.basis_size}, {"note", r.note}};
}

}  // namespace asymscat
