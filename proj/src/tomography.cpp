#include "asymscat/tomography.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <stdexcept>

#include "asymscat/quadrature.hpp"

namespace asymscat {

namespace {

constexpr double kPi = std::numbers::pi;

bool keep_parity(int deg, BasisParity mode) {
  if (mode == BasisParity::All) return true;
  return (deg % 2 == 0) == (mode == BasisParity::Even);
}

int sample_width(Rank r, int n) { return r == Rank::Sym2 ? n * (n + 1) / 2 : 1; }

// upper-triangle point values, off-diagonals scaled by sqrt 2 so the dot product is Frobenius
void sample_into(const BoundaryField& f, const std::vector<Eigen::VectorXd>& pts, double* out) {
  const int n = f.spec().n;
  const FieldEvaluator ev(f);
  std::vector<double> buf(ev.component_count());
  int k = 0;
  for (const auto& x : pts) {
    ev.eval(x.data(), buf.data());
    if (f.rank() == Rank::Scalar) {
      out[k++] = buf[0];
      continue;
    }
    for (int i = 0; i < n; ++i)
      for (int j = i; j < n; ++j) out[k++] = (i == j ? 1.0 : std::sqrt(2.0)) * buf[i * n + j];
  }
}

Eigen::VectorXd sample(const BoundaryField& f, const std::vector<Eigen::VectorXd>& pts) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(pts.size()) * sample_width(f.rank(), f.spec().n));
  sample_into(f, pts, v.data());
  return v;
}

TensorBasis build_basis(const SphereSpec& spec, Rank rank, int degree, BasisParity mode) {
  spec.validate();
  if (degree < 0) throw std::invalid_argument("basis: negative degree");
  const int n = spec.n;
  std::vector<BoundaryField> cand;
  std::vector<int> par;
  for (const auto& e : canonical_monomials(n, degree)) {
    const int d = total_degree(e);
    if (!keep_parity(d, mode)) continue;
    const Poly p = Poly::monomial(n, spec.rho2(), e, 1.0);
    if (rank == Rank::Scalar) {
      cand.push_back(BoundaryField::scalar(spec, p));
      par.push_back(d % 2);
      continue;
    }
    for (int i = 0; i < n; ++i)
      for (int j = i; j < n; ++j) {
        std::vector<std::vector<Poly>> c(n, std::vector<Poly>(n, Poly(n, spec.rho2())));
        c[i][j] = p;
        c[j][i] = p;
        cand.push_back(project_tangential(BoundaryField::sym2(spec, c)));
        par.push_back(d % 2);
      }
  }

  TensorBasis b;
  b.spec = spec;
  b.rank = rank;
  b.degree = degree;
  b.parity_mode = mode;
  const int w = sample_width(rank, n);
  const int npts = std::max(200, static_cast<int>(3 * cand.size() / w) + 50);
  b.points = sample_points(spec, npts);
  const double inv = 1.0 / std::sqrt(static_cast<double>(npts));

  // modified Gram-Schmidt (twice) on the sampled values
  std::vector<Eigen::VectorXd> ortho, kept_vals;
  for (size_t c = 0; c < cand.size(); ++c) {
    Eigen::VectorXd v = sample(cand[c], b.points) * inv;
    const double nv = v.norm();
    if (nv < 1e-12) continue;
    Eigen::VectorXd r = v;
    for (int pass = 0; pass < 2; ++pass)
      for (const auto& q : ortho) r -= q.dot(r) * q;
    if (r.norm() < 1e-6 * nv) continue;
    ortho.push_back(r.normalized());
    b.fields.push_back(cand[c] * (1.0 / nv));
    b.parity.push_back(par[c]);
    kept_vals.push_back(v / nv);
  }
  b.sampled.resize(kept_vals.empty() ? 0 : kept_vals[0].size(), static_cast<Eigen::Index>(kept_vals.size()));
  for (size_t c = 0; c < kept_vals.size(); ++c) b.sampled.col(static_cast<Eigen::Index>(c)) = kept_vals[c];
  b.gram = b.sampled.transpose() * b.sampled;
  if (b.size() > 0) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(b.gram, Eigen::EigenvaluesOnly);
    b.gram_min_eigenvalue = es.eigenvalues()[0];
  }
  return b;
}

}  // namespace

TensorBasis tensor_basis(const SphereSpec& spec, int degree, BasisParity parity) {
  return build_basis(spec, Rank::Sym2, degree, parity);
}

TensorBasis scalar_basis(const SphereSpec& spec, int degree, BasisParity parity) {
  return build_basis(spec, Rank::Scalar, degree, parity);
}

BoundaryField TensorBasis::combine(const Eigen::VectorXd& coeffs) const {
  if (coeffs.size() != size()) throw std::invalid_argument("TensorBasis::combine: size mismatch");
  BoundaryField out(rank, spec);
  for (int j = 0; j < size(); ++j)
    if (coeffs[j] != 0.0) out += fields[j] * coeffs[j];
  return out;
}

Eigen::VectorXd TensorBasis::coordinates(const BoundaryField& f, double* residual) const {
  if (f.rank() != rank) throw std::invalid_argument("TensorBasis::coordinates: rank mismatch");
  const Eigen::VectorXd v = sample(f, points) / std::sqrt(static_cast<double>(points.size()));
  const Eigen::VectorXd c = sampled.colPivHouseholderQr().solve(v);
  if (residual) {
    const double nv = v.norm();
    *residual = nv > 0 ? (sampled * c - v).norm() / nv : 0.0;
  }
  return c;
}

Eigen::MatrixXd TensorBasis::whitening() const {
  Eigen::LLT<Eigen::MatrixXd> llt(gram);
  return llt.matrixU();
}

std::vector<Poly> moment_polys(const SphereSpec& spec, int deg) {
  std::vector<Poly> out;
  for (const auto& e : canonical_monomials(spec.n, deg)) out.push_back(Poly::monomial(spec.n, spec.rho2(), e, 1.0));
  return out;
}

const Eigen::VectorXd& ForwardOperator::singular_values() const {
  if (!sv_) sv_ = Eigen::BDCSVD<Eigen::MatrixXd>(A).singularValues();
  return *sv_;
}

std::vector<RowMeta> expand_plan(const RowPlan& plan, int geodesic_count) {
  std::vector<RowMeta> rows;
  for (int g = 0; g < geodesic_count; ++g) {
    for (int m : plan.weights) rows.push_back({g, m, -1, 1.0});
    for (int p = 0; p < static_cast<int>(plan.moments.size()); ++p) rows.push_back({g, 0, p, 1.0});
  }
  return rows;
}

namespace {

// Every basis element written over shared features x^e (d_a d_b): the
// transforms are integrated once per feature and mapped through C.
class FeatureMap {
 public:
  explicit FeatureMap(const TensorBasis& b) : n_(b.spec.n), tensor_(b.rank == Rank::Sym2) {
    std::map<Exponent, int> idx;
    for (const auto& f : b.fields)
      for (const auto& p : f.components())
        for (const auto& [e, c] : p.terms()) idx.emplace(e, 0);
    int k = 0;
    for (auto& [e, i] : idx) {
      i = k++;
      monos_.push_back(e);
      for (int a = 0; a < n_; ++a) deg_ = std::max(deg_, static_cast<int>(e[a]));
    }
    npairs_ = tensor_ ? n_ * (n_ + 1) / 2 : 1;
    C_ = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(monos_.size()) * npairs_, b.size());
    for (int j = 0; j < b.size(); ++j) {
      const auto& f = b.fields[j];
      if (!tensor_) {
        for (const auto& [e, c] : f.comp(0).terms()) C_(idx.at(e), j) += c;
        continue;
      }
      int pr = 0;
      for (int a = 0; a < n_; ++a)
        for (int c2 = a; c2 < n_; ++c2, ++pr) {
          const double mult = a == c2 ? 1.0 : 2.0;
          for (const auto& [e, c] : f.comp(a, c2).terms()) C_(idx.at(e) * npairs_ + pr, j) += mult * c;
        }
    }
  }

  int size() const { return static_cast<int>(C_.rows()); }
  const Eigen::MatrixXd& C() const { return C_; }

  void eval(const double* x, const double* d, double* out) const {
    thread_local std::vector<double> pw;
    pw.assign(static_cast<size_t>(n_) * (deg_ + 1), 1.0);
    for (int a = 0; a < n_; ++a)
      for (int k = 1; k <= deg_; ++k) pw[a * (deg_ + 1) + k] = pw[a * (deg_ + 1) + k - 1] * x[a];
    double dd[kMaxAmbient * (kMaxAmbient + 1) / 2];
    if (tensor_) {
      int pr = 0;
      for (int a = 0; a < n_; ++a)
        for (int c = a; c < n_; ++c) dd[pr++] = d[a] * d[c];
    }
    for (size_t m = 0; m < monos_.size(); ++m) {
      double v = 1.0;
      for (int a = 0; a < n_; ++a) v *= pw[a * (deg_ + 1) + monos_[m][a]];
      if (!tensor_) {
        out[m] = v;
        continue;
      }
      for (int pr = 0; pr < npairs_; ++pr) out[m * npairs_ + pr] = v * dd[pr];
    }
  }

 private:
  int n_, deg_ = 0, npairs_ = 1;
  bool tensor_;
  std::vector<Exponent> monos_;
  Eigen::MatrixXd C_;
};

void check_rows(const TensorBasis& basis, const std::vector<GreatCircle>& geodesics, const std::vector<RowMeta>& rows,
                const std::vector<Poly>& moments) {
  if (basis.size() == 0) throw std::invalid_argument("build_forward: empty basis");
  if (geodesics.empty()) throw std::invalid_argument("build_forward: no geodesics");
  for (const auto& r : rows) {
    if (r.geodesic < 0 || r.geodesic >= static_cast<int>(geodesics.size()))
      throw std::invalid_argument("build_forward: geodesic index out of range");
    if (r.moment >= static_cast<int>(moments.size())) throw std::invalid_argument("build_forward: moment index out of range");
    if (r.moment < 0 && r.m < 0) throw std::invalid_argument("build_forward: negative weight");
  }
}

double row_scale(const TensorBasis& b, const RowMeta& r) { return b.rank == Rank::Sym2 ? r.lambda * r.lambda : 1.0; }

}  // namespace

ForwardOperator build_forward(const TensorBasis& basis, const std::vector<GreatCircle>& geodesics,
                              const std::vector<RowMeta>& rows, const std::vector<Poly>& moments,
                              const QuadratureOptions& q) {
  check_rows(basis, geodesics, rows, moments);
  const FeatureMap fm(basis);
  const int nf = fm.size();
  std::vector<std::vector<int>> by_geo(geodesics.size());
  for (int i = 0; i < static_cast<int>(rows.size()); ++i) by_geo[rows[i].geodesic].push_back(i);

  ForwardOperator op;
  op.rows = rows;
  op.A.resize(static_cast<Eigen::Index>(rows.size()), basis.size());

  const int G = static_cast<int>(geodesics.size());
#pragma omp parallel
  {
    Eigen::VectorXd f(nf);
    Eigen::MatrixXd acc(nf, 0);
#pragma omp for schedule(dynamic)
    for (int g = 0; g < G; ++g) {
      const auto& ri = by_geo[g];
      if (ri.empty()) continue;
      const GreatCircle& gc = geodesics[g];
      acc.setZero(nf, static_cast<Eigen::Index>(ri.size()));
      bool weighted = false, moment = false;
      for (int r : ri) (rows[r].moment < 0 ? weighted : moment) = true;
      if (weighted) {
        const QuadratureRule rule = gauss_legendre(q.gauss_nodes, 0.0, kPi * gc.rho);
        for (int k = 0; k < rule.size(); ++k) {
          const double t = rule.nodes[k];
          const Eigen::VectorXd x = gc.point(t), d = gc.tangent(t);
          fm.eval(x.data(), d.data(), f.data());
          for (size_t c = 0; c < ri.size(); ++c) {
            const RowMeta& r = rows[ri[c]];
            if (r.moment < 0) acc.col(static_cast<Eigen::Index>(c)) += (rule.weights[k] * sin_power(t / gc.rho, r.m)) * f;
          }
        }
      }
      if (moment) {
        const QuadratureRule rule = periodic_trapezoid(q.trapezoid_nodes, gc.period());
        for (int k = 0; k < rule.size(); ++k) {
          const Eigen::VectorXd x = gc.point(rule.nodes[k]), d = gc.tangent(rule.nodes[k]);
          fm.eval(x.data(), d.data(), f.data());
          const std::span<const double> xs(x.data(), x.size());
          for (size_t c = 0; c < ri.size(); ++c) {
            const RowMeta& r = rows[ri[c]];
            if (r.moment >= 0) acc.col(static_cast<Eigen::Index>(c)) += (rule.weights[k] * moments[r.moment].eval(xs)) * f;
          }
        }
      }
      const Eigen::MatrixXd block = acc.transpose() * fm.C();
      for (size_t c = 0; c < ri.size(); ++c) op.A.row(ri[c]) = block.row(static_cast<Eigen::Index>(c)) * row_scale(basis, rows[ri[c]]);
    }
  }
  return op;
}

ForwardOperator build_forward(const TensorBasis& basis, const std::vector<GreatCircle>& geodesics,
                              const RowPlan& plan, const QuadratureOptions& q) {
  return build_forward(basis, geodesics, expand_plan(plan, static_cast<int>(geodesics.size())), plan.moments, q);
}

ForwardOperator build_forward(const TensorBasis& basis, const std::vector<GreatCircle>& geodesics, int m,
                              const std::vector<Poly>& moments, const QuadratureOptions& q) {
  RowPlan plan;
  if (m >= 0) plan.weights = {m};
  plan.moments = moments;
  return build_forward(basis, geodesics, plan, q);
}

ForwardOperator build_forward_serial(const TensorBasis& basis, const std::vector<GreatCircle>& geodesics,
                                     const std::vector<RowMeta>& rows, const std::vector<Poly>& moments,
                                     const QuadratureOptions& q) {
  check_rows(basis, geodesics, rows, moments);
  QuadratureOptions qq = q;
  qq.check = false;
  std::vector<FieldEvaluator> ev;
  for (const auto& f : basis.fields) ev.emplace_back(f);
  ForwardOperator op;
  op.rows = rows;
  op.A.resize(static_cast<Eigen::Index>(rows.size()), basis.size());
  for (size_t i = 0; i < rows.size(); ++i) {
    const RowMeta& r = rows[i];
    const GreatCircle& g = geodesics[r.geodesic];
    for (int j = 0; j < basis.size(); ++j) {
      double v;
      if (basis.rank == Rank::Sym2) {
        v = r.moment < 0 ? tensor_transform(ev[j], g, r.m, qq).value : moment_transform(ev[j], g, moments[r.moment], qq).value;
      } else if (r.moment < 0) {
        v = scalar_transform(ev[j], g, r.m, qq).value;
      } else {
        const Poly& p = moments[r.moment];
        v = periodic_trapezoid(qq.trapezoid_nodes, g.period()).integrate([&](double t) {
          const Eigen::VectorXd x = g.point(t);
          return p.eval(std::span<const double>(x.data(), x.size())) * ev[j].scalar(x.data());
        });
      }
      op.A(static_cast<Eigen::Index>(i), j) = v * row_scale(basis, r);
    }
  }
  return op;
}

RaySampleSet simulate_samples(const BoundaryField& f, const std::vector<GreatCircle>& geodesics, const RowPlan& plan,
                              double lambda, const QuadratureOptions& q) {
  if (f.rank() != Rank::Sym2 && f.rank() != Rank::Scalar)
    throw std::invalid_argument("simulate_samples: sym2 or scalar field required");
  const bool tensor = f.rank() == Rank::Sym2;
  const FieldEvaluator ev(f);
  QuadratureOptions qq = q;
  qq.check = false;
  RaySampleSet out;
  out.provenance = RaySampleSet::Provenance::ForwardSimulated;
  out.geodesics = geodesics;
  const auto rows = expand_plan(plan, static_cast<int>(geodesics.size()));
  out.samples.resize(rows.size());
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < static_cast<int>(rows.size()); ++i) {
    const RowMeta& r = rows[i];
    const GreatCircle& g = geodesics[r.geodesic];
    double v;
    if (tensor) {
      v = r.moment < 0 ? tensor_transform(ev, g, r.m, qq).value : moment_transform(ev, g, plan.moments[r.moment], qq).value;
      v *= lambda * lambda;
    } else if (r.moment < 0) {
      v = scalar_transform(ev, g, r.m, qq).value;
    } else {
      const Poly& p = plan.moments[r.moment];
      v = periodic_trapezoid(qq.trapezoid_nodes, g.period()).integrate([&](double t) {
        const Eigen::VectorXd x = g.point(t);
        return p.eval(std::span<const double>(x.data(), x.size())) * ev.scalar(x.data());
      });
    }
    out.samples[i] = RaySample{r.geodesic, r.m, lambda, v, r.moment};
  }
  return out;
}

// ---- kernel diagnostics ----------------------------------------------------------

namespace {

// orthonormal basis of the column span, rank cut relative to the largest singular value
Eigen::MatrixXd orth(const Eigen::MatrixXd& M, double rel = 1e-8) {
  if (M.cols() == 0) return Eigen::MatrixXd(M.rows(), 0);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(M, Eigen::ComputeThinU);
  const auto& s = svd.singularValues();
  int r = 0;
  while (r < s.size() && s[r] > rel * std::max(s[0], 1e-300)) ++r;
  if (s.size() == 0 || s[0] == 0.0) r = 0;
  return svd.matrixU().leftCols(r);
}

double dist_to(const Eigen::MatrixXd& Q, const Eigen::VectorXd& z) {
  if (Q.cols() == 0) return z.norm();
  return (z - Q * (Q.transpose() * z)).norm();
}

double spectral_gap(const Eigen::MatrixXd& Q, const Eigen::MatrixXd& K) {
  if (K.cols() == 0) return 0.0;
  const Eigen::MatrixXd R = Q.cols() ? Eigen::MatrixXd(K - Q * (Q.transpose() * K)) : K;
  return Eigen::JacobiSVD<Eigen::MatrixXd>(R).singularValues()[0];
}

}  // namespace

Eigen::MatrixXd lie_subspace(const TensorBasis& basis, double tol) {
  if (basis.rank != Rank::Sym2) throw std::invalid_argument("lie_subspace: tensor basis required");
  const SphereSpec& s = basis.spec;
  // generators P(q e_i), deg q <= degree + 1; single generators rarely land in
  // the span, combinations do, so intersect the spans
  std::vector<BoundaryField> lie;
  for (const auto& e : canonical_monomials(s.n, basis.degree + 1)) {
    const Poly q = Poly::monomial(s.n, s.rho2(), e, 1.0);
    for (int i = 0; i < s.n; ++i) {
      std::vector<Poly> v(s.n, Poly(s.n, s.rho2()));
      v[i] = q;
      BoundaryField L = lie_derivative_round_metric(project_tangential(BoundaryField::vector(s, v)));
      if (!L.is_zero()) lie.push_back(std::move(L));
    }
  }
  const int nb = basis.size(), nl = static_cast<int>(lie.size());
  if (nl == 0) return Eigen::MatrixXd(nb, 0);
  const auto pts = sample_points(s, 4 * static_cast<int>(basis.points.size()));
  const int rows = static_cast<int>(pts.size()) * sample_width(Rank::Sym2, s.n);
  Eigen::MatrixXd S(rows, nb), L(rows, nl);
  for (int j = 0; j < nb; ++j) S.col(j) = sample(basis.fields[j], pts);
  for (int j = 0; j < nl; ++j) {
    L.col(j) = sample(lie[j], pts);
    L.col(j).normalize();
  }
  const Eigen::MatrixXd Q = orth(S, 1e-12);
  const Eigen::MatrixXd off = L - Q * (Q.transpose() * L);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(off, Eigen::ComputeFullV);
  Eigen::VectorXd sv = Eigen::VectorXd::Zero(nl);
  sv.head(svd.singularValues().size()) = svd.singularValues();
  const Eigen::MatrixXd R = basis.whitening();
  const auto qr = S.colPivHouseholderQr();
  Eigen::MatrixXd M(nb, 0);
  for (int j = 0; j < nl; ++j) {
    if (sv[j] > tol) continue;
    const Eigen::VectorXd c = qr.solve(L * svd.matrixV().col(j));
    M.conservativeResize(Eigen::NoChange, M.cols() + 1);
    M.col(M.cols() - 1) = R * c;
  }
  return orth(M);
}

NullspaceReport nullspace_analysis(const ForwardOperator& A, const TensorBasis& basis, double rel_threshold) {
  const int nb = basis.size();
  if (A.A.cols() != nb) throw std::invalid_argument("nullspace_analysis: basis does not match operator");
  NullspaceReport rep;
  Eigen::BDCSVD<Eigen::MatrixXd> svd(A.A, Eigen::ComputeFullV);
  Eigen::VectorXd s = Eigen::VectorXd::Zero(nb);
  s.head(svd.singularValues().size()) = svd.singularValues();
  rep.singular_values = s;
  const double smax = nb ? s[0] : 0.0;
  rep.threshold = rel_threshold * smax;
  rep.sigma_ratio = smax > 0 ? s[nb - 1] / smax : 0.0;

  const Eigen::MatrixXd R = basis.whitening();
  Eigen::MatrixXd odd_cols(nb, 0);
  for (int j = 0; j < nb; ++j)
    if (basis.parity[j]) {
      odd_cols.conservativeResize(Eigen::NoChange, odd_cols.cols() + 1);
      odd_cols.col(odd_cols.cols() - 1) = R.col(j);
    }
  const Eigen::MatrixXd Qodd = orth(odd_cols);
  const Eigen::MatrixXd Qlie = basis.rank == Rank::Sym2 ? lie_subspace(basis) : Eigen::MatrixXd(nb, 0);
  Eigen::MatrixXd both(nb, Qodd.cols() + Qlie.cols());
  both << Qodd, Qlie;
  const Eigen::MatrixXd Qboth = orth(both);
  rep.odd_dimension = static_cast<int>(Qodd.cols());
  rep.lie_dimension = static_cast<int>(Qlie.cols());
  rep.odd_lie_dimension = static_cast<int>(Qboth.cols());

  Eigen::MatrixXd Kw(nb, 0);
  for (int j = 0; j < nb; ++j) {
    if (s[j] > rep.threshold) {
      ++rep.rank;
      continue;
    }
    KernelVector kv;
    kv.coeffs = svd.matrixV().col(j);
    kv.sigma = s[j];
    const Eigen::VectorXd z = R * kv.coeffs;
    const Eigen::VectorXd zn = z.normalized();
    Eigen::VectorXd odd = Eigen::VectorXd::Zero(nb);
    for (int i = 0; i < nb; ++i)
      if (basis.parity[i]) odd[i] = kv.coeffs[i];
    kv.odd_fraction = (R * odd).norm() / z.norm();
    kv.lie_distance = dist_to(Qlie, zn);
    kv.odd_lie_distance = dist_to(Qboth, zn);
    rep.kernel.push_back(kv);
    Kw.conservativeResize(Eigen::NoChange, Kw.cols() + 1);
    Kw.col(Kw.cols() - 1) = z;
  }
  const Eigen::MatrixXd Qk = orth(Kw, 1e-12);
  rep.kernel_to_odd_lie = spectral_gap(Qboth, Qk);
  rep.odd_lie_to_kernel = spectral_gap(Qk, Qboth);
  return rep;
}

// ---- reconstruction ------------------------------------------------------------

Reconstruction solve_truncated(const ForwardOperator& A, const Eigen::VectorXd& b, const TensorBasis& basis,
                               double rel_cut, double consistency_tol) {
  const int nb = basis.size();
  if (A.A.cols() != nb || A.A.rows() != b.size()) throw std::invalid_argument("solve_truncated: shape mismatch");
  Reconstruction out;
  auto& d = out.diag;
  d.rows = static_cast<int>(b.size());
  d.coeffs = Eigen::VectorXd::Zero(nb);
  if (b.size() == 0) {
    d.nullity = nb;
    d.warning = "no samples";
    out.field = BoundaryField(basis.rank, basis.spec);
    return out;
  }
  Eigen::BDCSVD<Eigen::MatrixXd> svd(A.A, Eigen::ComputeThinU | Eigen::ComputeFullV);
  Eigen::VectorXd s = Eigen::VectorXd::Zero(nb);
  s.head(svd.singularValues().size()) = svd.singularValues();
  d.sigma_max = s[0];
  d.sigma_min = s[nb - 1];
  d.cutoff = rel_cut * d.sigma_max;
  const Eigen::VectorXd ub = svd.matrixU().transpose() * b;
  for (int j = 0; j < nb; ++j) {
    if (s[j] > d.cutoff && d.sigma_max > 0) {
      d.coeffs += svd.matrixV().col(j) * (ub[j] / s[j]);
      ++d.rank;
    } else {
      d.kernel.push_back(svd.matrixV().col(j));
    }
  }
  d.nullity = nb - d.rank;
  d.residual = (A.A * d.coeffs - b).norm();
  const double nb2 = b.norm();
  d.relative_residual = nb2 > 0 ? d.residual / nb2 : 0.0;
  d.inconsistent = d.relative_residual > consistency_tol;
  if (d.inconsistent)
    d.warning = d.nullity ? "rank-deficient system with inconsistent data; minimum-norm solution returned"
                          : "data inconsistent with the basis span; least-squares solution returned";
  else if (d.nullity)
    d.warning = "rank-deficient system; minimum-norm solution returned";
  out.field = basis.combine(d.coeffs);
  return out;
}

namespace {

Reconstruction reconstruct(const RaySampleSet& samples, const TensorBasis& basis, const std::vector<Poly>& moments,
                           const QuadratureOptions& q) {
  if (samples.samples.empty()) {
    ForwardOperator empty;
    empty.A.resize(0, basis.size());
    return solve_truncated(empty, Eigen::VectorXd(0), basis);
  }
  std::vector<RowMeta> rows;
  Eigen::VectorXd b(static_cast<Eigen::Index>(samples.samples.size()));
  for (size_t i = 0; i < samples.samples.size(); ++i) {
    const auto& s = samples.samples[i];
    rows.push_back({s.geodesic, s.m, s.moment, s.lambda});
    b[static_cast<Eigen::Index>(i)] = s.value;
  }
  const ForwardOperator A = build_forward(basis, samples.geodesics, rows, moments, q);
  return solve_truncated(A, b, basis);
}

}  // namespace

Reconstruction reconstruct_tensor(const RaySampleSet& samples, const TensorBasis& basis, const std::vector<Poly>& moments,
                                  const QuadratureOptions& q) {
  if (basis.rank != Rank::Sym2) throw std::invalid_argument("reconstruct_tensor: tensor basis required");
  return reconstruct(samples, basis, moments, q);
}

Reconstruction reconstruct_scalar(const RaySampleSet& samples, const TensorBasis& basis, const std::vector<Poly>& moments,
                                  const QuadratureOptions& q) {
  if (basis.rank != Rank::Scalar) throw std::invalid_argument("reconstruct_scalar: scalar basis required");
  return reconstruct(samples, basis, moments, q);
}

// ---- dense orbits ---------------------------------------------------------------

OrbitResidues dense_orbit_residues(double t0, double rho, int K) {
  if (!(rho > 0)) throw std::invalid_argument("dense_orbit_residues: rho must be positive");
  if (K < 0) throw std::invalid_argument("dense_orbit_residues: K must be >= 0");
  OrbitResidues r;
  r.period = 2 * kPi * rho;
  std::vector<double> v;
  for (int k = -K; k <= K; ++k) {
    double t = std::fmod(t0 + k * kPi, r.period);
    if (t < 0) t += r.period;
    v.push_back(t);
  }
  std::sort(v.begin(), v.end());
  const double tol = 1e-9 * r.period;
  for (double t : v)
    if (r.residues.empty() || t - r.residues.back() > tol) r.residues.push_back(t);
  // merge across the wrap point
  if (r.residues.size() > 1 && r.residues.front() + r.period - r.residues.back() <= tol) r.residues.pop_back();
  for (size_t i = 0; i < r.residues.size(); ++i) {
    const double next = i + 1 < r.residues.size() ? r.residues[i + 1] : r.residues[0] + r.period;
    r.fill_distance = std::max(r.fill_distance, next - r.residues[i]);
  }
  return r;
}

double orbit_interpolation_sigma(const OrbitResidues& r, double rho, int L) {
  const int rows = static_cast<int>(r.residues.size());
  Eigen::MatrixXd F(rows, 2 * L + 1);
  for (int i = 0; i < rows; ++i) {
    const double s = r.residues[i] / rho;
    F(i, 0) = 1.0;
    for (int l = 1; l <= L; ++l) {
      F(i, 2 * l - 1) = std::cos(l * s);
      F(i, 2 * l) = std::sin(l * s);
    }
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(F);
  const auto& s = svd.singularValues();
  // fewer residues than unknowns: a nonzero degree-L function vanishes on them
  if (rows < 2 * L + 1) return 0.0;
  return s[s.size() - 1] / std::sqrt(static_cast<double>(rows));
}

// ---- pole system ----------------------------------------------------------------

PoleSystemResidual pole_system_residual(const BoundaryField& F, const Poly& p) {
  if (F.rank() != Rank::Sym2) throw std::invalid_argument("pole_system_residual: sym2 field required");
  const SphereSpec& s = F.spec();
  const int n = s.n, nb = n - 1;
  Eigen::VectorXd pole = Eigen::VectorXd::Zero(n);
  pole[n - 1] = s.rho;
  const std::span<const double> ps(pole.data(), n);
  const double scale = std::max(1.0, p.max_abs_coef());
  const double p0 = p.eval(ps);
  Eigen::VectorXd grad(n);
  for (int a = 0; a < n; ++a) grad[a] = p.derivative(a).eval(ps);
  // tangential directions at the pole are e_1 .. e_{n-1}
  if (std::abs(p0) > 1e-12 * scale || grad.head(nb).cwiseAbs().maxCoeff() > 1e-12 * scale)
    throw std::invalid_argument("pole_system_residual: p must vanish to second order at the pole");
  // covariant Hessian P (D^2 p) P - (x . grad p / rho^2) P, representative independent
  Eigen::MatrixXd H(nb, nb);
  for (int a = 0; a < nb; ++a)
    for (int b = 0; b < nb; ++b) H(a, b) = p.derivative(a).derivative(b).eval(ps);
  H -= Eigen::MatrixXd::Identity(nb, nb) * (pole.dot(grad) / s.rho2());

  const Eigen::MatrixXd Fp = F.eval_sym2(pole).topLeftCorner(nb, nb);
  const double trF = Fp.trace();
  const double cstar = (nb - 1.0) / s.rho2();
  PoleSystemResidual r;
  r.relation = (H.array() * Fp.array()).sum() - H.trace() * trF - cstar * p0 * trF;
  r.direct = michel_residual(F.times(p), cstar).eval_scalar(pole);
  // literal constants: 2F_jj + 2 sum F_ii = (n+1)^2 sum F_ii, 2F_ij = (n+1)^2 sum F_ii
  const double lit = (n + 1.0) * (n + 1.0);
  r.printed = (H.array() * Fp.array()).sum() + H.trace() * trF - lit * trF;
  return r;
}

int pole_system_rank(const SphereSpec& spec) {
  const int n = spec.n, nb = n - 1;
  std::vector<std::pair<int, int>> pairs;
  for (int a = 0; a < nb; ++a)
    for (int b = a; b < nb; ++b) pairs.emplace_back(a, b);
  const int np = static_cast<int>(pairs.size());
  // columns: constant tangential fields at the pole, F = P (e_a (.) e_b) P
  std::vector<BoundaryField> cols;
  for (auto [a, b] : pairs) {
    std::vector<std::vector<Poly>> c(n, std::vector<Poly>(n, Poly(n, spec.rho2())));
    c[a][b] = constant_poly(spec, 1.0);
    c[b][a] = constant_poly(spec, 1.0);
    cols.push_back(project_tangential(BoundaryField::sym2(spec, c)));
  }
  Eigen::MatrixXd M(np, np);
  for (int i = 0; i < np; ++i) {
    const auto [a, b] = pairs[i];
    const Poly p = coordinate_poly(spec, a) * coordinate_poly(spec, b);
    for (int j = 0; j < np; ++j) M(i, j) = pole_system_residual(cols[j], p).relation;
  }
  return static_cast<int>(Eigen::FullPivLU<Eigen::MatrixXd>(M).rank());
}

}  // namespace asymscat
