#pragma once

#include <Eigen/Dense>

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "asymscat/local_jet.hpp"
#include "asymscat/sphere_fields.hpp"

namespace asymscat {

/// Truncated series sum_j x^j c_j with BoundaryField coefficients of one rank.
struct JetSeries {
  Rank rank = Rank::Scalar;
  SphereSpec spec;
  std::vector<BoundaryField> coeffs;

  JetSeries() = default;
  JetSeries(Rank r, const SphereSpec& s, int order);

  int order() const { return static_cast<int>(coeffs.size()) - 1; }
  BoundaryField& operator[](int j) { return coeffs.at(j); }
  const BoundaryField& operator[](int j) const { return coeffs.at(j); }
  /// Coefficient j, or the zero field past the stored order.
  BoundaryField at(int j) const;
  JetSeries truncated(int order) const;

  JetSeries& operator+=(const JetSeries& o);
  JetSeries& operator-=(const JetSeries& o);
  JetSeries& operator*=(double s);
  friend JetSeries operator+(JetSeries a, const JetSeries& b) { return a += b; }
  friend JetSeries operator-(JetSeries a, const JetSeries& b) { return a -= b; }
  friend JetSeries operator*(JetSeries a, double s) { return a *= s; }
};

/// Product of a scalar series with a series of any rank, truncated at the smaller order.
JetSeries times(const JetSeries& scalar, const JetSeries& t);
/// 1/s for a scalar series whose leading coefficient is a nonzero constant.
JetSeries reciprocal(const JetSeries& s);

// ---- local charts ---------------------------------------------------------

/// Graph chart of the radius-rho sphere over the tangent plane at a point:
/// c(s) = E s + nu sqrt(rho^2 - |s|^2), inverse s = E^T y.
struct ChartFrame {
  Eigen::VectorXd point;  // on the sphere
  Eigen::VectorXd nu;     // unit outward normal
  Eigen::MatrixXd E;      // n x n_b orthonormal tangent frame
  double rho = 1.0;

  static ChartFrame at(const SphereSpec& spec, const Eigen::VectorXd& x);
};

/// Jet variables (X, s_1..s_nb) at one boundary point. Variable 0 is the
/// collar coordinate.
class LocalContext {
 public:
  LocalContext(const SphereSpec& spec, const Eigen::VectorXd& point, int jet_order);

  const SphereSpec& spec() const { return spec_; }
  const ChartFrame& frame() const { return frame_; }
  const JetSpacePtr& space() const { return sp_; }
  int nb() const { return spec_.n - 1; }
  LocalJet X() const { return LocalJet::variable(sp_, 0); }
  LocalJet s(int d) const { return LocalJet::variable(sp_, 1 + d); }
  /// Ambient coordinates of the chart point c(s).
  const std::vector<LocalJet>& chart() const { return chart_; }
  /// d c^b / d s_d.
  const LocalJet& dchart(int b, int d) const { return dchart_[b * nb() + d]; }
  /// Ambient polynomial restricted to the chart (cached monomials).
  LocalJet restrict(const Poly& p) const;
  /// Chart-coordinate inverse of ambient points: s = E^T y.
  std::vector<LocalJet> chart_inverse(const std::vector<LocalJet>& y) const;

 private:
  SphereSpec spec_;
  ChartFrame frame_;
  JetSpacePtr sp_;
  std::vector<LocalJet> chart_, dchart_;
  mutable std::map<Exponent, LocalJet> powers_;
};

/// Metric blocks in chart coordinates: g = A dx^2/x^4 + W_d dx ds^d / x^2 + H_de ds^d ds^e / x^2.
struct LocalMetric {
  LocalJet A;
  std::vector<LocalJet> W;
  JetMatrix H;
};

/// Collar map (X, s) -> (x, sigma) = (X u, s + eta).
struct LocalDiffeo {
  LocalJet u;
  std::vector<LocalJet> eta;
};

LocalDiffeo local_identity(const LocalContext& ctx);
/// Substitution (x, sigma) <- (X u, s + eta), shared by pullback and composition.
Substitution substitution_of(const LocalDiffeo& phi);
LocalMetric pullback_local(const LocalMetric& g, const LocalDiffeo& phi, const Substitution& sub);
LocalDiffeo compose_local(const LocalDiffeo& outer, const LocalDiffeo& inner, const Substitution& inner_sub);
/// phi^* g with g given in (x, sigma) and phi: (X, s) -> (x, sigma).
LocalMetric pullback_local(const LocalMetric& g, const LocalDiffeo& phi);
/// outer o inner.
LocalDiffeo compose_local(const LocalDiffeo& outer, const LocalDiffeo& inner);
/// Fixed-point inverse, exact through the jet order.
LocalDiffeo inverse_local(const LocalDiffeo& psi);

/// Taylor coefficients in x at one boundary point, ambient tangential components.
struct PointCoefficients {
  Eigen::VectorXd point;
  std::vector<double> a;
  std::vector<Eigen::VectorXd> cross;
  std::vector<Eigen::MatrixXd> h;
};

PointCoefficients point_coefficients(const LocalMetric& m, const LocalContext& ctx, int order);

struct PointDiffeo {
  Eigen::VectorXd point;
  std::vector<double> u;                  // coefficients of X^j in x / X, j <= N + 2
  std::vector<Eigen::VectorXd> eta;       // chart displacement coefficients, ambient
};

// ---- metric jets ------------------------------------------------------------

class CollarDiffeoJet;

/// Default local jet order for an x-order N. Stage maps trade each s-derivative
/// for at least one power of X, so total degree N + 2 is already exact for the
/// normal form; two more orders cover the operator symbols.
int default_jet_order(int order);

/// Scattering metric jet in collar form. Either explicit polynomial block data
/// or a lazy expression (pullback, normal form) evaluated through local jets.
class MetricJet {
 public:
  enum class Kind { Polynomial, Pullback, NormalForm };

  MetricJet() = default;
  /// a: scalar series (a_0 = 1), cross: covector series in absolute powers of x,
  /// h: sym2 series; all truncated at order N.
  static MetricJet polynomial(const SphereSpec& spec, int order, JetSeries a, JetSeries cross, JetSeries h);
  /// dx^2/x^4 + g_eps/x^2.
  static MetricJet round_model(const SphereSpec& spec, int order);
  static MetricJet pullback(const MetricJet& g, const CollarDiffeoJet& phi);
  /// The normal form of g (lazy; see normalize()).
  static MetricJet normal_form_of(const MetricJet& g, int order);

  Kind kind() const;
  const SphereSpec& spec() const;
  int order() const;
  int jet_order() const { return jet_order_; }
  /// Local jet order used when evaluating this metric.
  MetricJet with_jet_order(int k) const;

  const JetSeries& a() const;
  const JetSeries& cross() const;
  const JetSeries& h() const;

  LocalMetric localize(const LocalContext& ctx) const;
  PointCoefficients coefficients_at(const Eigen::VectorXd& p) const;
  LocalContext context_at(const Eigen::VectorXd& p) const;

  struct Node;

 private:
  std::shared_ptr<const Node> node_;
  int jet_order_ = 0;
};

/// Boundary-fixing collar map (X, Y) -> (X u(X,Y), Y + eta(X,Y)).
class CollarDiffeoJet {
 public:
  enum class Kind { Identity, Series, Composite, Inverse, NormalFormMap, StageOf };

  CollarDiffeoJet() = default;
  static CollarDiffeoJet identity(const SphereSpec& spec, int order);
  /// x = X (1 + sum_j X^j U_j(Y)), y = retract(Y + sum_j X^j V_j(Y)) with
  /// retraction y -> rho y/|y|. U scalar series, V tangent vector series.
  static CollarDiffeoJet series(const SphereSpec& spec, int order, JetSeries U, JetSeries V);
  /// Stage map (x, y) -> (x + x^{r+3} F, y + x^{r+1} G).
  static CollarDiffeoJet stage_map(const SphereSpec& spec, int order, int r, const BoundaryField& F,
                                   const BoundaryField& G);
  /// Maps X -> x for the new defining function X = x + alpha(y) x^2.
  static CollarDiffeoJet defining_function_change(const SphereSpec& spec, int order, const BoundaryField& alpha);
  /// Pulling back by compose(a, b) equals pulling back by b, then by a (the
  /// map b o a).
  static CollarDiffeoJet compose(const CollarDiffeoJet& a, const CollarDiffeoJet& b);
  static CollarDiffeoJet inverse(const CollarDiffeoJet& a);
  static CollarDiffeoJet normal_form_map(const MetricJet& g, int order);
  /// Stage-r map solved pointwise from g (chart-additive in y).
  static CollarDiffeoJet stage_of(const MetricJet& g, int r, int order);

  Kind kind() const;
  const SphereSpec& spec() const;
  int order() const;
  bool is_identity() const { return kind() == Kind::Identity; }
  const JetSeries& U() const;
  const JetSeries& V() const;

  LocalDiffeo localize(const LocalContext& ctx) const;
  PointDiffeo at(const Eigen::VectorXd& p, int jet_order = -1) const;

  struct Node;

 private:
  std::shared_ptr<const Node> node_;
};

// ---- operations -----------------------------------------------------------------

MetricJet pullback_collar(const MetricJet& g, const CollarDiffeoJet& phi);
CollarDiffeoJet compose_diffeos(const CollarDiffeoJet& a, const CollarDiffeoJet& b);

/// Taylor coefficients of det and inverse of a sym2 series at one point, in an
/// orthonormal tangent frame mapped back to ambient components.
struct PointDetInverse {
  std::vector<double> det;
  std::vector<Eigen::MatrixXd> inv;
  /// First-order structure at the declared order k: Tr(h0^{-1} H_k) and h0^{-1} H_k h0^{-1}.
  double tau_k = 0.0;
  Eigen::MatrixXd b_k;
};

/// Throws std::domain_error naming the point when h_0 is singular there.
PointDetInverse jet_det_inverse(const JetSeries& h, const Eigen::VectorXd& point, int k);

/// Scattering-form diagnostics.
struct ScatteringReport {
  bool scattering_form = false;  // a_0 = 1, a_1 = 0, h_0 positive definite
  int stage = 0;                 // largest r <= N with a - 1 = O(x^{r+2}), cross = O(x^r)
  int raw_stage = 0;             // same without the cap at N (N + 1 when fully normal)
  bool normal_form = false;
  double margin = 0.0;           // rho^2 * min eigenvalue of h_0 on tangent vectors
  double max_cross = 0.0;        // max |cross_j| over j <= N and sample points
  double max_a_defect = 0.0;     // max |a_j - delta_j0| over j <= N
  std::string message;
};

ScatteringReport validate_scattering_form(const MetricJet& g, const std::vector<Eigen::VectorXd>& points,
                                          double tol = 1e-9);
/// Report from precomputed point coefficients.
ScatteringReport scattering_report(const std::vector<PointCoefficients>& pcs, const SphereSpec& spec, int order,
                                   double tol = 1e-9);
ScatteringReport validate_scattering_form(const MetricJet& g, int sample_count = 12, double tol = 1e-9);

/// Stage detected from point coefficients (uncapped).
int detect_stage(const std::vector<PointCoefficients>& pcs, int order, double tol);

/// Random metric jet in collar form at stage 0: a = 1 + x^2 (...), cross from
/// order 0, h_0 = g_eps + small symmetric perturbation.
MetricJet random_metric_jet(const SphereSpec& spec, int order, std::mt19937_64& rng, int field_degree = 2,
                            double scale = 0.2);
/// Random admissible stage-form diffeomorphism: U_j for j >= 2, V_j for j >= 1.
CollarDiffeoJet random_admissible_diffeo(const SphereSpec& spec, int order, std::mt19937_64& rng,
                                         int field_degree = 2, double scale = 0.2);

}  // namespace asymscat
