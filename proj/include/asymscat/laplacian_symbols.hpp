#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <vector>

#include "asymscat/metric_jets.hpp"

namespace asymscat {

/// Second-order operator in (x, y) known through its action on test jets.
/// Definitional: delta^{-1/2} d_i g^{ij} delta^{1/2} d_j (non-positive sign).
/// Structured: the leading normal term, the h_0 term, the B_k term and the two
/// Tr(H_0^{-1} H_k) terms, with H_0 = sum_{m<k} x^m h_m.
class OperatorJet {
 public:
  enum class Kind { Definitional, Structured };

  OperatorJet() = default;
  static OperatorJet laplacian(const MetricJet& g);
  /// Throws std::invalid_argument for k < 2.
  static OperatorJet structured(const MetricJet& g, int k);

  Kind kind() const { return kind_; }
  const MetricJet& metric() const { return g_; }
  int order() const { return g_.order(); }
  int k() const { return k_; }
  /// Leading power of x in front of the derivatives.
  int weight() const { return 2; }

  /// Apply to a local test jet with the metric already localized in ctx.
  LocalJet apply_local(const LocalContext& ctx, const LocalMetric& gl, const LocalJet& u) const;
  /// x-coefficients 0..N of (P u) at a boundary point, u = sum_j x^j u_j(y).
  std::vector<double> apply_at(const JetSeries& u, const Eigen::VectorXd& p) const;

 private:
  Kind kind_ = Kind::Definitional;
  MetricJet g_;
  int k_ = 0;
};

OperatorJet laplacian_jet(const MetricJet& g);
OperatorJet structured_laplacian_jet(const MetricJet& g, int k);

/// Localize u = sum_j x^j u_j(y) in a chart.
LocalJet localize_test_jet(const LocalContext& ctx, const JetSeries& u);

/// Seeded probe battery: `count` scalar test jets of x-order <= 2 with
/// boundary polynomials of degree <= 3; every third one is x-independent.
std::vector<JetSeries> probe_battery(const SphereSpec& spec, int count, std::uint64_t seed);

struct ProbeReport {
  std::vector<double> max_by_order;  // max |(P1 - P2) u|_j over probes and points
  int first_disagreement = -1;       // first j with max_by_order[j] > tol, -1 if none
  double max_through(int j) const;
};

ProbeReport probe_difference(const OperatorJet& p1, const OperatorJet& p2, const std::vector<JetSeries>& battery,
                             const std::vector<Eigen::VectorXd>& points, double tol = 1e-9);

/// T_k(y, mu) = B^{ij}(y) mu_i mu_j, tau-independent, homogeneous of degree
/// k + 1 in lambda for metric perturbations.
struct SymbolQuadratic {
  SphereSpec spec;
  int k = 2;
  int lambda_degree = 3;
  bool tau_independent = true;
  /// Polynomial B when both jets are polynomial with h_0 a constant multiple of g_eps.
  std::optional<BoundaryField> B;
  /// Otherwise B is evaluated pointwise from the two jets.
  MetricJet g1, g2;

  /// Ambient tangential matrix B(y).
  Eigen::MatrixXd B_at(const Eigen::VectorXd& y) const;
  /// T_k(y, mu) for an ambient tangent covector mu.
  double eval(const Eigen::VectorXd& y, const Eigen::VectorXd& mu) const;
};

/// B = h_0^{-1} (H_{k,1} - H_{k,2}) h_0^{-1}. Throws std::invalid_argument
/// naming the first order j < k where the tangential blocks differ, or when
/// the two h_0 differ.
SymbolQuadratic difference_symbol(const MetricJet& g1, const MetricJet& g2, int k, int sample_count = 12,
                                  double tol = 1e-9);

/// Probing oracle: B^{ab} = -1/2 [x^{k+2}] (Delta_1 - Delta_2)(s_a s_b) at s = 0,
/// mapped to ambient components.
Eigen::MatrixXd probed_symbol_at(const MetricJet& g1, const MetricJet& g2, int k, const Eigen::VectorXd& p);

}  // namespace asymscat
