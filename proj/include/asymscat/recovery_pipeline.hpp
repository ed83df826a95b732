#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "asymscat/laplacian_symbols.hpp"
#include "asymscat/metric_jets.hpp"
#include "asymscat/normal_form.hpp"
#include "asymscat/tomography.hpp"

namespace asymscat {

struct ScenarioOptions {
  SphereSpec spec{3, 1.0, 40};
  bool projective = false;      // even planted fields, even basis
  bool zero_differences = false;
  bool with_potential = false;  // planted scalar differences V_j
  double difference_scale = 0.1;
};

/// Two normal-form metric jets sharing h_0 = g_eps and h_1, differing by the
/// planted D_j = h_{j,1} - h_{j,2} for 2 <= j <= k_max.
struct Scenario {
  std::uint64_t seed = 0;
  int k_max = 2;
  int basis_degree = 2;
  ScenarioOptions options;
  JetSeries h2;                   // tangential series of g_2, order k_max
  std::vector<BoundaryField> D;   // D[j], zero for j < 2
  std::vector<BoundaryField> V;   // potential differences, empty without potential
  std::vector<double> lambdas{1.0, 1.4142135623730951};

  const SphereSpec& spec() const { return options.spec; }
  MetricJet g1() const;
  MetricJet g2() const;
  /// Metric with h_2 + sum_{2 <= i <= upto} x^i D_i (truth for upto = k_max).
  MetricJet g_with(const std::vector<BoundaryField>& diffs, int upto) const;
  BasisParity parity() const { return options.projective ? BasisParity::Even : BasisParity::All; }
};

/// k_max >= 2; deterministic in the seed.
Scenario make_scenario(std::uint64_t seed, int k_max, int basis_degree, const ScenarioOptions& opt = {});

/// Which rows carry the order-k data.
enum class Channel {
  Weighted,             // half-period rows, weight k + 1
  WeightedMoments,      // plus full-period degree <= 2 moment rows
  FullPeriod,           // full-period rows with p = 1 only (Michel kernel)
  FullPeriodMoments,    // full-period degree <= 2 moments
};
std::string channel_name(Channel c);
Channel channel_from_name(const std::string& s);

struct StripOptions {
  Channel channel = Channel::WeightedMoments;
  int geodesic_factor = 3;         // geodesics = factor * basis size
  std::uint64_t geodesic_seed = 0; // mixed with the scenario seed
  double min_sigma_ratio = 1e-8;   // abort below this (or on a nonzero kernel)
  bool abort_on_kernel = true;
  double noise = 0.0;              // optional additive Gaussian noise (std)
  QuadratureOptions quadrature{};
};

struct OrderRecovery {
  int order = 0;
  BoundaryField D_hat;
  double error = 0.0;  // sup-norm against the planted D_j
  ReconstructionDiagnostics diag;
  double sigma_ratio = 0.0;
  double data_norm = 0.0;
  std::optional<NullspaceReport> kernel;  // when the truncated solve dropped directions
  double seconds = 0.0;
};

struct RecoveryReport {
  std::vector<OrderRecovery> orders;  // orders 2, 3, ... in sequence
  bool aborted = false;
  std::string message;
  double runtime = 0.0;
  int geodesic_count = 0, basis_size = 0;
  std::string note;
};

/// Order-k samples of a symbol difference at energy lambda:
/// |lambda|^{k+1} I_{k+1}(B) + |lambda|^{k-1} I_{k-1}(V) on the channel rows.
/// The overall constant relating this to the scattering matrix is not fixed.
RaySampleSet simulate_order_data(const SymbolQuadratic& T, const BoundaryField* V, const std::vector<GreatCircle>& geodesics,
                                 Channel channel, int k, double lambda, const QuadratureOptions& q = {});

RecoveryReport layer_strip(const Scenario& sc, double lambda, const StripOptions& opt = {});

// ---- two energies ---------------------------------------------------------------

struct SeparatedPair {
  double metric = 0.0, potential = 0.0;
};
/// Solves a lambda_i^{k+1} + b lambda_i^{k-1} = sigma_i. Throws std::invalid_argument
/// when lambda_1^2 = lambda_2^2 or a lambda is zero.
SeparatedPair separate_two_energies(double sigma1, double lambda1, double sigma2, double lambda2, int k);
struct SeparatedFields {
  BoundaryField metric, potential;
};
SeparatedFields separate_two_energies(const BoundaryField& sigma1, double lambda1, const BoundaryField& sigma2,
                                      double lambda2, int k);
/// Row-by-row on two sample sets with identical rows.
std::pair<RaySampleSet, RaySampleSet> separate_two_energies(const RaySampleSet& s1, const RaySampleSet& s2, int k);

struct TwoEnergyReport {
  RecoveryReport metric;
  std::vector<BoundaryField> V_hat;
  std::vector<double> potential_error;
};
/// Strips metric and potential from data at two energies (separating first).
TwoEnergyReport strip_two_energies(const Scenario& sc, double lambda1, double lambda2, const StripOptions& opt = {});

// ---- gauge ------------------------------------------------------------------------

struct GaugeReport {
  double difference = 0.0;  // max |h_j| difference of the normal forms, j <= N, over the points
  bool invariant = false;   // difference < tol
  int order = 0;
};
GaugeReport gauge_check(const MetricJet& g, const CollarDiffeoJet& psi, int sample_count = 6, double tol = 1e-8);
/// New defining function X = x + alpha(y) x^2.
GaugeReport gauge_check(const MetricJet& g, const BoundaryField& alpha, int sample_count = 6, double tol = 1e-8);

}  // namespace asymscat
