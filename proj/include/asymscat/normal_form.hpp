#pragma once

#include <optional>
#include <vector>

#include "asymscat/metric_jets.hpp"

namespace asymscat {

/// Stage solution in chart coordinates: F scalar, G chart vector (jets in s).
struct LocalStage {
  int r = 0;
  LocalJet F;
  std::vector<LocalJet> G;
};

/// Solve the stage-r equations for a local metric at stage r.
LocalStage stage_solve_local(const LocalMetric& g, int r);
/// Stage map (X, s) -> (X + X^{r+3} F, s + X^{r+1} G).
LocalDiffeo stage_map_local(const LocalStage& st);

struct StageResidual {
  int r = 0;
  double cross_before = 0.0, cross_after = 0.0;  // |cross_r| at s = 0
  double a_before = 0.0, a_after = 0.0;          // |a_{r+2}| at s = 0
};

struct LocalNormalization {
  LocalMetric metric;
  LocalDiffeo map;
  std::vector<StageResidual> stages;
};

/// Stages r = 0..order applied to a local metric in scattering form.
LocalNormalization normalize_local(const LocalMetric& g, int order);

/// Global view of one stage: pointwise evaluators plus polynomial fields when
/// the solution is polynomial (h_0 a constant multiple of g_eps and polynomial data).
struct StageSolution {
  int r = 0;
  MetricJet metric;
  std::optional<BoundaryField> F_field, G_field;

  double F_at(const Eigen::VectorXd& p) const;
  /// Ambient tangent vector.
  Eigen::VectorXd G_at(const Eigen::VectorXd& p) const;
  /// The stage map, polynomial when F_field/G_field are set, otherwise lazy.
  CollarDiffeoJet map() const;
};

/// c when h_0 = c g_eps exactly (canonical polynomial comparison), else 0.
double round_factor(const BoundaryField& h0);

/// Throws std::domain_error when h_0 is singular at a probed point.
StageSolution stage_solve(const MetricJet& g, int r);

struct StageLedgerRow {
  int r = 0;
  int stage_before = 0, stage_after = 0;
  double cross_before = 0.0, cross_after = 0.0;
  double a_before = 0.0, a_after = 0.0;
};

struct NormalizeResult {
  MetricJet g_nf;
  CollarDiffeoJet phi;
  std::vector<StageLedgerRow> ledger;
  ScatteringReport report;
};

/// Staged normal form through x-order `order`. Ledger and report are computed
/// on the given sample points. Throws std::runtime_error when a stage fails to
/// raise the detected stage.
NormalizeResult normalize(const MetricJet& g, int order, const std::vector<Eigen::VectorXd>& points,
                          double tol = 1e-9);
NormalizeResult normalize(const MetricJet& g, int order, int sample_count = 12, double tol = 1e-9);

bool check_normal(const MetricJet& g, const std::vector<Eigen::VectorXd>& points, double tol = 1e-9);
bool check_normal(const MetricJet& g, int sample_count = 12, double tol = 1e-9);

}  // namespace asymscat
