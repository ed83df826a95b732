#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "asymscat/laplacian_symbols.hpp"
#include "asymscat/metric_jets.hpp"
#include "asymscat/normal_form.hpp"
#include "asymscat/ray_transform.hpp"
#include "asymscat/recovery_pipeline.hpp"
#include "asymscat/tomography.hpp"

namespace asymscat {

using json = nlohmann::json;

/// Malformed input. `pointer` is a JSON pointer (or /rows/<i>/<column> for CSV).
class SchemaError : public std::runtime_error {
 public:
  SchemaError(std::string pointer, const std::string& what)
      : std::runtime_error(what), pointer_(std::move(pointer)) {}
  const std::string& pointer() const { return pointer_; }

 private:
  std::string pointer_;
};

/// Serializes with 17 significant digits for every float; keys sorted.
std::string dump_json(const json& j, int indent = 2);
json parse_json(const std::string& text);
json read_json_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);
std::string read_text_file(const std::string& path);

json field_to_json(const BoundaryField& f);
BoundaryField field_from_json(const json& j, const std::string& ptr = "");

/// Least-squares polynomial fit of pointwise data, degree raised until the
/// held-out residual drops below tol (or max_degree is reached).
struct FitOptions {
  int min_degree = 2;
  int max_degree = 10;
  double tol = 1e-10;
  int holdout = 40;
  double accept = 1e-9;  // metric jets: residual above this writes point samples
  int samples = 12;
};
struct FitResult {
  int degree = 0;
  double residual = 0.0;  // held-out max abs error
};

/// Polynomial jets are written verbatim. Lazy jets (pullbacks, normal forms)
/// are fitted; the fit degree and residual go into "fit". When the fit misses
/// `accept` the jet is written as point samples ("kind": "sampled"), which
/// metric_from_json rejects.
json metric_to_json(const MetricJet& g, const FitOptions& fit = {});
MetricJet metric_from_json(const json& j, const std::string& ptr = "");

/// Identity and series maps verbatim ({"N","U","V"}); lazy maps as point samples
/// of u and eta, which cannot be read back.
json diffeo_to_json(const CollarDiffeoJet& phi, int sample_count = 12);
CollarDiffeoJet diffeo_from_json(const json& j, const SphereSpec& spec, const std::string& ptr = "");

json symbol_to_json(const SymbolQuadratic& s, const FitOptions& fit = {});

json geodesics_to_json(const std::vector<GreatCircle>& g);
std::vector<GreatCircle> geodesics_from_json(const json& j, double rho, const std::string& ptr = "");

/// Header geodesic_index,m,lambda,value[,moment].
std::string samples_to_csv(const RaySampleSet& s);
std::vector<RaySample> samples_from_csv(const std::string& text);

json scenario_to_json(const Scenario& sc);
Scenario scenario_from_json(const json& j);

json diagnostics_to_json(const ReconstructionDiagnostics& d);
json nullspace_to_json(const NullspaceReport& r);
json report_to_json(const RecoveryReport& r);

}  // namespace asymscat
