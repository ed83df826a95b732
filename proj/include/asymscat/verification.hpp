#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace asymscat {

struct CheckResult {
  std::string id;
  std::string title;
  bool pass = false;
  std::string detail;  // measured values against their thresholds
  double seconds = 0.0;
  std::vector<std::pair<std::string, double>> values;  // machine-readable measurements
};

/// The acceptance criteria at desk scale (S^2, N = 6, basis degree <= 4), in order:
/// normal form, stage formulas, Laplacian expansion, symbol extraction, shift ODE,
/// Michel kernel, Michel identity, layer stripping, two energies, gauge, dense orbits.
std::vector<std::string> acceptance_ids();
CheckResult run_acceptance(const std::string& id, std::uint64_t seed);

/// Identity checks behind `verify`, one per displayed identity, in order:
/// stage-F, stage-G, laplacian-expansion, inverse-expansion, det-expansion,
/// symbol, weighted-injectivity, moment-vanishing, shift-ode, michel, pole-system.
std::vector<std::string> identity_ids();
CheckResult run_identity(const std::string& id, std::uint64_t seed);

}  // namespace asymscat
