#pragma once

// Invariant self-tests run by `tridomain check`.

#include <cstdint>
#include <string>
#include <vector>

#include "tridomain/mesh.hpp"
#include "tridomain/params.hpp"
#include "tridomain/transport.hpp"

namespace tridomain {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

/// Rest-like state with concentrations scaled by up to +-10 %, potentials
/// shifted by up to +-5 mV and gates drawn from [0, 1].
TridomainState random_state(const Mesh& mesh, const ParameterSet& params, std::uint64_t seed);

/// Distance in units in the last place between two finite doubles.
std::uint64_t ulp_distance(double a, double b);

CheckResult check_lambda_identity(int samples = 100000, std::uint64_t seed = 1);
CheckResult check_nernst_oracles();
CheckResult check_divergence_theorem(std::uint64_t seed = 2);
CheckResult check_jacobian(std::uint64_t seed = 3);

std::vector<CheckResult> run_self_checks();

}  // namespace tridomain
