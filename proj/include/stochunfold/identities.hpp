#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace su {

struct IdentityCheck {
  std::string name;
  double residual = 0.0;  ///< worst over all instances
  double tolerance = 0.0;
  int instances = 0;
  bool passed = false;
};

/// Randomized operator identities over d in {1,2}, |Omega| in {1,2,6} and
/// eps in {1,1/2,1/4}; `repeats` instances per combination.
std::vector<IdentityCheck> run_identity_suite(std::uint64_t seed, int repeats = 3, double tol = 1e-12);

std::string identities_to_json(const std::vector<IdentityCheck>& checks);

}  // namespace su
