#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "stochunfold/corrector.hpp"
#include "stochunfold/graph.hpp"
#include "stochunfold/lattice.hpp"
#include "stochunfold/probability.hpp"

namespace su {

/// Invalid or unreadable configuration; `path` names the offending key.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& path, const std::string& what)
      : std::runtime_error(path.empty() ? what : path + ": " + what), path_(path) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

struct KornSettings {
  std::vector<int> sizes{8, 12, 16};
  bool expect_failure = false;
  double spread_tol = 0.1;
  double growth_factor = 10.0;
  int witness_window = 8;
};

struct SpringSettings {
  double a = 100.0, h = 25.0, sigma_y = 1.0, scale = 2.0;
};

/// Fully resolved run description. One JSON file determines a run; the seed
/// and thread count may be overridden on the command line.
struct RunConfig {
  std::uint64_t seed = 1;
  int threads = 1;
  int dim = 1;
  LatticeGraph graph{std::vector<std::vector<int>>{{1}}};
  SpacePtr space;
  RandomVariable coefficient;  ///< drawn coefficient of an iid space (empty otherwise)
  bool has_integrand = false;
  QuadraticIntegrand integrand;
  RandomVariable yield;
  std::vector<double> lower, upper;
  std::vector<double> eps;
  double reference_eps = 0.0;
  int quadrature_order = 2;
  Field load_shape;                        ///< l(x)
  std::function<double(double)> profile;   ///< lambda(t), l(t, x) = lambda(t) l(x)
  double T = 1.0;
  int steps = 100;
  std::vector<double> sample_times;
  double gamma = 0.0;
  double gradient_modulus = 0.0;
  std::string evolve_mode = "study";
  SpringSettings spring;
  KornSettings korn;
  int verify_repeats = 3;
  double verify_tol = 1e-12;
};

/// Parses and validates JSON text; throws ConfigError.
RunConfig parse_config(const std::string& text, std::uint64_t seed_override = 0, bool has_seed_override = false);
RunConfig load_config(const std::string& path, std::uint64_t seed_override = 0, bool has_seed_override = false);

}  // namespace su
