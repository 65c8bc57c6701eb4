#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "stochunfold/lattice.hpp"
#include "stochunfold/probability.hpp"

namespace su {

/// One entry of a path representation: B(y)_axis = coeff.
struct PathTerm {
  std::vector<int> y;
  int axis = 0;
  double coeff = 0.0;
};

/// Lattice graph with edge generators b_1..b_k (containing e_1..e_d) and
/// staircase paths B_i: the path walks axis by axis in increasing order.
class LatticeGraph {
 public:
  explicit LatticeGraph(std::vector<std::vector<int>> generators);

  int dim() const { return dim_; }
  int num_edges() const { return static_cast<int>(gens_.size()); }
  const std::vector<int>& generator(int i) const { return gens_[i]; }
  const std::vector<std::vector<int>>& generators() const { return gens_; }
  double length(int i) const { return len_[i]; }
  const std::vector<double>& unit(int i) const { return unit_[i]; }
  const std::vector<PathTerm>& path(int i) const { return paths_[i]; }
  std::string hash() const;

 private:
  int dim_ = 0;
  std::vector<std::vector<int>> gens_;
  std::vector<double> len_;
  std::vector<std::vector<double>> unit_;
  std::vector<std::vector<PathTerm>> paths_;
};

/// (u(x + eps b_i) - u(x)) / (eps |b_i|), direct stencil.
LatticeFunction edge_quotient(const LatticeFunction& u, const LatticeGraph& g, int i);
/// Same quantity through sum_y grad u(x - eps y) B_i(y).
LatticeFunction edge_quotient_path(const LatticeFunction& u, const LatticeGraph& g, int i);

/// Component i equals (b_i/|b_i|) . (edge quotient of u along b_i); u has d components.
LatticeFunction symmetrized_gradient(const LatticeFunction& u, const LatticeGraph& g);

/// (F_s)_i(w) = (b_i/|b_i|) . sum_y F(T_{-y} w) B_i(y); F has d*d components, row-major (c*d + j).
RandomVariable symmetrize_random(const RandomVariable& F, const LatticeGraph& g);
/// Symmetrization of a constant d x d matrix (row-major).
std::vector<double> symmetrize_constant(const std::vector<double>& F, const LatticeGraph& g);

struct KornReport {
  std::vector<int> sizes;
  std::vector<double> lambda_min;
  std::vector<double> constants;
  /// (max - min) / max over the windows.
  double spread = 0.0;
  /// (max - min) / min over the windows.
  double spread_vs_min = 0.0;
  /// constants.back() / constants.front().
  double growth = 0.0;
};

/// Generalized eigenvalue lambda_min of S^T S against G^T G on box windows with
/// n^d domain sites; C = 1 / lambda_min.
KornReport verify_korn(const LatticeGraph& g, const std::vector<int>& sizes);

/// Null space of the symmetrized gradient on the periodic n^d window beyond the
/// d constants. A positive excess witnesses a failing Korn inequality.
struct KornWitness {
  int window = 0;
  int kernel_excess = 0;
  double sym_norm = 0.0;   ///< |grad_s u| of the witness
  double grad_norm = 0.0;  ///< |grad u| of the witness
  std::vector<double> u;   ///< (site, component), empty without excess
};

KornWitness korn_kernel_witness(const LatticeGraph& g, int n);

struct StochasticKornReport {
  bool empty = true;
  int dimension = 0;
  double lambda_min = 0.0;
  double constant = 0.0;
  double worst_ratio = 0.0;
  int trials = 0;
};

/// <|chi|^2> <= C <|chi_s|^2> on ran D; C from the smallest eigenvalue of the
/// symmetrized Gram matrix on the pot basis, checked against random phi.
StochasticKornReport verify_stochastic_korn(const SpacePtr& space, const LatticeGraph& g, int trials,
                                            std::uint64_t seed);

std::string korn_to_json(const KornReport& r);

}  // namespace su
