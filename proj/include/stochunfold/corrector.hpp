#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>
#include <vector>

#include "stochunfold/graph.hpp"
#include "stochunfold/probability.hpp"

namespace su {

/// V(w, G) = 1/2 A(w) G . G with G = (strain slots k, passive slots m); A has
/// (k+m)^2 components stored row-major.
struct QuadraticIntegrand {
  RandomVariable A;
  int k = 0;
  int m = 0;
  int size() const { return k + m; }
  Eigen::MatrixXd matrix(int w) const;
  double value(int w, const double* G) const;
};

QuadraticIntegrand make_quadratic(RandomVariable A, int k, int m = 0);
/// Diagonal integrand diag(a_1..a_k) from a random variable with k components.
QuadraticIntegrand make_diagonal(const RandomVariable& a);
/// Smallest eigenvalue of A(w) over samples with positive weight; throws
/// CoercivityError when it is not positive.
double coercivity_constant(const QuadraticIntegrand& I);

/// Convex integrand on the k strain slots with p=2 growth bounds c|G|^2 - C <= V <= C|G|^2 + C.
struct ConvexIntegrand {
  int k = 0;
  std::function<double(int w, const double* G)> value;
  std::function<void(int w, const double* G, double* grad)> gradient;
  double growth_c = 0.0;
  double growth_C = 0.0;
  double p = 2.0;
};

/// Pot basis of (L^2_pot)^d together with the symmetrized basis S_w (k x r per sample).
struct CorrectorSetup {
  SpacePtr space;
  LatticeGraph graph;
  PotBasis basis;
  std::vector<Eigen::MatrixXd> S;
  int r() const { return basis.size(); }
};

CorrectorSetup corrector_setup(SpacePtr space, const LatticeGraph& graph, PotMethod method = PotMethod::svd);

struct CorrectorSolution {
  std::vector<double> probe;  ///< (F_1, F_2) in R^{k+m}
  Eigen::VectorXd coeffs;     ///< chi in pot-basis coordinates
  RandomVariable chi;         ///< d*d components
  RandomVariable chi_s;       ///< k components
  double value = 0.0;
  double kkt_residual = 0.0;
  int iterations = 0;
};

/// Minimum-norm minimizer of <V(w, probe + (chi_s(w), 0))> over chi in L^2_pot.
CorrectorSolution solve_corrector(const CorrectorSetup& setup, const QuadraticIntegrand& I,
                                  const std::vector<double>& probe);
/// Probe given as a d x d matrix F (row-major); the strain slots receive F_s.
CorrectorSolution solve_corrector_matrix(const CorrectorSetup& setup, const QuadraticIntegrand& I,
                                         const std::vector<double>& F);

struct DescentParams {
  double tol = 1e-9;
  int max_iter = 20000;
};
/// Gradient descent with Barzilai-Borwein steps and Armijo backtracking.
CorrectorSolution solve_corrector(const CorrectorSetup& setup, const ConvexIntegrand& I,
                                  const std::vector<double>& probe, const DescentParams& params = {});

/// Linear map probe -> pot-basis coefficients of the minimum-norm corrector (r x (k+m)).
Eigen::MatrixXd corrector_matrix(const CorrectorSetup& setup, const QuadraticIntegrand& I);

struct HomogenizedTensor {
  Eigen::MatrixXd A_hom;
  double min_eigenvalue = 0.0;
  /// Max deviation from the Schur-complement form <A> - G^T H^+ G.
  double schur_defect = 0.0;
  double max_kkt = 0.0;
  std::vector<double> probe_values;  ///< V_hom(e_i) then V_hom(e_i + e_j), i < j
  std::string provenance;
};

/// Probes e_i and e_i + e_j, polarization A_ii = 2 V(e_i), A_ij = V(e_i+e_j) - V(e_i) - V(e_j).
HomogenizedTensor assemble_homogenized_tensor(const CorrectorSetup& setup, const QuadraticIntegrand& I,
                                              int threads = 0);

std::string tensor_to_json(const HomogenizedTensor& t);

/// Averages of phi(T_z w) over z in [0,R)^d for each radius; entry [r][w * ncomp + c].
std::vector<std::vector<double>> birkhoff_average(const RandomVariable& phi, const std::vector<int>& radii);

}  // namespace su
