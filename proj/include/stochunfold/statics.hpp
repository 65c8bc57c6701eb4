#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <string>
#include <vector>

#include "stochunfold/cg.hpp"
#include "stochunfold/corrector.hpp"
#include "stochunfold/graph.hpp"
#include "stochunfold/unfolding.hpp"

namespace su {

/// E(u) = <sum_x eps^d 1/2 A(T_{x/eps} w) grad_s u(x) . grad_s u(x)> - <sum_x eps^d l . u>
/// over u with zero values off the domain mask.
struct StaticProblem {
  GridPtr grid;
  LatticeGraph graph;
  SpacePtr space;
  QuadraticIntegrand integrand;
  RandomField load;  ///< d components, supported in the domain
};

struct StaticSolution {
  RandomField u;
  double energy = 0.0;           ///< lattice-side evaluation
  double energy_unfolded = 0.0;  ///< through the transformation formula
  double optimality_residual = 0.0;
  int max_iterations = 0;
};

/// Per-sample Hessian on the domain degrees of freedom (site-major, d per site).
Eigen::SparseMatrix<double> static_hessian(const StaticProblem& p, int w);
/// Domain-site index of every window site, -1 off the domain.
std::vector<int> domain_index(const Grid& g);

struct StencilEntry {
  int site;
  int comp;
  double coeff;
};
/// Strain of edge e at site s as a combination of nodal values (zero extension).
void strain_stencil(const Grid& grid, const LatticeGraph& g, int s, int e, std::vector<StencilEntry>& out);

/// Symmetrized gradient of each sample (k components over all window sites).
RandomField strain_field(const RandomField& u, const LatticeGraph& g);

/// Load l_eps = F_eps l for a deterministic continuum load, zero off the domain.
RandomField load_from_continuum(const Field& l, SpacePtr space, GridPtr grid, int ncomp, int order = 2);

EnergyPair static_energy(const StaticProblem& p, const RandomField& u);

/// CG per sample to relative tolerance cg.rel_tol; optional initial guess.
StaticSolution solve_epsilon_problem(const StaticProblem& p, const CgParams& cg = {1e-12, 0, true},
                                     const RandomField* initial = nullptr, int threads = 0);

/// Same solver on a singleton space with integrand A_hom (k x k) on `grid`.
StaticSolution solve_homogenized(GridPtr grid, const LatticeGraph& graph, const Eigen::MatrixXd& A_hom,
                                 const Field& load, int order = 2);

struct StaticStudyConfig {
  std::vector<double> lower, upper;
  LatticeGraph graph{std::vector<std::vector<int>>{{1}}};
  SpacePtr space;
  QuadraticIntegrand integrand;
  Field load;
  std::vector<double> eps_list;
  /// Grid spacing of the homogenized reference; 0 selects the smallest eps.
  double reference_eps = 0.0;
  int quadrature_order = 2;
  int threads = 0;
};

struct StaticStudyRow {
  double eps = 0.0;
  double energy = 0.0;
  double energy_unfolded = 0.0;
  double strong_error_u = 0.0;         ///< vs piecewise-constant U_h, exact
  double strong_error_u_affine = 0.0;  ///< vs piecewise-affine U_h, quadrature
  double strong_error_grad = 0.0;      ///< T grad u vs grad U_h + chi
  double mean_error = 0.0;             ///< <u> vs U_h
  double energy_hom = 0.0;
  double energy_recovery = 0.0;
  double gap_lower = 0.0;     ///< E_eps(u_eps) - E_hom(U_h)
  double gap_recovery = 0.0;  ///< |E_eps(recovery) - E_hom(U_h)|
  int iterations = 0;
  double optimality_residual = 0.0;
};

struct StaticStudy {
  std::vector<StaticStudyRow> rows;
  Eigen::MatrixXd A_hom;
  double energy_hom = 0.0;
  double reference_eps = 0.0;
  LatticeFunction U;
};

StaticStudy run_convergence_study(const StaticStudyConfig& cfg);
std::string study_to_csv(const StaticStudy& s);

}  // namespace su
