#pragma once

#include <functional>
#include <limits>
#include <vector>

#include "stochunfold/cg.hpp"
#include "stochunfold/lattice.hpp"
#include "stochunfold/probability.hpp"

namespace su {

/// Two-scale function (w, x) -> out[0..ncomp).
using TwoScaleField = std::function<void(int w, const double* x, double* out)>;

/// (T~ u)(w, x) = u(T_{-x/eps} w, x).
RandomField unfold(const RandomField& u);
/// Inverse of unfold: (w, x) -> u(T_{x/eps} w, x).
RandomField unfold_inverse(const RandomField& u);

/// F_eps V: cell average over x + eps*Box of V(T_{x/eps} w, .).
RandomField fold(const TwoScaleField& V, SpacePtr space, GridPtr grid, int ncomp, Boundary bc, int order = 1);
/// Folding of a field already given on the lattice (cell averages are the values).
inline RandomField fold(const RandomField& v) { return unfold_inverse(v); }

/// Max-abs residual of T~ grad u - grad T~ u - (1/eps) D T~ u - (D_i grad_i) T~ u.
double commutator_residual(const RandomField& u);

struct RecoveryParams {
  double gamma = 0.0;
  /// NaN selects gamma + 1.
  double alpha = std::numeric_limits<double>::quiet_NaN();
  /// Exponent of the F^gamma resolvent; NaN selects gamma.
  double alpha_prime = std::numeric_limits<double>::quiet_NaN();
  /// Multiply by the product cut-off eta_delta and restrict to the domain mask.
  bool domain_variant = false;
  CgParams cg{1e-10, 0, true};
  int quadrature_order = 1;
  int threads = 0;
};

struct RecoveryResult {
  RandomField u;
  int max_iterations = 0;
  double max_residual = 0.0;
};

/// Cut-off width used by the domain variant: eps^{gamma/2}, or eps^{1/2} for gamma = 0.
double cutoff_width(double eps, double gamma);
/// Product ramp prod_i min(1, dist_i(x)/delta) over the grid's box; zero outside the domain mask.
std::vector<double> cutoff_profile(const Grid& grid, double delta);

/// G^gamma: solves eps^{-alpha} u + grad* grad u = grad*(eps^{-gamma} F_eps chi) per sample.
/// chi has ncomp*d components.
RecoveryResult recovery_gradient(const TwoScaleField& chi, SpacePtr space, GridPtr grid, int ncomp, Boundary bc,
                                 const RecoveryParams& params = {});
/// Same solve with a folded right-hand side field already on the lattice.
RecoveryResult recovery_gradient_folded(const RandomField& folded_chi, const RecoveryParams& params = {});

/// F^gamma U + G^gamma chi (F_eps U for gamma = 0), cut off in the domain variant.
RecoveryResult recovery_pair(const TwoScaleField& U, const TwoScaleField& chi, SpacePtr space, GridPtr grid,
                             int ncomp, Boundary bc, const RecoveryParams& params = {});

/// Domain solve grad* grad u = grad*(grad F_eps U + F_eps chi) with u = 0 off the domain mask.
RecoveryResult recovery_dirichlet(const RandomField& folded_U, const RandomField& folded_chi,
                                  const CgParams& cg = {1e-12, 0, true}, int threads = 0);

struct TwoScaleDistance {
  double strong_error = 0.0;
  std::vector<double> weak_residuals;  ///< index j * num_profiles + k
  double weak_residual_max = 0.0;
};

/// Strong error ||T_eps u - V|| over the window cells by quadrature and weak
/// residuals against the family {phi_j} x {eta_k}. Each phi_j has u.ncomp
/// components; each eta_k is scalar.
TwoScaleDistance two_scale_distance(const RandomField& u, const TwoScaleField& V,
                                    const std::vector<RandomVariable>& phis, const std::vector<Field>& etas,
                                    int order = 2);

/// Exact L^2(Omega x R^d) distance between the piecewise-constant T_eps u and a
/// piecewise-constant target on another grid, target(w, site, out). Cells outside
/// either window count as zero.
double pc_distance(const RandomField& u, const Grid& target_grid,
                   const std::function<void(int w, int site, double* out)>& target);

/// Exact cell averages of the piecewise-constant embedding of f over the cells of `coarse`.
LatticeFunction pc_transfer(const LatticeFunction& f, GridPtr coarse, Boundary bc);

/// Integrand (w, F) -> V(w, F) with F of length ncomp.
using RandomIntegrand = std::function<double(int w, const double* F)>;

struct EnergyPair {
  double lattice = 0.0;   ///< <sum_x V(T_{x/eps} w, v(w,x)) eps^d>
  double unfolded = 0.0;  ///< <int V(w, T_eps v(w,x)) dx>
  double residual = 0.0;
};

EnergyPair transform_energy(const RandomIntegrand& V, const RandomField& v);

}  // namespace su
