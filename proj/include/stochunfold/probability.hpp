#pragma once

#include <Eigen/Dense>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "stochunfold/common.hpp"
#include "stochunfold/lattice.hpp"

namespace su {

/// Finite probability space with commuting, measure-preserving shifts
/// sigma_0..sigma_{d-1}; T_z = sigma_0^{z_0} o ... o sigma_{d-1}^{z_{d-1}}.
class ProbabilitySpace {
 public:
  ProbabilitySpace(int dim, std::vector<double> weights, std::vector<std::vector<int>> shifts,
                   std::vector<int> period = {});

  int dim() const { return dim_; }
  int num_samples() const { return static_cast<int>(weights_.size()); }
  double weight(int w) const { return weights_[w]; }
  const std::vector<double>& weights() const { return weights_; }
  const std::vector<int>& shift(int axis) const { return shifts_[axis]; }
  const std::vector<int>& period() const { return period_; }

  /// sigma_axis^k(w) for any integer k.
  int shift_power(int w, int axis, long long k) const;
  /// T_z w.
  int shift_by(int w, const int* z) const;
  /// T_{-z} w.
  int shift_by_neg(int w, const int* z) const;
  /// Order of sigma_axis (lcm of its cycle lengths).
  long long order(int axis) const { return order_[axis]; }

  int num_orbits() const { return num_orbits_; }
  /// Orbit label of every sample under the full action.
  const std::vector<int>& orbit_id() const { return orbit_; }
  /// Exactly one orbit carries positive weight.
  bool ergodic() const { return ergodic_; }

  std::string hash() const;

 private:
  int dim_;
  std::vector<double> weights_;
  std::vector<std::vector<int>> shifts_;
  std::vector<int> period_;
  // Cycle decomposition per axis: cycle index and position of each sample, members per cycle.
  std::vector<std::vector<int>> cycle_of_, pos_in_cycle_;
  std::vector<std::vector<std::vector<int>>> cycles_;
  std::vector<long long> order_;
  std::vector<int> orbit_;
  int num_orbits_ = 0;
  bool ergodic_ = false;
};

using SpacePtr = std::shared_ptr<const ProbabilitySpace>;

/// Values over (sample, component).
struct RandomVariable {
  RandomVariable() = default;
  RandomVariable(SpacePtr space, int ncomp);

  SpacePtr space;
  int ncomp = 0;
  std::vector<double> values;

  double& at(int w, int c) { return values[static_cast<std::size_t>(w) * ncomp + c]; }
  double at(int w, int c) const { return values[static_cast<std::size_t>(w) * ncomp + c]; }
  const double* row(int w) const { return values.data() + static_cast<std::size_t>(w) * ncomp; }
  double* row(int w) { return values.data() + static_cast<std::size_t>(w) * ncomp; }
  std::vector<double> expectation() const;
};

/// Weighted L^2 inner product <phi . psi>.
double expect_inner(const RandomVariable& a, const RandomVariable& b);
/// L^p(Omega) norm of the pointwise Euclidean magnitude.
double lp_norm(const RandomVariable& a, double p = 2.0);

/// Values over (sample, site, component) with P x m_eps weights.
struct RandomField {
  RandomField() = default;
  RandomField(SpacePtr space, GridPtr grid, int ncomp, Boundary bc);

  SpacePtr space;
  GridPtr grid;
  int ncomp = 0;
  Boundary bc = Boundary::zero_extension;
  std::vector<double> values;

  std::size_t index(int w, int s, int c) const {
    return (static_cast<std::size_t>(w) * grid->num_sites() + s) * ncomp + c;
  }
  double& at(int w, int s, int c) { return values[index(w, s, c)]; }
  double at(int w, int s, int c) const { return values[index(w, s, c)]; }
  double* sample(int w) { return values.data() + index(w, 0, 0); }
  const double* sample(int w) const { return values.data() + index(w, 0, 0); }
  std::size_t sample_size() const { return static_cast<std::size_t>(grid->num_sites()) * ncomp; }

  LatticeFunction slice(int w) const;
  /// Sample mean <u>(x).
  LatticeFunction mean() const;
};

double inner(const RandomField& u, const RandomField& v);
double norm(const RandomField& u, double p = 2.0);

/// Discrete N-torus with uniform weights and T_x w = w + x mod N. Sample index
/// is sum_i w_i * stride_i with w_0 fastest.
SpacePtr make_torus_space(const std::vector<int>& N);
std::vector<int> torus_coords(const ProbabilitySpace& space, int w);

/// Random variable on a torus space computed from the torus coordinates.
RandomVariable make_torus_variable(SpacePtr space, int ncomp,
                                   const std::function<void(const int* omega, double* out)>& f);

struct Periodization {
  SpacePtr space;
  RandomVariable coefficient;
};
/// One realization of an i.i.d. site field on the N-torus; the coefficient of
/// sample w is the value drawn for torus site w. This is a periodized
/// approximation of the product space.
Periodization make_iid_periodization(const std::vector<int>& N, int ncomp,
                                     const std::function<void(std::mt19937_64&, double*)>& marginal,
                                     std::uint64_t seed);

/// Disjoint union with weights lambda*P_A and (1-lambda)*P_B; never ergodic for 0<lambda<1.
SpacePtr disjoint_union(const ProbabilitySpace& a, const ProbabilitySpace& b, double lambda);

/// (D_i phi)(w) = phi(sigma_i w) - phi(w), component c*d + i.
RandomVariable horizontal_derivative(const RandomVariable& phi);
/// Adjoint of D: (D* psi)(w) = sum_i psi_i(sigma_i^{-1} w) - psi_i(w).
RandomVariable horizontal_divergence(const RandomVariable& psi);

/// Orbitwise P-average (unweighted on null orbits).
RandomVariable project_invariant(const RandomVariable& phi);

enum class PotMethod { svd, qr };

/// Columns of Q span ran D in (R^m)^{n d}; rows follow the RandomVariable layout
/// (sample-major, component c*d+i) and columns are orthonormal for the
/// P-weighted inner product.
struct PotBasis {
  int ncomp = 0;
  int dim = 0;
  Eigen::MatrixXd Q;
  int size() const { return static_cast<int>(Q.cols()); }
  RandomVariable column(const SpacePtr& space, int j) const;
  RandomVariable combine(const SpacePtr& space, const Eigen::VectorXd& coeffs) const;
};
PotBasis pot_basis(const ProbabilitySpace& space, int ncomp, PotMethod method = PotMethod::svd);

/// Throws IncompatibleEpsilon when a periodic window does not fit the action.
void check_compatible(const ProbabilitySpace& space, const Grid& grid, Boundary bc);

/// Field (w, x) -> phi(T_{x/eps} w).
RandomField stationary_extension(const RandomVariable& phi, GridPtr grid, Boundary bc);

/// JSON text with keys dim, weights, shifts, period.
std::string space_to_json(const ProbabilitySpace& space);
SpacePtr space_from_json(const std::string& text);

}  // namespace su
