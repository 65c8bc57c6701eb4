#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <functional>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "stochunfold/corrector.hpp"
#include "stochunfold/graph.hpp"
#include "stochunfold/statics.hpp"
#include "stochunfold/unfolding.hpp"

namespace su {

/// Quadratic rate-independent system on y = (u-block, z-block):
/// E(t, y) = 1/2 y.K y - f(t).u and Psi(v) = sum_j w_j |v_z,j|.
struct QuadraticRIS {
  int nu = 0;
  int nz = 0;
  Eigen::SparseMatrix<double> K;
  std::function<Eigen::VectorXd(double t)> load;  ///< length nu
  Eigen::VectorXd weights;                        ///< length nz, +inf freezes a coordinate
  Eigen::VectorXd metric;                         ///< length nu + nz, norm ||y||^2 = sum metric_j y_j^2
  /// Decoupled groups of degrees of freedom (used for eigenvalue estimates); empty means one group.
  std::vector<std::vector<int>> blocks;
  int size() const { return nu + nz; }
};

double ris_energy(const QuadraticRIS& ris, const Eigen::VectorXd& f, const Eigen::VectorXd& y);
double ris_dissipation(const QuadraticRIS& ris, const Eigen::VectorXd& dy);

struct StepParams {
  double kkt_tol = 1e-9;
  int max_sweeps = 1000000;
  /// Compute the coercivity constant and the pairwise Lipschitz ratio in evolve.
  bool lipschitz_check = true;
  /// Sweep the internal coordinates forward and then backward.
  bool symmetric = false;
};

struct StepResult {
  Eigen::VectorXd y;
  int sweeps = 0;
  double kkt = 0.0;
};

/// Incremental minimization y_k = argmin E(t_k, .) + Psi(. - y_{k-1}) by
/// alternating an exact u-solve (K_uu factored once) with a coordinate sweep of
/// the soft-threshold map on z.
class IncrementalSolver {
 public:
  explicit IncrementalSolver(const QuadraticRIS& ris, StepParams params = {});
  StepResult step(const Eigen::VectorXd& f, const Eigen::VectorXd& y_prev) const;
  /// Optimality residual of y for the step from y_prev.
  double kkt_residual(const Eigen::VectorXd& f, const Eigen::VectorXd& y, const Eigen::VectorXd& y_prev) const;
  const QuadraticRIS& ris() const { return ris_; }

 private:
  const QuadraticRIS& ris_;
  StepParams params_;
  Eigen::SparseMatrix<double> Kuu_, Kuz_;
  Eigen::SparseMatrix<double, Eigen::ColMajor> Kz_;  // columns of K for z coordinates
  Eigen::VectorXd diag_z_;
  std::shared_ptr<Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>>> ldlt_;
};

struct StabilityReport {
  double kkt_residual = 0.0;   ///< exact global check for quadratic + weighted l1
  double max_violation = 0.0;  ///< largest E + Psi decrease found along the probes
  Eigen::VectorXd certificate;  ///< violating direction (empty when stable)
  int probes = 0;
  bool stable = true;
};

/// Global stability of y at load f: coordinate probes, `random_probes` random
/// directions and any extra directions.
StabilityReport stability_check(const QuadraticRIS& ris, const Eigen::VectorXd& f, const Eigen::VectorXd& y,
                                int random_probes = 16, std::uint64_t seed = 1,
                                const std::vector<Eigen::VectorXd>& extra = {}, double tol = 1e-9);

/// Stable state at time t obtained by one incremental step from y (y = 0 when empty).
Eigen::VectorXd stable_projection(const QuadraticRIS& ris, double t, const Eigen::VectorXd& y = {},
                                  StepParams params = {});

/// Smallest eigenvalue of K relative to the metric, dense per block.
double coercivity_estimate(const QuadraticRIS& ris);

struct Trajectory {
  std::vector<double> t;
  std::vector<Eigen::VectorXd> y;
  std::vector<double> energy;
  std::vector<double> dissipation;  ///< cumulative
  std::vector<double> work;         ///< cumulative sum <f_k - f_{k-1}, u_{k-1}>
  std::vector<double> balance;      ///< |E_k + Diss_k - E_0 + Work_k|
  std::vector<double> kkt;
  std::vector<double> stability;
  int max_sweeps = 0;
  double lip_load = 0.0;     ///< max ||f_k - f_{k-1}||_* / dt
  double coercivity = 0.0;   ///< C
  double lip_ratio = 0.0;    ///< max ||y_k - y_j|| / (t_k - t_j)
  double lip_bound = 0.0;    ///< lip_load / C
  bool lip_ok = true;
  double balance_final() const { return balance.empty() ? 0.0 : balance.back(); }
};

/// Runs the incremental scheme from y0 over the time grid; y0 must be stable at t_0.
Trajectory evolve(const QuadraticRIS& ris, const Eigen::VectorXd& y0, const std::vector<double>& times,
                  StepParams params = {});
std::vector<double> uniform_times(double T, int steps);
std::string trajectory_to_csv(const Trajectory& tr);

/// One elasto-plastic spring, y = (u, z): E = 1/2 a (u - z)^2 + 1/2 h z^2 - l(t) u,
/// Psi = sigma_y |z|.
QuadraticRIS single_spring(double a, double h, double sigma_y, std::function<double(double)> load);

/// Time-dependent continuum load (t, x) -> out[0..d).
using TimeField = std::function<void(double t, const double* x, double* out)>;

/// Intro-model integrand [[A, -A], [-A, A + H]] with A = diag(a_b |b|), H = diag(h_b).
QuadraticIntegrand intro_integrand(const RandomVariable& a, const RandomVariable& h, const LatticeGraph& g);

/// Elasto-plastic spring network: u on the domain, z on the halo, energy
/// <sum_x eps^d 1/2 A(T_{x/eps} w)(grad_s u, z).(grad_s u, z)>, dissipation
/// <sum_x eps^d sum_b |b| sigma_y^b |z_b|>, optional gradient term
/// <sum_x eps^d 1/2 g eps^{2 gamma} |grad z|^2>.
struct ElastoPlasticSpec {
  GridPtr grid;
  LatticeGraph graph{std::vector<std::vector<int>>{{1}}};
  SpacePtr space;
  QuadraticIntegrand integrand;  ///< k strain slots + k passive slots
  RandomVariable yield;          ///< k components
  TimeField load;
  int load_order = 2;
  double gamma = 0.0;
  RandomVariable gradient_modulus;  ///< scalar; empty disables the gradient term
};

struct LatticeRIS {
  QuadraticRIS ris;
  ElastoPlasticSpec spec;
  GridPtr grid;
  SpacePtr space;
  int d = 0, k = 0;
  std::vector<int> dom, halo;  ///< window site -> domain / halo index
  int ndom = 0, nhalo = 0;
  RandomField u_of(const Eigen::VectorXd& y) const;
  RandomField z_of(const Eigen::VectorXd& y) const;
};

LatticeRIS assemble_lattice_ris(const ElastoPlasticSpec& spec);

/// E(t, y) evaluated site by site on the lattice and through the unfolded
/// integral; both include the gradient term and the load.
EnergyPair lattice_energy(const LatticeRIS& L, double t, const Eigen::VectorXd& y);

/// Two-scale limit system on a grid of spacing h: U on the domain, corrector
/// coordinates per halo site, and Z(w, x). With shared_z the internal variable
/// is deterministic.
struct TwoScaleLimitSpec {
  GridPtr grid;
  LatticeGraph graph{std::vector<std::vector<int>>{{1}}};
  SpacePtr space;
  QuadraticIntegrand integrand;
  RandomVariable yield;
  TimeField load;
  int load_order = 2;
  bool shared_z = false;
};

struct TwoScaleLimitRIS {
  QuadraticRIS ris;
  GridPtr grid;
  SpacePtr space;
  PotBasis basis;
  int d = 0, k = 0, r = 0;
  bool shared_z = false;
  std::vector<int> dom, halo;
  int ndom = 0, nhalo = 0;
  LatticeFunction U_of(const Eigen::VectorXd& y) const;
  /// Z(w, x) as a random field on the limit grid (identical rows when shared).
  RandomField Z_of(const Eigen::VectorXd& y) const;
  /// chi(w, x) with d*d components.
  RandomField chi_of(const Eigen::VectorXd& y) const;
};

TwoScaleLimitRIS assemble_two_scale_limit(const TwoScaleLimitSpec& spec);

struct EvolutionStudyConfig {
  std::vector<double> lower, upper;
  LatticeGraph graph{std::vector<std::vector<int>>{{1}}};
  SpacePtr space;
  QuadraticIntegrand integrand;
  RandomVariable yield;
  TimeField load;
  std::vector<double> eps_list;
  double reference_eps = 0.0;
  double T = 1.0;
  int steps = 100;
  std::vector<double> sample_times;
  double gamma = 0.0;
  RandomVariable gradient_modulus;
  int load_order = 2;
};

struct EvolutionStudyRow {
  double eps = 0.0;
  double t = 0.0;
  double error_u = 0.0;
  double error_z = 0.0;
  double error_grad = 0.0;
  double grad_z_norm = 0.0;  ///< ||eps^gamma grad z_eps||
  double balance = 0.0;
  double kkt = 0.0;
  bool lip_ok = true;
};

struct EvolutionStudy {
  std::vector<EvolutionStudyRow> rows;
  Eigen::MatrixXd A_hom;  ///< filled for the gradient-plasticity comparison
  bool deterministic_limit = false;
};

/// Compares lattice runs against the two-scale limit (no gradient term) or the
/// deterministic A_hom limit (gradient term present) computed on the reference grid.
EvolutionStudy run_evolution_study(const EvolutionStudyConfig& cfg);
std::string evolution_study_to_csv(const EvolutionStudy& s);

}  // namespace su
