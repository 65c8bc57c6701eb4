#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "stochunfold/commands.hpp"
#include "stochunfold/config.hpp"
#include "stochunfold/corrector.hpp"
#include "stochunfold/eris.hpp"
#include "stochunfold/graph.hpp"
#include "stochunfold/identities.hpp"
#include "stochunfold/statics.hpp"

namespace py = pybind11;
using namespace su;

namespace {

using Generators = std::vector<std::vector<int>>;

/// Quadratic integrand on an N-torus from per-sample matrices of shape (samples, K, K).
QuadraticIntegrand torus_integrand(SpacePtr space, const std::vector<Eigen::MatrixXd>& A, int k) {
  if (static_cast<int>(A.size()) != space->num_samples())
    throw InvalidArgument("one coefficient matrix per torus sample required");
  const int K = static_cast<int>(A.front().rows());
  RandomVariable rv(space, K * K);
  for (int w = 0; w < space->num_samples(); ++w) {
    if (A[w].rows() != K || A[w].cols() != K) throw InvalidArgument("coefficient matrices must be K x K");
    for (int i = 0; i < K; ++i)
      for (int j = 0; j < K; ++j) rv.at(w, i * K + j) = A[w](i, j);
  }
  return make_quadratic(rv, k, K - k);
}

py::dict homogenize(const std::vector<int>& N, const Generators& generators, const std::vector<Eigen::MatrixXd>& A) {
  SpacePtr space = make_torus_space(N);
  LatticeGraph g(generators);
  QuadraticIntegrand I = torus_integrand(space, A, g.num_edges());
  HomogenizedTensor t = assemble_homogenized_tensor(corrector_setup(space, g), I);
  py::dict out;
  out["A_hom"] = t.A_hom;
  out["min_eigenvalue"] = t.min_eigenvalue;
  out["schur_defect"] = t.schur_defect;
  out["max_kkt"] = t.max_kkt;
  out["probe_values"] = t.probe_values;
  return out;
}

py::list identity_suite(std::uint64_t seed, int repeats, double tol) {
  py::list out;
  for (const IdentityCheck& c : run_identity_suite(seed, repeats, tol)) {
    py::dict d;
    d["name"] = c.name;
    d["residual"] = c.residual;
    d["tolerance"] = c.tolerance;
    d["instances"] = c.instances;
    d["passed"] = c.passed;
    out.append(d);
  }
  return out;
}

py::dict korn(const Generators& generators, const std::vector<int>& sizes, int witness_window) {
  LatticeGraph g(generators);
  KornReport r = verify_korn(g, sizes);
  KornWitness w = korn_kernel_witness(g, witness_window);
  py::dict out;
  out["sizes"] = r.sizes;
  out["constants"] = r.constants;
  out["lambda_min"] = r.lambda_min;
  out["spread"] = r.spread;
  out["growth"] = r.growth;
  out["kernel_excess"] = w.kernel_excess;
  return out;
}

py::list static_study(const std::string& config_path) {
  StaticStudy st = run_convergence_study(static_study_config(load_config(config_path)));
  py::list rows;
  for (const StaticStudyRow& r : st.rows) {
    py::dict d;
    d["eps"] = r.eps;
    d["energy"] = r.energy;
    d["energy_hom"] = r.energy_hom;
    d["error_u"] = r.strong_error_u;
    d["error_grad"] = r.strong_error_grad;
    d["gap_lower"] = r.gap_lower;
    d["gap_recovery"] = r.gap_recovery;
    d["optimality_residual"] = r.optimality_residual;
    rows.append(d);
  }
  return rows;
}

py::list evolution_study(const std::string& config_path) {
  EvolutionStudy st = run_evolution_study(evolution_study_config(load_config(config_path)));
  py::list rows;
  for (const EvolutionStudyRow& r : st.rows) {
    py::dict d;
    d["eps"] = r.eps;
    d["t"] = r.t;
    d["error_u"] = r.error_u;
    d["error_z"] = r.error_z;
    d["error_grad"] = r.error_grad;
    d["grad_z_norm"] = r.grad_z_norm;
    d["balance"] = r.balance;
    d["kkt"] = r.kkt;
    d["lipschitz_ok"] = r.lip_ok;
    rows.append(d);
  }
  return rows;
}

py::dict spring(double a, double h, double sigma_y, const std::function<double(double)>& load, double T, int steps) {
  QuadraticRIS ris = single_spring(a, h, sigma_y, load);
  Trajectory tr = evolve(ris, Eigen::VectorXd::Zero(2), uniform_times(T, steps));
  std::vector<double> u, z;
  for (const auto& y : tr.y) {
    u.push_back(y(0));
    z.push_back(y(1));
  }
  py::dict out;
  out["t"] = tr.t;
  out["u"] = u;
  out["z"] = z;
  out["energy"] = tr.energy;
  out["dissipation"] = tr.dissipation;
  out["balance"] = tr.balance;
  out["lipschitz_ok"] = tr.lip_ok;
  return out;
}

py::tuple run(const std::string& command, const std::string& config_path, const std::string& out_dir,
              py::object seed, int threads) {
  CommandLine cl;
  cl.command = command;
  cl.config_path = config_path;
  cl.out_dir = out_dir;
  if (!seed.is_none()) {
    cl.has_seed = true;
    cl.seed = seed.cast<std::uint64_t>();
  }
  cl.threads = threads;
  std::ostringstream log, err;
  int code = run_command(cl, log, err);
  return py::make_tuple(code, log.str(), err.str());
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Stochastic unfolding, lattice homogenization and rate-independent evolution";
  py::register_exception<ConfigError>(m, "ConfigError");
  py::register_exception<Error>(m, "Error");

  m.def("homogenize", &homogenize, py::arg("N"), py::arg("generators"), py::arg("A"),
        "Homogenized tensor for per-sample coefficient matrices on the N-torus. A[w] is K x K with the first "
        "len(generators) slots carrying strains.");
  m.def("identity_suite", &identity_suite, py::arg("seed") = 1, py::arg("repeats") = 3, py::arg("tol") = 1e-12,
        "Randomized operator identity checks.");
  m.def("korn", &korn, py::arg("generators"), py::arg("sizes") = std::vector<int>{8, 12, 16},
        py::arg("witness_window") = 8, "Empirical Korn constants on box windows and the periodic kernel excess.");
  m.def("static_study", &static_study, py::arg("config"), "Static convergence study from a JSON config file.");
  m.def("evolution_study", &evolution_study, py::arg("config"), "Evolution convergence study from a JSON config file.");
  m.def("spring", &spring, py::arg("a"), py::arg("h"), py::arg("sigma_y"), py::arg("load"), py::arg("T") = 1.0,
        py::arg("steps") = 200, "Incremental solution for one elasto-plastic spring.");
  m.def("run", &run, py::arg("command"), py::arg("config"), py::arg("out") = ".", py::arg("seed") = py::none(),
        py::arg("threads") = -1, "Runs a CLI command; returns (exit code, log, error text).");
}
