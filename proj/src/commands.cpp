#include "stochunfold/commands.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>

#include "json.hpp"
#include "stochunfold/corrector.hpp"
#include "stochunfold/eris.hpp"
#include "stochunfold/graph.hpp"
#include "stochunfold/identities.hpp"
#include "stochunfold/statics.hpp"

namespace su {

namespace {

using ojson = nlohmann::ordered_json;

void write_file(const std::string& dir, const std::string& name, const std::string& text) {
  std::filesystem::create_directories(dir);
  std::ofstream out(std::filesystem::path(dir) / name, std::ios::binary);
  if (!out) throw Error("cannot write " + name + " in " + dir);
  out << text;
}

std::string fmt(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

ojson matrix_json(const Eigen::MatrixXd& A) {
  ojson rows = ojson::array();
  for (Eigen::Index i = 0; i < A.rows(); ++i) {
    ojson r = ojson::array();
    for (Eigen::Index j = 0; j < A.cols(); ++j) r.push_back(A(i, j));
    rows.push_back(r);
  }
  return rows;
}

void apply_threads(const RunConfig& cfg) {
  if (cfg.threads > 0) set_default_threads(cfg.threads);
}

const QuadraticIntegrand& need_integrand(const RunConfig& cfg, int m_required) {
  if (!cfg.has_integrand) throw ConfigError("integrand", "this command needs an integrand");
  if (m_required == 0 && cfg.integrand.m != 0) throw ConfigError("integrand", "expected an integrand without internal slots");
  if (m_required > 0 && cfg.integrand.m != m_required)
    throw ConfigError("integrand", "expected one internal slot per edge");
  return cfg.integrand;
}

ojson korn_block(const RunConfig& cfg, bool& passed) {
  KornReport rep = verify_korn(cfg.graph, cfg.korn.sizes);
  KornWitness wit = korn_kernel_witness(cfg.graph, cfg.korn.witness_window);
  bool finite = true;
  for (double c : rep.constants) finite = finite && std::isfinite(c);
  const bool holds = finite && rep.spread <= cfg.korn.spread_tol && wit.kernel_excess == 0;
  passed = holds != cfg.korn.expect_failure;
  ojson j = ojson::parse(korn_to_json(rep));
  j["generators"] = cfg.graph.generators();
  j["spread_tol"] = cfg.korn.spread_tol;
  j["growth_factor_required"] = cfg.korn.growth_factor;
  j["growth_reached"] = rep.growth >= cfg.korn.growth_factor;
  j["witness"] = {{"window", wit.window},
                  {"kernel_excess", wit.kernel_excess},
                  {"sym_norm", wit.sym_norm},
                  {"grad_norm", wit.grad_norm}};
  j["korn_holds"] = holds;
  j["expect_failure"] = cfg.korn.expect_failure;
  j["passed"] = passed;
  return j;
}

double spring_exact_z(double l, double sigma, double h) { return std::max(0.0, (l - sigma) / h); }

}  // namespace

StaticStudyConfig static_study_config(const RunConfig& cfg) {
  if (cfg.eps.empty()) throw ConfigError("eps", "the eps list is empty");
  StaticStudyConfig sc;
  sc.lower = cfg.lower;
  sc.upper = cfg.upper;
  sc.graph = cfg.graph;
  sc.space = cfg.space;
  sc.integrand = need_integrand(cfg, 0);
  sc.load = cfg.load_shape;
  sc.eps_list = cfg.eps;
  sc.reference_eps = cfg.reference_eps;
  sc.quadrature_order = cfg.quadrature_order;
  sc.threads = cfg.threads;
  return sc;
}

EvolutionStudyConfig evolution_study_config(const RunConfig& cfg) {
  if (cfg.eps.empty()) throw ConfigError("eps", "the eps list is empty");
  if (cfg.yield.ncomp == 0) throw ConfigError("yield", "evolution needs yield stresses");
  EvolutionStudyConfig ec;
  ec.lower = cfg.lower;
  ec.upper = cfg.upper;
  ec.graph = cfg.graph;
  ec.space = cfg.space;
  ec.integrand = need_integrand(cfg, cfg.graph.num_edges());
  ec.yield = cfg.yield;
  Field shape = cfg.load_shape;
  auto profile = cfg.profile;
  const int d = cfg.dim;
  ec.load = [shape, profile, d](double t, const double* x, double* out) {
    shape(x, out);
    const double s = profile(t);
    for (int i = 0; i < d; ++i) out[i] *= s;
  };
  ec.eps_list = cfg.eps;
  ec.reference_eps = cfg.reference_eps;
  ec.T = cfg.T;
  ec.steps = cfg.steps;
  ec.sample_times = cfg.sample_times;
  ec.load_order = cfg.quadrature_order;
  if (cfg.gradient_modulus > 0.0) {
    ec.gamma = cfg.gamma;
    RandomVariable g(cfg.space, 1);
    std::fill(g.values.begin(), g.values.end(), cfg.gradient_modulus);
    ec.gradient_modulus = g;
  }
  return ec;
}

int cmd_verify(const RunConfig& cfg, const std::string& out_dir, std::ostream& log) {
  apply_threads(cfg);
  std::vector<IdentityCheck> checks = run_identity_suite(cfg.seed, cfg.verify_repeats, cfg.verify_tol);
  bool all = true;
  ojson j;
  j["seed"] = cfg.seed;
  j["identities"] = ojson::parse(identities_to_json(checks));
  for (const auto& c : checks) {
    log << (c.passed ? "PASS " : "FAIL ") << c.name << " residual=" << fmt(c.residual) << " instances=" << c.instances
        << '\n';
    all = all && c.passed;
  }
  bool korn_ok = false;
  j["korn"] = korn_block(cfg, korn_ok);
  log << (korn_ok ? "PASS " : "FAIL ") << "korn"
      << (cfg.korn.expect_failure ? " (negative control, korn_holds=" : " (korn_holds=")
      << (j["korn"]["korn_holds"].get<bool>() ? "true" : "false") << ")\n";
  all = all && korn_ok;
  j["passed"] = all;
  write_file(out_dir, "verify.json", j.dump(2) + "\n");
  return all ? 0 : 1;
}

int cmd_korn(const RunConfig& cfg, const std::string& out_dir, std::ostream& log) {
  bool ok = false;
  ojson j = korn_block(cfg, ok);
  write_file(out_dir, "korn.json", j.dump(2) + "\n");
  const auto& C = j["constants"];
  log << "korn constants:";
  for (const auto& c : C) log << ' ' << (c.is_number() ? fmt(c.get<double>()) : c.get<std::string>());
  log << "\nspread=" << fmt(j["spread"].get<double>()) << " growth=" << fmt(j["growth"].get<double>())
      << " kernel_excess=" << j["witness"]["kernel_excess"].get<int>() << (ok ? " PASS" : " FAIL") << '\n';
  return ok ? 0 : 1;
}

int cmd_corrector(const RunConfig& cfg, const std::string& out_dir, std::ostream& log) {
  apply_threads(cfg);
  const QuadraticIntegrand& I = need_integrand(cfg, -1);
  CorrectorSetup setup = corrector_setup(cfg.space, cfg.graph);
  HomogenizedTensor T = assemble_homogenized_tensor(setup, I, cfg.threads);
  write_file(out_dir, "A_hom.json", tensor_to_json(T) + "\n");
  std::ostringstream csv;
  csv << "probe,i,j,value\n";
  const int n = I.size();
  int p = 0;
  for (int i = 0; i < n; ++i, ++p) csv << p << ',' << i << ',' << i << ',' << fmt(T.probe_values[p]) << '\n';
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j, ++p) csv << p << ',' << i << ',' << j << ',' << fmt(T.probe_values[p]) << '\n';
  write_file(out_dir, "probes.csv", csv.str());
  log << "A_hom min eigenvalue " << fmt(T.min_eigenvalue) << ", max KKT " << fmt(T.max_kkt) << '\n';
  return 0;
}

int cmd_static(const RunConfig& cfg, const std::string& out_dir, std::ostream& log) {
  apply_threads(cfg);
  StaticStudy st = run_convergence_study(static_study_config(cfg));
  write_file(out_dir, "static_study.csv", study_to_csv(st));
  ojson j;
  j["A_hom"] = matrix_json(st.A_hom);
  j["energy_hom"] = st.energy_hom;
  j["reference_eps"] = st.reference_eps;
  write_file(out_dir, "static_summary.json", j.dump(2) + "\n");
  for (const auto& r : st.rows)
    log << "eps=" << fmt(r.eps) << " error_u=" << fmt(r.strong_error_u) << " gap_recovery=" << fmt(r.gap_recovery)
        << '\n';
  return 0;
}

int cmd_evolve(const RunConfig& cfg, const std::string& out_dir, std::ostream& log) {
  apply_threads(cfg);
  if (cfg.evolve_mode == "spring") {
    const SpringSettings& s = cfg.spring;
    auto profile = cfg.profile;
    QuadraticRIS ris = single_spring(s.a, s.h, s.sigma_y, profile);
    Trajectory tr = evolve(ris, Eigen::VectorXd::Zero(2), uniform_times(cfg.T, cfg.steps));
    write_file(out_dir, "trajectory.csv", trajectory_to_csv(tr));
    // The closed form holds while the load increases from zero.
    std::ostringstream csv;
    csv << "t,u,z,u_exact,z_exact\n";
    double err = 0.0, lmax = 0.0;
    bool monotone = true;
    for (std::size_t k = 0; k < tr.t.size(); ++k) {
      double l = profile(tr.t[k]);
      monotone = monotone && l >= lmax;
      lmax = std::max(lmax, l);
      double z = spring_exact_z(l, s.sigma_y, s.h), u = l / s.a + z;
      csv << fmt(tr.t[k]) << ',' << fmt(tr.y[k](0)) << ',' << fmt(tr.y[k](1)) << ',' << fmt(u) << ',' << fmt(z)
          << '\n';
      if (monotone) err = std::max({err, std::abs(tr.y[k](0) - u), std::abs(tr.y[k](1) - z)});
    }
    write_file(out_dir, "spring.csv", csv.str());
    // Piecewise-constant interpolant y(t) = y_k on [t_k, t_{k+1}) against the closed form.
    double interp = 0.0;
    const int sub = 20;
    for (std::size_t k = 0; k + 1 < tr.t.size() && monotone; ++k)
      for (int q = 0; q < sub; ++q) {
        double t = tr.t[k] + (tr.t[k + 1] - tr.t[k]) * q / sub;
        double l = profile(t), z = spring_exact_z(l, s.sigma_y, s.h);
        interp = std::max({interp, std::abs(tr.y[k](0) - l / s.a - z), std::abs(tr.y[k](1) - z)});
      }
    ojson j;
    j["steps"] = cfg.steps;
    j["monotone_load"] = monotone;
    j["max_nodal_error"] = err;
    j["max_interpolant_error"] = interp;
    j["balance_final"] = tr.balance_final();
    j["lipschitz_ratio"] = tr.lip_ratio;
    j["lipschitz_bound"] = tr.lip_bound;
    j["lipschitz_ok"] = tr.lip_ok;
    write_file(out_dir, "spring_summary.json", j.dump(2) + "\n");
    log << "single spring: max nodal error " << fmt(err) << ", balance " << fmt(tr.balance_final()) << '\n';
    return 0;
  }
  EvolutionStudy st = run_evolution_study(evolution_study_config(cfg));
  write_file(out_dir, "evolution_study.csv", evolution_study_to_csv(st));
  ojson j;
  j["deterministic_limit"] = st.deterministic_limit;
  if (st.deterministic_limit) j["A_hom"] = matrix_json(st.A_hom);
  write_file(out_dir, "evolution_summary.json", j.dump(2) + "\n");
  for (const auto& r : st.rows)
    log << "eps=" << fmt(r.eps) << " t=" << fmt(r.t) << " error_u=" << fmt(r.error_u) << " error_z=" << fmt(r.error_z)
        << '\n';
  return 0;
}

int run_command(const CommandLine& cl, std::ostream& log, std::ostream& err) {
  try {
    RunConfig cfg = load_config(cl.config_path, cl.seed, cl.has_seed);
    if (cl.threads >= 0) cfg.threads = cl.threads;
    if (cl.command == "verify") return cmd_verify(cfg, cl.out_dir, log);
    if (cl.command == "korn") return cmd_korn(cfg, cl.out_dir, log);
    if (cl.command == "corrector") return cmd_corrector(cfg, cl.out_dir, log);
    if (cl.command == "static") return cmd_static(cfg, cl.out_dir, log);
    if (cl.command == "evolve") return cmd_evolve(cfg, cl.out_dir, log);
    throw ConfigError("", "unknown command '" + cl.command + "'");
  } catch (const ConfigError& e) {
    ojson j;
    j["error"] = "config";
    j["path"] = e.path();
    j["message"] = e.what();
    err << j.dump() << '\n';
    return 2;
  } catch (const std::exception& e) {
    ojson j;
    j["error"] = "runtime";
    j["command"] = cl.command;
    j["message"] = e.what();
    err << j.dump() << '\n';
    return 1;
  }
}

}  // namespace su
