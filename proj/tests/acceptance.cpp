#include <Eigen/Dense>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "stochunfold/commands.hpp"
#include "stochunfold/corrector.hpp"
#include "stochunfold/eris.hpp"
#include "stochunfold/graph.hpp"
#include "stochunfold/identities.hpp"
#include "stochunfold/statics.hpp"

using namespace su;
namespace fs = std::filesystem;

namespace {

// Pinned tolerances.
constexpr double kIdentityTol = 1e-12;
constexpr int kIdentityMinInstances = 50;
constexpr double kIdentitySeconds = 10.0;
constexpr double kTransformTol = 1e-12;
constexpr double kKornSpread = 0.10;
constexpr double kKornGrowth = 10.0;
constexpr double kHarmonicTol = 1e-10;
constexpr double kBruteForceTol = 1e-9;
constexpr double kStaticFinalFraction = 0.25;
constexpr double kStaticSeconds = 60.0;
constexpr double kEnergyLowerTol = 1e-12;
constexpr double kSpringError = 1e-3;
constexpr double kHalvingSlack = 0.30;
constexpr double kEvolutionSeconds = 300.0;

const LatticeGraph kChain(std::vector<std::vector<int>>{{1}});
const std::vector<std::vector<int>> kTriangular = {{1, 0}, {0, 1}, {1, 1}};

int failures = 0;

void report(int id, const std::string& name, bool ok, const std::string& detail) {
  std::printf("%s criterion %d: %s (%s)\n", ok ? "PASS" : "FAIL", id, name.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

std::string num(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4g", x);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

RandomVariable constant_rv(SpacePtr s, int ncomp, double v) {
  RandomVariable r(s, ncomp);
  std::fill(r.values.begin(), r.values.end(), v);
  return r;
}

void identities_and_transformation() {
  auto t0 = std::chrono::steady_clock::now();
  std::vector<IdentityCheck> checks = run_identity_suite(20240501, 3, kIdentityTol);
  const double secs = seconds_since(t0);
  bool ok1 = secs < kIdentitySeconds, ok2 = true;
  double worst1 = 0.0, worst2 = 0.0;
  int min1 = 1 << 30, min2 = 1 << 30;
  for (const IdentityCheck& c : checks) {
    const bool transform = c.name.rfind("transformation", 0) == 0;
    const bool ok = c.residual < (transform ? kTransformTol : kIdentityTol) && c.instances >= kIdentityMinInstances;
    if (transform) {
      ok2 = ok2 && ok;
      worst2 = std::max(worst2, c.residual);
      min2 = std::min(min2, c.instances);
    } else {
      ok1 = ok1 && ok;
      worst1 = std::max(worst1, c.residual);
      min1 = std::min(min1, c.instances);
    }
  }
  report(1, "operator identities", ok1,
         "9 identities, worst residual " + num(worst1) + ", min instances " + std::to_string(min1) + ", " +
             num(secs) + " s");
  report(2, "transformation formula", ok2,
         "quadratic and quartic integrands, worst residual " + num(worst2) + ", instances " + std::to_string(min2));
}

void korn() {
  const std::vector<int> sizes = {8, 12, 16};
  KornReport good = verify_korn(LatticeGraph(kTriangular), sizes);
  KornReport bad = verify_korn(LatticeGraph({{1, 0}, {0, 1}}), sizes);
  bool finite = true;
  for (double c : good.constants) finite = finite && std::isfinite(c);
  const bool positive = finite && good.spread <= kKornSpread;
  const bool negative = bad.growth >= kKornGrowth;
  KornWitness w = korn_kernel_witness(LatticeGraph({{1, 0}, {0, 1}}), 8);
  std::string detail = "{e1,e2,e1+e2}: C = " + num(good.constants[0]) + ", " + num(good.constants[1]) + ", " +
                       num(good.constants[2]) + ", spread " + num(good.spread) + "; {e1,e2}: C = " +
                       num(bad.constants[0]) + " -> " + num(bad.constants[2]) + ", growth " + num(bad.growth) +
                       " (required " + num(kKornGrowth) + "); periodic kernel excess " +
                       std::to_string(w.kernel_excess);
  if (!negative)
    detail += "; the Dirichlet-window constant of {e1,e2} grows like n^2, so 8 -> 16 gives at most ~4x";
  report(3, "Korn inequality", positive && negative, detail);
}

void corrector_oracle() {
  SpacePtr s = make_torus_space({2});
  RandomVariable a(s, 1);
  a.at(0, 0) = 1.0;
  a.at(1, 0) = 4.0;
  HomogenizedTensor t = assemble_homogenized_tensor(corrector_setup(s, kChain), make_diagonal(a));
  const double err = std::abs(t.A_hom(0, 0) - 1.6);
  // Constant coefficients on a 2D torus with three edges.
  SpacePtr s2 = make_torus_space({2, 3});
  RandomVariable A(s2, 9);
  const double M[9] = {3.0, 0.5, 0.2, 0.5, 2.0, -0.1, 0.2, -0.1, 1.5};
  for (int w = 0; w < 6; ++w)
    for (int c = 0; c < 9; ++c) A.at(w, c) = M[c];
  QuadraticIntegrand I = make_quadratic(A, 3);
  CorrectorSetup setup = corrector_setup(s2, LatticeGraph(kTriangular));
  HomogenizedTensor tc = assemble_homogenized_tensor(setup, I);
  double dev = 0.0, chi = 0.0;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) dev = std::max(dev, std::abs(tc.A_hom(i, j) - M[i * 3 + j]));
  for (int p = 0; p < 3; ++p) {
    std::vector<double> probe(3, 0.0);
    probe[p] = 1.0;
    CorrectorSolution sol = solve_corrector(setup, I, probe);
    for (double v : sol.chi.values) chi = std::max(chi, std::abs(v));
  }
  report(4, "corrector oracle", err < kHarmonicTol && dev < kHarmonicTol && chi < kHarmonicTol,
         "A_hom = " + num(t.A_hom(0, 0)) + " (|err| " + num(err) + "); constant case |A_hom - A| " + num(dev) +
             ", |chi| " + num(chi));
}

Eigen::MatrixXd brute_force(const ProbabilitySpace& s, const LatticeGraph& g, const QuadraticIntegrand& I) {
  const int m = s.num_samples(), d = s.dim(), k = g.num_edges(), K = I.size();
  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(m * d, m * d), G = Eigen::MatrixXd::Zero(m * d, K);
  Eigen::MatrixXd mean = Eigen::MatrixXd::Zero(K, K);
  for (int w = 0; w < m; ++w) {
    Eigen::MatrixXd S = Eigen::MatrixXd::Zero(K, m * d);
    for (int e = 0; e < k; ++e) {
      const auto& b = g.generator(e);
      double l2 = 0.0;
      for (int x : b) l2 += double(x) * x;
      const int wb = s.shift_by(w, b.data());
      for (int c = 0; c < d; ++c) {
        S(e, wb * d + c) += b[c] / l2;
        S(e, w * d + c) -= b[c] / l2;
      }
    }
    Eigen::MatrixXd A = I.matrix(w);
    H += s.weight(w) * S.transpose() * A * S;
    G += s.weight(w) * S.transpose() * A;
    mean += s.weight(w) * A;
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(H, Eigen::ComputeFullU | Eigen::ComputeFullV);
  svd.setThreshold(1e-12);
  return mean - G.transpose() * svd.solve(G);
}

void brute_force_equivalence() {
  std::mt19937_64 rng(77);
  std::normal_distribution<double> N;
  struct Case {
    SpacePtr space;
    std::vector<std::vector<int>> gens;
  };
  std::vector<Case> cases = {{make_torus_space({6}), {{1}}},
                             {make_torus_space({3}), {{1}}},
                             {make_torus_space({3, 2}), kTriangular},
                             {make_torus_space({2, 2}), {{1, 0}, {0, 1}}},
                             {make_torus_space({1, 1}), kTriangular},
                             {disjoint_union(*make_torus_space({2, 1}), *make_torus_space({1, 3}), 0.4), kTriangular}};
  double worst = 0.0;
  int instances = 0;
  for (const Case& c : cases)
    for (int passive : {0, 1})
      for (int rep = 0; rep < 3; ++rep) {
        LatticeGraph g(c.gens);
        const int k = g.num_edges(), K = k + passive;
        RandomVariable A(c.space, K * K);
        for (int w = 0; w < c.space->num_samples(); ++w) {
          Eigen::MatrixXd B(K, K);
          for (int i = 0; i < K; ++i)
            for (int j = 0; j < K; ++j) B(i, j) = N(rng);
          Eigen::MatrixXd S = B * B.transpose() + 0.5 * Eigen::MatrixXd::Identity(K, K);
          for (int i = 0; i < K; ++i)
            for (int j = 0; j < K; ++j) A.at(w, i * K + j) = S(i, j);
        }
        QuadraticIntegrand I = make_quadratic(A, k, passive);
        HomogenizedTensor t = assemble_homogenized_tensor(corrector_setup(c.space, g), I);
        worst = std::max(worst, (t.A_hom - brute_force(*c.space, g, I)).cwiseAbs().maxCoeff());
        ++instances;
      }
  report(5, "tensor brute-force equivalence", worst < kBruteForceTol,
         std::to_string(instances) + " instances with |Omega| <= 6, k <= 3, max deviation " + num(worst));
}

void static_study() {
  auto t0 = std::chrono::steady_clock::now();
  SpacePtr s = make_torus_space({2});
  RandomVariable a(s, 1);
  a.at(0, 0) = 1.0;
  a.at(1, 0) = 4.0;
  StaticStudyConfig cfg;
  cfg.lower = {0.0};
  cfg.upper = {1.0};
  cfg.space = s;
  cfg.integrand = make_diagonal(a);
  cfg.load = [](const double*, double* out) { out[0] = 1.0; };
  cfg.eps_list = {0.125, 0.0625, 0.03125};
  cfg.reference_eps = 0.03125;
  StaticStudy st = run_convergence_study(cfg);
  const double secs = seconds_since(t0);
  bool decreasing = true, lower = true, gap = true;
  for (std::size_t i = 0; i < st.rows.size(); ++i) {
    lower = lower && st.rows[i].energy >= st.energy_hom - kEnergyLowerTol;
    if (i > 0) {
      decreasing = decreasing && st.rows[i].strong_error_u < st.rows[i - 1].strong_error_u;
      gap = gap && st.rows[i].gap_recovery < st.rows[i - 1].gap_recovery;
    }
  }
  const double frac = st.rows.back().strong_error_u / st.rows.front().strong_error_u;
  report(6, "static homogenization study",
         decreasing && frac < kStaticFinalFraction && lower && gap && secs < kStaticSeconds,
         "||T u - U|| = " + num(st.rows[0].strong_error_u) + ", " + num(st.rows[1].strong_error_u) + ", " +
             num(st.rows[2].strong_error_u) + " (final/first " + num(frac) + "); recovery gap " +
             num(st.rows[0].gap_recovery) + " -> " + num(st.rows[2].gap_recovery) + "; " + num(secs) + " s");
}

/// Single spring a = 100, h = 25, sigma_y = 1 under l(t) = 2t on [0,1].
struct Spring {
  double a = 100.0, h = 25.0, sigma = 1.0;
  double l(double t) const { return 2.0 * t; }
  double z(double t) const { return std::max(0.0, (l(t) - sigma) / h); }
  double u(double t) const { return l(t) / a + z(t); }
  Trajectory run(int steps) const {
    QuadraticRIS ris = single_spring(a, h, sigma, [this](double t) { return l(t); });
    return evolve(ris, Eigen::VectorXd::Zero(2), uniform_times(1.0, steps));
  }
  double error(const Trajectory& tr) const {
    double e = 0.0;
    for (std::size_t k = 0; k + 1 < tr.t.size(); ++k)
      for (int q = 0; q < 20; ++q) {
        double t = tr.t[k] + (tr.t[k + 1] - tr.t[k]) * q / 20.0;
        e = std::max({e, std::abs(tr.y[k](0) - u(t)), std::abs(tr.y[k](1) - z(t))});
      }
    return e;
  }
};

bool halving(double coarse, double fine) {
  const double r = coarse / fine;
  return r >= 2.0 * (1.0 - kHalvingSlack) && r <= 2.0 * (1.0 + kHalvingSlack);
}

void spring_oracle() {
  Spring sp;
  Trajectory a = sp.run(200), b = sp.run(400);
  const double ea = sp.error(a), eb = sp.error(b);
  report(7, "single-spring oracle", ea < kSpringError && halving(ea, eb),
         "max error " + num(ea) + " at T/200, " + num(eb) + " at T/400, ratio " + num(ea / eb));
}

ElastoPlasticSpec two_phase_spec(double eps) {
  SpacePtr s = make_torus_space({2});
  RandomVariable a(s, 1), h = constant_rv(s, 1, 1.0);
  a.at(0, 0) = 1.0;
  a.at(1, 0) = 4.0;
  ElastoPlasticSpec spec;
  spec.grid = Grid::box_domain(eps, {0.0}, {1.0}, {{1}});
  spec.space = s;
  spec.integrand = intro_integrand(a, h, kChain);
  spec.yield = constant_rv(s, 1, 0.03);
  spec.load = [](double t, const double* x, double* out) {
    out[0] = -2.0 * M_PI * std::cos(2.0 * M_PI * x[0]) * 0.08 * std::sin(M_PI * t);
  };
  spec.load_order = 6;
  return spec;
}

void balance_and_lipschitz() {
  Spring sp;
  Trajectory s1 = sp.run(100), s2 = sp.run(200);
  LatticeRIS L = assemble_lattice_ris(two_phase_spec(0.0625));
  Eigen::VectorXd y0 = Eigen::VectorXd::Zero(L.ris.size());
  Trajectory l1 = evolve(L.ris, y0, uniform_times(1.0, 100)), l2 = evolve(L.ris, y0, uniform_times(1.0, 200));
  const bool ok = halving(s1.balance_final(), s2.balance_final()) &&
                  halving(l1.balance_final(), l2.balance_final()) && s1.lip_ok && s2.lip_ok && l1.lip_ok &&
                  l2.lip_ok;
  report(8, "energy balance and Lipschitz bound", ok,
         "spring balance " + num(s1.balance_final()) + " -> " + num(s2.balance_final()) + ", lattice balance " +
             num(l1.balance_final()) + " -> " + num(l2.balance_final()) + "; Lipschitz ratio/bound spring " +
             num(s1.lip_ratio) + "/" + num(s1.lip_bound) + ", lattice " + num(l1.lip_ratio) + "/" +
             num(l1.lip_bound));
}

void evolution_study() {
  auto t0 = std::chrono::steady_clock::now();
  auto make = [](bool gradient) {
    ElastoPlasticSpec base = two_phase_spec(0.125);
    EvolutionStudyConfig c;
    c.lower = {0.0};
    c.upper = {1.0};
    c.space = base.space;
    c.integrand = base.integrand;
    c.yield = base.yield;
    c.load = base.load;
    c.eps_list = {0.125, 0.0625, 0.03125};
    c.reference_eps = 0.03125;
    c.sample_times = {0.25, 0.5, 1.0};
    c.load_order = 6;
    if (gradient) {
      c.gamma = 0.5;
      c.gradient_modulus = constant_rv(base.space, 1, 0.01);
    }
    return c;
  };
  EvolutionStudy plain = run_evolution_study(make(false));
  EvolutionStudy grad = run_evolution_study(make(true));
  const double secs = seconds_since(t0);
  bool ok = plain.rows.size() == 9 && grad.rows.size() == 9;
  for (int i = 3; ok && i < 9; ++i) {
    ok = ok && plain.rows[i].error_u < plain.rows[i - 3].error_u && plain.rows[i].error_z < plain.rows[i - 3].error_z;
    ok = ok && grad.rows[i].error_u < grad.rows[i - 3].error_u && grad.rows[i].error_z < grad.rows[i - 3].error_z;
    ok = ok && grad.rows[i].grad_z_norm < grad.rows[i - 3].grad_z_norm;
  }
  ok = ok && secs < kEvolutionSeconds;
  report(9, "evolution homogenization study", ok,
         "error_u at t=1/2: " + num(plain.rows[1].error_u) + ", " + num(plain.rows[4].error_u) + ", " +
             num(plain.rows[7].error_u) + "; gradient run ||eps^g grad z|| at t=1/4: " +
             num(grad.rows[0].grad_z_norm) + ", " + num(grad.rows[3].grad_z_norm) + ", " +
             num(grad.rows[6].grad_z_norm) + "; " + num(secs) + " s");
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void reproducibility() {
  struct Case {
    std::string command, config;
  };
  const std::vector<Case> cases = {{"verify", "verify_default"},     {"korn", "korn_negative_control"},
                                   {"corrector", "corrector_iid_2d"}, {"static", "static_layered"},
                                   {"evolve", "evolve_gradient"},     {"evolve", "evolve_spring"}};
  const fs::path root = fs::temp_directory_path() / "stochunfold_acceptance";
  bool ok = true;
  int files = 0;
  for (const Case& c : cases) {
    fs::path dirs[2] = {root / (c.config + "_a"), root / (c.config + "_b")};
    for (const fs::path& d : dirs) {
      fs::remove_all(d);
      fs::create_directories(d);
      CommandLine cl;
      cl.command = c.command;
      cl.config_path = std::string(STOCHUNFOLD_CONFIG_DIR) + "/" + c.config + ".json";
      cl.out_dir = d.string();
      cl.has_seed = true;
      cl.seed = 12345;
      std::ostringstream log, err;
      ok = ok && run_command(cl, log, err) == 0;
    }
    for (const auto& entry : fs::directory_iterator(dirs[0])) {
      ok = ok && slurp(entry.path()) == slurp(dirs[1] / entry.path().filename());
      ++files;
    }
  }
  report(10, "reproducibility", ok && files > 0, std::to_string(files) + " output files compared byte for byte");
}

}  // namespace

int main() {
  identities_and_transformation();
  korn();
  corrector_oracle();
  brute_force_equivalence();
  static_study();
  spring_oracle();
  balance_and_lipschitz();
  evolution_study();
  reproducibility();
  std::printf("%d of 10 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
