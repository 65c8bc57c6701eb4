#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <random>

#include "doctest.h"
#include "stochunfold/eris.hpp"

using namespace su;

namespace {

const LatticeGraph kChain(std::vector<std::vector<int>>{{1}});

struct SpringOracle {
  double a, h, sigma;
  double z(double l) const { return std::max(0.0, (l - sigma) / h); }
  double u(double l) const { return l / a + z(l); }
};

/// Largest deviation of the piecewise-constant interpolant from the closed form.
double interpolant_error(const Trajectory& tr, const SpringOracle& o, const std::function<double(double)>& l) {
  double err = 0.0;
  for (std::size_t k = 0; k + 1 < tr.t.size(); ++k)
    for (int q = 0; q < 20; ++q) {
      double t = tr.t[k] + (tr.t[k + 1] - tr.t[k]) * q / 20.0;
      err = std::max({err, std::abs(tr.y[k](0) - o.u(l(t))), std::abs(tr.y[k](1) - o.z(l(t)))});
    }
  return err;
}

RandomVariable constant_rv(SpacePtr s, int ncomp, double v) {
  RandomVariable r(s, ncomp);
  std::fill(r.values.begin(), r.values.end(), v);
  return r;
}

QuadraticIntegrand two_phase_intro(SpacePtr s, const LatticeGraph& g, double a0, double a1) {
  RandomVariable a(s, g.num_edges()), h = constant_rv(s, g.num_edges(), 1.0);
  for (int w = 0; w < s->num_samples(); ++w)
    for (int e = 0; e < g.num_edges(); ++e) a.at(w, e) = (w % 2 ? a1 : a0) * (1.0 + 0.5 * e);
  return intro_integrand(a, h, g);
}

const TimeField kCosineLoad = [](double t, const double* x, double* out) {
  out[0] = -2.0 * M_PI * std::cos(2.0 * M_PI * x[0]) * 0.08 * std::sin(M_PI * t);
};

EvolutionStudyConfig study_config(bool gradient) {
  SpacePtr s = make_torus_space({2});
  EvolutionStudyConfig c;
  c.lower = {0.0};
  c.upper = {1.0};
  c.space = s;
  c.integrand = two_phase_intro(s, kChain, 1.0, 4.0);
  c.yield = constant_rv(s, 1, 0.03);
  c.load = kCosineLoad;
  c.eps_list = {0.125, 0.0625, 0.03125};
  c.reference_eps = 0.03125;
  c.sample_times = {0.25, 0.5, 1.0};
  c.load_order = 6;
  if (gradient) {
    c.gamma = 0.5;
    c.gradient_modulus = constant_rv(s, 1, 0.01);
  }
  return c;
}

Eigen::VectorXd random_vector(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> N;
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v(i) = N(rng);
  return v;
}

}  // namespace

TEST_CASE("single spring follows the closed form") {
  SpringOracle o{100.0, 25.0, 1.0};
  auto l = [](double t) { return 2.0 * t; };
  QuadraticRIS ris = single_spring(o.a, o.h, o.sigma, l);
  Trajectory t200 = evolve(ris, Eigen::VectorXd::Zero(2), uniform_times(1.0, 200));
  Trajectory t400 = evolve(ris, Eigen::VectorXd::Zero(2), uniform_times(1.0, 400));
  for (std::size_t k = 0; k < t200.t.size(); ++k) {
    CHECK(std::abs(t200.y[k](0) - o.u(l(t200.t[k]))) < 1e-9);
    CHECK(std::abs(t200.y[k](1) - o.z(l(t200.t[k]))) < 1e-9);
    CHECK(t200.kkt[k] < 1e-9);
  }
  double e200 = interpolant_error(t200, o, l), e400 = interpolant_error(t400, o, l);
  CHECK(e200 < 1e-3);
  CHECK(e200 / e400 == doctest::Approx(2.0).epsilon(0.3));
  CHECK(t200.lip_ok);
  CHECK(t400.lip_ok);
  // Energy balance error is first order in the time step.
  double ratio = t200.balance_final() / t400.balance_final();
  CHECK(ratio >= 1.5);
  CHECK(ratio <= 2.5);
  for (std::size_t k = 1; k < t200.t.size(); ++k) CHECK(t200.dissipation[k] >= t200.dissipation[k - 1]);
  std::string csv = trajectory_to_csv(t200);
  CHECK(csv.rfind("step,t,energy,dissipation,work,balance,kkt,stability", 0) == 0);
}

TEST_CASE("degenerate loads and yield limits") {
  SUBCASE("zero load keeps the origin") {
    QuadraticRIS ris = single_spring(10.0, 2.0, 1.0, [](double) { return 0.0; });
    Trajectory tr = evolve(ris, Eigen::VectorXd::Zero(2), uniform_times(1.0, 10));
    for (const auto& y : tr.y) CHECK(y.cwiseAbs().maxCoeff() == 0.0);
    CHECK(tr.dissipation.back() == 0.0);
  }
  SUBCASE("infinite yield freezes the internal variable") {
    const double inf = std::numeric_limits<double>::infinity();
    QuadraticRIS ris = single_spring(10.0, 2.0, inf, [](double t) { return 5.0 * t; });
    Trajectory tr = evolve(ris, Eigen::VectorXd::Zero(2), uniform_times(1.0, 10));
    for (std::size_t k = 0; k < tr.t.size(); ++k) {
      CHECK(tr.y[k](1) == 0.0);
      CHECK(tr.y[k](0) == doctest::Approx(5.0 * tr.t[k] / 10.0));
    }
  }
  SUBCASE("constant load keeps a stable state and balances exactly") {
    QuadraticRIS ris = single_spring(10.0, 2.0, 1.0, [](double) { return 3.0; });
    Eigen::VectorXd y0 = stable_projection(ris, 0.0);
    Trajectory tr = evolve(ris, y0, uniform_times(1.0, 20));
    for (const auto& y : tr.y) CHECK((y - y0).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(tr.balance_final() < 1e-10);
  }
  SUBCASE("zero yield relaxes to the unconstrained minimizer") {
    QuadraticRIS ris = single_spring(10.0, 2.0, 0.0, [](double t) { return 4.0 * t; });
    Trajectory tr = evolve(ris, Eigen::VectorXd::Zero(2), uniform_times(1.0, 5));
    Eigen::Matrix2d K;
    K << 10.0, -10.0, -10.0, 12.0;
    for (std::size_t k = 0; k < tr.t.size(); ++k) {
      Eigen::Vector2d ref = K.ldlt().solve(Eigen::Vector2d(4.0 * tr.t[k], 0.0));
      CHECK((tr.y[k] - ref).cwiseAbs().maxCoeff() < 1e-9);
    }
  }
}

TEST_CASE("stability certificate for an unstable state") {
  QuadraticRIS ris = single_spring(100.0, 25.0, 1.0, [](double t) { return 2.0 * t; });
  Eigen::VectorXd f = ris.load(1.0);
  StabilityReport bad = stability_check(ris, f, Eigen::VectorXd::Zero(2));
  CHECK_FALSE(bad.stable);
  REQUIRE(bad.certificate.size() == 2);
  // Moving along the certificate lowers E + Psi.
  double s = 1e-3;
  Eigen::VectorXd y = s * bad.certificate;
  CHECK(ris_energy(ris, f, y) + ris_dissipation(ris, y) < ris_energy(ris, f, Eigen::VectorXd::Zero(2)));
  CHECK_THROWS(evolve(ris, Eigen::Vector2d(1.0, 0.0), uniform_times(1.0, 4)));
  Eigen::VectorXd ok = stable_projection(ris, 1.0);
  StabilityReport good = stability_check(ris, f, ok);
  CHECK(good.stable);
  CHECK(good.kkt_residual < 1e-9);
  CHECK(good.probes > 16);
}

TEST_CASE("energy and dissipation structure") {
  SpacePtr s = make_torus_space({2});
  ElastoPlasticSpec spec;
  spec.grid = Grid::box_domain(0.125, {0.0}, {1.0}, {{1}});
  spec.space = s;
  spec.integrand = two_phase_intro(s, kChain, 1.0, 4.0);
  spec.yield = constant_rv(s, 1, 0.03);
  spec.load = kCosineLoad;
  spec.gamma = 0.5;
  spec.gradient_modulus = constant_rv(s, 1, 0.01);
  LatticeRIS L = assemble_lattice_ris(spec);
  const QuadraticRIS& ris = L.ris;
  CHECK(ris.nu == 2 * L.ndom);
  CHECK(ris.nz == 2 * L.nhalo);
  Eigen::VectorXd y = random_vector(ris.size(), 3), v = random_vector(ris.size(), 4);
  Eigen::VectorXd f = ris.load(0.4);
  // Psi is positively 1-homogeneous and even.
  CHECK(ris_dissipation(ris, 2.5 * v) == doctest::Approx(2.5 * ris_dissipation(ris, v)));
  CHECK(ris_dissipation(ris, -v) == doctest::Approx(ris_dissipation(ris, v)));
  // E(y + s v) = E(y) + s (K y - f) . v + s^2/2 v.K v.
  Eigen::VectorXd fy = Eigen::VectorXd::Zero(ris.size());
  fy.head(ris.nu) = f;
  Eigen::VectorXd Ky = ris.K * y, Kv = ris.K * v;
  for (double st : {0.3, -1.7}) {
    double lhs = ris_energy(ris, f, y + st * v);
    double rhs = ris_energy(ris, f, y) + st * (Ky - fy).dot(v) + 0.5 * st * st * v.dot(Kv);
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
  }
  // Site-by-site evaluation and the unfolded integral agree with the matrix form.
  EnergyPair e = lattice_energy(L, 0.4, y);
  CHECK(e.residual < 1e-10);
  CHECK(e.lattice == doctest::Approx(ris_energy(ris, f, y)).epsilon(1e-12));
  CHECK(coercivity_estimate(ris) > 0.0);
}

TEST_CASE("two-dimensional lattice assembly matches the site-by-site energy") {
  LatticeGraph g({{1, 0}, {0, 1}, {1, 1}});
  SpacePtr s = make_torus_space({2, 2});
  ElastoPlasticSpec spec;
  spec.grid = Grid::box_domain(0.25, {0.0, 0.0}, {1.0, 1.0}, g.generators());
  spec.graph = g;
  spec.space = s;
  spec.integrand = two_phase_intro(s, g, 1.0, 3.0);
  spec.yield = constant_rv(s, 3, 0.1);
  spec.load = [](double t, const double* x, double* out) {
    out[0] = t * std::sin(3.0 * x[0]);
    out[1] = t * x[1];
  };
  LatticeRIS L = assemble_lattice_ris(spec);
  Eigen::VectorXd y = random_vector(L.ris.size(), 9);
  EnergyPair e = lattice_energy(L, 0.7, y);
  CHECK(e.residual < 1e-10);
  CHECK(e.lattice == doctest::Approx(ris_energy(L.ris, L.ris.load(0.7), y)).epsilon(1e-12));
  Eigen::MatrixXd K(L.ris.K);
  CHECK((K - K.transpose()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("constant coefficients: two-scale limit equals the deterministic lattice run") {
  const double h = 0.0625;
  SpacePtr torus = make_torus_space({2}), single = make_torus_space({1});
  TwoScaleLimitSpec ls;
  ls.grid = Grid::box_domain(h, {0.0}, {1.0}, {{1}});
  ls.space = torus;
  ls.integrand = two_phase_intro(torus, kChain, 2.0, 2.0);
  ls.yield = constant_rv(torus, 1, 0.03);
  ls.load = kCosineLoad;
  TwoScaleLimitRIS lim = assemble_two_scale_limit(ls);
  ElastoPlasticSpec es;
  es.grid = ls.grid;
  es.space = single;
  es.integrand = two_phase_intro(single, kChain, 2.0, 2.0);
  es.yield = constant_rv(single, 1, 0.03);
  es.load = kCosineLoad;
  LatticeRIS lat = assemble_lattice_ris(es);
  std::vector<double> times = uniform_times(1.0, 50);
  Trajectory a = evolve(lim.ris, Eigen::VectorXd::Zero(lim.ris.size()), times);
  Trajectory b = evolve(lat.ris, Eigen::VectorXd::Zero(lat.ris.size()), times);
  for (std::size_t k = 0; k < times.size(); k += 10) {
    LatticeFunction U = lim.U_of(a.y[k]);
    RandomField u = lat.u_of(b.y[k]);
    RandomField Z = lim.Z_of(a.y[k]), z = lat.z_of(b.y[k]);
    for (int site = 0; site < ls.grid->num_sites(); ++site) {
      CHECK(std::abs(U.at(site, 0) - u.at(0, site, 0)) < 1e-7);
      for (int w = 0; w < 2; ++w) CHECK(std::abs(Z.at(w, site, 0) - z.at(0, site, 0)) < 1e-7);
    }
    RandomField chi = lim.chi_of(a.y[k]);
    for (double c : chi.values) CHECK(std::abs(c) < 1e-7);
    CHECK(a.energy[k] == doctest::Approx(b.energy[k]).epsilon(1e-7));
  }
}

TEST_CASE("symmetric sweeps reach the same states") {
  SpacePtr s = make_torus_space({2});
  ElastoPlasticSpec spec;
  spec.grid = Grid::box_domain(0.0625, {0.0}, {1.0}, {{1}});
  spec.space = s;
  spec.integrand = two_phase_intro(s, kChain, 1.0, 4.0);
  spec.yield = constant_rv(s, 1, 0.03);
  spec.load = kCosineLoad;
  LatticeRIS L = assemble_lattice_ris(spec);
  StepParams sym;
  sym.symmetric = true;
  std::vector<double> times = uniform_times(1.0, 40);
  Trajectory a = evolve(L.ris, Eigen::VectorXd::Zero(L.ris.size()), times);
  Trajectory b = evolve(L.ris, Eigen::VectorXd::Zero(L.ris.size()), times, sym);
  for (std::size_t k = 0; k < times.size(); ++k) CHECK((a.y[k] - b.y[k]).cwiseAbs().maxCoeff() < 1e-7);
  for (std::size_t k = 1; k < times.size(); ++k) CHECK(a.dissipation[k] >= a.dissipation[k - 1]);
  CHECK(a.lip_ok);
  CHECK(b.lip_ok);
}

TEST_CASE("evolution study against the two-scale limit") {
  EvolutionStudy st = run_evolution_study(study_config(false));
  REQUIRE(st.rows.size() == 9);
  CHECK_FALSE(st.deterministic_limit);
  const double frozen_u[9] = {0.0018570731191601864, 0.0029645721432873962, 0.0012596329053725203,
                              0.0010018963067778761, 0.001616982921558792,  0.00050028841359689002,
                              0.00023550904503402337, 0.00033306008376825171, 6.4586624581009518e-12};
  for (int i = 0; i < 9; ++i) {
    const EvolutionStudyRow& r = st.rows[i];
    CHECK(r.error_u == doctest::Approx(frozen_u[i]).epsilon(1e-5));
    CHECK(r.kkt < 1e-9);
    CHECK(r.balance < 1e-4);
    CHECK(r.lip_ok);
    if (i >= 3) {
      CHECK(r.error_u < st.rows[i - 3].error_u);
      CHECK(r.error_z < st.rows[i - 3].error_z);
    }
  }
  // The finest lattice coincides with the reference grid.
  CHECK(st.rows[8].error_z < 1e-12);
  CHECK(evolution_study_to_csv(st).rfind("eps,t,error_u,error_z,error_grad,grad_z_norm,balance,kkt,lipschitz_ok", 0) ==
        0);
}

TEST_CASE("gradient plasticity study against the deterministic limit") {
  EvolutionStudy st = run_evolution_study(study_config(true));
  REQUIRE(st.rows.size() == 9);
  CHECK(st.deterministic_limit);
  CHECK(st.A_hom.rows() == 2);
  const double frozen_grad[3] = {0.041226885532573379, 0.031395834927873296, 0.024252943583469452};
  for (int i = 0; i < 3; ++i) CHECK(st.rows[3 * i].grad_z_norm == doctest::Approx(frozen_grad[i]).epsilon(1e-5));
  for (int i = 3; i < 9; ++i) {
    CHECK(st.rows[i].grad_z_norm < st.rows[i - 3].grad_z_norm);
    CHECK(st.rows[i].error_u < st.rows[i - 3].error_u);
    CHECK(st.rows[i].error_z < st.rows[i - 3].error_z);
  }
}
