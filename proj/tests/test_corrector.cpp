#include <Eigen/Dense>
#include <cmath>
#include <random>

#include "doctest.h"
#include "stochunfold/corrector.hpp"

using namespace su;

namespace {

const std::vector<std::vector<int>> kTriangular = {{1, 0}, {0, 1}, {1, 1}};

QuadraticIntegrand two_phase() {
  SpacePtr s = make_torus_space({2});
  RandomVariable a(s, 1);
  a.at(0, 0) = 1.0;
  a.at(1, 0) = 4.0;
  return make_diagonal(a);
}

/// Random SPD (k+m)x(k+m) matrices per sample.
QuadraticIntegrand random_spd(SpacePtr s, int k, int m, std::uint64_t seed) {
  const int K = k + m;
  RandomVariable A(s, K * K);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> N;
  for (int w = 0; w < s->num_samples(); ++w) {
    Eigen::MatrixXd B(K, K);
    for (int i = 0; i < K; ++i)
      for (int j = 0; j < K; ++j) B(i, j) = N(rng);
    Eigen::MatrixXd M = B * B.transpose() + 0.5 * Eigen::MatrixXd::Identity(K, K);
    for (int i = 0; i < K; ++i)
      for (int j = 0; j < K; ++j) A.at(w, i * K + j) = M(i, j);
  }
  return make_quadratic(A, k, m);
}

/// Homogenized tensor by direct minimization over phi in R^{m d}: the strain of
/// edge b is b . (phi(T_b w) - phi(w)) / |b|^2, the passive slots see no corrector.
Eigen::MatrixXd brute_force_A_hom(const ProbabilitySpace& s, const LatticeGraph& g, const QuadraticIntegrand& I) {
  const int m = s.num_samples(), d = s.dim(), k = g.num_edges(), K = I.size();
  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(m * d, m * d);
  Eigen::MatrixXd G = Eigen::MatrixXd::Zero(m * d, K);
  Eigen::MatrixXd mean = Eigen::MatrixXd::Zero(K, K);
  for (int w = 0; w < m; ++w) {
    Eigen::MatrixXd M = Eigen::MatrixXd::Zero(K, m * d);
    for (int e = 0; e < k; ++e) {
      const auto& b = g.generator(e);
      double l2 = 0.0;
      for (int x : b) l2 += double(x) * x;
      int wb = s.shift_by(w, b.data());
      for (int c = 0; c < d; ++c) {
        M(e, wb * d + c) += b[c] / l2;
        M(e, w * d + c) -= b[c] / l2;
      }
    }
    Eigen::MatrixXd A = I.matrix(w);
    H += s.weight(w) * M.transpose() * A * M;
    G += s.weight(w) * M.transpose() * A;
    mean += s.weight(w) * A;
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(H, Eigen::ComputeFullU | Eigen::ComputeFullV);
  svd.setThreshold(1e-12);
  return mean - G.transpose() * svd.solve(G);
}

}  // namespace

TEST_CASE("two-phase laminate gives the harmonic mean") {
  QuadraticIntegrand I = two_phase();
  CorrectorSetup setup = corrector_setup(I.A.space, LatticeGraph(std::vector<std::vector<int>>{{1}}));
  HomogenizedTensor t = assemble_homogenized_tensor(setup, I);
  CHECK(t.A_hom(0, 0) == doctest::Approx(1.6).epsilon(1e-10));
  CHECK(t.schur_defect < 1e-12);
  CHECK(t.max_kkt < 1e-9);
  CorrectorSolution sol = solve_corrector(setup, I, {1.0});
  // Constant flux a (1 + chi_s) = 1.6 in both phases.
  for (int w = 0; w < 2; ++w) CHECK(I.A.at(w, 0) * (1.0 + sol.chi_s.at(w, 0)) == doctest::Approx(1.6));
  CHECK(tensor_to_json(t).find("\"A_hom\"") != std::string::npos);
}

TEST_CASE("constant coefficients need no corrector") {
  SpacePtr s = make_torus_space({2, 3});
  RandomVariable A(s, 9);
  const double M[9] = {3.0, 0.5, 0.2, 0.5, 2.0, -0.1, 0.2, -0.1, 1.5};
  for (int w = 0; w < 6; ++w)
    for (int c = 0; c < 9; ++c) A.at(w, c) = M[c];
  QuadraticIntegrand I = make_quadratic(A, 3);
  CorrectorSetup setup = corrector_setup(s, LatticeGraph(kTriangular));
  HomogenizedTensor t = assemble_homogenized_tensor(setup, I);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) CHECK(t.A_hom(i, j) == doctest::Approx(M[i * 3 + j]).epsilon(1e-10));
  CorrectorSolution sol = solve_corrector(setup, I, {1.0, -2.0, 0.5});
  for (double v : sol.chi.values) CHECK(std::abs(v) < 1e-10);
}

TEST_CASE("pot-basis corrector equals brute-force minimization") {
  for (int trial = 0; trial < 3; ++trial) {
    SpacePtr s = trial == 2 ? disjoint_union(*make_torus_space({2, 1}), *make_torus_space({1, 3}), 0.4)
                            : make_torus_space({3, 2});
    const int m = trial == 1 ? 1 : 0;
    QuadraticIntegrand I = random_spd(s, 3, m, 40 + trial);
    LatticeGraph g(kTriangular);
    for (PotMethod method : {PotMethod::svd, PotMethod::qr}) {
      HomogenizedTensor t = assemble_homogenized_tensor(corrector_setup(s, g, method), I);
      Eigen::MatrixXd ref = brute_force_A_hom(*s, g, I);
      CHECK((t.A_hom - ref).cwiseAbs().maxCoeff() < 1e-9);
      CHECK(t.min_eigenvalue > 0.0);
    }
  }
}

TEST_CASE("convex solver agrees with the quadratic solver") {
  SpacePtr s = make_torus_space({3, 2});
  QuadraticIntegrand Q = random_spd(s, 3, 0, 7);
  CorrectorSetup setup = corrector_setup(s, LatticeGraph(kTriangular));
  ConvexIntegrand C;
  C.k = 3;
  C.value = [&](int w, const double* G) { return Q.value(w, G); };
  C.gradient = [&](int w, const double* G, double* out) {
    Eigen::Map<const Eigen::VectorXd> g(G, 3);
    Eigen::VectorXd r = Q.matrix(w) * g;
    for (int i = 0; i < 3; ++i) out[i] = r(i);
  };
  C.growth_c = 0.1;
  C.growth_C = 10.0;
  std::vector<double> probe = {0.4, -1.0, 0.3};
  CorrectorSolution a = solve_corrector(setup, Q, probe);
  CorrectorSolution b = solve_corrector(setup, C, probe);
  CHECK(b.value == doctest::Approx(a.value).epsilon(1e-9));
  for (std::size_t j = 0; j < a.chi_s.values.size(); ++j)
    CHECK(b.chi_s.values[j] == doctest::Approx(a.chi_s.values[j]).epsilon(1e-6));
}

TEST_CASE("variational bounds") {
  SpacePtr s = make_torus_space({5});
  RandomVariable a(s, 1);
  double mean = 0.0, harmonic = 0.0;
  for (int w = 0; w < 5; ++w) {
    a.at(w, 0) = 1.0 + w * w;
    mean += a.at(w, 0) / 5.0;
    harmonic += 1.0 / a.at(w, 0) / 5.0;
  }
  QuadraticIntegrand I = make_diagonal(a);
  HomogenizedTensor t = assemble_homogenized_tensor(corrector_setup(s, LatticeGraph(std::vector<std::vector<int>>{{1}})), I);
  CHECK(t.A_hom(0, 0) <= mean);
  CHECK(t.A_hom(0, 0) == doctest::Approx(1.0 / harmonic).epsilon(1e-10));
}

TEST_CASE("coercivity is enforced") {
  SpacePtr s = make_torus_space({2});
  RandomVariable a(s, 1);
  a.at(0, 0) = 1.0;
  a.at(1, 0) = 0.0;
  CHECK_THROWS_AS(coercivity_constant(make_diagonal(a)), CoercivityError);
  a.at(1, 0) = 0.5;
  CHECK(coercivity_constant(make_diagonal(a)) == doctest::Approx(0.5));
  RandomVariable bad(s, 4);
  bad.values = {1, 2, 0, 1, 1, 0, 0, 1};
  CHECK_THROWS_AS(make_quadratic(bad, 2), InvalidArgument);
}

TEST_CASE("Birkhoff averages converge to the expectation") {
  SpacePtr s = make_torus_space({4});
  RandomVariable phi(s, 1);
  for (int w = 0; w < 4; ++w) phi.at(w, 0) = w;
  auto avg = birkhoff_average(phi, {1, 2, 4, 8});
  REQUIRE(avg.size() == 4);
  for (int w = 0; w < 4; ++w) {
    CHECK(avg[0][w] == doctest::Approx(w));
    CHECK(avg[2][w] == doctest::Approx(1.5));
    CHECK(avg[3][w] == doctest::Approx(1.5));
  }
  CHECK_THROWS_AS(birkhoff_average(phi, {0}), InvalidArgument);
}
