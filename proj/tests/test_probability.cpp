#include <cmath>
#include <random>

#include "doctest.h"
#include "stochunfold/probability.hpp"

using namespace su;

namespace {

RandomVariable random_variable(SpacePtr s, int ncomp, std::uint64_t seed) {
  RandomVariable v(s, ncomp);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> N;
  for (double& x : v.values) x = N(rng);
  return v;
}

}  // namespace

TEST_CASE("torus shifts commute and have the expected orders") {
  SpacePtr s = make_torus_space({3, 4});
  CHECK(s->num_samples() == 12);
  CHECK(s->order(0) == 3);
  CHECK(s->order(1) == 4);
  CHECK(s->ergodic());
  CHECK(s->num_orbits() == 1);
  for (int w = 0; w < 12; ++w) {
    int a = s->shift_power(s->shift_power(w, 0, 1), 1, 1);
    int b = s->shift_power(s->shift_power(w, 1, 1), 0, 1);
    CHECK(a == b);
    CHECK(s->shift_power(w, 0, -7) == s->shift_power(w, 0, 2));
    int z[2] = {5, -3};
    CHECK(s->shift_by_neg(s->shift_by(w, z), z) == w);
    std::vector<int> c = torus_coords(*s, w), cz = torus_coords(*s, s->shift_by(w, z));
    CHECK(cz[0] == (c[0] + 5) % 3);
    CHECK(cz[1] == ((c[1] - 3) % 4 + 4) % 4);
  }
}

TEST_CASE("invalid spaces are rejected") {
  CHECK_THROWS_AS(ProbabilitySpace(1, {0.5, 0.6}, {{1, 0}}), InvalidArgument);
  CHECK_THROWS_AS(ProbabilitySpace(1, {0.5, 0.5}, {{0, 0}}), InvalidArgument);
  CHECK_THROWS_AS(ProbabilitySpace(1, {-0.5, 1.5}, {{1, 0}}), InvalidArgument);
  // Shifts must preserve the measure.
  CHECK_THROWS_AS(ProbabilitySpace(1, {0.25, 0.75}, {{1, 0}}), InvalidArgument);
  // Shifts must commute.
  CHECK_THROWS_AS(ProbabilitySpace(2, {1.0 / 3, 1.0 / 3, 1.0 / 3}, {{1, 0, 2}, {0, 2, 1}}), InvalidArgument);
}

TEST_CASE("disjoint union is not ergodic") {
  SpacePtr a = make_torus_space({2}), b = make_torus_space({3});
  SpacePtr u = disjoint_union(*a, *b, 0.4);
  CHECK(u->num_samples() == 5);
  CHECK(u->num_orbits() == 2);
  CHECK_FALSE(u->ergodic());
  CHECK(u->weight(0) == doctest::Approx(0.2));
  CHECK(u->weight(4) == doctest::Approx(0.2));
}

TEST_CASE("horizontal derivative and divergence are adjoint") {
  for (SpacePtr s : {make_torus_space({5}), make_torus_space({2, 3}),
                     disjoint_union(*make_torus_space({2, 2}), *make_torus_space({1, 3}), 0.3)}) {
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
      RandomVariable phi = random_variable(s, 2, seed);
      RandomVariable psi = random_variable(s, 2 * s->dim(), seed + 10);
      CHECK(std::abs(expect_inner(horizontal_derivative(phi), psi) -
                     expect_inner(phi, horizontal_divergence(psi))) < 1e-13);
    }
  }
}

TEST_CASE("invariant projection is idempotent and kills D") {
  SpacePtr s = disjoint_union(*make_torus_space({2, 2}), *make_torus_space({1, 3}), 0.3);
  RandomVariable phi = random_variable(s, 3, 4);
  RandomVariable p = project_invariant(phi), pp = project_invariant(p);
  for (std::size_t i = 0; i < p.values.size(); ++i) CHECK(pp.values[i] == doctest::Approx(p.values[i]));
  RandomVariable dp = horizontal_derivative(p);
  for (double v : dp.values) CHECK(std::abs(v) < 1e-14);
  // Orthogonal projection: the residual is orthogonal to invariant functions.
  RandomVariable r = phi;
  for (std::size_t i = 0; i < r.values.size(); ++i) r.values[i] -= p.values[i];
  CHECK(std::abs(expect_inner(r, p)) < 1e-13);
}

TEST_CASE("pot basis dimension, orthonormality and range") {
  struct Case {
    SpacePtr s;
    int ncomp;
    int expected;
  };
  std::vector<Case> cases = {{make_torus_space({2, 2}), 2, 6},
                             {make_torus_space({4}), 1, 3},
                             {make_torus_space({1}), 2, 0},
                             {disjoint_union(*make_torus_space({2}), *make_torus_space({3}), 0.5), 1, 3}};
  for (const Case& c : cases) {
    PotBasis svd = pot_basis(*c.s, c.ncomp, PotMethod::svd);
    PotBasis qr = pot_basis(*c.s, c.ncomp, PotMethod::qr);
    CHECK(svd.size() == c.expected);
    CHECK(qr.size() == c.expected);
    if (c.expected == 0) continue;
    int rows = static_cast<int>(svd.Q.rows());
    Eigen::VectorXd Pw(rows);
    int per = rows / c.s->num_samples();
    for (int w = 0; w < c.s->num_samples(); ++w) Pw.segment(w * per, per).setConstant(c.s->weight(w));
    Eigen::MatrixXd G = svd.Q.transpose() * Pw.asDiagonal() * svd.Q;
    CHECK((G - Eigen::MatrixXd::Identity(c.expected, c.expected)).cwiseAbs().maxCoeff() < 1e-12);
    // Orthogonal projectors onto ran D agree between the two routes.
    Eigen::MatrixXd Ps = svd.Q * svd.Q.transpose() * Pw.asDiagonal();
    Eigen::MatrixXd Pq = qr.Q * qr.Q.transpose() * Pw.asDiagonal();
    CHECK((Ps - Pq).cwiseAbs().maxCoeff() < 1e-10);
    // Every column is orthogonal to the kernel of D*: D* of a column is zero only if the column is zero,
    // and D phi lies in the span.
    RandomVariable phi = random_variable(c.s, c.ncomp, 21);
    RandomVariable dphi = horizontal_derivative(phi);
    Eigen::Map<const Eigen::VectorXd> v(dphi.values.data(), rows);
    Eigen::VectorXd proj = Ps * v;
    CHECK((proj - v).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("periodic windows must fit the shift orders") {
  SpacePtr s = make_torus_space({3});
  CHECK_NOTHROW(check_compatible(*s, *Grid::window(0.25, {0}, {6}), Boundary::periodic));
  CHECK_THROWS_AS(check_compatible(*s, *Grid::window(0.25, {0}, {8}), Boundary::periodic), IncompatibleEpsilon);
  CHECK_NOTHROW(check_compatible(*s, *Grid::window(0.25, {0}, {8}), Boundary::zero_extension));
}

TEST_CASE("stationary extension follows the shift") {
  SpacePtr s = make_torus_space({3, 2});
  RandomVariable phi = random_variable(s, 1, 3);
  GridPtr g = Grid::window(0.5, {1, -1}, {3, 2});
  RandomField f = stationary_extension(phi, g, Boundary::periodic);
  for (int w = 0; w < s->num_samples(); ++w)
    for (int site = 0; site < g->num_sites(); ++site) {
      std::vector<int> z = g->coords(site);
      CHECK(f.at(w, site, 0) == phi.at(s->shift_by(w, z.data()), 0));
    }
}

TEST_CASE("space JSON round trip preserves the hash") {
  SpacePtr s = disjoint_union(*make_torus_space({2}), *make_torus_space({3}), 0.25);
  SpacePtr r = space_from_json(space_to_json(*s));
  CHECK(r->hash() == s->hash());
  CHECK(r->weights() == s->weights());
  CHECK(make_torus_space({2})->hash() != make_torus_space({3})->hash());
  CHECK_THROWS(space_from_json("{\"dim\": 1}"));
}

TEST_CASE("i.i.d. periodization is deterministic per seed") {
  auto marginal = [](std::mt19937_64& rng, double* out) {
    out[0] = std::uniform_real_distribution<double>(1.0, 4.0)(rng);
  };
  Periodization a = make_iid_periodization({3, 2}, 1, marginal, 7);
  Periodization b = make_iid_periodization({3, 2}, 1, marginal, 7);
  Periodization c = make_iid_periodization({3, 2}, 1, marginal, 8);
  CHECK(a.coefficient.values == b.coefficient.values);
  CHECK(a.coefficient.values != c.coefficient.values);
  for (double v : a.coefficient.values) CHECK((v >= 1.0 && v <= 4.0));
}

TEST_CASE("random field weights combine P and the lattice measure") {
  SpacePtr s = make_torus_space({2});
  GridPtr g = Grid::window(0.5, {0}, {2});
  RandomField u(s, g, 1, Boundary::periodic);
  for (double& v : u.values) v = 3.0;
  CHECK(norm(u) == doctest::Approx(3.0));
  CHECK(u.mean().values == std::vector<double>{3.0, 3.0});
}
