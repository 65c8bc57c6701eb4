#include "stochunfold/identities.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>

#include "json.hpp"
#include "stochunfold/unfolding.hpp"

namespace su {

namespace {

// Torus of the requested size with relabeled samples.
SpacePtr random_space(int d, int size, std::mt19937_64& rng) {
  std::vector<int> N(d, 1);
  if (size == 2) {
    N[rng() % d] = 2;
  } else if (size == 6) {
    if (d == 1) {
      N[0] = 6;
    } else {
      bool flip = rng() % 2;
      N[0] = flip ? 2 : 3;
      N[1] = flip ? 3 : 2;
    }
  }
  SpacePtr torus = make_torus_space(N);
  const int m = torus->num_samples();
  std::vector<int> perm(m), inv(m);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  for (int w = 0; w < m; ++w) inv[perm[w]] = w;
  std::vector<std::vector<int>> shifts(d, std::vector<int>(m));
  for (int i = 0; i < d; ++i)
    for (int w = 0; w < m; ++w) shifts[i][w] = perm[torus->shift(i)[inv[w]]];
  return std::make_shared<const ProbabilitySpace>(d, torus->weights(), shifts);
}

GridPtr random_grid(const ProbabilitySpace& sp, double eps, bool periodic, std::mt19937_64& rng) {
  const int d = sp.dim();
  std::vector<int> origin(d), ext(d);
  for (int i = 0; i < d; ++i) {
    origin[i] = static_cast<int>(rng() % 7) - 3;
    int base = static_cast<int>(sp.order(i));
    ext[i] = periodic ? base * (1 + static_cast<int>(rng() % (d == 1 ? 3 : 2))) : 2 + static_cast<int>(rng() % 4);
  }
  return Grid::window(eps, origin, ext);
}

void fill(std::vector<double>& v, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  for (double& x : v) x = U(rng);
}

}  // namespace

std::vector<IdentityCheck> run_identity_suite(std::uint64_t seed, int repeats, double tol) {
  std::mt19937_64 rng(seed);
  std::vector<std::string> names = {"unfold_isometry",      "fold_contraction",      "fold_unfold_identity",
                                    "unfold_fold_average",  "unfold_fold_adjoint",   "discrete_integration_by_parts",
                                    "horizontal_integration_by_parts", "commutator",  "invariant_projection",
                                    "transformation_quadratic", "transformation_quartic"};
  std::map<std::string, IdentityCheck> acc;
  for (const auto& n : names) acc[n] = IdentityCheck{n, 0.0, tol, 0, true};
  auto record = [&](const std::string& n, double r) {
    auto& c = acc[n];
    c.residual = std::max(c.residual, std::isnan(r) ? std::numeric_limits<double>::infinity() : r);
    ++c.instances;
  };
  for (int d : {1, 2})
    for (int size : {1, 2, 6})
      for (double eps : {1.0, 0.5, 0.25})
        for (int rep = 0; rep < repeats; ++rep) {
          SpacePtr sp = random_space(d, size, rng);
          const bool periodic = rep % 2 == 0;
          const Boundary bc = periodic ? Boundary::periodic : Boundary::zero_extension;
          GridPtr grid = random_grid(*sp, eps, periodic, rng);
          const int m = sp->num_samples(), ns = grid->num_sites();
          const int n = 1 + static_cast<int>(rng() % 2);
          RandomField u(sp, grid, n, bc);
          fill(u.values, rng);

          RandomField tu = unfold(u);
          const double nu = norm(u), ntu = norm(tu);
          record("unfold_isometry", std::abs(ntu * ntu - nu * nu));

          // Cellwise affine two-scale function V = alpha + beta (x_0 - x_cell) / eps.
          std::vector<double> alpha(static_cast<std::size_t>(m) * ns * n), beta(alpha.size());
          fill(alpha, rng);
          fill(beta, rng);
          auto V = [&](int w, const double* x, double* out) {
            int s = cell_of(*grid, x, bc);
            double t = (x[0] - grid->position(s)[0]) / eps;
            for (int c = 0; c < n; ++c) {
              std::size_t i = (static_cast<std::size_t>(w) * ns + s) * n + c;
              out[c] = alpha[i] + beta[i] * t;
            }
          };
          RandomField fv = fold(V, sp, grid, n, bc, 2);
          double vnorm2 = 0.0, pair = 0.0;
          for (int w = 0; w < m; ++w)
            for (int s = 0; s < ns; ++s)
              for (int c = 0; c < n; ++c) {
                std::size_t i = (static_cast<std::size_t>(w) * ns + s) * n + c;
                vnorm2 += sp->weight(w) * grid->cell_volume() * (alpha[i] * alpha[i] + beta[i] * beta[i] / 12.0);
                pair += sp->weight(w) * grid->cell_volume() * tu.at(w, s, c) * alpha[i];
              }
          record("fold_contraction", std::max(0.0, norm(fv) - std::sqrt(vnorm2)));
          record("unfold_fold_adjoint", std::abs(pair - inner(u, fv)));
          RandomField tfv = unfold(fv);
          double worst = 0.0;
          for (int w = 0; w < m; ++w)
            for (int s = 0; s < ns; ++s)
              for (int c = 0; c < n; ++c)
                worst = std::max(worst, std::abs(tfv.at(w, s, c) - alpha[(static_cast<std::size_t>(w) * ns + s) * n + c]));
          record("unfold_fold_average", worst);

          RandomField back = fold(
              [&](int w, const double* x, double* out) {
                int s = cell_of(*grid, x, bc);
                for (int c = 0; c < n; ++c) out[c] = tu.at(w, s, c);
              },
              sp, grid, n, bc, 1);
          worst = 0.0;
          for (std::size_t i = 0; i < u.values.size(); ++i) worst = std::max(worst, std::abs(back.values[i] - u.values[i]));
          record("fold_unfold_identity", worst);

          LatticeFunction lu = u.slice(0);
          LatticeFunction g(grid, n * d, bc);
          fill(g.values, rng);
          record("discrete_integration_by_parts",
                 std::abs(inner(discrete_gradient(lu), g) - inner(lu, discrete_divergence(g))));

          RandomVariable phi(sp, n), psi(sp, n * d);
          fill(phi.values, rng);
          fill(psi.values, rng);
          record("horizontal_integration_by_parts",
                 std::abs(expect_inner(horizontal_derivative(phi), psi) - expect_inner(phi, horizontal_divergence(psi))));

          record("commutator", commutator_residual(u));

          worst = 0.0;
          for (int s = 0; s < ns; ++s) {
            RandomVariable a(sp, n), b(sp, n);
            for (int w = 0; w < m; ++w)
              for (int c = 0; c < n; ++c) {
                a.at(w, c) = u.at(w, s, c);
                b.at(w, c) = tu.at(w, s, c);
              }
            RandomVariable pa = project_invariant(a), pb = project_invariant(b);
            for (std::size_t i = 0; i < pa.values.size(); ++i)
              worst = std::max(worst, std::abs(pa.values[i] - pb.values[i]));
          }
          record("invariant_projection", worst);

          std::vector<double> Q(static_cast<std::size_t>(m) * n * n);
          fill(Q, rng);
          EnergyPair quad = transform_energy(
              [&](int w, const double* F) {
                double e = 0.0;
                for (int a = 0; a < n; ++a)
                  for (int b = 0; b < n; ++b) e += 0.5 * Q[(static_cast<std::size_t>(w) * n + a) * n + b] * F[a] * F[b];
                return e;
              },
              u);
          record("transformation_quadratic", quad.residual);
          EnergyPair quart = transform_energy(
              [&](int w, const double* F) {
                double s2 = 0.0;
                for (int a = 0; a < n; ++a) s2 += F[a] * F[a];
                return (1.0 + 0.5 * Q[static_cast<std::size_t>(w) * n * n]) * s2 * s2;
              },
              u);
          record("transformation_quartic", quart.residual);
        }
  std::vector<IdentityCheck> out;
  for (const auto& n : names) {
    IdentityCheck c = acc[n];
    c.passed = c.residual < c.tolerance;
    out.push_back(c);
  }
  return out;
}

std::string identities_to_json(const std::vector<IdentityCheck>& checks) {
  nlohmann::ordered_json j = nlohmann::ordered_json::array();
  for (const auto& c : checks)
    j.push_back({{"name", c.name}, {"residual", c.residual}, {"tolerance", c.tolerance},
                 {"instances", c.instances}, {"passed", c.passed}});
  return j.dump(2);
}

}  // namespace su
