#include "stochunfold/statics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace su {

std::vector<int> domain_index(const Grid& g) {
  std::vector<int> idx(g.num_sites(), -1);
  int n = 0;
  for (int s = 0; s < g.num_sites(); ++s)
    if (g.in_domain(s)) idx[s] = n++;
  return idx;
}

void strain_stencil(const Grid& grid, const LatticeGraph& g, int s, int e, std::vector<StencilEntry>& out) {
  out.clear();
  const auto& b = g.generator(e);
  const double l2 = g.length(e) * g.length(e);
  int nb = grid.neighbor(s, b.data(), Boundary::zero_extension);
  for (int c = 0; c < g.dim(); ++c) {
    if (b[c] == 0) continue;
    double coef = b[c] / (grid.eps() * l2);
    if (nb >= 0) out.push_back({nb, c, coef});
    out.push_back({s, c, -coef});
  }
}

namespace {

int resolve_threads(int t) { return t > 0 ? t : default_threads(); }

}  // namespace

Eigen::SparseMatrix<double> static_hessian(const StaticProblem& p, int w) {
  const Grid& grid = *p.grid;
  const int d = grid.dim(), k = p.graph.num_edges();
  if (p.integrand.k != k || p.integrand.m != 0) throw InvalidArgument("static integrand must have k = #edges and m = 0");
  std::vector<int> idx = domain_index(grid);
  int ndom = 0;
  for (int v : idx) ndom += v >= 0;
  const double vol = grid.cell_volume();
  std::vector<Eigen::Triplet<double>> trip;
  std::vector<std::vector<StencilEntry>> st(k);
  std::vector<int> z(d);
  for (int s = 0; s < grid.num_sites(); ++s) {
    if (!grid.in_halo(s)) continue;
    grid.coords(s, z.data());
    int v = p.space->shift_by(w, z.data());
    const double* A = p.integrand.A.row(v);
    for (int e = 0; e < k; ++e) strain_stencil(grid, p.graph, s, e, st[e]);
    for (int e = 0; e < k; ++e)
      for (int f = 0; f < k; ++f) {
        double a = A[e * k + f];
        if (a == 0.0) continue;
        for (const auto& x : st[e]) {
          int ix = idx[x.site];
          if (ix < 0) continue;
          for (const auto& y : st[f]) {
            int iy = idx[y.site];
            if (iy < 0) continue;
            trip.emplace_back(ix * d + x.comp, iy * d + y.comp, vol * a * x.coeff * y.coeff);
          }
        }
      }
  }
  Eigen::SparseMatrix<double> H(ndom * d, ndom * d);
  H.setFromTriplets(trip.begin(), trip.end());
  return H;
}

RandomField strain_field(const RandomField& u, const LatticeGraph& g) {
  const Grid& grid = *u.grid;
  const int k = g.num_edges();
  if (u.ncomp != g.dim()) throw InvalidArgument("strain needs a d-vector field");
  RandomField out(u.space, u.grid, k, u.bc);
  std::vector<StencilEntry> st;
  for (int w = 0; w < u.space->num_samples(); ++w)
    for (int s = 0; s < grid.num_sites(); ++s)
      for (int e = 0; e < k; ++e) {
        strain_stencil(grid, g, s, e, st);
        double acc = 0.0;
        for (const auto& x : st) acc += x.coeff * u.at(w, x.site, x.comp);
        out.at(w, s, e) = acc;
      }
  return out;
}

RandomField load_from_continuum(const Field& l, SpacePtr space, GridPtr grid, int ncomp, int order) {
  LatticeFunction f = discretize(l, grid, ncomp, Boundary::zero_extension, order);
  RandomField out(space, grid, ncomp, Boundary::zero_extension);
  for (int w = 0; w < space->num_samples(); ++w)
    for (int s = 0; s < grid->num_sites(); ++s)
      if (grid->in_domain(s))
        for (int c = 0; c < ncomp; ++c) out.at(w, s, c) = f.at(s, c);
  return out;
}

EnergyPair static_energy(const StaticProblem& p, const RandomField& u) {
  RandomField strain = strain_field(u, p.graph);
  const QuadraticIntegrand& I = p.integrand;
  EnergyPair e = transform_energy([&](int w, const double* G) { return I.value(w, G); }, strain);
  double work = inner(p.load, u);
  e.lattice -= work;
  e.unfolded -= work;
  e.residual = std::abs(e.lattice - e.unfolded);
  return e;
}

StaticSolution solve_epsilon_problem(const StaticProblem& p, const CgParams& cg, const RandomField* initial,
                                     int threads) {
  const Grid& grid = *p.grid;
  const int d = grid.dim(), m = p.space->num_samples();
  if (p.load.ncomp != d) throw InvalidArgument("load must have d components");
  coercivity_constant(p.integrand);
  std::vector<int> idx = domain_index(grid);
  StaticSolution sol;
  sol.u = RandomField(p.space, p.grid, d, Boundary::zero_extension);
  std::vector<int> iters(m);
  std::vector<double> resid(m);
  const double vol = grid.cell_volume();
  parallel_for(m, resolve_threads(threads), [&](int w) {
    Eigen::SparseMatrix<double> H = static_hessian(p, w);
    const int n = static_cast<int>(H.rows());
    std::vector<double> b(n), x(n, 0.0);
    for (int s = 0; s < grid.num_sites(); ++s) {
      if (idx[s] < 0) continue;
      for (int c = 0; c < d; ++c) {
        b[idx[s] * d + c] = vol * p.load.at(w, s, c);
        if (initial) x[idx[s] * d + c] = initial->at(w, s, c);
      }
    }
    LinearOp A = [&](const std::vector<double>& in, std::vector<double>& out) {
      out.resize(n);
      Eigen::Map<const Eigen::VectorXd> xi(in.data(), n);
      Eigen::Map<Eigen::VectorXd> yo(out.data(), n);
      yo = H * xi;
    };
    CgResult r = conjugate_gradient(A, b, x, cg);
    iters[w] = r.iterations;
    std::vector<double> Hx(n);
    A(x, Hx);
    double worst = 0.0;
    for (int j = 0; j < n; ++j) worst = std::max(worst, std::abs(Hx[j] - b[j]) / vol);
    resid[w] = worst;
    for (int s = 0; s < grid.num_sites(); ++s)
      if (idx[s] >= 0)
        for (int c = 0; c < d; ++c) sol.u.at(w, s, c) = x[idx[s] * d + c];
  });
  sol.max_iterations = *std::max_element(iters.begin(), iters.end());
  sol.optimality_residual = *std::max_element(resid.begin(), resid.end());
  if (!(sol.optimality_residual < 1e-9))
    throw SolverError("static optimality residual above tolerance", sol.max_iterations, sol.optimality_residual);
  EnergyPair e = static_energy(p, sol.u);
  sol.energy = e.lattice;
  sol.energy_unfolded = e.unfolded;
  return sol;
}

StaticSolution solve_homogenized(GridPtr grid, const LatticeGraph& graph, const Eigen::MatrixXd& A_hom,
                                 const Field& load, int order) {
  const int d = grid->dim(), k = graph.num_edges();
  if (A_hom.rows() != k || A_hom.cols() != k) throw InvalidArgument("A_hom must be k x k");
  SpacePtr single = make_torus_space(std::vector<int>(d, 1));
  RandomVariable A(single, k * k);
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j) A.at(0, i * k + j) = 0.5 * (A_hom(i, j) + A_hom(j, i));
  StaticProblem p{grid, graph, single, make_quadratic(A, k, 0), load_from_continuum(load, single, grid, d, order)};
  return solve_epsilon_problem(p);
}

StaticStudy run_convergence_study(const StaticStudyConfig& cfg) {
  if (cfg.eps_list.empty()) throw InvalidArgument("empty eps list");
  const LatticeGraph& graph = cfg.graph;
  const int d = graph.dim(), k = graph.num_edges();
  StaticStudy study;
  CorrectorSetup setup = corrector_setup(cfg.space, graph);
  HomogenizedTensor T = assemble_homogenized_tensor(setup, cfg.integrand, cfg.threads);
  study.A_hom = T.A_hom;
  Eigen::MatrixXd X = corrector_matrix(setup, cfg.integrand);

  double h = cfg.reference_eps > 0.0 ? cfg.reference_eps : *std::min_element(cfg.eps_list.begin(), cfg.eps_list.end());
  study.reference_eps = h;
  GridPtr fine = Grid::box_domain(h, cfg.lower, cfg.upper, graph.generators());
  StaticSolution hom = solve_homogenized(fine, graph, T.A_hom, cfg.load, cfg.quadrature_order);
  study.U = hom.u.slice(0);
  study.energy_hom = hom.energy;
  LatticeFunction gradU = discrete_gradient(study.U);

  const int m = cfg.space->num_samples();
  const int r = setup.r();
  // chi(w; F) as d*d components for a full gradient F (row-major).
  auto chi_of = [&](int w, const double* F, double* out) {
    std::vector<double> Fv(F, F + d * d);
    std::vector<double> Fs = symmetrize_constant(Fv, graph);
    std::fill(out, out + d * d, 0.0);
    if (r == 0) return;
    Eigen::VectorXd a = X * Eigen::Map<Eigen::VectorXd>(Fs.data(), k);
    for (int j = 0; j < r; ++j)
      for (int q = 0; q < d * d; ++q) out[q] += setup.basis.Q(static_cast<Eigen::Index>(w) * d * d + q, j) * a(j);
  };

  for (double eps : cfg.eps_list) {
    StaticStudyRow row;
    row.eps = eps;
    GridPtr grid = Grid::box_domain(eps, cfg.lower, cfg.upper, graph.generators());
    StaticProblem p{grid, graph, cfg.space, cfg.integrand,
                    load_from_continuum(cfg.load, cfg.space, grid, d, cfg.quadrature_order)};
    StaticSolution sol = solve_epsilon_problem(p, {1e-12, 0, true}, nullptr, cfg.threads);
    row.energy = sol.energy;
    row.energy_unfolded = sol.energy_unfolded;
    row.iterations = sol.max_iterations;
    row.optimality_residual = sol.optimality_residual;
    row.energy_hom = study.energy_hom;
    row.gap_lower = sol.energy - study.energy_hom;

    row.strong_error_u = pc_distance(sol.u, *fine, [&](int, int t, double* out) {
      for (int c = 0; c < d; ++c) out[c] = study.U.at(t, c);
    });
    TwoScaleDistance aff = two_scale_distance(
        sol.u,
        [&](int, const double* x, double* out) {
          std::vector<double> pt(x, x + d);
          std::vector<double> v = piecewise_affine(study.U, pt);
          for (int c = 0; c < d; ++c) out[c] = v[c];
        },
        {}, {}, 6);
    row.strong_error_u_affine = aff.strong_error;

    RandomField gu(cfg.space, grid, d * d, Boundary::zero_extension);
    for (int w = 0; w < m; ++w) gradient_raw(*grid, Boundary::zero_extension, d, sol.u.sample(w), gu.sample(w));
    std::vector<double> chi_buf(d * d);
    row.strong_error_grad = pc_distance(gu, *fine, [&](int w, int t, double* out) {
      chi_of(w, &gradU.values[static_cast<std::size_t>(t) * d * d], chi_buf.data());
      for (int q = 0; q < d * d; ++q) out[q] = gradU.at(t, q) + chi_buf[q];
    });

    SpacePtr single = make_torus_space(std::vector<int>(d, 1));
    RandomField mean(single, grid, d, Boundary::zero_extension);
    LatticeFunction mu = sol.u.mean();
    std::copy(mu.values.begin(), mu.values.end(), mean.values.begin());
    row.mean_error = pc_distance(mean, *fine, [&](int, int t, double* out) {
      for (int c = 0; c < d; ++c) out[c] = study.U.at(t, c);
    });

    // Recovery sequence on the domain: grad* grad u = grad*(grad F U + F chi).
    LatticeFunction FU = pc_transfer(study.U, grid, Boundary::zero_extension);
    LatticeFunction Fgrad = pc_transfer(gradU, grid, Boundary::zero_extension);
    RandomField fu(cfg.space, grid, d, Boundary::zero_extension), fchi(cfg.space, grid, d * d, Boundary::zero_extension);
    std::vector<int> z(d);
    for (int s = 0; s < grid->num_sites(); ++s) {
      grid->coords(s, z.data());
      for (int w = 0; w < m; ++w) {
        for (int c = 0; c < d; ++c) fu.at(w, s, c) = FU.at(s, c);
        chi_of(cfg.space->shift_by(w, z.data()), &Fgrad.values[static_cast<std::size_t>(s) * d * d],
               &fchi.values[fchi.index(w, s, 0)]);
      }
    }
    RecoveryResult rec = recovery_dirichlet(fu, fchi, {1e-12, 0, true}, cfg.threads);
    row.energy_recovery = static_energy(p, rec.u).lattice;
    row.gap_recovery = std::abs(row.energy_recovery - study.energy_hom);
    study.rows.push_back(row);
  }
  return study;
}

std::string study_to_csv(const StaticStudy& s) {
  std::ostringstream os;
  os << "eps,energy,energy_unfolded,strong_error_u,strong_error_u_affine,strong_error_grad,mean_error,"
        "energy_hom,energy_recovery,gap_lower,gap_recovery,cg_iterations,optimality_residual\n";
  char buf[64];
  auto f = [&](double x) {
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return std::string(buf);
  };
  for (const auto& r : s.rows)
    os << f(r.eps) << ',' << f(r.energy) << ',' << f(r.energy_unfolded) << ',' << f(r.strong_error_u) << ','
       << f(r.strong_error_u_affine) << ',' << f(r.strong_error_grad) << ',' << f(r.mean_error) << ','
       << f(r.energy_hom) << ',' << f(r.energy_recovery) << ',' << f(r.gap_lower) << ',' << f(r.gap_recovery) << ','
       << r.iterations << ',' << f(r.optimality_residual) << '\n';
  return os.str();
}

}  // namespace su
