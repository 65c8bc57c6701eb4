#include "stochunfold/eris.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>
#include <sstream>

namespace su {

namespace {

using Triplets = std::vector<Eigen::Triplet<double>>;
using Row = std::vector<std::pair<int, double>>;

// K += scale * R A R^T where row a of R is rows[a].
void add_form(Triplets& trip, const Eigen::MatrixXd& A, const std::vector<Row>& rows, double scale) {
  const int n = static_cast<int>(rows.size());
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b) {
      double c = scale * A(a, b);
      if (c == 0.0) continue;
      for (const auto& [i, ci] : rows[a])
        for (const auto& [j, cj] : rows[b]) trip.emplace_back(i, j, c * ci * cj);
    }
}

double soft(double x, double w) {
  if (std::isinf(w)) return 0.0;
  double m = std::abs(x) - w;
  return m > 0.0 ? std::copysign(m, x) : 0.0;
}

std::vector<int> halo_index(const Grid& g) {
  std::vector<int> idx(g.num_sites(), -1);
  int n = 0;
  for (int s = 0; s < g.num_sites(); ++s)
    if (g.in_halo(s)) idx[s] = n++;
  return idx;
}

int count_valid(const std::vector<int>& idx) {
  int n = 0;
  for (int v : idx) n += v >= 0;
  return n;
}

std::string fmt(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

Eigen::VectorXd cell_load(const TimeField& l, double t, const Grid& grid, GridPtr gp, int d, int order,
                          const std::vector<int>& dom) {
  LatticeFunction f = discretize([&](const double* x, double* out) { l(t, x, out); }, gp, d,
                                 Boundary::zero_extension, order);
  Eigen::VectorXd out = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(count_valid(dom)) * d);
  for (int s = 0; s < grid.num_sites(); ++s)
    if (dom[s] >= 0)
      for (int c = 0; c < d; ++c) out(dom[s] * d + c) = f.at(s, c);
  return out;
}

}  // namespace

double ris_energy(const QuadraticRIS& ris, const Eigen::VectorXd& f, const Eigen::VectorXd& y) {
  return 0.5 * y.dot(ris.K * y) - f.dot(y.head(ris.nu));
}

double ris_dissipation(const QuadraticRIS& ris, const Eigen::VectorXd& dy) {
  double acc = 0.0;
  for (int j = 0; j < ris.nz; ++j) {
    double v = dy(ris.nu + j);
    if (v != 0.0) acc += ris.weights(j) * std::abs(v);
  }
  return acc;
}

IncrementalSolver::IncrementalSolver(const QuadraticRIS& ris, StepParams params) : ris_(ris), params_(params) {
  const int nu = ris.nu, nz = ris.nz, n = ris.size();
  if (ris.K.rows() != n || ris.K.cols() != n) throw InvalidArgument("K has the wrong size");
  if (ris.weights.size() != nz) throw InvalidArgument("dissipation weights have the wrong size");
  for (int j = 0; j < nz; ++j)
    if (!(ris.weights(j) >= 0.0)) throw InvalidArgument("dissipation weights must be nonnegative");
  Kuu_ = ris.K.topLeftCorner(nu, nu);
  Kuz_ = ris.K.topRightCorner(nu, nz);
  Kz_ = ris.K;
  diag_z_.resize(nz);
  for (int j = 0; j < nz; ++j) {
    diag_z_(j) = ris.K.coeff(nu + j, nu + j);
    if (!(diag_z_(j) > 0.0)) throw CoercivityError("nonpositive diagonal entry in the internal block");
  }
  if (nu > 0) {
    ldlt_ = std::make_shared<Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>>>(Kuu_);
    if (ldlt_->info() != Eigen::Success) throw SolverError("factorization of the elastic block failed", 0, 0.0);
    if ((ldlt_->vectorD().array() <= 0.0).any()) throw CoercivityError("elastic block is not positive definite");
  }
}

double IncrementalSolver::kkt_residual(const Eigen::VectorXd& f, const Eigen::VectorXd& y,
                                       const Eigen::VectorXd& y_prev) const {
  Eigen::VectorXd g = ris_.K * y;
  g.head(ris_.nu) -= f;
  double worst = 0.0;
  for (int j = 0; j < ris_.nu; ++j) worst = std::max(worst, std::abs(g(j)) / ris_.metric(j));
  for (int j = 0; j < ris_.nz; ++j) {
    const int i = ris_.nu + j;
    const double v = y(i) - y_prev(i), w = ris_.weights(j);
    double r;
    if (v != 0.0)
      r = std::isinf(w) ? std::numeric_limits<double>::infinity() : std::abs(g(i) + w * (v > 0 ? 1.0 : -1.0));
    else
      r = std::isinf(w) ? 0.0 : std::max(0.0, std::abs(g(i)) - w);
    worst = std::max(worst, r / ris_.metric(i));
  }
  return worst;
}

StepResult IncrementalSolver::step(const Eigen::VectorXd& f, const Eigen::VectorXd& y_prev) const {
  const int nu = ris_.nu, nz = ris_.nz;
  if (f.size() != nu || y_prev.size() != ris_.size()) throw InvalidArgument("step input has the wrong size");
  StepResult res;
  res.y = y_prev;
  Eigen::VectorXd& y = res.y;
  auto solve_u = [&]() {
    if (nu == 0) return;
    Eigen::VectorXd rhs = f - Kuz_ * y.tail(nz);
    y.head(nu) = ldlt_->solve(rhs);
  };
  solve_u();
  for (;;) {
    res.kkt = kkt_residual(f, y, y_prev);
    if (res.kkt < params_.kkt_tol) break;
    if (res.sweeps >= params_.max_sweeps)
      throw SolverError("incremental step did not converge", res.sweeps, res.kkt);
    Eigen::VectorXd r = ris_.K * y;
    const int passes = params_.symmetric ? 2 * nz : nz;
    for (int q = 0; q < passes; ++q) {
      const int j = q < nz ? q : 2 * nz - 1 - q;
      const int i = nu + j;
      const double kjj = diag_z_(j);
      const double bj = r(i) - kjj * y(i);
      const double znew = y_prev(i) - soft(kjj * y_prev(i) + bj, ris_.weights(j)) / kjj;
      const double delta = znew - y(i);
      if (delta == 0.0) continue;
      y(i) = znew;
      for (Eigen::SparseMatrix<double>::InnerIterator it(Kz_, i); it; ++it) r(it.row()) += it.value() * delta;
    }
    solve_u();
    ++res.sweeps;
  }
  return res;
}

StabilityReport stability_check(const QuadraticRIS& ris, const Eigen::VectorXd& f, const Eigen::VectorXd& y,
                                int random_probes, std::uint64_t seed, const std::vector<Eigen::VectorXd>& extra,
                                double tol) {
  const int nu = ris.nu, n = ris.size();
  StabilityReport rep;
  Eigen::VectorXd g = ris.K * y;
  g.head(nu) -= f;
  for (int j = 0; j < n; ++j) {
    double r = j < nu ? std::abs(g(j)) : std::max(0.0, std::abs(g(j)) - ris.weights(j - nu));
    if (std::isnan(r)) r = 0.0;
    rep.kkt_residual = std::max(rep.kkt_residual, r / ris.metric(j));
  }
  auto consider = [&](const Eigen::VectorXd& v, double slope, double vkv) {
    ++rep.probes;
    if (!(slope < 0.0) || !(vkv > 0.0)) return;
    double viol = slope * slope / (2.0 * vkv);
    if (viol > rep.max_violation) {
      rep.max_violation = viol;
      rep.certificate = v;
    }
  };
  for (int j = 0; j < n; ++j) {
    const double w = j < nu ? 0.0 : ris.weights(j - nu);
    if (std::isinf(w)) continue;
    const double kjj = ris.K.coeff(j, j);
    for (double s : {1.0, -1.0}) {
      double slope = s * g(j) + w;
      if (slope < 0.0) {
        Eigen::VectorXd v = Eigen::VectorXd::Zero(n);
        v(j) = s;
        consider(v, slope, kjj);
      } else {
        ++rep.probes;
      }
    }
  }
  auto probe = [&](Eigen::VectorXd v) {
    for (int j = 0; j < ris.nz; ++j)
      if (std::isinf(ris.weights(j))) v(nu + j) = 0.0;
    double slope = g.dot(v) + ris_dissipation(ris, v);
    consider(v, slope, v.dot(ris.K * v));
  };
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  for (int p = 0; p < random_probes; ++p) {
    Eigen::VectorXd v(n);
    for (int j = 0; j < n; ++j) v(j) = normal(rng);
    probe(v);
  }
  for (const auto& v : extra) {
    if (v.size() != n) throw InvalidArgument("probe direction has the wrong size");
    probe(v);
  }
  rep.stable = rep.kkt_residual <= tol && rep.max_violation <= tol;
  if (rep.stable) rep.certificate.resize(0);
  return rep;
}

Eigen::VectorXd stable_projection(const QuadraticRIS& ris, double t, const Eigen::VectorXd& y, StepParams params) {
  IncrementalSolver solver(ris, params);
  Eigen::VectorXd y0 = y.size() == 0 ? Eigen::VectorXd::Zero(ris.size()) : y;
  return solver.step(ris.load(t), y0).y;
}

double coercivity_estimate(const QuadraticRIS& ris) {
  const int n = ris.size();
  std::vector<std::vector<int>> blocks = ris.blocks;
  if (blocks.empty()) {
    blocks.emplace_back(n);
    for (int j = 0; j < n; ++j) blocks[0][j] = j;
  }
  std::vector<int> local(n, -1);
  double lmin = std::numeric_limits<double>::infinity();
  for (const auto& blk : blocks) {
    const int b = static_cast<int>(blk.size());
    for (int i = 0; i < b; ++i) local[blk[i]] = i;
    Eigen::MatrixXd D = Eigen::MatrixXd::Zero(b, b);
    for (int i = 0; i < b; ++i)
      for (Eigen::SparseMatrix<double>::InnerIterator it(ris.K, blk[i]); it; ++it) {
        int r = local[it.row()];
        if (r < 0) throw InvalidArgument("blocks of the system are coupled");
        D(r, i) = it.value() / std::sqrt(ris.metric(blk[i]) * ris.metric(it.row()));
      }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(D, Eigen::EigenvaluesOnly);
    lmin = std::min(lmin, es.eigenvalues()(0));
    for (int i = 0; i < b; ++i) local[blk[i]] = -1;
  }
  return lmin;
}

std::vector<double> uniform_times(double T, int steps) {
  if (steps < 1 || !(T > 0.0)) throw InvalidArgument("need T > 0 and at least one step");
  std::vector<double> t(steps + 1);
  for (int k = 0; k <= steps; ++k) t[k] = T * k / steps;
  return t;
}

Trajectory evolve(const QuadraticRIS& ris, const Eigen::VectorXd& y0, const std::vector<double>& times,
                  StepParams params) {
  if (times.empty()) throw InvalidArgument("empty time grid");
  for (std::size_t k = 1; k < times.size(); ++k)
    if (!(times[k] > times[k - 1])) throw InvalidArgument("time grid must be increasing");
  if (y0.size() != ris.size()) throw InvalidArgument("initial state has the wrong size");
  IncrementalSolver solver(ris, params);
  const int nu = ris.nu;
  Eigen::VectorXd f_prev = ris.load(times[0]);
  StabilityReport s0 = stability_check(ris, f_prev, y0, 0);
  if (!(s0.kkt_residual <= params.kkt_tol)) throw InvalidArgument("initial state is not stable");
  Trajectory tr;
  const double E0 = ris_energy(ris, f_prev, y0);
  tr.t.push_back(times[0]);
  tr.y.push_back(y0);
  tr.energy.push_back(E0);
  tr.dissipation.push_back(0.0);
  tr.work.push_back(0.0);
  tr.balance.push_back(0.0);
  tr.kkt.push_back(s0.kkt_residual);
  tr.stability.push_back(s0.kkt_residual);
  double diss = 0.0, work = 0.0, dt_min = std::numeric_limits<double>::infinity();
  for (std::size_t k = 1; k < times.size(); ++k) {
    Eigen::VectorXd f = ris.load(times[k]);
    const Eigen::VectorXd& yp = tr.y.back();
    StepResult st = solver.step(f, yp);
    Eigen::VectorXd df = f - f_prev;
    work += df.dot(yp.head(nu));
    diss += ris_dissipation(ris, st.y - yp);
    const double dt = times[k] - times[k - 1];
    dt_min = std::min(dt_min, dt);
    double dual = 0.0;
    for (int j = 0; j < nu; ++j) dual += df(j) * df(j) / ris.metric(j);
    tr.lip_load = std::max(tr.lip_load, std::sqrt(dual) / dt);
    const double E = ris_energy(ris, f, st.y);
    tr.t.push_back(times[k]);
    tr.energy.push_back(E);
    tr.dissipation.push_back(diss);
    tr.work.push_back(work);
    tr.balance.push_back(std::abs(E + diss - E0 + work));
    tr.kkt.push_back(st.kkt);
    tr.stability.push_back(stability_check(ris, f, st.y, 0).kkt_residual);
    tr.max_sweeps = std::max(tr.max_sweeps, st.sweeps);
    tr.y.push_back(std::move(st.y));
    f_prev = std::move(f);
  }
  if (params.lipschitz_check && tr.y.size() > 1) {
    tr.coercivity = coercivity_estimate(ris);
    if (!(tr.coercivity > 0.0)) throw CoercivityError("energy is not uniformly convex");
    const Eigen::ArrayXd sw = ris.metric.array().sqrt();
    for (std::size_t k = 1; k < tr.y.size(); ++k)
      for (std::size_t j = 0; j < k; ++j) {
        double dist = ((tr.y[k] - tr.y[j]).array() * sw).matrix().norm();
        tr.lip_ratio = std::max(tr.lip_ratio, dist / (tr.t[k] - tr.t[j]));
      }
    tr.lip_bound = tr.lip_load / tr.coercivity;
    // Slack for steps solved to the optimality tolerance rather than exactly.
    const double slack = 2.0 * params.kkt_tol * std::sqrt(ris.metric.sum()) / tr.coercivity / dt_min;
    tr.lip_ok = tr.lip_ratio <= tr.lip_bound * (1.0 + 1e-6) + slack;
  }
  return tr;
}

std::string trajectory_to_csv(const Trajectory& tr) {
  std::ostringstream os;
  os << "step,t,energy,dissipation,work,balance,kkt,stability\n";
  for (std::size_t k = 0; k < tr.t.size(); ++k)
    os << k << ',' << fmt(tr.t[k]) << ',' << fmt(tr.energy[k]) << ',' << fmt(tr.dissipation[k]) << ','
       << fmt(tr.work[k]) << ',' << fmt(tr.balance[k]) << ',' << fmt(tr.kkt[k]) << ',' << fmt(tr.stability[k])
       << '\n';
  return os.str();
}

QuadraticRIS single_spring(double a, double h, double sigma_y, std::function<double(double)> load) {
  if (!(a > 0.0) || !(h >= 0.0) || !(sigma_y >= 0.0)) throw InvalidArgument("spring needs a > 0, h >= 0, sigma_y >= 0");
  QuadraticRIS r;
  r.nu = 1;
  r.nz = 1;
  std::vector<Eigen::Triplet<double>> t{{0, 0, a}, {0, 1, -a}, {1, 0, -a}, {1, 1, a + h}};
  r.K.resize(2, 2);
  r.K.setFromTriplets(t.begin(), t.end());
  r.load = [load](double tt) { return Eigen::VectorXd::Constant(1, load(tt)); };
  r.weights = Eigen::VectorXd::Constant(1, sigma_y);
  r.metric = Eigen::VectorXd::Ones(2);
  return r;
}

QuadraticIntegrand intro_integrand(const RandomVariable& a, const RandomVariable& h, const LatticeGraph& g) {
  const int k = g.num_edges();
  if (a.ncomp != k || h.ncomp != k) throw InvalidArgument("moduli need one component per edge");
  if (a.space != h.space) throw InvalidArgument("moduli live on different spaces");
  RandomVariable A(a.space, 4 * k * k);
  const int n = 2 * k;
  for (int w = 0; w < a.space->num_samples(); ++w)
    for (int b = 0; b < k; ++b) {
      const double ab = g.length(b) * a.at(w, b);
      A.at(w, b * n + b) = ab;
      A.at(w, b * n + k + b) = -ab;
      A.at(w, (k + b) * n + b) = -ab;
      A.at(w, (k + b) * n + k + b) = ab + h.at(w, b);
    }
  return make_quadratic(A, k, k);
}

RandomField LatticeRIS::u_of(const Eigen::VectorXd& y) const {
  RandomField u(space, grid, d, Boundary::zero_extension);
  for (int w = 0; w < space->num_samples(); ++w)
    for (int s = 0; s < grid->num_sites(); ++s)
      if (dom[s] >= 0)
        for (int c = 0; c < d; ++c) u.at(w, s, c) = y((static_cast<Eigen::Index>(w) * ndom + dom[s]) * d + c);
  return u;
}

RandomField LatticeRIS::z_of(const Eigen::VectorXd& y) const {
  RandomField z(space, grid, k, Boundary::zero_extension);
  const Eigen::Index nu = ris.nu;
  for (int w = 0; w < space->num_samples(); ++w)
    for (int s = 0; s < grid->num_sites(); ++s)
      if (halo[s] >= 0)
        for (int e = 0; e < k; ++e) z.at(w, s, e) = y(nu + (static_cast<Eigen::Index>(w) * nhalo + halo[s]) * k + e);
  return z;
}

LatticeRIS assemble_lattice_ris(const ElastoPlasticSpec& spec) {
  const Grid& grid = *spec.grid;
  const LatticeGraph& graph = spec.graph;
  const int d = graph.dim(), k = graph.num_edges(), m = spec.space->num_samples();
  if (grid.dim() != d) throw InvalidArgument("grid and graph differ in dimension");
  if (spec.integrand.k != k || spec.integrand.m != k) throw InvalidArgument("integrand must have k strain and k internal slots");
  if (spec.yield.ncomp != k) throw InvalidArgument("yield stress needs one component per edge");
  const bool gp = spec.gradient_modulus.ncomp > 0;
  if (gp && spec.gradient_modulus.ncomp != 1) throw InvalidArgument("gradient modulus must be scalar");
  for (int w = 0; w < m; ++w)
    if (!(spec.space->weight(w) > 0.0)) throw InvalidArgument("evolution needs samples with positive weight");

  LatticeRIS L;
  L.spec = spec;
  L.grid = spec.grid;
  L.space = spec.space;
  L.d = d;
  L.k = k;
  L.dom = domain_index(grid);
  L.halo = halo_index(grid);
  L.ndom = count_valid(L.dom);
  L.nhalo = count_valid(L.halo);
  const int nu = m * L.ndom * d, nz = m * L.nhalo * k;
  QuadraticRIS& R = L.ris;
  R.nu = nu;
  R.nz = nz;
  R.weights = Eigen::VectorXd::Zero(nz);
  R.metric = Eigen::VectorXd::Zero(nu + nz);
  const double vol = grid.cell_volume(), eps = grid.eps();
  auto uidx = [&](int w, int site, int c) { return (w * L.ndom + L.dom[site]) * d + c; };
  auto zidx = [&](int w, int site, int e) { return nu + (w * L.nhalo + L.halo[site]) * k + e; };

  Triplets trip;
  std::vector<Row> rows(2 * k);
  std::vector<StencilEntry> st;
  std::vector<int> z(d);
  for (int w = 0; w < m; ++w) {
    const double P = spec.space->weight(w);
    R.blocks.emplace_back();
    for (int j = 0; j < L.ndom * d; ++j) R.blocks.back().push_back(w * L.ndom * d + j);
    for (int j = 0; j < L.nhalo * k; ++j) R.blocks.back().push_back(nu + w * L.nhalo * k + j);
    for (int j : R.blocks.back()) R.metric(j) = P * vol;
    for (int s = 0; s < grid.num_sites(); ++s) {
      if (L.halo[s] < 0) continue;
      grid.coords(s, z.data());
      const int v = spec.space->shift_by(w, z.data());
      for (int e = 0; e < k; ++e) {
        rows[e].clear();
        strain_stencil(grid, graph, s, e, st);
        for (const auto& x : st)
          if (L.dom[x.site] >= 0) rows[e].emplace_back(uidx(w, x.site, x.comp), x.coeff);
        rows[k + e] = {{zidx(w, s, e), 1.0}};
        R.weights(zidx(w, s, e) - nu) = P * vol * graph.length(e) * spec.yield.at(v, e);
      }
      add_form(trip, spec.integrand.matrix(v), rows, P * vol);
    }
    if (!gp) continue;
    const double scale = P * vol * std::pow(eps, 2.0 * spec.gamma);
    Eigen::MatrixXd one = Eigen::MatrixXd::Ones(1, 1);
    std::vector<Row> grow(1);
    for (int s = 0; s < grid.num_sites(); ++s) {
      grid.coords(s, z.data());
      const double gmod = spec.gradient_modulus.at(spec.space->shift_by(w, z.data()), 0);
      for (int i = 0; i < d; ++i) {
        const int nb = grid.neighbor_axis(s, i, 1, Boundary::zero_extension);
        for (int e = 0; e < k; ++e) {
          grow[0].clear();
          if (nb >= 0 && L.halo[nb] >= 0) grow[0].emplace_back(zidx(w, nb, e), 1.0 / eps);
          if (L.halo[s] >= 0) grow[0].emplace_back(zidx(w, s, e), -1.0 / eps);
          if (!grow[0].empty()) add_form(trip, one, grow, scale * gmod);
        }
      }
    }
  }
  R.K.resize(nu + nz, nu + nz);
  R.K.setFromTriplets(trip.begin(), trip.end());

  GridPtr gp_ = spec.grid;
  SpacePtr space = spec.space;
  std::vector<int> dom = L.dom;
  TimeField load = spec.load;
  const int order = spec.load_order, ndom = L.ndom;
  R.load = [=](double t) {
    Eigen::VectorXd cell = cell_load(load, t, *gp_, gp_, d, order, dom);
    Eigen::VectorXd f(static_cast<Eigen::Index>(m) * ndom * d);
    for (int w = 0; w < m; ++w) f.segment(static_cast<Eigen::Index>(w) * ndom * d, ndom * d) = space->weight(w) * vol * cell;
    return f;
  };
  return L;
}

EnergyPair lattice_energy(const LatticeRIS& L, double t, const Eigen::VectorXd& y) {
  const ElastoPlasticSpec& spec = L.spec;
  const Grid& grid = *L.grid;
  const int d = L.d, k = L.k, m = L.space->num_samples();
  RandomField u = L.u_of(y), z = L.z_of(y);
  RandomField strain = strain_field(u, spec.graph);
  RandomField G(L.space, L.grid, 2 * k, Boundary::zero_extension);
  for (int w = 0; w < m; ++w)
    for (int s = 0; s < grid.num_sites(); ++s)
      for (int e = 0; e < k; ++e) {
        G.at(w, s, e) = strain.at(w, s, e);
        G.at(w, s, k + e) = z.at(w, s, e);
      }
  const QuadraticIntegrand& I = spec.integrand;
  EnergyPair e = transform_energy([&](int w, const double* F) { return I.value(w, F); }, G);
  double extra = 0.0;
  if (spec.gradient_modulus.ncomp > 0) {
    RandomField gz(L.space, L.grid, k * d, Boundary::zero_extension);
    for (int w = 0; w < m; ++w) gradient_raw(grid, Boundary::zero_extension, k, z.sample(w), gz.sample(w));
    EnergyPair g = transform_energy(
        [&](int w, const double* F) {
          double acc = 0.0;
          for (int q = 0; q < k * d; ++q) acc += F[q] * F[q];
          return 0.5 * spec.gradient_modulus.at(w, 0) * std::pow(grid.eps(), 2.0 * spec.gamma) * acc;
        },
        gz);
    e.lattice += g.lattice;
    e.unfolded += g.unfolded;
  }
  RandomField l = load_from_continuum([&](const double* x, double* out) { spec.load(t, x, out); }, L.space, L.grid,
                                      d, spec.load_order);
  extra = inner(l, u);
  e.lattice -= extra;
  e.unfolded -= extra;
  e.residual = std::abs(e.lattice - e.unfolded);
  return e;
}

LatticeFunction TwoScaleLimitRIS::U_of(const Eigen::VectorXd& y) const {
  LatticeFunction U(grid, d, Boundary::zero_extension);
  for (int s = 0; s < grid->num_sites(); ++s)
    if (dom[s] >= 0)
      for (int c = 0; c < d; ++c) U.at(s, c) = y(dom[s] * d + c);
  return U;
}

RandomField TwoScaleLimitRIS::Z_of(const Eigen::VectorXd& y) const {
  RandomField Z(space, grid, k, Boundary::zero_extension);
  const Eigen::Index nu = ris.nu;
  for (int w = 0; w < space->num_samples(); ++w)
    for (int s = 0; s < grid->num_sites(); ++s)
      if (halo[s] >= 0)
        for (int e = 0; e < k; ++e)
          Z.at(w, s, e) = y(nu + (static_cast<Eigen::Index>(shared_z ? 0 : w) * nhalo + halo[s]) * k + e);
  return Z;
}

RandomField TwoScaleLimitRIS::chi_of(const Eigen::VectorXd& y) const {
  RandomField chi(space, grid, d * d, Boundary::zero_extension);
  const Eigen::Index off = static_cast<Eigen::Index>(ndom) * d;
  for (int w = 0; w < space->num_samples(); ++w)
    for (int s = 0; s < grid->num_sites(); ++s) {
      if (halo[s] < 0) continue;
      for (int q = 0; q < d * d; ++q) {
        double acc = 0.0;
        for (int j = 0; j < r; ++j)
          acc += basis.Q(static_cast<Eigen::Index>(w) * d * d + q, j) * y(off + static_cast<Eigen::Index>(halo[s]) * r + j);
        chi.at(w, s, q) = acc;
      }
    }
  return chi;
}

TwoScaleLimitRIS assemble_two_scale_limit(const TwoScaleLimitSpec& spec) {
  const Grid& grid = *spec.grid;
  const LatticeGraph& graph = spec.graph;
  const int d = graph.dim(), k = graph.num_edges(), m = spec.space->num_samples();
  if (grid.dim() != d) throw InvalidArgument("grid and graph differ in dimension");
  if (spec.integrand.k != k || spec.integrand.m != k) throw InvalidArgument("integrand must have k strain and k internal slots");
  if (spec.yield.ncomp != k) throw InvalidArgument("yield stress needs one component per edge");
  for (int w = 0; w < m; ++w)
    if (!(spec.space->weight(w) > 0.0)) throw InvalidArgument("evolution needs samples with positive weight");
  CorrectorSetup setup = corrector_setup(spec.space, graph);

  TwoScaleLimitRIS L;
  L.grid = spec.grid;
  L.space = spec.space;
  L.basis = setup.basis;
  L.d = d;
  L.k = k;
  L.r = setup.r();
  L.shared_z = spec.shared_z;
  L.dom = domain_index(grid);
  L.halo = halo_index(grid);
  L.ndom = count_valid(L.dom);
  L.nhalo = count_valid(L.halo);
  const int r = L.r;
  const int nu = L.ndom * d + L.nhalo * r;
  const int nz = (spec.shared_z ? 1 : m) * L.nhalo * k;
  QuadraticRIS& R = L.ris;
  R.nu = nu;
  R.nz = nz;
  R.weights = Eigen::VectorXd::Zero(nz);
  const double vol = grid.cell_volume();
  R.metric = Eigen::VectorXd::Constant(nu + nz, vol);
  auto aidx = [&](int site, int j) { return L.ndom * d + L.halo[site] * r + j; };
  auto zidx = [&](int w, int site, int e) { return nu + ((spec.shared_z ? 0 : w) * L.nhalo + L.halo[site]) * k + e; };

  Triplets trip;
  std::vector<Row> rows(2 * k);
  std::vector<StencilEntry> st;
  for (int s = 0; s < grid.num_sites(); ++s) {
    if (L.halo[s] < 0) continue;
    for (int w = 0; w < m; ++w) {
      const double P = spec.space->weight(w);
      for (int e = 0; e < k; ++e) {
        rows[e].clear();
        strain_stencil(grid, graph, s, e, st);
        for (const auto& x : st)
          if (L.dom[x.site] >= 0) rows[e].emplace_back(L.dom[x.site] * d + x.comp, x.coeff);
        for (int j = 0; j < r; ++j)
          if (setup.S[w](e, j) != 0.0) rows[e].emplace_back(aidx(s, j), setup.S[w](e, j));
        rows[k + e] = {{zidx(w, s, e), 1.0}};
        R.weights(zidx(w, s, e) - nu) += P * vol * graph.length(e) * spec.yield.at(w, e);
        if (!spec.shared_z) R.metric(zidx(w, s, e)) = P * vol;
      }
      add_form(trip, spec.integrand.matrix(w), rows, P * vol);
    }
  }
  R.K.resize(nu + nz, nu + nz);
  R.K.setFromTriplets(trip.begin(), trip.end());

  GridPtr gp_ = spec.grid;
  std::vector<int> dom = L.dom;
  TimeField load = spec.load;
  const int order = spec.load_order, ndom = L.ndom;
  R.load = [=](double t) {
    Eigen::VectorXd f = Eigen::VectorXd::Zero(nu);
    f.head(static_cast<Eigen::Index>(ndom) * d) = vol * cell_load(load, t, *gp_, gp_, d, order, dom);
    return f;
  };
  return L;
}

EvolutionStudy run_evolution_study(const EvolutionStudyConfig& cfg) {
  if (cfg.eps_list.empty()) throw InvalidArgument("empty eps list");
  const LatticeGraph& graph = cfg.graph;
  const int d = graph.dim(), k = graph.num_edges();
  const int m = cfg.space->num_samples();
  std::vector<double> times = uniform_times(cfg.T, cfg.steps);
  std::vector<int> picks;
  for (double t : cfg.sample_times) {
    if (t < 0.0 || t > cfg.T) throw InvalidArgument("sample time outside [0, T]");
    picks.push_back(static_cast<int>(std::lround(t / cfg.T * cfg.steps)));
  }
  const double h = cfg.reference_eps > 0.0 ? cfg.reference_eps : *std::min_element(cfg.eps_list.begin(), cfg.eps_list.end());
  GridPtr fine = Grid::box_domain(h, cfg.lower, cfg.upper, graph.generators());
  const bool gp = cfg.gradient_modulus.ncomp > 0;
  StepParams quiet;
  quiet.lipschitz_check = false;

  EvolutionStudy study;
  study.deterministic_limit = gp;
  // Limit fields at each picked step: U (d), Z(w) (k), grad U + chi(w) (d*d).
  std::vector<LatticeFunction> Us;
  std::vector<RandomField> Zs, Gs;
  CorrectorSetup setup = corrector_setup(cfg.space, graph);
  if (!gp) {
    TwoScaleLimitSpec ls{fine, graph, cfg.space, cfg.integrand, cfg.yield, cfg.load, cfg.load_order, false};
    TwoScaleLimitRIS lim = assemble_two_scale_limit(ls);
    Trajectory tr = evolve(lim.ris, Eigen::VectorXd::Zero(lim.ris.size()), times, quiet);
    for (int p : picks) {
      Us.push_back(lim.U_of(tr.y[p]));
      Zs.push_back(lim.Z_of(tr.y[p]));
      LatticeFunction gU = discrete_gradient(Us.back());
      RandomField G = lim.chi_of(tr.y[p]);
      for (int w = 0; w < m; ++w)
        for (int s = 0; s < fine->num_sites(); ++s)
          for (int q = 0; q < d * d; ++q) G.at(w, s, q) += gU.at(s, q);
      Gs.push_back(std::move(G));
    }
  } else {
    HomogenizedTensor T = assemble_homogenized_tensor(setup, cfg.integrand);
    study.A_hom = T.A_hom;
    Eigen::MatrixXd X = corrector_matrix(setup, cfg.integrand);
    SpacePtr single = make_torus_space(std::vector<int>(d, 1));
    RandomVariable A(single, 4 * k * k), Y(single, k);
    for (int i = 0; i < 2 * k; ++i)
      for (int j = 0; j < 2 * k; ++j) A.at(0, i * 2 * k + j) = 0.5 * (T.A_hom(i, j) + T.A_hom(j, i));
    std::vector<double> ey = cfg.yield.expectation();
    for (int e = 0; e < k; ++e) Y.at(0, e) = ey[e];
    ElastoPlasticSpec es;
    es.grid = fine;
    es.graph = graph;
    es.space = single;
    es.integrand = make_quadratic(A, k, k);
    es.yield = Y;
    es.load = cfg.load;
    es.load_order = cfg.load_order;
    LatticeRIS lim = assemble_lattice_ris(es);
    Trajectory tr = evolve(lim.ris, Eigen::VectorXd::Zero(lim.ris.size()), times, quiet);
    const int r = setup.r();
    for (int p : picks) {
      RandomField u0 = lim.u_of(tr.y[p]), z0 = lim.z_of(tr.y[p]);
      Us.push_back(u0.slice(0));
      RandomField Z(cfg.space, fine, k, Boundary::zero_extension), G(cfg.space, fine, d * d, Boundary::zero_extension);
      LatticeFunction gU = discrete_gradient(Us.back());
      RandomField strain = strain_field(u0, graph);
      Eigen::VectorXd probe(2 * k);
      for (int s = 0; s < fine->num_sites(); ++s) {
        for (int e = 0; e < k; ++e) {
          probe(e) = strain.at(0, s, e);
          probe(k + e) = z0.at(0, s, e);
        }
        Eigen::VectorXd a = r > 0 ? Eigen::VectorXd(X * probe) : Eigen::VectorXd();
        for (int w = 0; w < m; ++w) {
          for (int e = 0; e < k; ++e) Z.at(w, s, e) = z0.at(0, s, e);
          for (int q = 0; q < d * d; ++q) {
            double acc = gU.at(s, q);
            for (int j = 0; j < r; ++j) acc += setup.basis.Q(static_cast<Eigen::Index>(w) * d * d + q, j) * a(j);
            G.at(w, s, q) = acc;
          }
        }
      }
      Zs.push_back(std::move(Z));
      Gs.push_back(std::move(G));
    }
  }

  for (double eps : cfg.eps_list) {
    GridPtr grid = Grid::box_domain(eps, cfg.lower, cfg.upper, graph.generators());
    ElastoPlasticSpec es;
    es.grid = grid;
    es.graph = graph;
    es.space = cfg.space;
    es.integrand = cfg.integrand;
    es.yield = cfg.yield;
    es.load = cfg.load;
    es.load_order = cfg.load_order;
    es.gamma = cfg.gamma;
    es.gradient_modulus = cfg.gradient_modulus;
    LatticeRIS lat = assemble_lattice_ris(es);
    Trajectory tr = evolve(lat.ris, Eigen::VectorXd::Zero(lat.ris.size()), times);
    for (std::size_t q = 0; q < picks.size(); ++q) {
      const int p = picks[q];
      EvolutionStudyRow row;
      row.eps = eps;
      row.t = times[p];
      RandomField u = lat.u_of(tr.y[p]), z = lat.z_of(tr.y[p]);
      row.error_u = pc_distance(u, *fine, [&](int, int t, double* out) {
        for (int c = 0; c < d; ++c) out[c] = Us[q].at(t, c);
      });
      row.error_z = pc_distance(z, *fine, [&](int w, int t, double* out) {
        for (int e = 0; e < k; ++e) out[e] = Zs[q].at(w, t, e);
      });
      RandomField gu(cfg.space, grid, d * d, Boundary::zero_extension), gz(cfg.space, grid, k * d, Boundary::zero_extension);
      for (int w = 0; w < m; ++w) {
        gradient_raw(*grid, Boundary::zero_extension, d, u.sample(w), gu.sample(w));
        gradient_raw(*grid, Boundary::zero_extension, k, z.sample(w), gz.sample(w));
      }
      row.error_grad = pc_distance(gu, *fine, [&](int w, int t, double* out) {
        for (int c = 0; c < d * d; ++c) out[c] = Gs[q].at(w, t, c);
      });
      row.grad_z_norm = std::pow(eps, cfg.gamma) * norm(gz);
      row.balance = tr.balance[p];
      row.kkt = *std::max_element(tr.kkt.begin(), tr.kkt.begin() + p + 1);
      row.lip_ok = tr.lip_ok;
      study.rows.push_back(row);
    }
  }
  return study;
}

std::string evolution_study_to_csv(const EvolutionStudy& s) {
  std::ostringstream os;
  os << "eps,t,error_u,error_z,error_grad,grad_z_norm,balance,kkt,lipschitz_ok\n";
  for (const auto& r : s.rows)
    os << fmt(r.eps) << ',' << fmt(r.t) << ',' << fmt(r.error_u) << ',' << fmt(r.error_z) << ','
       << fmt(r.error_grad) << ',' << fmt(r.grad_z_norm) << ',' << fmt(r.balance) << ',' << fmt(r.kkt) << ','
       << (r.lip_ok ? 1 : 0) << '\n';
  return os.str();
}

}  // namespace su
