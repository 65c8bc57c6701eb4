#include "stochunfold/graph.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "json.hpp"

namespace su {

LatticeGraph::LatticeGraph(std::vector<std::vector<int>> generators) : gens_(std::move(generators)) {
  if (gens_.empty()) throw InvalidArgument("graph needs at least one generator");
  dim_ = static_cast<int>(gens_[0].size());
  if (dim_ < 1) throw InvalidArgument("generators must have positive dimension");
  for (const auto& b : gens_) {
    if (static_cast<int>(b.size()) != dim_) throw InvalidArgument("generators differ in dimension");
    if (std::all_of(b.begin(), b.end(), [](int x) { return x == 0; }))
      throw InvalidArgument("zero generator");
  }
  for (int i = 0; i < dim_; ++i) {
    bool found = false;
    for (const auto& b : gens_) {
      bool unit = true;
      for (int j = 0; j < dim_; ++j) unit = unit && b[j] == (j == i ? 1 : 0);
      found = found || unit;
    }
    if (!found) throw InvalidArgument("generators must contain every unit vector e_i");
  }
  for (const auto& b : gens_) {
    double l2 = 0.0;
    for (int x : b) l2 += double(x) * x;
    double len = std::sqrt(l2);
    len_.push_back(len);
    std::vector<double> u(dim_);
    for (int j = 0; j < dim_; ++j) u[j] = b[j] / len;
    unit_.push_back(u);
    std::vector<PathTerm> path;
    std::vector<int> p(dim_, 0);
    for (int j = 0; j < dim_; ++j) {
      int s = b[j] > 0 ? 1 : -1;
      for (int t = 0; t < std::abs(b[j]); ++t) {
        PathTerm term;
        term.axis = j;
        term.coeff = s / len;
        term.y.resize(dim_);
        for (int a = 0; a < dim_; ++a) term.y[a] = -p[a];
        if (s < 0) term.y[j] += 1;
        path.push_back(term);
        p[j] += s;
      }
    }
    paths_.push_back(std::move(path));
  }
}

std::string LatticeGraph::hash() const {
  Fnv1a h;
  for (const auto& b : gens_) h.add(b);
  return h.hex();
}

namespace {

double value_at(const LatticeFunction& u, const int* z, int c) {
  const Grid& g = *u.grid;
  int s = 0, stride = 1;
  for (int i = 0; i < g.dim(); ++i) {
    int k = z[i] - g.origin()[i];
    if (k < 0 || k >= g.extents()[i]) {
      if (u.bc == Boundary::zero_extension) return 0.0;
      k %= g.extents()[i];
      if (k < 0) k += g.extents()[i];
    }
    s += k * stride;
    stride *= g.extents()[i];
  }
  return u.at(s, c);
}

}  // namespace

LatticeFunction edge_quotient(const LatticeFunction& u, const LatticeGraph& g, int i) {
  const Grid& grid = *u.grid;
  if (grid.dim() != g.dim()) throw InvalidArgument("graph and grid dimensions differ");
  LatticeFunction out(u.grid, u.ncomp, u.bc);
  const auto& b = g.generator(i);
  const double scale = 1.0 / (grid.eps() * g.length(i));
  for (int s = 0; s < grid.num_sites(); ++s) {
    int nb = grid.neighbor(s, b.data(), u.bc);
    for (int c = 0; c < u.ncomp; ++c) out.at(s, c) = ((nb >= 0 ? u.at(nb, c) : 0.0) - u.at(s, c)) * scale;
  }
  return out;
}

LatticeFunction edge_quotient_path(const LatticeFunction& u, const LatticeGraph& g, int i) {
  const Grid& grid = *u.grid;
  const int d = grid.dim();
  LatticeFunction out(u.grid, u.ncomp, u.bc);
  std::vector<int> z(d), p(d);
  const double inv = 1.0 / grid.eps();
  for (int s = 0; s < grid.num_sites(); ++s) {
    grid.coords(s, z.data());
    for (int c = 0; c < u.ncomp; ++c) {
      double acc = 0.0;
      for (const auto& t : g.path(i)) {
        for (int a = 0; a < d; ++a) p[a] = z[a] - t.y[a];
        double here = value_at(u, p.data(), c);
        p[t.axis] += 1;
        double next = value_at(u, p.data(), c);
        acc += t.coeff * (next - here) * inv;
      }
      out.at(s, c) = acc;
    }
  }
  return out;
}

LatticeFunction symmetrized_gradient(const LatticeFunction& u, const LatticeGraph& g) {
  const int d = g.dim();
  if (u.ncomp != d) throw InvalidArgument("symmetrized gradient needs a d-vector field");
  LatticeFunction out(u.grid, g.num_edges(), u.bc);
  for (int i = 0; i < g.num_edges(); ++i) {
    LatticeFunction q = edge_quotient(u, g, i);
    for (int s = 0; s < u.num_sites(); ++s) {
      double acc = 0.0;
      for (int c = 0; c < d; ++c) acc += g.unit(i)[c] * q.at(s, c);
      out.at(s, i) = acc;
    }
  }
  return out;
}

RandomVariable symmetrize_random(const RandomVariable& F, const LatticeGraph& g) {
  const auto& sp = *F.space;
  const int d = g.dim();
  if (F.ncomp != d * d || sp.dim() != d) throw InvalidArgument("symmetrization needs a d x d matrix field");
  RandomVariable out(F.space, g.num_edges());
  for (int w = 0; w < sp.num_samples(); ++w)
    for (int i = 0; i < g.num_edges(); ++i) {
      double acc = 0.0;
      for (const auto& t : g.path(i)) {
        int v = sp.shift_by_neg(w, t.y.data());
        for (int c = 0; c < d; ++c) acc += g.unit(i)[c] * t.coeff * F.at(v, c * d + t.axis);
      }
      out.at(w, i) = acc;
    }
  return out;
}

std::vector<double> symmetrize_constant(const std::vector<double>& F, const LatticeGraph& g) {
  const int d = g.dim();
  if (static_cast<int>(F.size()) != d * d) throw InvalidArgument("matrix must have d*d entries");
  std::vector<double> out(g.num_edges(), 0.0);
  for (int i = 0; i < g.num_edges(); ++i)
    for (int c = 0; c < d; ++c)
      for (int j = 0; j < d; ++j) out[i] += g.unit(i)[c] * F[c * d + j] * g.unit(i)[j];
  return out;
}

KornReport verify_korn(const LatticeGraph& g, const std::vector<int>& sizes) {
  const int d = g.dim();
  const int k = g.num_edges();
  KornReport rep;
  for (int n : sizes) {
    if (n < 1) throw InvalidArgument("window size must be >= 1");
    std::vector<double> lo(d, 0.0), hi(d, n + 1.0);
    GridPtr grid = Grid::box_domain(1.0, lo, hi, g.generators());
    std::vector<int> dom = grid->domain_sites();
    const int nd = static_cast<int>(dom.size()) * d;
    const int ns = grid->num_sites();
    Eigen::MatrixXd G = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(ns) * d * d, nd);
    Eigen::MatrixXd S = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(ns) * k, nd);
    std::vector<int> off(d);
    for (std::size_t a = 0; a < dom.size(); ++a) {
      int p = dom[a];
      for (int c = 0; c < d; ++c) {
        int col = static_cast<int>(a) * d + c;
        for (int i = 0; i < d; ++i) {
          int q = grid->neighbor_axis(p, i, -1, Boundary::zero_extension);
          G((static_cast<Eigen::Index>(p) * d + c) * d + i, col) -= 1.0;
          if (q >= 0) G((static_cast<Eigen::Index>(q) * d + c) * d + i, col) += 1.0;
        }
        for (int e = 0; e < k; ++e) {
          const auto& b = g.generator(e);
          double coef = b[c] / (g.length(e) * g.length(e));
          for (int j = 0; j < d; ++j) off[j] = -b[j];
          int q = grid->neighbor(p, off.data(), Boundary::zero_extension);
          S(static_cast<Eigen::Index>(p) * k + e, col) -= coef;
          if (q >= 0) S(static_cast<Eigen::Index>(q) * k + e, col) += coef;
        }
      }
    }
    Eigen::MatrixXd SS = S.transpose() * S;
    Eigen::MatrixXd GG = G.transpose() * G;
    Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es(SS, GG);
    if (es.info() != Eigen::Success) throw SolverError("generalized eigensolver failed", 0, 0.0);
    double lmin = es.eigenvalues()(0);
    double lmax = es.eigenvalues()(es.eigenvalues().size() - 1);
    double C = lmin > 1e-14 * lmax ? 1.0 / lmin : std::numeric_limits<double>::infinity();
    rep.sizes.push_back(n);
    rep.lambda_min.push_back(lmin);
    rep.constants.push_back(C);
  }
  if (!rep.constants.empty()) {
    auto [mn, mx] = std::minmax_element(rep.constants.begin(), rep.constants.end());
    rep.spread = (*mx - *mn) / *mx;
    rep.spread_vs_min = (*mx - *mn) / *mn;
    rep.growth = rep.constants.back() / rep.constants.front();
  }
  return rep;
}

KornWitness korn_kernel_witness(const LatticeGraph& g, int n) {
  if (n < 2) throw InvalidArgument("window size must be >= 2");
  const int d = g.dim(), k = g.num_edges();
  GridPtr grid = Grid::window(1.0, std::vector<int>(d, 0), std::vector<int>(d, n));
  const int ns = grid->num_sites(), nd = ns * d;
  Eigen::MatrixXd G = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(ns) * d * d, nd);
  Eigen::MatrixXd S = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(ns) * k, nd);
  for (int p = 0; p < ns; ++p)
    for (int c = 0; c < d; ++c) {
      const int col = p * d + c;
      for (int i = 0; i < d; ++i) {
        int q = grid->neighbor_axis(p, i, -1, Boundary::periodic);
        G((static_cast<Eigen::Index>(p) * d + c) * d + i, col) -= 1.0;
        G((static_cast<Eigen::Index>(q) * d + c) * d + i, col) += 1.0;
      }
      for (int e = 0; e < k; ++e) {
        const auto& b = g.generator(e);
        double coef = b[c] / (g.length(e) * g.length(e));
        std::vector<int> off(d);
        for (int j = 0; j < d; ++j) off[j] = -b[j];
        int q = grid->neighbor(p, off.data(), Boundary::periodic);
        S(static_cast<Eigen::Index>(p) * k + e, col) -= coef;
        S(static_cast<Eigen::Index>(q) * k + e, col) += coef;
      }
    }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S.transpose() * S);
  const Eigen::VectorXd& ev = es.eigenvalues();
  const double tol = 1e-10 * std::max(1.0, ev(ev.size() - 1));
  int nul = 0;
  while (nul < ev.size() && ev(nul) < tol) ++nul;
  KornWitness w;
  w.window = n;
  w.kernel_excess = nul - d;
  if (w.kernel_excess <= 0) return w;
  Eigen::MatrixXd N = es.eigenvectors().leftCols(nul);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> gs(N.transpose() * G.transpose() * G * N);
  Eigen::VectorXd u = N * gs.eigenvectors().col(nul - 1);
  w.sym_norm = (S * u).norm();
  w.grad_norm = (G * u).norm();
  w.u.assign(u.data(), u.data() + u.size());
  return w;
}

StochasticKornReport verify_stochastic_korn(const SpacePtr& space, const LatticeGraph& g, int trials,
                                            std::uint64_t seed) {
  const int d = g.dim();
  StochasticKornReport rep;
  PotBasis pb = pot_basis(*space, d);
  rep.dimension = pb.size();
  if (pb.size() == 0) return rep;
  rep.empty = false;
  const int m = space->num_samples(), k = g.num_edges();
  // Columns of the symmetrization applied to each basis vector.
  Eigen::MatrixXd SQ(static_cast<Eigen::Index>(m) * k, pb.size());
  for (int j = 0; j < pb.size(); ++j) {
    RandomVariable s = symmetrize_random(pb.column(space, j), g);
    for (int r = 0; r < m * k; ++r) SQ(r, j) = s.values[r] * std::sqrt(space->weight(r / k));
  }
  Eigen::MatrixXd M = SQ.transpose() * SQ;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(M);
  rep.lambda_min = es.eigenvalues()(0);
  rep.constant = rep.lambda_min > 1e-14 ? 1.0 / rep.lambda_min : std::numeric_limits<double>::infinity();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  for (int t = 0; t < trials; ++t) {
    RandomVariable phi(space, d);
    for (double& x : phi.values) x = nd(rng);
    RandomVariable chi = horizontal_derivative(phi);
    RandomVariable chis = symmetrize_random(chi, g);
    double num = expect_inner(chi, chi), den = expect_inner(chis, chis);
    if (num < 1e-300) continue;
    double ratio = den > 0.0 ? num / den : std::numeric_limits<double>::infinity();
    rep.worst_ratio = std::max(rep.worst_ratio, ratio);
    ++rep.trials;
  }
  return rep;
}

std::string korn_to_json(const KornReport& r) {
  nlohmann::ordered_json j;
  j["sizes"] = r.sizes;
  j["lambda_min"] = r.lambda_min;
  std::vector<nlohmann::json> cs;
  for (double c : r.constants) cs.push_back(std::isfinite(c) ? nlohmann::json(c) : nlohmann::json("inf"));
  j["constants"] = cs;
  j["spread"] = r.spread;
  j["spread_vs_min"] = r.spread_vs_min;
  j["growth"] = r.growth;
  return j.dump(2);
}

}  // namespace su
