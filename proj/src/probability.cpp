#include "stochunfold/probability.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "json.hpp"

namespace su {

namespace {

int find_root(std::vector<int>& parent, int x) {
  while (parent[x] != x) {
    parent[x] = parent[parent[x]];
    x = parent[x];
  }
  return x;
}

}  // namespace

ProbabilitySpace::ProbabilitySpace(int dim, std::vector<double> weights, std::vector<std::vector<int>> shifts,
                                   std::vector<int> period)
    : dim_(dim), weights_(std::move(weights)), shifts_(std::move(shifts)), period_(std::move(period)) {
  const int m = num_samples();
  if (dim_ < 1) throw InvalidArgument("probability space needs dimension >= 1");
  if (m < 1) throw InvalidArgument("probability space needs at least one sample");
  if (static_cast<int>(shifts_.size()) != dim_) throw InvalidArgument("one shift permutation per axis required");
  double total = 0.0;
  for (double p : weights_) {
    if (!(p >= 0.0) || !std::isfinite(p)) throw InvalidArgument("weights must be finite and nonnegative");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-12) throw InvalidArgument("weights must sum to 1");
  for (const auto& s : shifts_) {
    if (static_cast<int>(s.size()) != m) throw InvalidArgument("shift permutation has wrong length");
    std::vector<char> seen(m, 0);
    for (int v : s) {
      if (v < 0 || v >= m || seen[v]) throw InvalidArgument("shift is not a bijection");
      seen[v] = 1;
    }
  }
  for (int i = 0; i < dim_; ++i)
    for (int j = i + 1; j < dim_; ++j)
      for (int w = 0; w < m; ++w)
        if (shifts_[i][shifts_[j][w]] != shifts_[j][shifts_[i][w]])
          throw InvalidArgument("shift permutations do not commute");
  for (int i = 0; i < dim_; ++i)
    for (int w = 0; w < m; ++w)
      if (std::abs(weights_[shifts_[i][w]] - weights_[w]) > 1e-15)
        throw InvalidArgument("weights are not invariant under the shifts");

  cycle_of_.assign(dim_, std::vector<int>(m, -1));
  pos_in_cycle_.assign(dim_, std::vector<int>(m, 0));
  cycles_.assign(dim_, {});
  order_.assign(dim_, 1);
  for (int i = 0; i < dim_; ++i) {
    for (int w = 0; w < m; ++w) {
      if (cycle_of_[i][w] >= 0) continue;
      std::vector<int> cyc;
      int v = w;
      do {
        cycle_of_[i][v] = static_cast<int>(cycles_[i].size());
        pos_in_cycle_[i][v] = static_cast<int>(cyc.size());
        cyc.push_back(v);
        v = shifts_[i][v];
      } while (v != w);
      order_[i] = std::lcm(order_[i], static_cast<long long>(cyc.size()));
      cycles_[i].push_back(std::move(cyc));
    }
  }

  std::vector<int> parent(m);
  std::iota(parent.begin(), parent.end(), 0);
  for (int i = 0; i < dim_; ++i)
    for (int w = 0; w < m; ++w) {
      int a = find_root(parent, w), b = find_root(parent, shifts_[i][w]);
      if (a != b) parent[std::max(a, b)] = std::min(a, b);
    }
  orbit_.assign(m, -1);
  std::vector<int> label(m, -1);
  for (int w = 0; w < m; ++w) {
    int r = find_root(parent, w);
    if (label[r] < 0) label[r] = num_orbits_++;
    orbit_[w] = label[r];
  }
  std::vector<double> mass(num_orbits_, 0.0);
  for (int w = 0; w < m; ++w) mass[orbit_[w]] += weights_[w];
  int charged = 0;
  for (double x : mass)
    if (x > 0.0) ++charged;
  ergodic_ = charged == 1;
}

int ProbabilitySpace::shift_power(int w, int axis, long long k) const {
  const auto& cyc = cycles_[axis][cycle_of_[axis][w]];
  long long len = static_cast<long long>(cyc.size());
  long long p = (pos_in_cycle_[axis][w] + k) % len;
  if (p < 0) p += len;
  return cyc[static_cast<std::size_t>(p)];
}

int ProbabilitySpace::shift_by(int w, const int* z) const {
  for (int i = 0; i < dim_; ++i)
    if (z[i] != 0) w = shift_power(w, i, z[i]);
  return w;
}

int ProbabilitySpace::shift_by_neg(int w, const int* z) const {
  for (int i = 0; i < dim_; ++i)
    if (z[i] != 0) w = shift_power(w, i, -static_cast<long long>(z[i]));
  return w;
}

std::string ProbabilitySpace::hash() const {
  Fnv1a h;
  h.add(dim_);
  h.add(weights_);
  for (const auto& s : shifts_) h.add(s);
  h.add(period_);
  return h.hex();
}

RandomVariable::RandomVariable(SpacePtr s, int n)
    : space(std::move(s)), ncomp(n), values(static_cast<std::size_t>(space->num_samples()) * n, 0.0) {
  if (n < 1) throw InvalidArgument("random variable needs at least one component");
}

std::vector<double> RandomVariable::expectation() const {
  std::vector<double> out(ncomp);
  std::vector<double> t(space->num_samples());
  for (int c = 0; c < ncomp; ++c) {
    for (int w = 0; w < space->num_samples(); ++w) t[w] = space->weight(w) * at(w, c);
    out[c] = pairwise_sum(t);
  }
  return out;
}

double expect_inner(const RandomVariable& a, const RandomVariable& b) {
  if (a.space != b.space || a.ncomp != b.ncomp) throw InvalidArgument("mismatched random variables");
  std::vector<double> t(a.space->num_samples());
  for (int w = 0; w < a.space->num_samples(); ++w) {
    double s = 0.0;
    for (int c = 0; c < a.ncomp; ++c) s += a.at(w, c) * b.at(w, c);
    t[w] = a.space->weight(w) * s;
  }
  return pairwise_sum(t);
}

double lp_norm(const RandomVariable& a, double p) {
  const int m = a.space->num_samples();
  std::vector<double> mag(m);
  for (int w = 0; w < m; ++w) {
    double s = 0.0;
    for (int c = 0; c < a.ncomp; ++c) s += a.at(w, c) * a.at(w, c);
    mag[w] = std::sqrt(s);
  }
  if (std::isinf(p)) {
    double mx = 0.0;
    for (int w = 0; w < m; ++w)
      if (a.space->weight(w) > 0.0) mx = std::max(mx, mag[w]);
    return mx;
  }
  for (int w = 0; w < m; ++w) mag[w] = a.space->weight(w) * std::pow(mag[w], p);
  return std::pow(pairwise_sum(mag), 1.0 / p);
}

RandomField::RandomField(SpacePtr s, GridPtr g, int n, Boundary b)
    : space(std::move(s)), grid(std::move(g)), ncomp(n), bc(b) {
  if (n < 1) throw InvalidArgument("random field needs at least one component");
  values.assign(static_cast<std::size_t>(space->num_samples()) * grid->num_sites() * n, 0.0);
}

LatticeFunction RandomField::slice(int w) const {
  LatticeFunction f(grid, ncomp, bc);
  std::copy(sample(w), sample(w) + sample_size(), f.values.begin());
  return f;
}

LatticeFunction RandomField::mean() const {
  LatticeFunction f(grid, ncomp, bc);
  std::vector<double> t(space->num_samples());
  for (std::size_t j = 0; j < sample_size(); ++j) {
    for (int w = 0; w < space->num_samples(); ++w) t[w] = space->weight(w) * values[w * sample_size() + j];
    f.values[j] = pairwise_sum(t);
  }
  return f;
}

double inner(const RandomField& u, const RandomField& v) {
  if (u.space != v.space || u.grid != v.grid || u.ncomp != v.ncomp)
    throw InvalidArgument("inner product of incompatible random fields");
  std::vector<double> per(u.space->num_samples());
  std::vector<double> t(u.sample_size());
  for (int w = 0; w < u.space->num_samples(); ++w) {
    const double* a = u.sample(w);
    const double* b = v.sample(w);
    for (std::size_t j = 0; j < t.size(); ++j) t[j] = a[j] * b[j];
    per[w] = u.space->weight(w) * pairwise_sum(t);
  }
  return u.grid->cell_volume() * pairwise_sum(per);
}

double norm(const RandomField& u, double p) {
  const int ns = u.grid->num_sites();
  std::vector<double> per(u.space->num_samples());
  std::vector<double> t(ns);
  for (int w = 0; w < u.space->num_samples(); ++w) {
    for (int s = 0; s < ns; ++s) {
      double a = 0.0;
      for (int c = 0; c < u.ncomp; ++c) a += u.at(w, s, c) * u.at(w, s, c);
      t[s] = std::pow(std::sqrt(a), p);
    }
    per[w] = u.space->weight(w) * pairwise_sum(t);
  }
  return std::pow(u.grid->cell_volume() * pairwise_sum(per), 1.0 / p);
}

SpacePtr make_torus_space(const std::vector<int>& N) {
  const int d = static_cast<int>(N.size());
  if (d < 1) throw InvalidArgument("torus needs at least one axis");
  long long m = 1;
  for (int n : N) {
    if (n < 1) throw InvalidArgument("torus periods must be >= 1");
    m *= n;
    if (m > (1LL << 26)) throw InvalidArgument("torus sample count overflows");
  }
  std::vector<int> stride(d, 1);
  for (int i = 1; i < d; ++i) stride[i] = stride[i - 1] * N[i - 1];
  std::vector<std::vector<int>> shifts(d, std::vector<int>(m));
  for (int w = 0; w < m; ++w)
    for (int i = 0; i < d; ++i) {
      int wi = (w / stride[i]) % N[i];
      int next = (wi + 1) % N[i];
      shifts[i][w] = w + (next - wi) * stride[i];
    }
  std::vector<double> weights(m, 1.0 / static_cast<double>(m));
  return std::make_shared<const ProbabilitySpace>(d, std::move(weights), std::move(shifts), N);
}

std::vector<int> torus_coords(const ProbabilitySpace& space, int w) {
  const auto& N = space.period();
  if (N.empty()) throw InvalidArgument("space has no torus period");
  std::vector<int> out(N.size());
  for (std::size_t i = 0; i < N.size(); ++i) {
    out[i] = w % N[i];
    w /= N[i];
  }
  return out;
}

RandomVariable make_torus_variable(SpacePtr space, int ncomp,
                                   const std::function<void(const int* omega, double* out)>& f) {
  RandomVariable v(space, ncomp);
  for (int w = 0; w < space->num_samples(); ++w) {
    std::vector<int> om = torus_coords(*space, w);
    f(om.data(), v.row(w));
    for (int c = 0; c < ncomp; ++c)
      if (!std::isfinite(v.at(w, c))) throw NonFiniteValue("coefficient sampler returned a non-finite value");
  }
  return v;
}

Periodization make_iid_periodization(const std::vector<int>& N, int ncomp,
                                     const std::function<void(std::mt19937_64&, double*)>& marginal,
                                     std::uint64_t seed) {
  Periodization out;
  out.space = make_torus_space(N);
  out.coefficient = RandomVariable(out.space, ncomp);
  std::mt19937_64 rng(seed);
  for (int w = 0; w < out.space->num_samples(); ++w) {
    marginal(rng, out.coefficient.row(w));
    for (int c = 0; c < ncomp; ++c)
      if (!std::isfinite(out.coefficient.at(w, c))) throw NonFiniteValue("marginal sampler returned a non-finite value");
  }
  return out;
}

SpacePtr disjoint_union(const ProbabilitySpace& a, const ProbabilitySpace& b, double lambda) {
  if (a.dim() != b.dim()) throw InvalidArgument("disjoint union needs equal dimensions");
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw InvalidArgument("mixing weight must lie in [0,1]");
  const int ma = a.num_samples(), mb = b.num_samples();
  std::vector<double> w(ma + mb);
  for (int i = 0; i < ma; ++i) w[i] = lambda * a.weight(i);
  for (int i = 0; i < mb; ++i) w[ma + i] = (1.0 - lambda) * b.weight(i);
  std::vector<std::vector<int>> shifts(a.dim(), std::vector<int>(ma + mb));
  for (int i = 0; i < a.dim(); ++i) {
    for (int j = 0; j < ma; ++j) shifts[i][j] = a.shift(i)[j];
    for (int j = 0; j < mb; ++j) shifts[i][ma + j] = ma + b.shift(i)[j];
  }
  return std::make_shared<const ProbabilitySpace>(a.dim(), std::move(w), std::move(shifts));
}

RandomVariable horizontal_derivative(const RandomVariable& phi) {
  const auto& sp = *phi.space;
  const int d = sp.dim();
  RandomVariable out(phi.space, phi.ncomp * d);
  for (int w = 0; w < sp.num_samples(); ++w)
    for (int i = 0; i < d; ++i) {
      int v = sp.shift(i)[w];
      for (int c = 0; c < phi.ncomp; ++c) out.at(w, c * d + i) = phi.at(v, c) - phi.at(w, c);
    }
  return out;
}

RandomVariable horizontal_divergence(const RandomVariable& psi) {
  const auto& sp = *psi.space;
  const int d = sp.dim();
  if (psi.ncomp % d != 0) throw InvalidArgument("divergence needs d slots per component");
  const int n = psi.ncomp / d;
  RandomVariable out(psi.space, n);
  std::vector<std::vector<int>> inv(d, std::vector<int>(sp.num_samples()));
  for (int i = 0; i < d; ++i)
    for (int w = 0; w < sp.num_samples(); ++w) inv[i][sp.shift(i)[w]] = w;
  for (int w = 0; w < sp.num_samples(); ++w)
    for (int c = 0; c < n; ++c) {
      double s = 0.0;
      for (int i = 0; i < d; ++i) s += psi.at(inv[i][w], c * d + i) - psi.at(w, c * d + i);
      out.at(w, c) = s;
    }
  return out;
}

RandomVariable project_invariant(const RandomVariable& phi) {
  const auto& sp = *phi.space;
  const int m = sp.num_samples();
  const int no = sp.num_orbits();
  std::vector<double> mass(no, 0.0), count(no, 0.0);
  std::vector<std::vector<double>> sum(no, std::vector<double>(phi.ncomp, 0.0)),
      plain(no, std::vector<double>(phi.ncomp, 0.0));
  for (int w = 0; w < m; ++w) {
    int o = sp.orbit_id()[w];
    mass[o] += sp.weight(w);
    count[o] += 1.0;
    for (int c = 0; c < phi.ncomp; ++c) {
      sum[o][c] += sp.weight(w) * phi.at(w, c);
      plain[o][c] += phi.at(w, c);
    }
  }
  RandomVariable out(phi.space, phi.ncomp);
  for (int w = 0; w < m; ++w) {
    int o = sp.orbit_id()[w];
    for (int c = 0; c < phi.ncomp; ++c)
      out.at(w, c) = mass[o] > 0.0 ? sum[o][c] / mass[o] : plain[o][c] / count[o];
  }
  return out;
}

RandomVariable PotBasis::column(const SpacePtr& space, int j) const {
  RandomVariable v(space, ncomp * dim);
  for (std::size_t r = 0; r < v.values.size(); ++r) v.values[r] = Q(static_cast<Eigen::Index>(r), j);
  return v;
}

RandomVariable PotBasis::combine(const SpacePtr& space, const Eigen::VectorXd& coeffs) const {
  RandomVariable v(space, ncomp * dim);
  if (Q.cols() == 0) return v;
  Eigen::VectorXd x = Q * coeffs;
  for (std::size_t r = 0; r < v.values.size(); ++r) v.values[r] = x(static_cast<Eigen::Index>(r));
  return v;
}

PotBasis pot_basis(const ProbabilitySpace& space, int ncomp, PotMethod method) {
  const int m = space.num_samples();
  const int d = space.dim();
  for (int w = 0; w < m; ++w)
    if (!(space.weight(w) > 0.0)) throw InvalidArgument("pot basis requires strictly positive weights (degenerate)");
  // Scalar derivative matrix W^{1/2} D, rows w*d + i.
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(m) * d, m);
  for (int w = 0; w < m; ++w) {
    double sw = std::sqrt(space.weight(w));
    for (int i = 0; i < d; ++i) {
      M(w * d + i, space.shift(i)[w]) += sw;
      M(w * d + i, w) -= sw;
    }
  }
  Eigen::MatrixXd U;
  if (method == PotMethod::svd) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(M, Eigen::ComputeThinU);
    const auto& s = svd.singularValues();
    double smax = s.size() ? s(0) : 0.0;
    int r = 0;
    while (r < s.size() && s(r) > 1e-10 * smax && smax > 0.0) ++r;
    U = svd.matrixU().leftCols(r);
  } else {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(M);
    qr.setThreshold(1e-10);
    int r = static_cast<int>(qr.rank());
    Eigen::MatrixXd full = qr.householderQ();
    U = full.leftCols(r);
  }
  const int r = static_cast<int>(U.cols());
  PotBasis b;
  b.ncomp = ncomp;
  b.dim = d;
  b.Q = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(m) * ncomp * d, static_cast<Eigen::Index>(ncomp) * r);
  for (int w = 0; w < m; ++w) {
    double isw = 1.0 / std::sqrt(space.weight(w));
    for (int c = 0; c < ncomp; ++c)
      for (int i = 0; i < d; ++i)
        for (int a = 0; a < r; ++a)
          b.Q((static_cast<Eigen::Index>(w) * ncomp + c) * d + i, c * r + a) = isw * U(w * d + i, a);
  }
  return b;
}

void check_compatible(const ProbabilitySpace& space, const Grid& grid, Boundary bc) {
  if (space.dim() != grid.dim()) throw InvalidArgument("space and grid dimensions differ");
  if (bc != Boundary::periodic) return;
  for (int i = 0; i < grid.dim(); ++i)
    if (grid.extents()[i] % space.order(i) != 0)
      throw IncompatibleEpsilon("periodic window extent " + std::to_string(grid.extents()[i]) +
                                " is not a multiple of the shift order " + std::to_string(space.order(i)));
}

RandomField stationary_extension(const RandomVariable& phi, GridPtr grid, Boundary bc) {
  const auto& sp = *phi.space;
  check_compatible(sp, *grid, bc);
  RandomField out(phi.space, grid, phi.ncomp, bc);
  std::vector<int> z(grid->dim());
  for (int s = 0; s < grid->num_sites(); ++s) {
    grid->coords(s, z.data());
    for (int w = 0; w < sp.num_samples(); ++w) {
      int v = sp.shift_by(w, z.data());
      for (int c = 0; c < phi.ncomp; ++c) out.at(w, s, c) = phi.at(v, c);
    }
  }
  return out;
}

std::string space_to_json(const ProbabilitySpace& space) {
  nlohmann::ordered_json j;
  j["dim"] = space.dim();
  j["samples"] = space.num_samples();
  j["weights"] = space.weights();
  std::vector<std::vector<int>> shifts;
  for (int i = 0; i < space.dim(); ++i) shifts.push_back(space.shift(i));
  j["shifts"] = shifts;
  j["period"] = space.period();
  return j.dump(2);
}

SpacePtr space_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
    return std::make_shared<const ProbabilitySpace>(j.at("dim").get<int>(), j.at("weights").get<std::vector<double>>(),
                                                    j.at("shifts").get<std::vector<std::vector<int>>>(),
                                                    j.value("period", std::vector<int>{}));
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("malformed probability space JSON: ") + e.what());
  }
}

}  // namespace su
