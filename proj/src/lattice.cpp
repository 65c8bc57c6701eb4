#include "stochunfold/lattice.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>

namespace su {

const char* to_string(Boundary b) {
  return b == Boundary::periodic ? "periodic" : "zero_extension";
}

Boundary boundary_from_string(const std::string& s) {
  if (s == "periodic") return Boundary::periodic;
  if (s == "zero_extension") return Boundary::zero_extension;
  throw InvalidArgument("unknown boundary convention '" + s + "'");
}

Grid::Grid(double eps, std::vector<int> origin, std::vector<int> extents,
           std::vector<std::uint8_t> domain_mask, std::vector<std::uint8_t> halo_mask)
    : eps_(eps),
      origin_(std::move(origin)),
      extents_(std::move(extents)),
      domain_(std::move(domain_mask)),
      halo_(std::move(halo_mask)) {
  if (!(eps_ > 0.0) || !std::isfinite(eps_)) throw InvalidArgument("grid spacing must be positive");
  if (extents_.empty()) throw InvalidArgument("grid needs at least one axis");
  if (origin_.size() != extents_.size()) throw InvalidArgument("origin and extents differ in length");
  long long n = 1;
  for (int e : extents_) {
    if (e < 1) throw InvalidArgument("grid extents must be >= 1");
    n *= e;
    if (n > (1LL << 30)) throw InvalidArgument("grid too large");
  }
  num_sites_ = static_cast<int>(n);
  if (static_cast<int>(domain_.size()) != num_sites_ || static_cast<int>(halo_.size()) != num_sites_)
    throw InvalidArgument("mask size does not match the number of sites");
  for (int s = 0; s < num_sites_; ++s)
    if (domain_[s] && !halo_[s]) throw InvalidArgument("domain mask must be contained in the halo mask");
  cell_volume_ = std::pow(eps_, dim());
}

std::shared_ptr<const Grid> Grid::window(double eps, std::vector<int> origin, std::vector<int> extents) {
  long long n = 1;
  for (int e : extents) n *= std::max(e, 1);
  std::vector<std::uint8_t> all(static_cast<std::size_t>(n), 1);
  return std::make_shared<const Grid>(eps, std::move(origin), std::move(extents), all, all);
}

std::shared_ptr<const Grid> Grid::box_domain(double eps, const std::vector<double>& lower,
                                             const std::vector<double>& upper,
                                             const std::vector<std::vector<int>>& generators) {
  const int d = static_cast<int>(lower.size());
  if (d == 0 || upper.size() != lower.size()) throw InvalidArgument("box bounds differ in dimension");
  if (!(eps > 0.0)) throw InvalidArgument("grid spacing must be positive");
  std::vector<int> zl(d), zh(d), lo(d), hi(d);
  for (int i = 0; i < d; ++i) {
    if (!(upper[i] > lower[i])) throw InvalidArgument("empty box");
    zl[i] = static_cast<int>(std::floor(lower[i] / eps + 1e-9)) + 1;
    zh[i] = static_cast<int>(std::ceil(upper[i] / eps - 1e-9)) - 1;
    if (zh[i] < zl[i]) throw InvalidArgument("box contains no lattice site at this spacing");
    int bmax = 0, bmin = 0;
    for (const auto& b : generators) {
      if (static_cast<int>(b.size()) != d) throw InvalidArgument("generator dimension mismatch");
      bmax = std::max(bmax, b[i]);
      bmin = std::min(bmin, b[i]);
    }
    lo[i] = zl[i] - bmax - 1;
    hi[i] = zh[i] - bmin;
  }
  std::vector<int> ext(d);
  long long n = 1;
  for (int i = 0; i < d; ++i) {
    ext[i] = hi[i] - lo[i] + 1;
    n *= ext[i];
  }
  std::vector<std::uint8_t> dom(static_cast<std::size_t>(n), 0), halo(static_cast<std::size_t>(n), 0);
  auto inside = [&](const std::vector<int>& z) {
    for (int i = 0; i < d; ++i)
      if (z[i] < zl[i] || z[i] > zh[i]) return false;
    return true;
  };
  std::vector<int> z(d), zb(d);
  for (long long s = 0; s < n; ++s) {
    long long r = s;
    for (int i = 0; i < d; ++i) {
      z[i] = lo[i] + static_cast<int>(r % ext[i]);
      r /= ext[i];
    }
    bool in = inside(z);
    bool h = in;
    for (const auto& b : generators) {
      if (h) break;
      for (int i = 0; i < d; ++i) zb[i] = z[i] + b[i];
      h = inside(zb);
    }
    dom[s] = in;
    halo[s] = h;
  }
  auto g = std::make_shared<Grid>(eps, lo, ext, std::move(dom), std::move(halo));
  g->lower_ = lower;
  g->upper_ = upper;
  return g;
}

void Grid::coords(int site, int* z) const {
  int r = site;
  for (int i = 0; i < dim(); ++i) {
    z[i] = origin_[i] + r % extents_[i];
    r /= extents_[i];
  }
}

std::vector<int> Grid::coords(int site) const {
  std::vector<int> z(dim());
  coords(site, z.data());
  return z;
}

std::vector<double> Grid::position(int site) const {
  std::vector<int> z = coords(site);
  std::vector<double> x(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) x[i] = eps_ * z[i];
  return x;
}

int Grid::site_at(const int* z) const {
  int s = 0, stride = 1;
  for (int i = 0; i < dim(); ++i) {
    int k = z[i] - origin_[i];
    if (k < 0 || k >= extents_[i]) return -1;
    s += k * stride;
    stride *= extents_[i];
  }
  return s;
}

int Grid::neighbor(int site, const int* offset, Boundary bc) const {
  int s = 0, stride = 1, r = site;
  for (int i = 0; i < dim(); ++i) {
    int k = r % extents_[i] + offset[i];
    r /= extents_[i];
    if (k < 0 || k >= extents_[i]) {
      if (bc == Boundary::zero_extension) return -1;
      k %= extents_[i];
      if (k < 0) k += extents_[i];
    }
    s += k * stride;
    stride *= extents_[i];
  }
  return s;
}

int Grid::neighbor_axis(int site, int axis, int step, Boundary bc) const {
  int off[8] = {0, 0, 0, 0, 0, 0, 0, 0};
  if (dim() > 8) {
    std::vector<int> o(dim(), 0);
    o[axis] = step;
    return neighbor(site, o.data(), bc);
  }
  off[axis] = step;
  return neighbor(site, off, bc);
}

std::vector<int> Grid::domain_sites() const {
  std::vector<int> out;
  for (int s = 0; s < num_sites_; ++s)
    if (domain_[s]) out.push_back(s);
  return out;
}

std::vector<int> Grid::halo_sites() const {
  std::vector<int> out;
  for (int s = 0; s < num_sites_; ++s)
    if (halo_[s]) out.push_back(s);
  return out;
}

LatticeFunction::LatticeFunction(GridPtr g, int n, Boundary b)
    : grid(std::move(g)), ncomp(n), bc(b), values(static_cast<std::size_t>(grid->num_sites()) * n, 0.0) {
  if (n < 1) throw InvalidArgument("lattice function needs at least one component");
}

void gradient_raw(const Grid& g, Boundary bc, int ncomp, const double* u, double* out) {
  const int d = g.dim();
  const int ns = g.num_sites();
  const double inv = 1.0 / g.eps();
  for (int s = 0; s < ns; ++s) {
    for (int i = 0; i < d; ++i) {
      int nb = g.neighbor_axis(s, i, +1, bc);
      for (int c = 0; c < ncomp; ++c) {
        double up = nb >= 0 ? u[static_cast<std::size_t>(nb) * ncomp + c] : 0.0;
        out[(static_cast<std::size_t>(s) * ncomp + c) * d + i] = (up - u[static_cast<std::size_t>(s) * ncomp + c]) * inv;
      }
    }
  }
}

void divergence_raw(const Grid& g, Boundary bc, int ncomp, const double* gin, double* out) {
  const int d = g.dim();
  const int ns = g.num_sites();
  const double inv = 1.0 / g.eps();
  const std::size_t stride = static_cast<std::size_t>(ncomp) * d;
  for (int s = 0; s < ns; ++s) {
    for (int c = 0; c < ncomp; ++c) out[static_cast<std::size_t>(s) * ncomp + c] = 0.0;
    for (int i = 0; i < d; ++i) {
      int nb = g.neighbor_axis(s, i, -1, bc);
      for (int c = 0; c < ncomp; ++c) {
        double down = nb >= 0 ? gin[nb * stride + c * d + i] : 0.0;
        out[static_cast<std::size_t>(s) * ncomp + c] += (down - gin[s * stride + c * d + i]) * inv;
      }
    }
  }
}

LatticeFunction discrete_gradient(const LatticeFunction& u) {
  LatticeFunction g(u.grid, u.ncomp * u.grid->dim(), u.bc);
  gradient_raw(*u.grid, u.bc, u.ncomp, u.values.data(), g.values.data());
  return g;
}

LatticeFunction discrete_divergence(const LatticeFunction& g) {
  const int d = g.grid->dim();
  if (g.ncomp % d != 0) throw InvalidArgument("divergence needs d slots per component");
  LatticeFunction u(g.grid, g.ncomp / d, g.bc);
  divergence_raw(*g.grid, g.bc, u.ncomp, g.values.data(), u.values.data());
  return u;
}

double inner(const LatticeFunction& u, const LatticeFunction& v) {
  if (u.grid != v.grid || u.ncomp != v.ncomp) throw InvalidArgument("inner product of incompatible lattice functions");
  std::vector<double> t(u.values.size());
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = u.values[i] * v.values[i];
  return u.grid->cell_volume() * pairwise_sum(t);
}

double norm(const LatticeFunction& u, double p) {
  std::vector<double> t(u.values.size());
  if (std::isinf(p)) {
    double m = 0.0;
    for (double x : u.values) m = std::max(m, std::abs(x));
    return m;
  }
  // Norm of the pointwise Euclidean magnitude.
  t.assign(u.num_sites(), 0.0);
  for (int s = 0; s < u.num_sites(); ++s) {
    double a = 0.0;
    for (int c = 0; c < u.ncomp; ++c) a += u.at(s, c) * u.at(s, c);
    t[s] = std::pow(std::sqrt(a), p);
  }
  return std::pow(u.grid->cell_volume() * pairwise_sum(t), 1.0 / p);
}

int cell_of(const Grid& g, const double* x, Boundary bc) {
  const int d = g.dim();
  int s = 0, stride = 1;
  for (int i = 0; i < d; ++i) {
    if (!std::isfinite(x[i])) throw NonFiniteValue("query point is not finite");
    long long k = static_cast<long long>(std::floor(x[i] / g.eps() + 0.5)) - g.origin()[i];
    if (k < 0 || k >= g.extents()[i]) {
      if (bc == Boundary::zero_extension) throw InvalidArgument("query point outside the window");
      k %= g.extents()[i];
      if (k < 0) k += g.extents()[i];
    }
    s += static_cast<int>(k) * stride;
    stride *= g.extents()[i];
  }
  return s;
}

std::vector<double> piecewise_constant(const LatticeFunction& u, const std::vector<double>& points) {
  const int d = u.grid->dim();
  if (points.size() % d != 0) throw InvalidArgument("points must hold d coordinates each");
  const std::size_t np = points.size() / d;
  std::vector<double> out(np * u.ncomp);
  for (std::size_t p = 0; p < np; ++p) {
    int s = cell_of(*u.grid, &points[p * d], u.bc);
    for (int c = 0; c < u.ncomp; ++c) out[p * u.ncomp + c] = u.at(s, c);
  }
  return out;
}

namespace {

double node_value(const LatticeFunction& u, const std::vector<long long>& k, int c) {
  const Grid& g = *u.grid;
  int s = 0, stride = 1;
  for (int i = 0; i < g.dim(); ++i) {
    long long r = k[i] - g.origin()[i];
    if (r < 0 || r >= g.extents()[i]) {
      if (u.bc == Boundary::zero_extension) return 0.0;
      r %= g.extents()[i];
      if (r < 0) r += g.extents()[i];
    }
    s += static_cast<int>(r) * stride;
    stride *= g.extents()[i];
  }
  return u.at(s, c);
}

// Evaluates the Freudenthal interpolant; grad receives ncomp*d entries when non-null.
void freudenthal(const LatticeFunction& u, const double* x, double* val, double* grad) {
  const int d = u.grid->dim();
  const double eps = u.grid->eps();
  std::vector<long long> k(d);
  std::vector<double> f(d);
  for (int i = 0; i < d; ++i) {
    if (!std::isfinite(x[i])) throw NonFiniteValue("query point is not finite");
    double s = x[i] / eps;
    k[i] = static_cast<long long>(std::floor(s));
    f[i] = s - static_cast<double>(k[i]);
  }
  std::vector<int> order(d);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return f[a] > f[b]; });
  for (int c = 0; c < u.ncomp; ++c) {
    std::vector<long long> v = k;
    double prev = node_value(u, v, c);
    double acc = prev;
    for (int j = 0; j < d; ++j) {
      int ax = order[j];
      v[ax] += 1;
      double cur = node_value(u, v, c);
      acc += f[ax] * (cur - prev);
      if (grad) grad[c * d + ax] = (cur - prev) / eps;
      prev = cur;
    }
    if (val) val[c] = acc;
  }
}

}  // namespace

std::vector<double> piecewise_affine(const LatticeFunction& u, const std::vector<double>& points) {
  const int d = u.grid->dim();
  if (points.size() % d != 0) throw InvalidArgument("points must hold d coordinates each");
  const std::size_t np = points.size() / d;
  std::vector<double> out(np * u.ncomp);
  for (std::size_t p = 0; p < np; ++p) freudenthal(u, &points[p * d], &out[p * u.ncomp], nullptr);
  return out;
}

std::vector<double> piecewise_affine_gradient(const LatticeFunction& u, const std::vector<double>& points) {
  const int d = u.grid->dim();
  if (points.size() % d != 0) throw InvalidArgument("points must hold d coordinates each");
  const std::size_t np = points.size() / d;
  std::vector<double> out(np * u.ncomp * d);
  for (std::size_t p = 0; p < np; ++p) freudenthal(u, &points[p * d], nullptr, &out[p * u.ncomp * d]);
  return out;
}

Quadrature gauss_legendre(int order) {
  if (order < 1 || order > 32) throw InvalidArgument("quadrature order must be in [1,32]");
  Quadrature q;
  q.nodes.resize(order);
  q.weights.resize(order);
  const double pi = std::acos(-1.0);
  for (int i = 0; i < order; ++i) {
    double x = std::cos(pi * (i + 0.75) / (order + 0.5));
    double dp = 1.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = x;
      for (int n = 2; n <= order; ++n) {
        double p2 = ((2.0 * n - 1.0) * x * p1 - (n - 1.0) * p0) / n;
        p0 = p1;
        p1 = p2;
      }
      if (order == 1) {
        p1 = x;
        p0 = 1.0;
      }
      dp = order * (x * p1 - p0) / (x * x - 1.0);
      double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    double p0 = 1.0, p1 = x;
    for (int n = 2; n <= order; ++n) {
      double p2 = ((2.0 * n - 1.0) * x * p1 - (n - 1.0) * p0) / n;
      p0 = p1;
      p1 = p2;
    }
    if (order == 1) p0 = 1.0, p1 = x;
    dp = order * (x * p1 - p0) / (x * x - 1.0);
    // Map [-1,1] to [-1/2,1/2]; weights normalised to total 1.
    q.nodes[order - 1 - i] = 0.5 * x;
    q.weights[order - 1 - i] = 1.0 / ((1.0 - x * x) * dp * dp);
  }
  if (order == 1) {
    q.nodes[0] = 0.0;
    q.weights[0] = 1.0;
  }
  return q;
}

void for_each_cell_point(const Grid& g, int site, const Quadrature& q,
                         const std::function<void(const double* x, double w)>& f) {
  const int d = g.dim();
  const int nq = static_cast<int>(q.nodes.size());
  std::vector<int> z = g.coords(site);
  std::vector<int> idx(d, 0);
  std::vector<double> x(d);
  long long total = 1;
  for (int i = 0; i < d; ++i) total *= nq;
  for (long long t = 0; t < total; ++t) {
    long long r = t;
    double w = g.cell_volume();
    for (int i = 0; i < d; ++i) {
      int j = static_cast<int>(r % nq);
      r /= nq;
      x[i] = g.eps() * (z[i] + q.nodes[j]);
      w *= q.weights[j];
    }
    f(x.data(), w);
  }
}

LatticeFunction discretize(const Field& U, GridPtr grid, int ncomp, Boundary bc, int order) {
  LatticeFunction out(grid, ncomp, bc);
  Quadrature q = gauss_legendre(order);
  std::vector<double> buf(ncomp);
  const double vol = grid->cell_volume();
  for (int s = 0; s < grid->num_sites(); ++s) {
    std::vector<double> acc(ncomp, 0.0);
    for_each_cell_point(*grid, s, q, [&](const double* x, double w) {
      U(x, buf.data());
      for (int c = 0; c < ncomp; ++c) {
        if (!std::isfinite(buf[c])) throw NonFiniteValue("continuum function returned a non-finite value");
        acc[c] += w * buf[c];
      }
    });
    for (int c = 0; c < ncomp; ++c) out.at(s, c) = acc[c] / vol;
  }
  return out;
}

namespace {

std::string fmt(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::vector<int> parse_ints(const std::string& s) {
  std::istringstream is(s);
  std::vector<int> v;
  int x;
  while (is >> x) v.push_back(x);
  return v;
}

}  // namespace

void write_csv(const LatticeFunction& u, std::ostream& os) {
  const Grid& g = *u.grid;
  os << "# stochunfold lattice function\n";
  os << "# epsilon=" << fmt(g.eps()) << "\n";
  os << "# origin=";
  for (int i = 0; i < g.dim(); ++i) os << (i ? " " : "") << g.origin()[i];
  os << "\n# extents=";
  for (int i = 0; i < g.dim(); ++i) os << (i ? " " : "") << g.extents()[i];
  os << "\n# components=" << u.ncomp << "\n";
  os << "# convention=" << to_string(u.bc) << "\n";
  os << "site,domain,halo";
  for (int c = 0; c < u.ncomp; ++c) os << ",c" << c;
  os << "\n";
  for (int s = 0; s < g.num_sites(); ++s) {
    os << s << "," << int(g.in_domain(s)) << "," << int(g.in_halo(s));
    for (int c = 0; c < u.ncomp; ++c) os << "," << fmt(u.at(s, c));
    os << "\n";
  }
}

LatticeFunction read_csv(std::istream& is) {
  std::string line;
  double eps = 0.0;
  std::vector<int> origin, extents;
  int ncomp = 0;
  Boundary bc = Boundary::zero_extension;
  bool header_row = false;
  std::vector<std::uint8_t> dom, halo;
  std::vector<double> vals;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      auto eq = line.find('=');
      if (eq == std::string::npos) continue;
      std::string key = line.substr(2, eq - 2), val = line.substr(eq + 1);
      if (key == "epsilon") eps = std::stod(val);
      else if (key == "origin") origin = parse_ints(val);
      else if (key == "extents") extents = parse_ints(val);
      else if (key == "components") ncomp = std::stoi(val);
      else if (key == "convention") bc = boundary_from_string(val);
      continue;
    }
    if (!header_row) {
      header_row = true;
      continue;
    }
    std::istringstream ls(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (static_cast<int>(cells.size()) != 3 + ncomp) throw InvalidArgument("malformed lattice CSV row");
    dom.push_back(static_cast<std::uint8_t>(std::stoi(cells[1])));
    halo.push_back(static_cast<std::uint8_t>(std::stoi(cells[2])));
    for (int c = 0; c < ncomp; ++c) vals.push_back(std::stod(cells[3 + c]));
  }
  auto g = std::make_shared<const Grid>(eps, origin, extents, dom, halo);
  LatticeFunction u(g, ncomp, bc);
  if (vals.size() != u.values.size()) throw InvalidArgument("lattice CSV row count mismatch");
  u.values = std::move(vals);
  return u;
}

void write_binary(const LatticeFunction& u, std::ostream& os) {
  const Grid& g = *u.grid;
  os.write("SULF", 4);
  std::int32_t version = 1, d = g.dim(), nc = u.ncomp, bc = u.bc == Boundary::periodic;
  double eps = g.eps();
  os.write(reinterpret_cast<const char*>(&version), 4);
  os.write(reinterpret_cast<const char*>(&eps), 8);
  os.write(reinterpret_cast<const char*>(&d), 4);
  for (int i = 0; i < d; ++i) {
    std::int32_t o = g.origin()[i];
    os.write(reinterpret_cast<const char*>(&o), 4);
  }
  for (int i = 0; i < d; ++i) {
    std::int32_t e = g.extents()[i];
    os.write(reinterpret_cast<const char*>(&e), 4);
  }
  os.write(reinterpret_cast<const char*>(&nc), 4);
  os.write(reinterpret_cast<const char*>(&bc), 4);
  os.write(reinterpret_cast<const char*>(g.domain_mask().data()), g.num_sites());
  os.write(reinterpret_cast<const char*>(g.halo_mask().data()), g.num_sites());
  os.write(reinterpret_cast<const char*>(u.values.data()), static_cast<std::streamsize>(u.values.size() * 8));
}

LatticeFunction read_binary(std::istream& is) {
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "SULF", 4) != 0) throw InvalidArgument("not a lattice function file");
  std::int32_t version = 0, d = 0, nc = 0, bc = 0;
  double eps = 0.0;
  is.read(reinterpret_cast<char*>(&version), 4);
  is.read(reinterpret_cast<char*>(&eps), 8);
  is.read(reinterpret_cast<char*>(&d), 4);
  if (version != 1 || d < 1 || d > 8) throw InvalidArgument("unsupported lattice function header");
  std::vector<int> origin(d), extents(d);
  for (int i = 0; i < d; ++i) {
    std::int32_t o;
    is.read(reinterpret_cast<char*>(&o), 4);
    origin[i] = o;
  }
  long long n = 1;
  for (int i = 0; i < d; ++i) {
    std::int32_t e;
    is.read(reinterpret_cast<char*>(&e), 4);
    extents[i] = e;
    n *= e;
  }
  is.read(reinterpret_cast<char*>(&nc), 4);
  is.read(reinterpret_cast<char*>(&bc), 4);
  std::vector<std::uint8_t> dom(n), halo(n);
  is.read(reinterpret_cast<char*>(dom.data()), n);
  is.read(reinterpret_cast<char*>(halo.data()), n);
  auto g = std::make_shared<const Grid>(eps, origin, extents, dom, halo);
  LatticeFunction u(g, nc, bc ? Boundary::periodic : Boundary::zero_extension);
  is.read(reinterpret_cast<char*>(u.values.data()), static_cast<std::streamsize>(u.values.size() * 8));
  if (!is) throw InvalidArgument("truncated lattice function file");
  return u;
}

}  // namespace su
