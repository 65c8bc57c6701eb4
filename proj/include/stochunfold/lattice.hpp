#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <vector>

#include "stochunfold/common.hpp"

namespace su {

enum class Boundary { zero_extension, periodic };

const char* to_string(Boundary b);
Boundary boundary_from_string(const std::string& s);

/// Finite window of the lattice eps*Z^d. Site k of the window sits at the
/// integer point origin + multi_index(k); the first axis runs fastest.
class Grid {
 public:
  Grid(double eps, std::vector<int> origin, std::vector<int> extents,
       std::vector<std::uint8_t> domain_mask, std::vector<std::uint8_t> halo_mask);

  /// Window with every site in the domain; the usual choice for periodic tori.
  static std::shared_ptr<const Grid> window(double eps, std::vector<int> origin,
                                            std::vector<int> extents);

  /// Open box O = prod (lower_i, upper_i). The domain mask marks O ∩ eps Z^d, the
  /// halo mask its dilation by -b for every generator b. The window is padded so
  /// that gradients of functions supported in the halo stay inside it.
  static std::shared_ptr<const Grid> box_domain(double eps, const std::vector<double>& lower,
                                                const std::vector<double>& upper,
                                                const std::vector<std::vector<int>>& generators);

  int dim() const { return static_cast<int>(extents_.size()); }
  double eps() const { return eps_; }
  int num_sites() const { return num_sites_; }
  const std::vector<int>& origin() const { return origin_; }
  const std::vector<int>& extents() const { return extents_; }
  const std::vector<std::uint8_t>& domain_mask() const { return domain_; }
  const std::vector<std::uint8_t>& halo_mask() const { return halo_; }
  bool in_domain(int site) const { return domain_[site] != 0; }
  bool in_halo(int site) const { return halo_[site] != 0; }
  double cell_volume() const { return cell_volume_; }

  bool has_box() const { return !lower_.empty(); }
  const std::vector<double>& box_lower() const { return lower_; }
  const std::vector<double>& box_upper() const { return upper_; }

  /// Absolute integer coordinates z of a site (x = eps*z).
  void coords(int site, int* z) const;
  std::vector<int> coords(int site) const;
  std::vector<double> position(int site) const;
  /// Site at absolute coordinates z, or -1 outside the window.
  int site_at(const int* z) const;
  /// Site at z + offset under the boundary convention; -1 when it leaves a
  /// zero-extension window.
  int neighbor(int site, const int* offset, Boundary bc) const;
  int neighbor_axis(int site, int axis, int step, Boundary bc) const;

  std::vector<int> domain_sites() const;
  std::vector<int> halo_sites() const;

 private:
  double eps_;
  std::vector<int> origin_, extents_;
  std::vector<std::uint8_t> domain_, halo_;
  std::vector<double> lower_, upper_;
  int num_sites_ = 0;
  double cell_volume_ = 1.0;
};

using GridPtr = std::shared_ptr<const Grid>;

/// Values over (site, component) on a grid.
struct LatticeFunction {
  LatticeFunction() = default;
  LatticeFunction(GridPtr grid, int ncomp, Boundary bc);

  GridPtr grid;
  int ncomp = 0;
  Boundary bc = Boundary::zero_extension;
  std::vector<double> values;

  double& at(int site, int c) { return values[static_cast<std::size_t>(site) * ncomp + c]; }
  double at(int site, int c) const { return values[static_cast<std::size_t>(site) * ncomp + c]; }
  int num_sites() const { return grid->num_sites(); }
};

/// Raw kernels on contiguous (site, component) arrays. The gradient has
/// ncomp*d components with index c*d + i.
void gradient_raw(const Grid& g, Boundary bc, int ncomp, const double* u, double* out);
void divergence_raw(const Grid& g, Boundary bc, int ncomp, const double* gin, double* out);

LatticeFunction discrete_gradient(const LatticeFunction& u);
/// Negative divergence: sum_i (g_i(x - eps e_i) - g_i(x)) / eps.
LatticeFunction discrete_divergence(const LatticeFunction& g);

/// Inner product and L^p norm with the eps^d counting weight.
double inner(const LatticeFunction& u, const LatticeFunction& v);
double norm(const LatticeFunction& u, double p = 2.0);

/// Site whose cell x + eps*[-1/2,1/2)^d contains the point; throws outside the window
/// (periodic windows wrap).
int cell_of(const Grid& g, const double* x, Boundary bc);

/// Piecewise-constant interpolation at query points (flattened, d per point).
std::vector<double> piecewise_constant(const LatticeFunction& u, const std::vector<double>& points);

/// Piecewise-affine interpolation on the Freudenthal (Kuhn) triangulation of
/// the lattice: inside a unit cube with fractional coordinates s, the simplex is
/// picked by sorting s in decreasing order. Diagnostic sampler only.
std::vector<double> piecewise_affine(const LatticeFunction& u, const std::vector<double>& points);
/// Gradient of the piecewise-affine interpolant (ncomp*d values per point).
std::vector<double> piecewise_affine_gradient(const LatticeFunction& u,
                                              const std::vector<double>& points);

/// Tensor-product Gauss-Legendre rule on [-1/2,1/2] with weights summing to 1.
/// order 1 is the midpoint rule.
struct Quadrature {
  std::vector<double> nodes;
  std::vector<double> weights;
};
Quadrature gauss_legendre(int order);

/// Continuum field x -> out[0..ncomp).
using Field = std::function<void(const double* x, double* out)>;

/// Cell averages over x + eps*Box computed with the given quadrature order.
LatticeFunction discretize(const Field& U, GridPtr grid, int ncomp, Boundary bc, int order = 1);

/// Calls f(x, w) for every quadrature point of the cell of `site`; weights
/// include the cell volume.
void for_each_cell_point(const Grid& g, int site, const Quadrature& q,
                         const std::function<void(const double* x, double w)>& f);

/// Text layout: header lines starting with '#', then one row per site with the
/// domain and halo flags followed by the components.
void write_csv(const LatticeFunction& u, std::ostream& os);
LatticeFunction read_csv(std::istream& is);
/// Binary layout: magic, version, header, then row-major doubles (little endian host order).
void write_binary(const LatticeFunction& u, std::ostream& os);
LatticeFunction read_binary(std::istream& is);

}  // namespace su
