#include "stochunfold/unfolding.hpp"

#include <algorithm>
#include <cmath>

namespace su {

namespace {

int resolve_threads(int t) { return t > 0 ? t : default_threads(); }

RandomField shift_sites(const RandomField& u, bool negative) {
  check_compatible(*u.space, *u.grid, u.bc);
  RandomField out(u.space, u.grid, u.ncomp, u.bc);
  const auto& sp = *u.space;
  std::vector<int> z(u.grid->dim());
  for (int s = 0; s < u.grid->num_sites(); ++s) {
    u.grid->coords(s, z.data());
    for (int w = 0; w < sp.num_samples(); ++w) {
      int v = negative ? sp.shift_by_neg(w, z.data()) : sp.shift_by(w, z.data());
      for (int c = 0; c < u.ncomp; ++c) out.at(w, s, c) = u.at(v, s, c);
    }
  }
  return out;
}

}  // namespace

RandomField unfold(const RandomField& u) { return shift_sites(u, true); }

RandomField unfold_inverse(const RandomField& u) { return shift_sites(u, false); }

RandomField fold(const TwoScaleField& V, SpacePtr space, GridPtr grid, int ncomp, Boundary bc, int order) {
  check_compatible(*space, *grid, bc);
  RandomField out(space, grid, ncomp, bc);
  Quadrature q = gauss_legendre(order);
  const double vol = grid->cell_volume();
  std::vector<int> z(grid->dim());
  std::vector<double> buf(ncomp), acc(ncomp);
  for (int s = 0; s < grid->num_sites(); ++s) {
    grid->coords(s, z.data());
    for (int w = 0; w < space->num_samples(); ++w) {
      int v = space->shift_by(w, z.data());
      std::fill(acc.begin(), acc.end(), 0.0);
      for_each_cell_point(*grid, s, q, [&](const double* x, double wt) {
        V(v, x, buf.data());
        for (int c = 0; c < ncomp; ++c) {
          if (!std::isfinite(buf[c])) throw NonFiniteValue("two-scale function returned a non-finite value");
          acc[c] += wt * buf[c];
        }
      });
      for (int c = 0; c < ncomp; ++c) out.at(w, s, c) = acc[c] / vol;
    }
  }
  return out;
}

double commutator_residual(const RandomField& u) {
  const Grid& g = *u.grid;
  const auto& sp = *u.space;
  const int d = g.dim(), n = u.ncomp, m = sp.num_samples();
  RandomField v = unfold(u);
  // T~ grad u: gradient per sample, then unfold.
  RandomField gu(u.space, u.grid, n * d, u.bc);
  RandomField gv(u.space, u.grid, n * d, u.bc);
  for (int w = 0; w < m; ++w) {
    gradient_raw(g, u.bc, n, u.sample(w), gu.sample(w));
    gradient_raw(g, u.bc, n, v.sample(w), gv.sample(w));
  }
  RandomField tgu = unfold(gu);
  double worst = 0.0;
  const double inv = 1.0 / g.eps();
  for (int w = 0; w < m; ++w)
    for (int s = 0; s < g.num_sites(); ++s)
      for (int i = 0; i < d; ++i) {
        int wi = sp.shift(i)[w];
        for (int c = 0; c < n; ++c) {
          double Dv = v.at(wi, s, c) - v.at(w, s, c);
          double Dgv = gv.at(wi, s, c * d + i) - gv.at(w, s, c * d + i);
          double r = tgu.at(w, s, c * d + i) - gv.at(w, s, c * d + i) - inv * Dv - Dgv;
          worst = std::max(worst, std::abs(r));
        }
      }
  return worst;
}

double cutoff_width(double eps, double gamma) { return gamma > 0.0 ? std::pow(eps, gamma / 2.0) : std::sqrt(eps); }

std::vector<double> cutoff_profile(const Grid& grid, double delta) {
  if (!grid.has_box()) throw InvalidArgument("cut-off needs a grid built from a box domain");
  std::vector<double> eta(grid.num_sites(), 0.0);
  for (int s = 0; s < grid.num_sites(); ++s) {
    if (!grid.in_domain(s)) continue;
    std::vector<double> x = grid.position(s);
    double e = 1.0;
    for (int i = 0; i < grid.dim(); ++i) {
      double dist = std::min(x[i] - grid.box_lower()[i], grid.box_upper()[i] - x[i]);
      e *= std::clamp(dist / delta, 0.0, 1.0);
    }
    eta[s] = e;
  }
  return eta;
}

namespace {

// Solves (shift I + grad* grad) x = rhs per sample on the whole window.
RecoveryResult resolvent_solve(const RandomField& rhs, double shift, const CgParams& cg, int threads) {
  const Grid& g = *rhs.grid;
  const int n = rhs.ncomp, d = g.dim();
  RecoveryResult res;
  res.u = RandomField(rhs.space, rhs.grid, n, rhs.bc);
  const int m = rhs.space->num_samples();
  std::vector<int> iters(m, 0);
  std::vector<double> resid(m, 0.0);
  parallel_for(m, resolve_threads(threads), [&](int w) {
    const std::size_t sz = rhs.sample_size();
    std::vector<double> grad(static_cast<std::size_t>(g.num_sites()) * n * d);
    LinearOp A = [&](const std::vector<double>& x, std::vector<double>& y) {
      y.resize(sz);
      gradient_raw(g, rhs.bc, n, x.data(), grad.data());
      divergence_raw(g, rhs.bc, n, grad.data(), y.data());
      for (std::size_t j = 0; j < sz; ++j) y[j] += shift * x[j];
    };
    std::vector<double> b(rhs.sample(w), rhs.sample(w) + sz), x(sz, 0.0);
    CgResult r = conjugate_gradient(A, b, x, cg);
    std::copy(x.begin(), x.end(), res.u.sample(w));
    iters[w] = r.iterations;
    resid[w] = r.residual;
  });
  res.max_iterations = *std::max_element(iters.begin(), iters.end());
  res.max_residual = *std::max_element(resid.begin(), resid.end());
  return res;
}

void apply_cutoff(RecoveryResult& r, double gamma) {
  const Grid& g = *r.u.grid;
  std::vector<double> eta = cutoff_profile(g, cutoff_width(g.eps(), gamma));
  for (int w = 0; w < r.u.space->num_samples(); ++w)
    for (int s = 0; s < g.num_sites(); ++s)
      for (int c = 0; c < r.u.ncomp; ++c) r.u.at(w, s, c) *= eta[s];
}

}  // namespace

RecoveryResult recovery_gradient_folded(const RandomField& fchi, const RecoveryParams& params) {
  const Grid& g = *fchi.grid;
  const int d = g.dim();
  if (fchi.ncomp % d != 0) throw InvalidArgument("chi needs d slots per component");
  const double eps = g.eps();
  const double alpha = std::isnan(params.alpha) ? params.gamma + 1.0 : params.alpha;
  if (!(params.gamma >= 0.0 && params.gamma < 1.0)) throw InvalidArgument("gamma must lie in [0,1)");
  if (!(alpha > 2.0 * params.gamma && alpha < 2.0)) throw InvalidArgument("alpha must satisfy 2 gamma < alpha < 2");
  const int n = fchi.ncomp / d;
  RandomField rhs(fchi.space, fchi.grid, n, fchi.bc);
  const double scale = std::pow(eps, -params.gamma);
  std::vector<double> tmp(fchi.sample_size());
  for (int w = 0; w < fchi.space->num_samples(); ++w) {
    for (std::size_t j = 0; j < tmp.size(); ++j) tmp[j] = scale * fchi.sample(w)[j];
    divergence_raw(g, fchi.bc, n, tmp.data(), rhs.sample(w));
  }
  RecoveryResult r = resolvent_solve(rhs, std::pow(eps, -alpha), params.cg, params.threads);
  if (params.domain_variant) apply_cutoff(r, params.gamma);
  return r;
}

RecoveryResult recovery_gradient(const TwoScaleField& chi, SpacePtr space, GridPtr grid, int ncomp, Boundary bc,
                                 const RecoveryParams& params) {
  RandomField fchi = fold(chi, space, grid, ncomp * grid->dim(), bc, params.quadrature_order);
  return recovery_gradient_folded(fchi, params);
}

RecoveryResult recovery_pair(const TwoScaleField& U, const TwoScaleField& chi, SpacePtr space, GridPtr grid,
                             int ncomp, Boundary bc, const RecoveryParams& params) {
  RecoveryParams inner_params = params;
  inner_params.domain_variant = false;
  RecoveryResult g = recovery_gradient(chi, space, grid, ncomp, bc, inner_params);
  RandomField fu = fold(U, space, grid, ncomp, bc, params.quadrature_order);
  RecoveryResult out;
  if (params.gamma > 0.0) {
    const double ap = std::isnan(params.alpha_prime) ? params.gamma : params.alpha_prime;
    const double shift = std::pow(grid->eps(), -ap);
    RandomField rhs = fu;
    for (double& x : rhs.values) x *= shift;
    out = resolvent_solve(rhs, shift, params.cg, params.threads);
  } else {
    out.u = fu;
  }
  for (std::size_t j = 0; j < out.u.values.size(); ++j) out.u.values[j] += g.u.values[j];
  out.max_iterations = std::max(out.max_iterations, g.max_iterations);
  out.max_residual = std::max(out.max_residual, g.max_residual);
  if (params.domain_variant) apply_cutoff(out, params.gamma);
  return out;
}

RecoveryResult recovery_dirichlet(const RandomField& fU, const RandomField& fchi, const CgParams& cg, int threads) {
  const Grid& g = *fU.grid;
  const int n = fU.ncomp, d = g.dim();
  if (fchi.grid != fU.grid || fchi.ncomp != n * d) throw InvalidArgument("recovery fields are incompatible");
  const Boundary bc = Boundary::zero_extension;
  const int m = fU.space->num_samples();
  RecoveryResult res;
  res.u = RandomField(fU.space, fU.grid, n, bc);
  std::vector<int> iters(m, 0);
  std::vector<double> resid(m, 0.0);
  const auto& mask = g.domain_mask();
  parallel_for(m, resolve_threads(threads), [&](int w) {
    const std::size_t sz = fU.sample_size();
    std::vector<double> grad(static_cast<std::size_t>(g.num_sites()) * n * d);
    gradient_raw(g, bc, n, fU.sample(w), grad.data());
    for (std::size_t j = 0; j < grad.size(); ++j) grad[j] += fchi.sample(w)[j];
    std::vector<double> b(sz);
    divergence_raw(g, bc, n, grad.data(), b.data());
    for (int s = 0; s < g.num_sites(); ++s)
      if (!mask[s])
        for (int c = 0; c < n; ++c) b[static_cast<std::size_t>(s) * n + c] = 0.0;
    LinearOp A = [&](const std::vector<double>& x, std::vector<double>& y) {
      std::vector<double> xm = x;
      for (int s = 0; s < g.num_sites(); ++s)
        if (!mask[s])
          for (int c = 0; c < n; ++c) xm[static_cast<std::size_t>(s) * n + c] = 0.0;
      y.resize(sz);
      gradient_raw(g, bc, n, xm.data(), grad.data());
      divergence_raw(g, bc, n, grad.data(), y.data());
      for (int s = 0; s < g.num_sites(); ++s)
        if (!mask[s])
          for (int c = 0; c < n; ++c) y[static_cast<std::size_t>(s) * n + c] = 0.0;
    };
    std::vector<double> x(sz, 0.0);
    CgResult r = conjugate_gradient(A, b, x, cg);
    std::copy(x.begin(), x.end(), res.u.sample(w));
    iters[w] = r.iterations;
    resid[w] = r.residual;
  });
  res.max_iterations = *std::max_element(iters.begin(), iters.end());
  res.max_residual = *std::max_element(resid.begin(), resid.end());
  return res;
}

TwoScaleDistance two_scale_distance(const RandomField& u, const TwoScaleField& V, const std::vector<RandomVariable>& phis,
                                    const std::vector<Field>& etas, int order) {
  const Grid& g = *u.grid;
  const auto& sp = *u.space;
  const int n = u.ncomp, m = sp.num_samples(), ns = g.num_sites();
  RandomField tu = unfold(u);
  Quadrature q = gauss_legendre(order);
  TwoScaleDistance out;
  std::vector<double> buf(n);

  std::vector<double> per(m), cell(ns);
  for (int w = 0; w < m; ++w) {
    for (int s = 0; s < ns; ++s) {
      double acc = 0.0;
      for_each_cell_point(g, s, q, [&](const double* x, double wt) {
        V(w, x, buf.data());
        for (int c = 0; c < n; ++c) {
          double e = tu.at(w, s, c) - buf[c];
          acc += wt * e * e;
        }
      });
      cell[s] = acc;
    }
    per[w] = sp.weight(w) * pairwise_sum(cell);
  }
  out.strong_error = std::sqrt(pairwise_sum(per));

  const int ne = static_cast<int>(etas.size());
  for (const auto& phi : phis) {
    if (phi.ncomp != n || phi.space != u.space) throw InvalidArgument("test function does not match the field");
    for (int k = 0; k < ne; ++k) {
      // Lattice side: <sum_x u(w,x) . phi(T_{x/eps} w) int_cell eta>.
      std::vector<double> lhs_w(m), rhs_w(m);
      std::vector<int> z(g.dim());
      std::vector<double> ceta(ns);
      for (int s = 0; s < ns; ++s) {
        double acc = 0.0;
        for_each_cell_point(g, s, q, [&](const double* x, double wt) {
          double e;
          etas[k](x, &e);
          acc += wt * e;
        });
        ceta[s] = acc;
      }
      for (int w = 0; w < m; ++w) {
        for (int s = 0; s < ns; ++s) {
          g.coords(s, z.data());
          int v = sp.shift_by(w, z.data());
          double dot = 0.0;
          for (int c = 0; c < n; ++c) dot += u.at(w, s, c) * phi.at(v, c);
          cell[s] = dot * ceta[s];
        }
        lhs_w[w] = sp.weight(w) * pairwise_sum(cell);
      }
      // Target side: <int V . phi eta dx>.
      for (int w = 0; w < m; ++w) {
        for (int s = 0; s < ns; ++s) {
          double acc = 0.0;
          for_each_cell_point(g, s, q, [&](const double* x, double wt) {
            double e;
            etas[k](x, &e);
            V(w, x, buf.data());
            double dv = 0.0;
            for (int c = 0; c < n; ++c) dv += buf[c] * phi.at(w, c);
            acc += wt * e * dv;
          });
          cell[s] = acc;
        }
        rhs_w[w] = sp.weight(w) * pairwise_sum(cell);
      }
      double r = std::abs(pairwise_sum(lhs_w) - pairwise_sum(rhs_w));
      out.weak_residuals.push_back(r);
      out.weak_residual_max = std::max(out.weak_residual_max, r);
    }
  }
  return out;
}

namespace {

struct Segment {
  double length;
  int a;  // index in the first grid along this axis, or -1
  int b;  // index in the second grid, or -1
};

std::vector<Segment> merge_axis(double ea, int oa, int na, double eb, int ob, int nb) {
  std::vector<double> pts;
  pts.reserve(na + nb + 2);
  for (int k = 0; k <= na; ++k) pts.push_back(ea * (oa + k - 0.5));
  for (int k = 0; k <= nb; ++k) pts.push_back(eb * (ob + k - 0.5));
  std::sort(pts.begin(), pts.end());
  std::vector<Segment> segs;
  for (std::size_t k = 0; k + 1 < pts.size(); ++k) {
    double lo = pts[k], hi = pts[k + 1];
    if (!(hi - lo > 1e-14 * std::max(1.0, std::abs(hi)))) continue;
    double mid = 0.5 * (lo + hi);
    long long ia = static_cast<long long>(std::floor(mid / ea + 0.5)) - oa;
    long long ib = static_cast<long long>(std::floor(mid / eb + 0.5)) - ob;
    Segment s{hi - lo, (ia >= 0 && ia < na) ? static_cast<int>(ia) : -1, (ib >= 0 && ib < nb) ? static_cast<int>(ib) : -1};
    if (s.a < 0 && s.b < 0) continue;
    segs.push_back(s);
  }
  return segs;
}

// Calls f(site_a, site_b, volume) over all overlap boxes of two windows.
template <class F>
void for_each_overlap(const Grid& ga, const Grid& gb, F&& f) {
  const int d = ga.dim();
  std::vector<std::vector<Segment>> axes(d);
  for (int i = 0; i < d; ++i)
    axes[i] = merge_axis(ga.eps(), ga.origin()[i], ga.extents()[i], gb.eps(), gb.origin()[i], gb.extents()[i]);
  std::vector<std::size_t> idx(d, 0);
  for (int i = 0; i < d; ++i)
    if (axes[i].empty()) return;
  while (true) {
    int sa = 0, sb = 0, stra = 1, strb = 1;
    double vol = 1.0;
    for (int i = 0; i < d; ++i) {
      const Segment& s = axes[i][idx[i]];
      vol *= s.length;
      if (sa >= 0) sa = s.a < 0 ? -1 : sa + s.a * stra;
      if (sb >= 0) sb = s.b < 0 ? -1 : sb + s.b * strb;
      stra *= ga.extents()[i];
      strb *= gb.extents()[i];
    }
    if (sa >= 0 || sb >= 0) f(sa, sb, vol);
    int i = 0;
    while (i < d && ++idx[i] == axes[i].size()) idx[i++] = 0;
    if (i == d) break;
  }
}

}  // namespace

double pc_distance(const RandomField& u, const Grid& tg, const std::function<void(int, int, double*)>& target) {
  if (tg.dim() != u.grid->dim()) throw InvalidArgument("grids differ in dimension");
  const auto& sp = *u.space;
  const int n = u.ncomp, m = sp.num_samples();
  RandomField tu = unfold(u);
  std::vector<double> tv(static_cast<std::size_t>(tg.num_sites()) * n);
  std::vector<double> per(m);
  for (int w = 0; w < m; ++w) {
    for (int s = 0; s < tg.num_sites(); ++s) target(w, s, &tv[static_cast<std::size_t>(s) * n]);
    std::vector<double> parts;
    for_each_overlap(*u.grid, tg, [&](int sa, int sb, double vol) {
      double e2 = 0.0;
      for (int c = 0; c < n; ++c) {
        double a = sa >= 0 ? tu.at(w, sa, c) : 0.0;
        double b = sb >= 0 ? tv[static_cast<std::size_t>(sb) * n + c] : 0.0;
        e2 += (a - b) * (a - b);
      }
      parts.push_back(vol * e2);
    });
    per[w] = sp.weight(w) * pairwise_sum(parts);
  }
  return std::sqrt(pairwise_sum(per));
}

LatticeFunction pc_transfer(const LatticeFunction& f, GridPtr coarse, Boundary bc) {
  LatticeFunction out(coarse, f.ncomp, bc);
  const double vol = coarse->cell_volume();
  for_each_overlap(*coarse, *f.grid, [&](int sa, int sb, double v) {
    if (sa < 0 || sb < 0) return;
    for (int c = 0; c < f.ncomp; ++c) out.at(sa, c) += v * f.at(sb, c) / vol;
  });
  return out;
}

EnergyPair transform_energy(const RandomIntegrand& V, const RandomField& v) {
  const Grid& g = *v.grid;
  const auto& sp = *v.space;
  const int m = sp.num_samples(), ns = g.num_sites();
  EnergyPair e;
  std::vector<double> per(m), cell(ns);
  std::vector<int> z(g.dim());
  for (int w = 0; w < m; ++w) {
    for (int s = 0; s < ns; ++s) {
      g.coords(s, z.data());
      double val = V(sp.shift_by(w, z.data()), &v.values[v.index(w, s, 0)]);
      if (!std::isfinite(val)) throw NonFiniteValue("integrand returned a non-finite value");
      cell[s] = val;
    }
    per[w] = sp.weight(w) * pairwise_sum(cell);
  }
  e.lattice = g.cell_volume() * pairwise_sum(per);

  RandomField tv = unfold(v);
  // Summed cell-major: for each site, the P-average over samples.
  std::vector<double> per_site(ns), tmp(m);
  for (int s = 0; s < ns; ++s) {
    for (int w = 0; w < m; ++w) {
      double val = V(w, &tv.values[tv.index(w, s, 0)]);
      if (!std::isfinite(val)) throw NonFiniteValue("integrand returned a non-finite value");
      tmp[w] = sp.weight(w) * val;
    }
    per_site[s] = g.cell_volume() * pairwise_sum(tmp);
  }
  e.unfolded = pairwise_sum(per_site);
  e.residual = std::abs(e.lattice - e.unfolded);
  return e;
}

}  // namespace su
