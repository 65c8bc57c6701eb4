#include "stochunfold/corrector.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>

#include "json.hpp"

namespace su {

Eigen::MatrixXd QuadraticIntegrand::matrix(int w) const {
  const int K = size();
  Eigen::MatrixXd M(K, K);
  for (int i = 0; i < K; ++i)
    for (int j = 0; j < K; ++j) M(i, j) = A.at(w, i * K + j);
  return M;
}

double QuadraticIntegrand::value(int w, const double* G) const {
  const int K = size();
  const double* a = A.row(w);
  double s = 0.0;
  for (int i = 0; i < K; ++i)
    for (int j = 0; j < K; ++j) s += a[i * K + j] * G[i] * G[j];
  return 0.5 * s;
}

QuadraticIntegrand make_quadratic(RandomVariable A, int k, int m) {
  const int K = k + m;
  if (k < 1 || m < 0) throw InvalidArgument("integrand needs k >= 1 strain slots");
  if (A.ncomp != K * K) throw InvalidArgument("integrand matrix has the wrong number of entries");
  for (int w = 0; w < A.space->num_samples(); ++w)
    for (int i = 0; i < K; ++i)
      for (int j = 0; j < K; ++j) {
        double a = A.at(w, i * K + j), b = A.at(w, j * K + i);
        if (!std::isfinite(a)) throw NonFiniteValue("integrand matrix is not finite");
        if (std::abs(a - b) > 1e-12 * (1.0 + std::abs(a))) throw InvalidArgument("integrand matrix is not symmetric");
      }
  QuadraticIntegrand I;
  I.A = std::move(A);
  I.k = k;
  I.m = m;
  return I;
}

QuadraticIntegrand make_diagonal(const RandomVariable& a) {
  const int k = a.ncomp;
  RandomVariable A(a.space, k * k);
  for (int w = 0; w < a.space->num_samples(); ++w)
    for (int i = 0; i < k; ++i) A.at(w, i * k + i) = a.at(w, i);
  return make_quadratic(std::move(A), k, 0);
}

double coercivity_constant(const QuadraticIntegrand& I) {
  double c = std::numeric_limits<double>::infinity();
  for (int w = 0; w < I.A.space->num_samples(); ++w) {
    if (!(I.A.space->weight(w) > 0.0)) continue;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(I.matrix(w), Eigen::EigenvaluesOnly);
    c = std::min(c, es.eigenvalues()(0));
  }
  if (!(c > 0.0)) throw CoercivityError("integrand is not coercive (smallest eigenvalue " + std::to_string(c) + ")");
  return c;
}

CorrectorSetup corrector_setup(SpacePtr space, const LatticeGraph& graph, PotMethod method) {
  if (space->dim() != graph.dim()) throw InvalidArgument("space and graph dimensions differ");
  CorrectorSetup s{space, graph, pot_basis(*space, graph.dim(), method), {}};
  const int m = space->num_samples(), k = graph.num_edges(), r = s.basis.size();
  s.S.assign(m, Eigen::MatrixXd::Zero(k, r));
  for (int j = 0; j < r; ++j) {
    RandomVariable cs = symmetrize_random(s.basis.column(space, j), graph);
    for (int w = 0; w < m; ++w)
      for (int i = 0; i < k; ++i) s.S[w](i, j) = cs.at(w, i);
  }
  return s;
}

namespace {

void check_integrand(const CorrectorSetup& setup, int k) {
  if (k != setup.graph.num_edges()) throw InvalidArgument("integrand strain slots must equal the number of edges");
}

// H = <S~^T A S~>, G = <S~^T A> with S~ = [S; 0].
void normal_matrices(const CorrectorSetup& setup, const QuadraticIntegrand& I, Eigen::MatrixXd& H,
                     Eigen::MatrixXd& G) {
  const int r = setup.r(), K = I.size(), k = I.k;
  H = Eigen::MatrixXd::Zero(r, r);
  G = Eigen::MatrixXd::Zero(r, K);
  for (int w = 0; w < setup.space->num_samples(); ++w) {
    Eigen::MatrixXd A = I.matrix(w);
    Eigen::MatrixXd SA = setup.S[w].transpose() * A.topRows(k);
    H += setup.space->weight(w) * SA.leftCols(k) * setup.S[w];
    G += setup.space->weight(w) * SA;
  }
}

CorrectorSolution finish(const CorrectorSetup& setup, const std::vector<double>& probe, const Eigen::VectorXd& a,
                         const std::function<double(int, const double*)>& V, int k) {
  CorrectorSolution sol;
  sol.probe = probe;
  sol.coeffs = a;
  const int m = setup.space->num_samples();
  sol.chi = setup.basis.combine(setup.space, a);
  sol.chi_s = RandomVariable(setup.space, k);
  std::vector<double> vals(m);
  std::vector<double> G(probe);
  for (int w = 0; w < m; ++w) {
    Eigen::VectorXd cs = setup.r() ? Eigen::VectorXd(setup.S[w] * a) : Eigen::VectorXd::Zero(k);
    for (int i = 0; i < k; ++i) {
      sol.chi_s.at(w, i) = cs(i);
      G[i] = probe[i] + cs(i);
    }
    vals[w] = setup.space->weight(w) * V(w, G.data());
  }
  sol.value = pairwise_sum(vals);
  return sol;
}

}  // namespace

Eigen::MatrixXd corrector_matrix(const CorrectorSetup& setup, const QuadraticIntegrand& I) {
  check_integrand(setup, I.k);
  if (setup.r() == 0) return Eigen::MatrixXd::Zero(0, I.size());
  Eigen::MatrixXd H, G;
  normal_matrices(setup, I, H, G);
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(H);
  return -cod.solve(G);
}

CorrectorSolution solve_corrector(const CorrectorSetup& setup, const QuadraticIntegrand& I,
                                  const std::vector<double>& probe) {
  check_integrand(setup, I.k);
  if (static_cast<int>(probe.size()) != I.size()) throw InvalidArgument("probe length must equal k + m");
  coercivity_constant(I);
  const int r = setup.r();
  Eigen::VectorXd a = Eigen::VectorXd::Zero(r);
  double kkt = 0.0;
  if (r > 0) {
    Eigen::MatrixXd H, G;
    normal_matrices(setup, I, H, G);
    Eigen::VectorXd E = Eigen::Map<const Eigen::VectorXd>(probe.data(), I.size());
    Eigen::VectorXd g = G * E;
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(H);
    a = -cod.solve(g);
    kkt = (H * a + g).cwiseAbs().maxCoeff();
  }
  CorrectorSolution sol =
      finish(setup, probe, a, [&](int w, const double* G) { return I.value(w, G); }, I.k);
  sol.kkt_residual = kkt;
  if (!(kkt < 1e-9)) throw SolverError("corrector optimality residual above tolerance", 0, kkt);
  return sol;
}

CorrectorSolution solve_corrector_matrix(const CorrectorSetup& setup, const QuadraticIntegrand& I,
                                         const std::vector<double>& F) {
  std::vector<double> Fs = symmetrize_constant(F, setup.graph);
  Fs.resize(I.size(), 0.0);
  return solve_corrector(setup, I, Fs);
}

CorrectorSolution solve_corrector(const CorrectorSetup& setup, const ConvexIntegrand& I,
                                  const std::vector<double>& probe, const DescentParams& params) {
  check_integrand(setup, I.k);
  if (static_cast<int>(probe.size()) != I.k) throw InvalidArgument("probe length must equal k");
  const int r = setup.r(), m = setup.space->num_samples(), k = I.k;
  auto objective = [&](const Eigen::VectorXd& a, Eigen::VectorXd* grad) {
    std::vector<double> vals(m);
    std::vector<double> G(k), dG(k);
    if (grad) grad->setZero(r);
    for (int w = 0; w < m; ++w) {
      Eigen::VectorXd cs = setup.S[w] * a;
      for (int i = 0; i < k; ++i) G[i] = probe[i] + cs(i);
      double v = I.value(w, G.data());
      if (!std::isfinite(v)) throw NonFiniteValue("integrand returned a non-finite value");
      vals[w] = setup.space->weight(w) * v;
      if (grad) {
        I.gradient(w, G.data(), dG.data());
        *grad += setup.space->weight(w) * setup.S[w].transpose() * Eigen::Map<Eigen::VectorXd>(dG.data(), k);
      }
    }
    return pairwise_sum(vals);
  };
  Eigen::VectorXd a = Eigen::VectorXd::Zero(r), g(r);
  int it = 0;
  double kkt = 0.0;
  if (r > 0) {
    double J = objective(a, &g);
    double step = 1.0;
    Eigen::VectorXd a_prev, g_prev;
    // Nonmonotone Armijo reference: max of the last few objective values.
    std::deque<double> recent{J};
    while ((kkt = g.cwiseAbs().maxCoeff()) >= params.tol) {
      if (it >= params.max_iter) throw SolverError("corrector descent stalled", it, kkt);
      if (it > 0) {
        Eigen::VectorXd s = a - a_prev, y = g - g_prev;
        double sy = s.dot(y);
        step = sy > 0.0 ? s.squaredNorm() / sy : 1.0;
      }
      a_prev = a;
      g_prev = g;
      Eigen::VectorXd trial;
      double Jt;
      int backtracks = 0;
      const double Jref = *std::max_element(recent.begin(), recent.end());
      const double slack = 4.0 * std::numeric_limits<double>::epsilon() * std::abs(Jref);
      while (true) {
        trial = a - step * g;
        Jt = objective(trial, nullptr);
        if (Jt <= Jref - 1e-4 * step * g.squaredNorm() + slack || backtracks > 60) break;
        step *= 0.5;
        ++backtracks;
      }
      a = trial;
      J = objective(a, &g);
      recent.push_back(J);
      if (recent.size() > 10) recent.pop_front();
      ++it;
    }
  }
  CorrectorSolution sol = finish(setup, probe, a, I.value, k);
  sol.kkt_residual = kkt;
  sol.iterations = it;
  return sol;
}

HomogenizedTensor assemble_homogenized_tensor(const CorrectorSetup& setup, const QuadraticIntegrand& I, int threads) {
  const int K = I.size();
  std::vector<std::vector<double>> probes;
  for (int i = 0; i < K; ++i) {
    std::vector<double> e(K, 0.0);
    e[i] = 1.0;
    probes.push_back(e);
  }
  for (int i = 0; i < K; ++i)
    for (int j = i + 1; j < K; ++j) {
      std::vector<double> e(K, 0.0);
      e[i] = e[j] = 1.0;
      probes.push_back(e);
    }
  std::vector<double> vals(probes.size()), kkts(probes.size());
  parallel_for(static_cast<int>(probes.size()), threads > 0 ? threads : default_threads(), [&](int p) {
    CorrectorSolution s = solve_corrector(setup, I, probes[p]);
    vals[p] = s.value;
    kkts[p] = s.kkt_residual;
  });
  HomogenizedTensor t;
  t.A_hom = Eigen::MatrixXd::Zero(K, K);
  for (int i = 0; i < K; ++i) t.A_hom(i, i) = 2.0 * vals[i];
  int p = K;
  for (int i = 0; i < K; ++i)
    for (int j = i + 1; j < K; ++j, ++p) {
      double a = vals[p] - vals[i] - vals[j];
      t.A_hom(i, j) = a;
      t.A_hom(j, i) = a;
    }
  t.probe_values = vals;
  t.max_kkt = *std::max_element(kkts.begin(), kkts.end());
  // Cross-check against the Schur-complement form <A> - G^T H^+ G.
  Eigen::MatrixXd direct = Eigen::MatrixXd::Zero(K, K);
  for (int w = 0; w < setup.space->num_samples(); ++w) direct += setup.space->weight(w) * I.matrix(w);
  if (setup.r() > 0) {
    Eigen::MatrixXd H, G;
    normal_matrices(setup, I, H, G);
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(H);
    direct -= G.transpose() * cod.solve(G);
  }
  t.schur_defect = (t.A_hom - direct).cwiseAbs().maxCoeff();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(t.A_hom, Eigen::EigenvaluesOnly);
  t.min_eigenvalue = es.eigenvalues()(0);
  Fnv1a h;
  h.add(setup.space->hash().data(), 16);
  h.add(setup.graph.hash().data(), 16);
  h.add(I.A.values);
  h.add(I.k);
  h.add(I.m);
  t.provenance = h.hex();
  return t;
}

std::string tensor_to_json(const HomogenizedTensor& t) {
  nlohmann::ordered_json j;
  std::vector<std::vector<double>> rows(t.A_hom.rows(), std::vector<double>(t.A_hom.cols()));
  for (int i = 0; i < t.A_hom.rows(); ++i)
    for (int k = 0; k < t.A_hom.cols(); ++k) rows[i][k] = t.A_hom(i, k);
  j["A_hom"] = rows;
  j["min_eigenvalue"] = t.min_eigenvalue;
  j["schur_defect"] = t.schur_defect;
  j["max_kkt_residual"] = t.max_kkt;
  j["probe_values"] = t.probe_values;
  j["provenance"] = t.provenance;
  return j.dump(2);
}

std::vector<std::vector<double>> birkhoff_average(const RandomVariable& phi, const std::vector<int>& radii) {
  const auto& sp = *phi.space;
  const int d = sp.dim(), m = sp.num_samples(), n = phi.ncomp;
  std::vector<std::vector<double>> out;
  for (int R : radii) {
    if (R < 1) throw InvalidArgument("Birkhoff radius must be >= 1");
    long long count = 1;
    for (int i = 0; i < d; ++i) count *= R;
    std::vector<double> avg(static_cast<std::size_t>(m) * n);
    std::vector<int> z(d);
    std::vector<double> terms(static_cast<std::size_t>(count));
    for (int w = 0; w < m; ++w)
      for (int c = 0; c < n; ++c) {
        for (long long t = 0; t < count; ++t) {
          long long rem = t;
          for (int i = 0; i < d; ++i) {
            z[i] = static_cast<int>(rem % R);
            rem /= R;
          }
          terms[static_cast<std::size_t>(t)] = phi.at(sp.shift_by(w, z.data()), c);
        }
        avg[static_cast<std::size_t>(w) * n + c] = pairwise_sum(terms) / static_cast<double>(count);
      }
    out.push_back(std::move(avg));
  }
  return out;
}

}  // namespace su
