#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace su {

/// Base class for all library errors.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InvalidArgument : Error {
  using Error::Error;
};

/// Grid spacing or window extents incompatible with the shift action.
struct IncompatibleEpsilon : Error {
  using Error::Error;
};

struct NonFiniteValue : Error {
  using Error::Error;
};

struct CoercivityError : Error {
  using Error::Error;
};

/// Iterative solver failed to reach its tolerance.
struct SolverError : Error {
  SolverError(const std::string& what, int iterations, double residual)
      : Error(what + " (iterations=" + std::to_string(iterations) +
              ", residual=" + std::to_string(residual) + ")"),
        iterations(iterations),
        residual(residual) {}
  int iterations;
  double residual;
};

/// Pairwise (cascade) summation with a fixed reduction order.
double pairwise_sum(const double* x, std::size_t n);
inline double pairwise_sum(const std::vector<double>& x) { return pairwise_sum(x.data(), x.size()); }

/// Runs f(i) for i in [0,n) on up to `threads` workers. Each index is handled by
/// exactly one worker, so results written to disjoint slots are deterministic.
template <class F>
void parallel_for(int n, int threads, F&& f) {
  if (threads <= 1 || n <= 1) {
    for (int i = 0; i < n; ++i) f(i);
    return;
  }
  int nt = threads < n ? threads : n;
  std::vector<std::thread> pool;
  pool.reserve(nt);
  for (int t = 0; t < nt; ++t) {
    pool.emplace_back([&, t] {
      for (int i = t; i < n; i += nt) f(i);
    });
  }
  for (auto& th : pool) th.join();
}

/// 64-bit FNV-1a, used for provenance hashes of inputs.
class Fnv1a {
 public:
  void add(const void* data, std::size_t n);
  void add(double x) { add(&x, sizeof x); }
  void add(int x) { add(&x, sizeof x); }
  void add(const std::vector<double>& v) {
    for (double x : v) add(x);
  }
  void add(const std::vector<int>& v) {
    for (int x : v) add(x);
  }
  std::uint64_t value() const { return h_; }
  std::string hex() const;

 private:
  std::uint64_t h_ = 1469598103934665603ull;
};

/// Global thread count used by per-sample loops; set from the CLI.
int default_threads();
void set_default_threads(int n);

}  // namespace su
