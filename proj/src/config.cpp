#include "stochunfold/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "stochunfold/eris.hpp"

namespace su {

namespace {

using json = nlohmann::json;

const json& require(const json& j, const std::string& key, const std::string& path) {
  if (!j.contains(key)) throw ConfigError(path.empty() ? key : path + "." + key, "missing required key");
  return j.at(key);
}

std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& path) {
  if (!j.is_object()) throw ConfigError(path, "expected an object");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!allowed.count(it.key())) throw ConfigError(join(path, it.key()), "unknown key");
}

double number(const json& j, const std::string& path) {
  if (!j.is_number()) throw ConfigError(path, "expected a number");
  double v = j.get<double>();
  if (!std::isfinite(v)) throw ConfigError(path, "expected a finite number");
  return v;
}

int integer(const json& j, const std::string& path) {
  if (!j.is_number_integer()) throw ConfigError(path, "expected an integer");
  return j.get<int>();
}

std::vector<double> numbers(const json& j, const std::string& path) {
  if (!j.is_array()) throw ConfigError(path, "expected an array of numbers");
  std::vector<double> out;
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(number(j[i], path + "[" + std::to_string(i) + "]"));
  return out;
}

std::vector<int> integers(const json& j, const std::string& path) {
  if (!j.is_array()) throw ConfigError(path, "expected an array of integers");
  std::vector<int> out;
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(integer(j[i], path + "[" + std::to_string(i) + "]"));
  return out;
}

SpacePtr parse_space(const json& j, const std::string& path, int dim, std::uint64_t seed, RandomVariable& coef) {
  check_keys(j, {"type", "N", "components", "low", "high", "parts", "lambda"}, path);
  std::string type = require(j, "type", path).get<std::string>();
  if (type == "torus" || type == "iid") {
    std::vector<int> N = integers(require(j, "N", path), join(path, "N"));
    if (static_cast<int>(N.size()) != dim) throw ConfigError(join(path, "N"), "needs one period per axis");
    for (int n : N)
      if (n < 1) throw ConfigError(join(path, "N"), "periods must be >= 1");
    if (type == "torus") return make_torus_space(N);
    int k = integer(require(j, "components", path), join(path, "components"));
    double lo = number(require(j, "low", path), join(path, "low"));
    double hi = number(require(j, "high", path), join(path, "high"));
    if (k < 1 || !(hi >= lo)) throw ConfigError(path, "need components >= 1 and high >= low");
    Periodization p = make_iid_periodization(
        N, k,
        [&](std::mt19937_64& rng, double* out) {
          std::uniform_real_distribution<double> U(lo, hi);
          for (int c = 0; c < k; ++c) out[c] = U(rng);
        },
        seed);
    coef = p.coefficient;
    return p.space;
  }
  if (type == "union") {
    const json& parts = require(j, "parts", path);
    if (!parts.is_array() || parts.size() != 2) throw ConfigError(join(path, "parts"), "expected two spaces");
    RandomVariable unused;
    SpacePtr a = parse_space(parts[0], join(path, "parts[0]"), dim, seed, unused);
    SpacePtr b = parse_space(parts[1], join(path, "parts[1]"), dim, seed, unused);
    double lambda = number(require(j, "lambda", path), join(path, "lambda"));
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError(join(path, "lambda"), "must lie in [0, 1]");
    return disjoint_union(*a, *b, lambda);
  }
  throw ConfigError(join(path, "type"), "unknown space type '" + type + "'");
}

// number | [per component] | [[per sample]] | "coefficient"
RandomVariable parse_variable(const json& j, const std::string& path, SpacePtr space, int ncomp,
                              const RandomVariable& coef) {
  RandomVariable out(space, ncomp);
  const int m = space->num_samples();
  if (j.is_string()) {
    if (j.get<std::string>() != "coefficient") throw ConfigError(path, "unknown reference '" + j.get<std::string>() + "'");
    if (coef.ncomp == 0) throw ConfigError(path, "space has no drawn coefficient");
    if (coef.ncomp != ncomp) throw ConfigError(path, "coefficient has " + std::to_string(coef.ncomp) + " components, need " + std::to_string(ncomp));
    return coef;
  }
  if (j.is_number()) {
    double v = number(j, path);
    std::fill(out.values.begin(), out.values.end(), v);
    return out;
  }
  if (!j.is_array() || j.empty()) throw ConfigError(path, "expected a number, an array or \"coefficient\"");
  if (j[0].is_number()) {
    std::vector<double> v = numbers(j, path);
    if (static_cast<int>(v.size()) != ncomp) throw ConfigError(path, "expected " + std::to_string(ncomp) + " components");
    for (int w = 0; w < m; ++w)
      for (int c = 0; c < ncomp; ++c) out.at(w, c) = v[c];
    return out;
  }
  if (static_cast<int>(j.size()) != m) throw ConfigError(path, "expected one row per sample (" + std::to_string(m) + ")");
  for (int w = 0; w < m; ++w) {
    std::string p = path + "[" + std::to_string(w) + "]";
    std::vector<double> v = numbers(j[w], p);
    if (static_cast<int>(v.size()) != ncomp) throw ConfigError(p, "expected " + std::to_string(ncomp) + " components");
    for (int c = 0; c < ncomp; ++c) out.at(w, c) = v[c];
  }
  return out;
}

}  // namespace

RunConfig parse_config(const std::string& text, std::uint64_t seed_override, bool has_seed_override) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("", std::string("malformed JSON: ") + e.what());
  }
  check_keys(j,
             {"seed", "threads", "graph", "space", "integrand", "yield", "domain", "eps", "reference_eps",
              "quadrature_order", "load", "time", "gradient", "evolve", "korn", "verify"},
             "");
  RunConfig c;
  try {
    if (j.contains("seed")) {
      if (!j["seed"].is_number_unsigned()) throw ConfigError("seed", "expected a nonnegative integer");
      c.seed = j["seed"].get<std::uint64_t>();
    }
    if (has_seed_override) c.seed = seed_override;
    if (j.contains("threads")) {
      c.threads = integer(j["threads"], "threads");
      if (c.threads < 0) throw ConfigError("threads", "must be >= 0");
    }

    const json& g = require(j, "graph", "");
    if (!g.is_array() || g.empty()) throw ConfigError("graph", "expected a nonempty list of generators");
    std::vector<std::vector<int>> gens;
    for (std::size_t i = 0; i < g.size(); ++i) gens.push_back(integers(g[i], "graph[" + std::to_string(i) + "]"));
    try {
      c.graph = LatticeGraph(gens);
    } catch (const Error& e) {
      throw ConfigError("graph", e.what());
    }
    c.dim = c.graph.dim();
    const int d = c.dim, k = c.graph.num_edges();

    c.space = parse_space(require(j, "space", ""), "space", d, c.seed, c.coefficient);

    if (j.contains("integrand")) {
      const json& I = j["integrand"];
      check_keys(I, {"type", "a", "h", "k", "m", "A"}, "integrand");
      std::string type = require(I, "type", "integrand").get<std::string>();
      if (type == "diagonal") {
        c.integrand = make_diagonal(parse_variable(require(I, "a", "integrand"), "integrand.a", c.space, k, c.coefficient));
      } else if (type == "intro") {
        RandomVariable a = parse_variable(require(I, "a", "integrand"), "integrand.a", c.space, k, c.coefficient);
        RandomVariable h = parse_variable(require(I, "h", "integrand"), "integrand.h", c.space, k, c.coefficient);
        c.integrand = intro_integrand(a, h, c.graph);
      } else if (type == "matrix") {
        int kk = I.contains("k") ? integer(I["k"], "integrand.k") : k;
        int mm = I.contains("m") ? integer(I["m"], "integrand.m") : 0;
        if (kk != k || mm < 0) throw ConfigError("integrand", "k must equal the number of edges and m >= 0");
        c.integrand = make_quadratic(
            parse_variable(require(I, "A", "integrand"), "integrand.A", c.space, (k + mm) * (k + mm), c.coefficient), k, mm);
      } else {
        throw ConfigError("integrand.type", "unknown integrand type '" + type + "'");
      }
      c.has_integrand = true;
    }
    if (j.contains("yield")) {
      c.yield = parse_variable(j["yield"], "yield", c.space, k, c.coefficient);
      for (double v : c.yield.values)
        if (v < 0.0) throw ConfigError("yield", "yield stresses must be nonnegative");
    }

    if (j.contains("domain")) {
      const json& D = j["domain"];
      check_keys(D, {"lower", "upper"}, "domain");
      c.lower = numbers(require(D, "lower", "domain"), "domain.lower");
      c.upper = numbers(require(D, "upper", "domain"), "domain.upper");
      if (static_cast<int>(c.lower.size()) != d || static_cast<int>(c.upper.size()) != d)
        throw ConfigError("domain", "bounds need one entry per axis");
      for (int i = 0; i < d; ++i)
        if (!(c.upper[i] > c.lower[i])) throw ConfigError("domain", "upper must exceed lower");
    } else {
      c.lower.assign(d, 0.0);
      c.upper.assign(d, 1.0);
    }
    if (j.contains("eps")) {
      c.eps = numbers(j["eps"], "eps");
      if (c.eps.empty()) throw ConfigError("eps", "the eps list is empty");
      for (double e : c.eps)
        if (!(e > 0.0)) throw ConfigError("eps", "entries must be positive");
    }
    if (j.contains("reference_eps")) {
      c.reference_eps = number(j["reference_eps"], "reference_eps");
      if (!(c.reference_eps > 0.0)) throw ConfigError("reference_eps", "must be positive");
    }
    if (j.contains("quadrature_order")) {
      c.quadrature_order = integer(j["quadrature_order"], "quadrature_order");
      if (c.quadrature_order < 1 || c.quadrature_order > 8) throw ConfigError("quadrature_order", "must lie in 1..8");
    }

    std::vector<double> amp(d, 1.0);
    std::string ltype = "constant";
    double freq = 1.0;
    if (j.contains("load")) {
      const json& L = j["load"];
      check_keys(L, {"type", "value", "amplitude", "frequency"}, "load");
      ltype = require(L, "type", "load").get<std::string>();
      if (ltype == "constant") {
        amp = numbers(require(L, "value", "load"), "load.value");
      } else if (ltype == "cosine") {
        amp = numbers(require(L, "amplitude", "load"), "load.amplitude");
        if (L.contains("frequency")) freq = number(L["frequency"], "load.frequency");
      } else {
        throw ConfigError("load.type", "unknown load type '" + ltype + "'");
      }
      if (static_cast<int>(amp.size()) != d) throw ConfigError("load", "needs one entry per axis");
    }
    if (ltype == "constant") {
      c.load_shape = [amp, d](const double*, double* out) {
        for (int i = 0; i < d; ++i) out[i] = amp[i];
      };
    } else {
      c.load_shape = [amp, d, freq](const double* x, double* out) {
        double p = 1.0;
        for (int i = 0; i < d; ++i) p *= std::cos(2.0 * M_PI * freq * x[i]);
        for (int i = 0; i < d; ++i) out[i] = amp[i] * p;
      };
    }

    std::string profile = "sine";
    double scale = 1.0;
    if (j.contains("time")) {
      const json& t = j["time"];
      check_keys(t, {"T", "steps", "samples", "profile", "scale"}, "time");
      if (t.contains("T")) c.T = number(t["T"], "time.T");
      if (!(c.T > 0.0)) throw ConfigError("time.T", "must be positive");
      if (t.contains("steps")) c.steps = integer(t["steps"], "time.steps");
      if (c.steps < 1) throw ConfigError("time.steps", "must be >= 1");
      if (t.contains("samples")) c.sample_times = numbers(t["samples"], "time.samples");
      for (double s : c.sample_times)
        if (s < 0.0 || s > c.T) throw ConfigError("time.samples", "sample times must lie in [0, T]");
      if (t.contains("profile")) profile = t["profile"].get<std::string>();
      if (t.contains("scale")) scale = number(t["scale"], "time.scale");
    }
    const double T = c.T;
    if (profile == "sine")
      c.profile = [scale, T](double t) { return scale * std::sin(M_PI * t / T); };
    else if (profile == "ramp")
      c.profile = [scale, T](double t) { return scale * t / T; };
    else if (profile == "constant")
      c.profile = [scale](double) { return scale; };
    else
      throw ConfigError("time.profile", "unknown profile '" + profile + "'");
    if (c.sample_times.empty()) c.sample_times = {c.T / 4.0, c.T / 2.0, c.T};

    if (j.contains("gradient")) {
      const json& G = j["gradient"];
      check_keys(G, {"gamma", "modulus"}, "gradient");
      c.gamma = number(require(G, "gamma", "gradient"), "gradient.gamma");
      c.gradient_modulus = number(require(G, "modulus", "gradient"), "gradient.modulus");
      if (!(c.gamma > 0.0 && c.gamma < 1.0)) throw ConfigError("gradient.gamma", "must lie in (0, 1)");
      if (!(c.gradient_modulus > 0.0)) throw ConfigError("gradient.modulus", "must be positive");
    }
    if (j.contains("evolve")) {
      const json& E = j["evolve"];
      check_keys(E, {"mode", "a", "h", "sigma_y", "scale"}, "evolve");
      if (E.contains("mode")) c.evolve_mode = E["mode"].get<std::string>();
      if (c.evolve_mode != "study" && c.evolve_mode != "spring")
        throw ConfigError("evolve.mode", "expected \"study\" or \"spring\"");
      if (E.contains("a")) c.spring.a = number(E["a"], "evolve.a");
      if (E.contains("h")) c.spring.h = number(E["h"], "evolve.h");
      if (E.contains("sigma_y")) c.spring.sigma_y = number(E["sigma_y"], "evolve.sigma_y");
      if (E.contains("scale")) c.spring.scale = number(E["scale"], "evolve.scale");
      if (!(c.spring.a > 0.0 && c.spring.h > 0.0 && c.spring.sigma_y >= 0.0))
        throw ConfigError("evolve", "spring needs a > 0, h > 0 and sigma_y >= 0");
    }
    if (j.contains("korn")) {
      const json& K = j["korn"];
      check_keys(K, {"sizes", "expect_failure", "spread_tol", "growth_factor", "witness_window"}, "korn");
      if (K.contains("sizes")) c.korn.sizes = integers(K["sizes"], "korn.sizes");
      if (c.korn.sizes.empty()) throw ConfigError("korn.sizes", "needs at least one window size");
      for (int n : c.korn.sizes)
        if (n < 1 || n > 40) throw ConfigError("korn.sizes", "window sizes must lie in 1..40");
      if (K.contains("expect_failure")) c.korn.expect_failure = K["expect_failure"].get<bool>();
      if (K.contains("spread_tol")) c.korn.spread_tol = number(K["spread_tol"], "korn.spread_tol");
      if (K.contains("growth_factor")) c.korn.growth_factor = number(K["growth_factor"], "korn.growth_factor");
      if (K.contains("witness_window")) c.korn.witness_window = integer(K["witness_window"], "korn.witness_window");
      if (c.korn.witness_window < 2 || c.korn.witness_window > 16)
        throw ConfigError("korn.witness_window", "must lie in 2..16");
    }
    if (j.contains("verify")) {
      const json& V = j["verify"];
      check_keys(V, {"repeats", "tolerance"}, "verify");
      if (V.contains("repeats")) c.verify_repeats = integer(V["repeats"], "verify.repeats");
      if (V.contains("tolerance")) c.verify_tol = number(V["tolerance"], "verify.tolerance");
      if (c.verify_repeats < 1) throw ConfigError("verify.repeats", "must be >= 1");
    }
  } catch (const json::exception& e) {
    throw ConfigError("", std::string("type error: ") + e.what());
  } catch (const Error& e) {
    throw ConfigError("", e.what());
  }
  return c;
}

RunConfig load_config(const std::string& path, std::uint64_t seed_override, bool has_seed_override) {
  std::ifstream in(path);
  if (!in) throw ConfigError("", "cannot open config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), seed_override, has_seed_override);
}

}  // namespace su
