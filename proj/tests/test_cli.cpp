#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"
#include "json.hpp"

namespace fs = std::filesystem;

namespace {

std::string env(const char* name) {
  const char* v = std::getenv(name);
  REQUIRE_MESSAGE(v != nullptr, name << " is not set");
  return v;
}

fs::path scratch(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("stochunfold_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

struct Run {
  int code = -1;
  std::string err;
};

Run run(const std::string& args, const fs::path& out) {
  fs::path errfile = out / "stderr.txt";
  std::string cmd = "\"" + env("STOCHUNFOLD_CLI") + "\" " + args + " --out \"" + out.string() + "\" > \"" +
                    (out / "stdout.txt").string() + "\" 2> \"" + errfile.string() + "\"";
  int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream f(errfile);
  std::stringstream ss;
  ss << f.rdbuf();
  r.err = ss.str();
  return r;
}

std::string config(const std::string& name) { return "\"" + env("STOCHUNFOLD_CONFIGS") + "/" + name + ".json\""; }

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  REQUIRE_MESSAGE(f.good(), "missing output " << p.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("every command succeeds on its shipped config") {
  struct Case {
    std::string command, config;
    std::vector<std::string> files;
  };
  const std::vector<Case> cases = {
      {"verify", "verify_default", {"verify.json"}},
      {"korn", "korn_negative_control", {"korn.json"}},
      {"corrector", "corrector_two_phase", {"A_hom.json", "probes.csv"}},
      {"corrector", "corrector_iid_2d", {"A_hom.json", "probes.csv"}},
      {"static", "static_layered", {"static_study.csv", "static_summary.json"}},
      {"evolve", "evolve_two_phase", {"evolution_study.csv", "evolution_summary.json"}},
      {"evolve", "evolve_gradient", {"evolution_study.csv", "evolution_summary.json"}},
      {"evolve", "evolve_spring", {"trajectory.csv", "spring.csv", "spring_summary.json"}}};
  for (const Case& c : cases) {
    INFO(c.command << " " << c.config);
    fs::path out = scratch(c.config);
    Run r = run(c.command + " --config " + config(c.config), out);
    CHECK(r.code == 0);
    for (const std::string& f : c.files) CHECK(fs::exists(out / f));
  }
}

TEST_CASE("command outputs carry the expected values") {
  fs::path out = scratch("values");
  REQUIRE(run("corrector --config " + config("corrector_two_phase"), out).code == 0);
  auto a = nlohmann::json::parse(slurp(out / "A_hom.json"));
  CHECK(a["A_hom"][0][0].get<double>() == doctest::Approx(1.6).epsilon(1e-10));

  REQUIRE(run("verify --config " + config("verify_default"), out).code == 0);
  auto v = nlohmann::json::parse(slurp(out / "verify.json"));
  CHECK(v["passed"].get<bool>());

  REQUIRE(run("verify --config " + config("korn_negative_control"), out).code == 0);
  auto n = nlohmann::json::parse(slurp(out / "verify.json"));
  CHECK(n["korn"]["korn_holds"].get<bool>() == false);
  CHECK(n["korn"]["passed"].get<bool>());

  REQUIRE(run("evolve --config " + config("evolve_spring"), out).code == 0);
  auto s = nlohmann::json::parse(slurp(out / "spring_summary.json"));
  CHECK(s["max_nodal_error"].get<double>() < 1e-9);
  CHECK(s["lipschitz_ok"].get<bool>());
}

TEST_CASE("configuration errors exit with status 2 and a JSON message") {
  for (const char* name : {"malformed", "empty_eps", "does_not_exist"}) {
    INFO(name);
    fs::path out = scratch(std::string("bad_") + name);
    Run r = run("static --config " + config(name), out);
    CHECK(r.code == 2);
    auto j = nlohmann::json::parse(r.err.substr(0, r.err.find('\n')));
    CHECK(j["error"] == "config");
  }
  fs::path out = scratch("usage");
  CHECK(run("bogus --config " + config("static_layered"), out).code == 2);
  CHECK(run("static", out).code == 2);
}

TEST_CASE("runtime failures exit with status 1") {
  fs::path out = scratch("runtime");
  Run r = run("corrector --config " + config("corrector_noncoercive"), out);
  CHECK(r.code == 1);
  auto j = nlohmann::json::parse(r.err.substr(0, r.err.find('\n')));
  CHECK(j["error"] == "runtime");
  CHECK(j["message"].get<std::string>().find("coercive") != std::string::npos);
}

TEST_CASE("repeated runs produce byte-identical outputs") {
  struct Case {
    std::string command, config, file;
  };
  const std::vector<Case> cases = {{"static", "static_layered", "static_study.csv"},
                                   {"evolve", "evolve_gradient", "evolution_study.csv"},
                                   {"corrector", "corrector_iid_2d", "A_hom.json"},
                                   {"verify", "verify_default", "verify.json"}};
  for (const Case& c : cases) {
    INFO(c.config);
    fs::path a = scratch(c.config + "_a"), b = scratch(c.config + "_b");
    REQUIRE(run(c.command + " --config " + config(c.config) + " --seed 7", a).code == 0);
    REQUIRE(run(c.command + " --config " + config(c.config) + " --seed 7 --threads 1", b).code == 0);
    CHECK(slurp(a / c.file) == slurp(b / c.file));
  }
}
