#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"
#include "kglab/pipeline.hpp"

using namespace kglab;
namespace fs = std::filesystem;

namespace {

const char* kSmall = R"(
[grid]
L = 50
dx = 0.05

[time]
T = 40

[spectral]
L = 30
dx = 0.02

[k_grid]
k_max = 10
n_log = 16
n_lin = 64

[dft]
dk = 0.05
k_max = 10
check_inputs = 3
profile_dk = 0.05
profile_k_max = 8

[linear_decay]
L = 60
t1 = 5
t2 = 40
n_times = 36

[shoot]
horizon = 30
sweep_b = [0.01, 0.02]

[fit]
t1 = 5
)";

Config small() { return parse_config(kSmall); }

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("kglab_test_" + name);
  fs::remove_all(p);
  return p;
}

int run_quiet(Pipeline& p, const std::vector<std::string>& stages, bool check = false) {
  std::ostringstream log;
  return p.run(stages, check, log);
}

}  // namespace

TEST_CASE("stage artifacts are deterministic") {
  const std::vector<std::string> stages{"spectrum", "scattering", "linear-decay"};
  const fs::path a = scratch("det_a"), b = scratch("det_b");
  Pipeline pa(small(), a), pb(small(), b);
  REQUIRE(run_quiet(pa, stages) == kExitOk);
  REQUIRE(run_quiet(pb, stages) == kExitOk);
  for (const char* f : {"spectrum.csv", "scattering.csv", "linear_decay.csv"}) {
    INFO(f);
    REQUIRE(fs::exists(a / f));
    CHECK(slurp(a / f) == slurp(b / f));
  }
  CHECK(slurp(a / "spectrum.csv").rfind("index,eigenvalue,parity", 0) == 0);
  CHECK(pa.results().size() == 3);
  CHECK(pa.results().front().passed());
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("manifest records the run and can be replayed") {
  const fs::path d = scratch("manifest");
  Pipeline p(small(), d);
  REQUIRE(run_quiet(p, {"spectrum"}) == kExitOk);
  const std::string m = slurp(d / "manifest.json");
  CHECK(m.find("\"config_hash\": \"" + config_hash(small()) + "\"") != std::string::npos);
  CHECK(m.find("\"exit_code\": 0") != std::string::npos);
  const Config back = load_config_or_manifest((d / "manifest.json").string());
  CHECK(config_hash(back) == config_hash(small()));
  fs::remove_all(d);
}

TEST_CASE("failures map to exit codes") {
  SUBCASE("invalid configuration") {
    Config c = small();
    c.time.dt = 0.06;
    CHECK_THROWS_AS(Pipeline(c, scratch("bad")), ConfigError);
    Pipeline p(small(), scratch("unknown"));
    CHECK(run_quiet(p, {"nonsense"}) == kExitConfig);
    fs::remove_all(scratch("unknown"));
  }
  SUBCASE("escape off the manifold") {
    Config c = small();
    c.evolve.solver = "modal";
    c.evolve.s_offset = 0.1;
    const fs::path d = scratch("escape");
    Pipeline p(c, d);
    CHECK(run_quiet(p, {"evolve"}) == kExitBlowUp);
    CHECK(slurp(d / "manifest.json").find("\"exit_code\": 4") != std::string::npos);
    fs::remove_all(d);
  }
  SUBCASE("failed gate under --check") {
    Config c = small();
    c.spectral.dx = 0.3;
    Pipeline p(c, scratch("gate"));
    CHECK(run_quiet(p, {"spectrum"}, true) == kExitCheck);
    Pipeline q(c, scratch("gate"));
    CHECK(run_quiet(q, {"spectrum"}, false) == kExitOk);
    fs::remove_all(scratch("gate"));
  }
}

TEST_CASE("output directory resolution") {
  Config c;
  ::unsetenv("KGLAB_OUTPUT");
  CHECK(resolve_output_dir("", c) == fs::path("kglab_out"));
  c.output_dir = "from_cfg";
  CHECK(resolve_output_dir("", c) == fs::path("from_cfg"));
  ::setenv("KGLAB_OUTPUT", "from_env", 1);
  CHECK(resolve_output_dir("", c) == fs::path("from_env"));
  CHECK(resolve_output_dir("from_flag", c) == fs::path("from_flag"));
  ::unsetenv("KGLAB_OUTPUT");
}

#ifdef KGLAB_CLI
namespace {
int cli(const std::string& args) {
  const int s = std::system((std::string(KGLAB_CLI) + " " + args + " >/dev/null 2>&1").c_str());
  return WIFEXITED(s) ? WEXITSTATUS(s) : -1;
}
}  // namespace

TEST_CASE("command-line exit codes") {
  const fs::path d = scratch("cli");
  fs::create_directories(d);
  const fs::path good = d / "small.toml", bad = d / "bad.toml";
  std::ofstream(good) << kSmall;
  std::ofstream(bad) << kSmall << "\n[model]\nbogus = 1\n";
  CHECK(cli("spectrum --config " + good.string() + " --output " + (d / "o").string()) == 0);
  CHECK(fs::exists(d / "o" / "spectrum.json"));
  CHECK(cli("spectrum --config " + bad.string()) == kExitConfig);
  CHECK(cli("spectrum --config " + (d / "missing.toml").string()) == kExitConfig);
  CHECK(cli("spectrum --config " + (d / "o" / "manifest.json").string() + " --print-config") == 0);
  CHECK(cli("evolve --config " + good.string() + " --output " + (d / "e").string()) == 0);
  std::ofstream(d / "escape.toml") << kSmall << "\n[evolve]\nsolver = \"modal\"\ns_offset = 0.1\n";
  CHECK(cli("evolve --config " + (d / "escape.toml").string() + " --output " + (d / "x").string()) ==
        kExitBlowUp);
  fs::remove_all(d);
}
#endif
