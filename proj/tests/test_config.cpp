#include <cstdio>
#include <fstream>
#include <string>

#include "doctest.h"
#include "kglab/config.hpp"

using namespace kglab;

namespace {

std::string message_of(const std::string& text) {
  try {
    validate(parse_config(text));
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("defaults are valid and round-trip") {
  const Config c;
  CHECK_NOTHROW(validate(c));
  CHECK(c.power() == 4.0);
  CHECK(c.data.budget_limit() == doctest::Approx(0.005));
  const std::string text = to_text(c);
  const Config back = parse_config(text);
  CHECK(to_text(back) == text);
  CHECK(config_hash(back) == config_hash(c));
  CHECK(config_hash(c).size() == 16);
}

TEST_CASE("values parse into the right fields") {
  const Config c = parse_config(R"(
# comment
seed = 7
jobs = 3
output_dir = "out dir"

[grid]
L = 120   # trailing comment
dx = 0.1

[time]
T = 100
dt = 0.05

[data]
b = -1e-3
zeta_shape = "gaussian"
zeta_amplitude = 2e-4

[shoot]
sweep_b = [0.1, 0.2, 0.3]

[evolve]
solver = "full"
tracking = false
)");
  CHECK(c.seed == 7);
  CHECK(c.jobs == 3);
  CHECK(c.output_dir == "out dir");
  CHECK(c.grid.L == 120.0);
  CHECK(c.time.dt == 0.05);
  CHECK(c.data.b == -1e-3);
  CHECK(c.data.zeta.shape == ZetaShape::Gaussian);
  CHECK(c.data.zeta.amplitude == 2e-4);
  CHECK(c.shoot.sweep_b == std::vector<double>{0.1, 0.2, 0.3});
  CHECK(c.evolve.solver == "full");
  CHECK_FALSE(c.evolve.tracking);
  CHECK(c.time.T == 100.0);
  CHECK_NOTHROW(validate(c));
  const Config back = parse_config(to_text(c));
  CHECK(to_text(back) == to_text(c));
  CHECK(config_hash(back) != config_hash(Config{}));
}

TEST_CASE("hash changes with any value") {
  Config c;
  const std::string h0 = config_hash(c);
  c.time.sample_stride = 5;
  CHECK(config_hash(c) != h0);
  c = Config{};
  c.data.zeta.file = "x";
  CHECK(config_hash(c) != h0);
}

TEST_CASE("malformed input is rejected") {
  CHECK_THROWS_WITH_AS(parse_config("[grid]\nbogus = 1\n"), "unknown configuration key: grid.bogus",
                       ConfigError);
  CHECK_THROWS_AS(parse_config("[nosuch]\nL = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[grid]\nL = abc\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[time]\nsample_stride = -2\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[evolve]\ntracking = maybe\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[data]\nzeta_shape = \"square\"\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[grid]\nL = [1, 2]\n"), ConfigError);
  CHECK_THROWS_AS(load_config("/nonexistent/kglab.toml"), ConfigError);
}

TEST_CASE("validation rules") {
  CHECK(message_of("[time]\ndt = 0.06\n") ==
        "CFL violated: time.dt = 0.06 exceeds 0.9 * grid.dx = 0.045");
  CHECK(message_of("[time]\nT = 230\n").find("light cone") == 0);
  CHECK(message_of("[time]\nsample_stride = 20\n").find("sample_stride") != std::string::npos);
  CHECK(message_of("[model]\nalpha = 1\n").find("alpha") != std::string::npos);
  CHECK(message_of("[k_grid]\nk_split = 50\n").find("k_grid") == 0);
  CHECK(message_of("[shoot]\nsweep_b = [0.1]\n").find("sweep_b") != std::string::npos);
  CHECK(message_of("[evolve]\nsolver = \"rk4\"\n").find("evolve.solver") == 0);
  CHECK(message_of("[fit]\nt2 = 200\n").find("fit window") == 0);
  CHECK(message_of("[data]\nzeta_shape = \"algebraic\"\nzeta_decay = 0.4\n").find("algebraic") == 0);
  CHECK(message_of("[data]\nzeta_shape = \"custom_file\"\nzeta_file = \"/nonexistent\"\n")
            .find("zeta file not found") == 0);
  CHECK(message_of("[shoot]\nsweep_b = []\n").empty());
}

TEST_CASE("load from file") {
  const std::string path = "kglab_test_config.toml";
  {
    std::ofstream f(path);
    f << "[grid]\nL = 150\n[time]\nT = 120\n";
  }
  const Config c = load_config(path);
  std::remove(path.c_str());
  CHECK(c.grid.L == 150.0);
  CHECK(c.time.T == 120.0);
  CHECK_NOTHROW(validate(c));
}
