#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "kglab/manifold.hpp"

namespace kglab {

/// Raised for malformed or inconsistent configuration.
class ConfigError : public InvalidInput {
 public:
  using InvalidInput::InvalidInput;
};

/// Run configuration. File format: `[section]` headers and `key = value`
/// lines, `#` comments, strings in double quotes, lists as `[a, b, c]`.
/// Every key is optional; unknown sections or keys are rejected.
struct Config {
  struct Model {
    double alpha = 1.5;
    double power = 0.0;  // 0: 2 alpha + 1
  } model;

  // Grid for the nonlinear runs and the profile basis.
  struct Grid {
    double L = 230.0;
    double dx = 0.05;
  } grid;

  struct Time {
    double T = 150.0;
    double dt = 0.04;
    std::size_t sample_stride = 10;
  } time;

  // Eigenproblem, scattering table and dFT checks.
  struct Spectral {
    double L = 40.0;
    double dx = 0.02;
  } spectral;

  // Scattering table.
  struct KGridCfg {
    double k_min = 1e-3;
    double k_split = 0.5;
    double k_max = 40.0;
    std::size_t n_log = 64;
    std::size_t n_lin = 256;
  } k_grid;

  struct Dft {
    double dk = 0.02;
    double k_max = 20.0;
    std::size_t check_inputs = 20;
    double profile_dk = 0.02;
    double profile_k_max = 12.0;
  } dft;

  struct LinearDecay {
    double L = 120.0;
    double dx = 0.1;
    double t1 = 10.0;
    double t2 = 100.0;
    std::size_t n_times = 91;
    ZetaParams data = zeta_params(ZetaShape::Gaussian, 1.0, 1.0);
  } linear_decay;

  struct Data {
    double b = 5e-4;
    ZetaParams zeta = zeta_params(ZetaShape::Algebraic, 6e-4, 1.0);
    double epsilon0 = 0.05;
    double budget_constant = 0.1;
    double budget_limit() const { return epsilon0 * budget_constant; }
  } data;

  struct Shoot {
    double horizon = 60.0;
    double tol = 1e-12;
    double s_max = 0.0;
    std::vector<double> sweep_b{0.005, 0.01, 0.02, 0.04};
    double unstable_offset = 1e-6;
  } shoot;

  struct Evolve {
    std::string solver = "stable";  // stable | modal | full
    double s_offset = 0.0;
    bool tracking = true;
    std::size_t field_stride = 0;  // samples between field_t####.csv files; 0 disables
  } evolve;

  struct Fit {
    double t1 = 10.0;
    double t2 = 0.0;  // 0: 0.8 T
    double envelope_width = 6.0;
  } fit;

  struct Decay {
    bool doubling = true;
    bool localized_probe = true;
    ZetaParams localized = zeta_params(ZetaShape::CompactBump, 3e-4, 3.0);
  } decay;

  std::uint64_t seed = 20260115;
  std::string output_dir;
  std::size_t jobs = 0;

  double power() const { return model.power > 0.0 ? model.power : 2.0 * model.alpha + 1.0; }
  double shoot_half_width() const { return shoot.horizon + 10.0; }
};

Config load_config(const std::string& path);
Config parse_config(const std::string& text);

/// Re-checks every positivity, CFL and light-cone rule; throws ConfigError.
void validate(const Config& cfg);

/// Canonical text form; parse_config(to_text(c)) reproduces c.
std::string to_text(const Config& cfg);

/// FNV-1a of the canonical text, as 16 hex digits.
std::string config_hash(const Config& cfg);

}  // namespace kglab
