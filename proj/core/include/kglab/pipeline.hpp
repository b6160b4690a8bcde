#pragma once

#include <filesystem>
#include <iosfwd>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "kglab/analysis.hpp"
#include "kglab/config.hpp"

namespace kglab {

enum ExitCode : int {
  kExitOk = 0,
  kExitError = 1,
  kExitConfig = 2,
  kExitBracket = 3,
  kExitBlowUp = 4,
  kExitCheck = 5,
};

/// A run that should have stayed near the soliton escaped.
class EscapeError : public NumericalFailure {
 public:
  using NumericalFailure::NumericalFailure;
};

struct Gate {
  std::string name;
  double value = 0.0;
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();
  bool pass = false;
};

Gate make_gate(std::string name, double value, double lo, double hi);

struct StageResult {
  std::string name;
  std::vector<Gate> gates;
  std::vector<std::string> artifacts;
  std::vector<std::string> warnings;
  double wall_seconds = 0.0;
  bool passed() const;
};

/// Stage names in dependency order.
const std::vector<std::string>& stage_names();

/// Runs stages against one configuration, sharing grids, bases and
/// trajectories between them. Artifacts go to the output directory, or to
/// one subdirectory per stage when `per_stage_dirs` is set.
class Pipeline {
 public:
  Pipeline(Config cfg, std::filesystem::path output_dir, bool per_stage_dirs = false);
  ~Pipeline();
  Pipeline(const Pipeline&) = delete;
  Pipeline& operator=(const Pipeline&) = delete;

  /// Runs one stage; throws on failure (ConfigError, BracketFailure,
  /// EscapeError, ...).
  StageResult run_stage(const std::string& name);

  /// Runs the stages in order, writes manifest.json and maps failures to
  /// exit codes. With `check`, a failed gate gives kExitCheck.
  int run(const std::vector<std::string>& stages, bool check, std::ostream& log);

  const Config& config() const { return cfg_; }
  const std::vector<StageResult>& results() const { return results_; }
  const std::filesystem::path& output_dir() const { return out_; }

 private:
  struct Cache;

  StageResult spectrum();
  StageResult scattering();
  StageResult dft_check();
  StageResult linear_decay();
  StageResult shoot();
  StageResult evolve();
  StageResult decay();

  std::filesystem::path stage_dir(const std::string& stage) const;
  void write_manifest(int exit_code, double wall, const std::string& error) const;

  Config cfg_;
  std::filesystem::path out_;
  bool per_stage_dirs_;
  std::vector<StageResult> results_;
  std::unique_ptr<Cache> cache_;
};

/// --output flag, then KGLAB_OUTPUT, then output_dir from the config, then
/// "kglab_out".
std::filesystem::path resolve_output_dir(const std::string& flag, const Config& cfg);

/// Reads a config file, or the config embedded in a manifest.json.
Config load_config_or_manifest(const std::string& path);

}  // namespace kglab
