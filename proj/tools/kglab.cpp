// kglab: soliton stability lab for the quartic Klein-Gordon equation.
//
//   kglab spectrum --config run.toml --output out/
//   kglab pipeline --check --jobs 4
//
// Every subcommand writes its artifacts plus manifest.json to the output
// directory (--output, else $KGLAB_OUTPUT, else output_dir in the config).
// Plotting is left to external tools, e.g.
//   python -c "import pandas as p; p.read_csv('out/trajectory.csv').plot(x='t', logy=True)"

#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "kglab/pipeline.hpp"

namespace {

struct Flags {
  std::string config;
  std::string output;
  bool check = false;
  std::size_t jobs = 0;
  bool print_config = false;
};

int run(const std::vector<std::string>& stages, const Flags& f, bool per_stage_dirs) {
  kglab::Config cfg;
  try {
    if (!f.config.empty()) cfg = kglab::load_config_or_manifest(f.config);
    if (f.jobs > 0) cfg.jobs = f.jobs;
    kglab::validate(cfg);
  } catch (const kglab::InvalidInput& e) {
    std::cerr << "kglab: invalid configuration: " << e.what() << "\n";
    return kglab::kExitConfig;
  }
  if (f.print_config) {
    std::cout << kglab::to_text(cfg);
    return kglab::kExitOk;
  }
  const auto out = kglab::resolve_output_dir(f.output, cfg);
  try {
    kglab::Pipeline p(cfg, out, per_stage_dirs);
    const int code = p.run(stages, f.check, std::cerr);
    if (code == kglab::kExitCheck) std::cerr << "kglab: acceptance gates failed\n";
    return code;
  } catch (const kglab::InvalidInput& e) {
    std::cerr << "kglab: invalid configuration: " << e.what() << "\n";
    return kglab::kExitConfig;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stability lab for the quartic Klein-Gordon soliton"};
  app.require_subcommand(1);
  Flags flags;

  struct Sub {
    const char* name;
    const char* help;
  };
  const std::vector<Sub> subs{
      {"spectrum", "Eigenvalues of the linearized operator (spectrum.csv)"},
      {"scattering", "Jost solutions, T and R, genericity verdict (scattering.csv)"},
      {"dft-check", "Distorted Fourier isometry and round-trip checks (dft_report.json)"},
      {"linear-decay", "Dispersive decay of the linear propagator (linear_decay.csv)"},
      {"shoot", "Bisection for the stable-manifold coefficient (shoot.json)"},
      {"evolve", "Nonlinear evolution of the configured data (trajectory.csv)"},
      {"decay-report", "Decay exponents, X-norm, integrated decay (decay_report.json)"},
      {"pipeline", "All stages in dependency order, one subdirectory each"},
  };
  std::vector<CLI::App*> cmds;
  for (const auto& s : subs) {
    CLI::App* c = app.add_subcommand(s.name, s.help);
    c->add_option("--config", flags.config, "Config file, or a manifest.json to re-run");
    c->add_flag("--check", flags.check, "Exit 5 if any acceptance gate fails");
    c->add_option("--jobs", flags.jobs, "Worker thread cap (0: hardware)");
    c->add_option("--output", flags.output, "Output directory");
    c->add_flag("--print-config", flags.print_config, "Print the effective config and exit");
    cmds.push_back(c);
  }

  CLI11_PARSE(app, argc, argv);

  for (std::size_t i = 0; i < cmds.size(); ++i) {
    if (!cmds[i]->parsed()) continue;
    const std::string name = subs[i].name;
    if (name == "pipeline") return run(kglab::stage_names(), flags, true);
    return run({name}, flags, false);
  }
  return kglab::kExitError;
}
