#include "kglab/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <sstream>

#include "CLI11.hpp"

namespace kglab {

namespace {

using Inputs = std::vector<std::string>;

struct Field {
  std::string section;
  std::string key;
  std::function<std::string(const Config&)> get;
  std::function<void(Config&, const Inputs&)> set;
};

std::string fmt(double v) {
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

// For messages: six significant digits.
std::string show(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

const std::string& single(const Inputs& in, const std::string& name) {
  if (in.size() != 1) throw ConfigError(name + ": expected a single value");
  return in.front();
}

double to_double(const Inputs& in, const std::string& name) {
  const std::string& s = single(in, name);
  std::size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &pos);
  } catch (const std::exception&) {
    throw ConfigError(name + ": not a number: '" + s + "'");
  }
  if (pos != s.size()) throw ConfigError(name + ": not a number: '" + s + "'");
  return v;
}

std::uint64_t to_uint(const Inputs& in, const std::string& name) {
  const std::string& s = single(in, name);
  if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos) {
    throw ConfigError(name + ": expected a non-negative integer, got '" + s + "'");
  }
  return std::stoull(s);
}

bool to_bool(const Inputs& in, const std::string& name) {
  const std::string& s = single(in, name);
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw ConfigError(name + ": expected true or false, got '" + s + "'");
}

std::string quote_str(const std::string& s) { return "\"" + s + "\""; }

template <class M>
void add_double(std::vector<Field>& f, const std::string& sec, const std::string& key, M member) {
  f.push_back({sec, key, [member](const Config& c) { return fmt(member(const_cast<Config&>(c))); },
               [member, sec, key](Config& c, const Inputs& in) {
                 member(c) = to_double(in, sec + "." + key);
               }});
}

template <class M>
void add_size(std::vector<Field>& f, const std::string& sec, const std::string& key, M member) {
  f.push_back({sec, key,
               [member](const Config& c) {
                 return std::to_string(member(const_cast<Config&>(c)));
               },
               [member, sec, key](Config& c, const Inputs& in) {
                 member(c) = static_cast<std::remove_reference_t<decltype(member(c))>>(
                     to_uint(in, sec + "." + key));
               }});
}

template <class M>
void add_bool(std::vector<Field>& f, const std::string& sec, const std::string& key, M member) {
  f.push_back({sec, key,
               [member](const Config& c) {
                 return std::string(member(const_cast<Config&>(c)) ? "true" : "false");
               },
               [member, sec, key](Config& c, const Inputs& in) {
                 member(c) = to_bool(in, sec + "." + key);
               }});
}

template <class M>
void add_string(std::vector<Field>& f, const std::string& sec, const std::string& key, M member) {
  f.push_back({sec, key, [member](const Config& c) { return quote_str(member(const_cast<Config&>(c))); },
               [member, sec, key](Config& c, const Inputs& in) {
                 member(c) = in.empty() ? std::string() : single(in, sec + "." + key);
               }});
}

template <class M>
void add_zeta(std::vector<Field>& f, const std::string& sec, const std::string& prefix, M zeta) {
  f.push_back({sec, prefix + "shape",
               [zeta](const Config& c) { return quote_str(to_string(zeta(const_cast<Config&>(c)).shape)); },
               [zeta, sec, prefix](Config& c, const Inputs& in) {
                 try {
                   zeta(c).shape = parse_zeta_shape(single(in, sec + "." + prefix + "shape"));
                 } catch (const ConfigError&) {
                   throw;
                 } catch (const std::exception& e) {
                   throw ConfigError(sec + "." + prefix + "shape: " + e.what());
                 }
               }});
  add_double(f, sec, prefix + "amplitude", [zeta](Config& c) -> double& { return zeta(c).amplitude; });
  add_double(f, sec, prefix + "width", [zeta](Config& c) -> double& { return zeta(c).width; });
  add_double(f, sec, prefix + "decay", [zeta](Config& c) -> double& { return zeta(c).decay; });
  add_double(f, sec, prefix + "cutoff", [zeta](Config& c) -> double& { return zeta(c).cutoff; });
  add_double(f, sec, prefix + "taper", [zeta](Config& c) -> double& { return zeta(c).taper; });
  add_double(f, sec, prefix + "velocity_ratio",
             [zeta](Config& c) -> double& { return zeta(c).velocity_ratio; });
  add_string(f, sec, prefix + "file", [zeta](Config& c) -> std::string& { return zeta(c).file; });
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> f;
    // Top level.
    add_size(f, "", "seed", [](Config& c) -> std::uint64_t& { return c.seed; });
    add_string(f, "", "output_dir", [](Config& c) -> std::string& { return c.output_dir; });
    add_size(f, "", "jobs", [](Config& c) -> std::size_t& { return c.jobs; });

    add_double(f, "model", "alpha", [](Config& c) -> double& { return c.model.alpha; });
    add_double(f, "model", "power", [](Config& c) -> double& { return c.model.power; });

    add_double(f, "grid", "L", [](Config& c) -> double& { return c.grid.L; });
    add_double(f, "grid", "dx", [](Config& c) -> double& { return c.grid.dx; });

    add_double(f, "time", "T", [](Config& c) -> double& { return c.time.T; });
    add_double(f, "time", "dt", [](Config& c) -> double& { return c.time.dt; });
    add_size(f, "time", "sample_stride", [](Config& c) -> std::size_t& { return c.time.sample_stride; });

    add_double(f, "spectral", "L", [](Config& c) -> double& { return c.spectral.L; });
    add_double(f, "spectral", "dx", [](Config& c) -> double& { return c.spectral.dx; });

    add_double(f, "k_grid", "k_min", [](Config& c) -> double& { return c.k_grid.k_min; });
    add_double(f, "k_grid", "k_split", [](Config& c) -> double& { return c.k_grid.k_split; });
    add_double(f, "k_grid", "k_max", [](Config& c) -> double& { return c.k_grid.k_max; });
    add_size(f, "k_grid", "n_log", [](Config& c) -> std::size_t& { return c.k_grid.n_log; });
    add_size(f, "k_grid", "n_lin", [](Config& c) -> std::size_t& { return c.k_grid.n_lin; });

    add_double(f, "dft", "dk", [](Config& c) -> double& { return c.dft.dk; });
    add_double(f, "dft", "k_max", [](Config& c) -> double& { return c.dft.k_max; });
    add_size(f, "dft", "check_inputs", [](Config& c) -> std::size_t& { return c.dft.check_inputs; });
    add_double(f, "dft", "profile_dk", [](Config& c) -> double& { return c.dft.profile_dk; });
    add_double(f, "dft", "profile_k_max", [](Config& c) -> double& { return c.dft.profile_k_max; });

    add_double(f, "linear_decay", "L", [](Config& c) -> double& { return c.linear_decay.L; });
    add_double(f, "linear_decay", "dx", [](Config& c) -> double& { return c.linear_decay.dx; });
    add_double(f, "linear_decay", "t1", [](Config& c) -> double& { return c.linear_decay.t1; });
    add_double(f, "linear_decay", "t2", [](Config& c) -> double& { return c.linear_decay.t2; });
    add_size(f, "linear_decay", "n_times",
             [](Config& c) -> std::size_t& { return c.linear_decay.n_times; });
    add_zeta(f, "linear_decay", "", [](Config& c) -> ZetaParams& { return c.linear_decay.data; });

    add_double(f, "data", "b", [](Config& c) -> double& { return c.data.b; });
    add_zeta(f, "data", "zeta_", [](Config& c) -> ZetaParams& { return c.data.zeta; });
    add_double(f, "data", "epsilon0", [](Config& c) -> double& { return c.data.epsilon0; });
    add_double(f, "data", "budget_constant",
               [](Config& c) -> double& { return c.data.budget_constant; });

    add_double(f, "shoot", "horizon", [](Config& c) -> double& { return c.shoot.horizon; });
    add_double(f, "shoot", "tol", [](Config& c) -> double& { return c.shoot.tol; });
    add_double(f, "shoot", "s_max", [](Config& c) -> double& { return c.shoot.s_max; });
    f.push_back({"shoot", "sweep_b",
                 [](const Config& c) {
                   std::string s = "[";
                   for (std::size_t i = 0; i < c.shoot.sweep_b.size(); ++i) {
                     s += (i ? ", " : "") + fmt(c.shoot.sweep_b[i]);
                   }
                   return s + "]";
                 },
                 [](Config& c, const Inputs& in) {
                   c.shoot.sweep_b.clear();
                   for (const auto& v : in) c.shoot.sweep_b.push_back(to_double({v}, "shoot.sweep_b"));
                 }});
    add_double(f, "shoot", "unstable_offset",
               [](Config& c) -> double& { return c.shoot.unstable_offset; });

    add_string(f, "evolve", "solver", [](Config& c) -> std::string& { return c.evolve.solver; });
    add_double(f, "evolve", "s_offset", [](Config& c) -> double& { return c.evolve.s_offset; });
    add_bool(f, "evolve", "tracking", [](Config& c) -> bool& { return c.evolve.tracking; });
    add_size(f, "evolve", "field_stride",
             [](Config& c) -> std::size_t& { return c.evolve.field_stride; });

    add_double(f, "fit", "t1", [](Config& c) -> double& { return c.fit.t1; });
    add_double(f, "fit", "t2", [](Config& c) -> double& { return c.fit.t2; });
    add_double(f, "fit", "envelope_width", [](Config& c) -> double& { return c.fit.envelope_width; });

    add_bool(f, "decay", "doubling", [](Config& c) -> bool& { return c.decay.doubling; });
    add_bool(f, "decay", "localized_probe",
             [](Config& c) -> bool& { return c.decay.localized_probe; });
    add_zeta(f, "decay", "localized_", [](Config& c) -> ZetaParams& { return c.decay.localized; });
    return f;
  }();
  return table;
}

Config from_items(const std::vector<CLI::ConfigItem>& items) {
  std::map<std::string, const Field*> index;
  for (const auto& f : fields()) index[f.section.empty() ? f.key : f.section + "." + f.key] = &f;

  Config cfg;
  for (const auto& item : items) {
    // Section enter/leave markers.
    if (item.name == "++" || item.name == "--") continue;
    const std::string name = item.fullname();
    if (item.parents.size() > 1) throw ConfigError("nested section not supported: " + name);
    const auto it = index.find(name);
    if (it == index.end()) throw ConfigError("unknown configuration key: " + name);
    it->second->set(cfg, item.inputs);
  }
  return cfg;
}

void require(bool ok, const std::string& msg) {
  if (!ok) throw ConfigError(msg);
}

}  // namespace

Config parse_config(const std::string& text) {
  std::istringstream in(text);
  std::vector<CLI::ConfigItem> items;
  try {
    items = CLI::ConfigTOML().from_config(in);
  } catch (const CLI::Error& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
  return from_items(items);
}

Config load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

void validate(const Config& c) {
  require(c.model.alpha > 1.0, "model.alpha must exceed 1");
  require(c.power() > 1.0, "model.power must exceed 1");

  require(c.grid.L > 0.0 && c.grid.dx > 0.0, "grid.L and grid.dx must be positive");
  require(c.time.T > 0.0 && c.time.dt > 0.0, "time.T and time.dt must be positive");
  require(c.time.sample_stride > 0, "time.sample_stride must be positive");
  if (c.time.dt > 0.9 * c.grid.dx) {
    throw ConfigError("CFL violated: time.dt = " + show(c.time.dt) + " exceeds 0.9 * grid.dx = " +
                      show(0.9 * c.grid.dx));
  }
  require(c.grid.L >= c.time.T + 10.0,
          "light cone: grid.L must be at least time.T + 10 (got L = " + show(c.grid.L) +
              ", T = " + show(c.time.T) + ")");
  require(c.time.dt * static_cast<double>(c.time.sample_stride) <= 0.5 + 1e-12,
          "time.dt * time.sample_stride must not exceed 0.5 (profile derivatives)");

  require(c.spectral.L > 0.0 && c.spectral.dx > 0.0, "spectral.L and spectral.dx must be positive");
  require(c.spectral.dx < c.spectral.L, "spectral.dx must be smaller than spectral.L");

  require(c.k_grid.k_min > 0.0 && c.k_grid.k_min < c.k_grid.k_split &&
              c.k_grid.k_split < c.k_grid.k_max,
          "k_grid requires 0 < k_min < k_split < k_max");
  require(c.k_grid.n_log >= 8 && c.k_grid.n_lin >= 8, "k_grid.n_log and n_lin must be >= 8");

  require(c.dft.dk > 0.0 && c.dft.k_max > 8.0 * c.dft.dk, "dft.k_max must exceed 8 * dft.dk");
  require(c.dft.profile_dk > 0.0 && c.dft.profile_k_max > 8.0 * c.dft.profile_dk,
          "dft.profile_k_max must exceed 8 * dft.profile_dk");
  require(c.dft.check_inputs > 0, "dft.check_inputs must be positive");

  require(c.linear_decay.L > 0.0 && c.linear_decay.dx > 0.0,
          "linear_decay.L and linear_decay.dx must be positive");
  require(c.linear_decay.t1 > 0.0 && c.linear_decay.t2 > c.linear_decay.t1,
          "linear_decay requires 0 < t1 < t2");
  require(c.linear_decay.n_times >= 20, "linear_decay.n_times must be >= 20");

  require(c.data.epsilon0 > 0.0 && c.data.budget_constant > 0.0,
          "data.epsilon0 and data.budget_constant must be positive");
  for (const ZetaParams* z : {&c.data.zeta, &c.linear_decay.data, &c.decay.localized}) {
    require(z->amplitude >= 0.0 && z->width > 0.0, "zeta amplitude must be >= 0, width > 0");
    if (z->shape == ZetaShape::CustomFile) {
      require(std::filesystem::exists(z->file), "zeta file not found: " + z->file);
    }
    if (z->shape == ZetaShape::Algebraic) {
      require(z->decay > 0.5 && z->cutoff > 0.0 && z->taper > 0.0,
              "algebraic zeta needs decay > 1/2, cutoff > 0, taper > 0");
    }
  }

  require(c.shoot.horizon > 0.0 && c.shoot.tol > 0.0, "shoot.horizon and shoot.tol must be positive");
  require(c.shoot.s_max >= 0.0, "shoot.s_max must be >= 0");
  require(c.shoot.unstable_offset > 0.0, "shoot.unstable_offset must be positive");
  std::size_t positive = 0;
  for (double b : c.shoot.sweep_b) positive += b > 0.0;
  require(positive >= 2 || c.shoot.sweep_b.empty(), "shoot.sweep_b needs at least two positive values");

  require(c.evolve.solver == "stable" || c.evolve.solver == "modal" || c.evolve.solver == "full",
          "evolve.solver must be stable, modal or full");

  require(c.fit.t1 > 0.0 && c.fit.envelope_width > 0.0, "fit.t1 and fit.envelope_width must be positive");
  const double t2 = c.fit.t2 > 0.0 ? c.fit.t2 : 0.8 * c.time.T;
  require(t2 > c.fit.t1 && t2 <= c.time.T, "fit window must lie inside [0, time.T]");
}

std::string to_text(const Config& cfg) {
  std::ostringstream os;
  std::string section = "\x01";
  for (const auto& f : fields()) {
    if (f.section != section) {
      if (!f.section.empty()) os << "\n[" << f.section << "]\n";
      section = f.section;
    }
    os << f.key << " = " << f.get(cfg) << "\n";
  }
  return os.str();
}

std::string config_hash(const Config& cfg) {
  const std::string text = to_text(cfg);
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace kglab
