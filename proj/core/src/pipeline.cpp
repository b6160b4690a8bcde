#include "kglab/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <ostream>
#include <random>
#include <sstream>

#include "json.hpp"
#include "kglab/parallel.hpp"
#include "kglab/quadrature.hpp"
#include "kglab/scattering.hpp"

#ifndef KGLAB_VERSION
#define KGLAB_VERSION "dev"
#endif

namespace kglab {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

class Csv {
 public:
  Csv(const fs::path& path, const std::string& header) : f_(std::fopen(path.c_str(), "w")) {
    if (f_ == nullptr) throw NumericalFailure("cannot write " + path.string());
    std::fprintf(f_, "%s\n", header.c_str());
  }
  ~Csv() {
    if (f_ != nullptr) std::fclose(f_);
  }
  Csv(const Csv&) = delete;
  Csv& operator=(const Csv&) = delete;

  void row(std::initializer_list<double> values) {
    bool first = true;
    for (double v : values) {
      std::fprintf(f_, first ? "%.15g" : ",%.15g", v);
      first = false;
    }
    std::fputc('\n', f_);
  }

 private:
  std::FILE* f_;
};

json gate_json(const Gate& g) {
  json j;
  j["name"] = g.name;
  j["value"] = g.value;
  j["lo"] = std::isfinite(g.lo) ? json(g.lo) : json(nullptr);
  j["hi"] = std::isfinite(g.hi) ? json(g.hi) : json(nullptr);
  j["pass"] = g.pass;
  return j;
}

json gates_json(const std::vector<Gate>& gates) {
  json a = json::array();
  for (const auto& g : gates) a.push_back(gate_json(g));
  return a;
}

json fit_json(const FitResult& f) {
  return {{"slope", f.slope},   {"intercept", f.intercept}, {"ci95", f.ci95},
          {"stderr", f.stderr_slope}, {"n_used", f.n_used}, {"n_dropped", f.n_dropped},
          {"t1", f.t1},         {"t2", f.t2}};
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream os(path);
  if (!os) throw NumericalFailure("cannot write " + path.string());
  os << j.dump(2) << "\n";
}

double loglog_slope(const RealVec& x, const RealVec& y) {
  double mx = 0, my = 0, n = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0.0) || !(y[i] > 0.0)) continue;
    mx += std::log(x[i]);
    my += std::log(y[i]);
    n += 1;
  }
  if (n < 2) return std::nan("");
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0.0) || !(y[i] > 0.0)) continue;
    sxx += (std::log(x[i]) - mx) * (std::log(x[i]) - mx);
    sxy += (std::log(x[i]) - mx) * (std::log(y[i]) - my);
  }
  return sxy / sxx;
}

void write_trajectory(const fs::path& path, const Trajectory& tr) {
  Csv csv(path, "t,a,adot,chi_sup,chi_weighted_sup,energy,F_v");
  for (const auto& s : tr.samples) {
    csv.row({s.t, s.a, s.adot, s.chi_sup, s.chi_weighted_sup, s.energy, s.F});
  }
}

double relative_energy_drift(const Trajectory& tr) {
  if (tr.samples.empty()) return 0.0;
  const double e0 = tr.samples.front().energy;
  double d = 0.0;
  for (const auto& s : tr.samples) d = std::max(d, std::abs(s.energy - e0));
  return e0 != 0.0 ? d / std::abs(e0) : d;
}

json trajectory_summary(const Trajectory& tr) {
  return {{"escaped", tr.escaped},
          {"escape_reason", tr.escape_reason},
          {"escape_time", tr.escape_time},
          {"steps", tr.steps},
          {"sweeps", tr.sweeps},
          {"closure_change", tr.closure_change},
          {"kicks", tr.kicks.size()},
          {"max_orthogonality", tr.max_orthogonality},
          {"max_asymmetry", tr.max_asymmetry},
          {"energy_drift", relative_energy_drift(tr)}};
}

}  // namespace

Gate make_gate(std::string name, double value, double lo, double hi) {
  Gate g;
  g.name = std::move(name);
  g.value = value;
  g.lo = lo;
  g.hi = hi;
  g.pass = std::isfinite(value) && value >= lo && value <= hi;
  return g;
}

bool StageResult::passed() const {
  for (const auto& g : gates) {
    if (!g.pass) return false;
  }
  return true;
}

const std::vector<std::string>& stage_names() {
  static const std::vector<std::string> names{"spectrum", "scattering", "dft-check",
                                              "linear-decay", "shoot", "evolve",
                                              "decay-report"};
  return names;
}

// Objects shared between stages, built on first use.
struct Pipeline::Cache {
  std::optional<DynamicsContext> ctx;
  std::optional<DistortedBasis> basis;
  std::optional<DataSpec> data;
  std::optional<Trajectory> stable;
};

Pipeline::Pipeline(Config cfg, fs::path output_dir, bool per_stage_dirs)
    : cfg_(std::move(cfg)),
      out_(std::move(output_dir)),
      per_stage_dirs_(per_stage_dirs),
      cache_(std::make_unique<Cache>()) {
  validate(cfg_);
  if (cfg_.jobs > 0) set_default_jobs(cfg_.jobs);
}

Pipeline::~Pipeline() = default;

fs::path Pipeline::stage_dir(const std::string& stage) const {
  fs::path d = per_stage_dirs_ ? out_ / stage : out_;
  fs::create_directories(d);
  return d;
}

StageResult Pipeline::run_stage(const std::string& name) {
  const auto t0 = std::chrono::steady_clock::now();
  StageResult r;
  if (name == "spectrum") {
    r = spectrum();
  } else if (name == "scattering") {
    r = scattering();
  } else if (name == "dft-check") {
    r = dft_check();
  } else if (name == "linear-decay") {
    r = linear_decay();
  } else if (name == "shoot") {
    r = shoot();
  } else if (name == "evolve") {
    r = evolve();
  } else if (name == "decay-report") {
    r = decay();
  } else {
    throw ConfigError("unknown stage: " + name);
  }
  r.name = name;
  r.wall_seconds = seconds_since(t0);
  results_.push_back(r);
  return r;
}

int Pipeline::run(const std::vector<std::string>& stages, bool check, std::ostream& log) {
  const auto t0 = std::chrono::steady_clock::now();
  int code = kExitOk;
  std::string error;
  try {
    fs::create_directories(out_);
    for (const auto& s : stages) {
      log << "[" << s << "] running\n" << std::flush;
      const StageResult r = run_stage(s);
      for (const auto& w : r.warnings) log << "[" << s << "] warning: " << w << "\n";
      for (const auto& g : r.gates) {
        log << "[" << s << "] " << (g.pass ? "pass" : "FAIL") << "  " << g.name << " = "
            << g.value << "\n";
      }
      log << "[" << s << "] done in " << r.wall_seconds << " s\n" << std::flush;
      write_manifest(code, seconds_since(t0), error);
    }
    if (check) {
      for (const auto& r : results_) {
        if (!r.passed()) code = kExitCheck;
      }
    }
  } catch (const ConfigError& e) {
    error = e.what();
    code = kExitConfig;
  } catch (const BracketFailure& e) {
    error = e.what();
    code = kExitBracket;
  } catch (const EscapeError& e) {
    error = e.what();
    code = kExitBlowUp;
  } catch (const std::exception& e) {
    error = e.what();
    code = kExitError;
  }
  if (!error.empty()) log << "error: " << error << "\n";
  try {
    write_manifest(code, seconds_since(t0), error);
  } catch (const std::exception& e) {
    log << "error: " << e.what() << "\n";
    if (code == kExitOk) code = kExitError;
  }
  return code;
}

void Pipeline::write_manifest(int exit_code, double wall, const std::string& error) const {
  json m;
  m["tool"] = "kglab";
  m["version"] = KGLAB_VERSION;
  m["compiler"] = __VERSION__;
  m["config_hash"] = config_hash(cfg_);
  m["config"] = to_text(cfg_);
  m["jobs"] = default_jobs();
  m["exit_code"] = exit_code;
  m["wall_seconds"] = wall;
  if (!error.empty()) m["error"] = error;
  json stages = json::array();
  for (const auto& r : results_) {
    stages.push_back({{"name", r.name},
                      {"wall_seconds", r.wall_seconds},
                      {"artifacts", r.artifacts},
                      {"warnings", r.warnings},
                      {"passed", r.passed()},
                      {"gates", gates_json(r.gates)}});
  }
  m["stages"] = stages;
  fs::create_directories(out_);
  write_json(out_ / "manifest.json", m);
}

// ---------------------------------------------------------------------------

StageResult Pipeline::spectrum() {
  StageResult r;
  const GridSpec grid = GridSpec::from_spacing(cfg_.spectral.L, cfg_.spectral.dx);
  const SolitonModel model = build_soliton(cfg_.model.alpha, grid);
  const SpectrumReport rep = spectrum_report(model);
  const fs::path dir = stage_dir("spectrum");

  {
    Csv csv(dir / "spectrum.csv", "index,eigenvalue,parity");
    for (std::size_t i = 0; i < rep.below_edge.size(); ++i) {
      csv.row({static_cast<double>(i), rep.below_edge[i].value,
               static_cast<double>(rep.below_edge[i].parity)});
    }
  }
  r.gates.push_back(make_gate("lambda0_error", rep.lambda0_error, 0.0, 1e-3));
  r.gates.push_back(make_gate("rho_l2_error", rep.rho_l2_error, 0.0, 1e-3));
  r.gates.push_back(make_gate("internal_mode", rep.has_internal_mode ? 1.0 : 0.0, 0.0, 0.0));
  r.warnings = rep.warnings;

  json j;
  j["grid"] = {{"L", grid.half_width()}, {"dx", grid.dx()}, {"n", grid.size()}};
  j["lambda0_exact"] = model.lambda0;
  j["eigenvalue_below"] = rep.eigenvalue_below;
  j["lambda0_error"] = rep.lambda0_error;
  j["rho_l2_error"] = rep.rho_l2_error;
  j["internal_mode"] = rep.has_internal_mode;
  json ev = json::array();
  for (const auto& e : rep.below_edge) ev.push_back({{"value", e.value}, {"parity", e.parity}});
  j["eigenvalues_below_edge"] = ev;
  j["warnings"] = rep.warnings;
  j["gates"] = gates_json(r.gates);
  write_json(dir / "spectrum.json", j);
  r.artifacts = {"spectrum.csv", "spectrum.json"};
  return r;
}

StageResult Pipeline::scattering() {
  StageResult r;
  const GridSpec grid = GridSpec::from_spacing(cfg_.spectral.L, cfg_.spectral.dx);
  const auto& kc = cfg_.k_grid;
  const KGrid kgrid = KGrid::log_uniform(kc.k_min, kc.k_split, kc.k_max, kc.n_log, kc.n_lin);
  const Potential V = Potential::soliton(cfg_.model.alpha);
  const ScatteringData data = ScatteringData::assemble(V, grid, kgrid, false, cfg_.jobs);
  const fs::path dir = stage_dir("scattering");

  {
    Csv csv(dir / "scattering.csv", "k,re_T,im_T,re_R_plus,im_R_plus,re_R_minus,im_R_minus,unitarity_defect");
    for (std::size_t i = 0; i < kgrid.size(); ++i) {
      csv.row({kgrid[i], data.T[i].real(), data.T[i].imag(), data.R_plus[i].real(),
               data.R_plus[i].imag(), data.R_minus[i].real(), data.R_minus[i].imag(),
               data.unitarity_defect[i]});
    }
  }

  std::vector<double> ks;
  for (std::size_t j = 0; j < 3; ++j) ks.push_back(kgrid[kgrid.positive_index(j)]);
  const GenericityReport gen = genericity_classify(V, grid, ks);

  // Reference potential -2 sech^2 x: resonant, with closed-form Jost
  // functions m_+- = (k +- i tanh x)/(k + i).
  const Potential pt = Potential::poschl_teller(1);
  const GenericityReport pt_gen = genericity_classify(pt, grid, ks);
  const RealVec x = grid.nodes();
  double pt_err = 0.0;
  for (double k : {0.25, 0.5, 1.0, 2.0}) {
    for (JostSide side : {JostSide::Plus, JostSide::Minus}) {
      const JostSolution s = jost_solve(pt, grid, k, side);
      const double sgn = side == JostSide::Plus ? 1.0 : -1.0;
      for (std::size_t i = 0; i < x.size(); ++i) {
        const Complex exact = Complex(k, sgn * std::tanh(x[i])) / Complex(k, 1.0);
        pt_err = std::max(pt_err, std::abs(s.m[i] - exact));
      }
    }
  }

  r.gates.push_back(make_gate("max_unitarity_defect", data.max_unitarity_defect, 0.0, 1e-6));
  r.gates.push_back(make_gate("soliton_generic", gen.verdict == Genericity::Generic ? 1.0 : 0.0, 1.0, 1.0));
  r.gates.push_back(make_gate("abs_T0", std::abs(gen.T0), 0.0, kGenericT0Threshold));
  r.gates.push_back(make_gate("abs_R_plus0_plus_1", std::abs(gen.R_plus0 + 1.0), 0.0, kGenericR0Threshold));
  r.gates.push_back(make_gate("poschl_teller_resonant", pt_gen.verdict == Genericity::Resonant ? 1.0 : 0.0, 1.0, 1.0));
  r.gates.push_back(make_gate("poschl_teller_jost_error", pt_err, 0.0, 1e-6));

  auto cjson = [](Complex z) { return json::array({z.real(), z.imag()}); };
  json j;
  j["k_grid"] = kgrid.describe();
  j["max_unitarity_defect"] = data.max_unitarity_defect;
  j["max_symmetry_defect"] = data.max_symmetry_defect;
  j["max_consistency_defect"] = data.max_consistency_defect;
  j["max_boundary_defect"] = data.max_boundary_defect;
  j["genericity"] = {{"potential", V.name},
                     {"verdict", to_string(gen.verdict)},
                     {"T0", cjson(gen.T0)},
                     {"R_plus0", cjson(gen.R_plus0)},
                     {"R_minus0", cjson(gen.R_minus0)},
                     {"T_fit_residual", gen.T_residual},
                     {"R_fit_residual", gen.R_residual},
                     {"zero_energy_integral", cjson(gen.zero_energy_integral)},
                     {"k_samples", gen.k_samples}};
  j["reference"] = {{"potential", pt.name},
                    {"verdict", to_string(pt_gen.verdict)},
                    {"T0", cjson(pt_gen.T0)},
                    {"jost_closed_form_error", pt_err}};
  j["gates"] = gates_json(r.gates);
  write_json(dir / "scattering.json", j);
  r.artifacts = {"scattering.csv", "scattering.json"};
  return r;
}

StageResult Pipeline::dft_check() {
  StageResult r;
  const GridSpec grid = GridSpec::from_spacing(cfg_.spectral.L, cfg_.spectral.dx);
  const SolitonModel model = build_soliton(cfg_.model.alpha, grid);
  const KGrid kgrid = KGrid::midpoint(cfg_.dft.dk, cfg_.dft.k_max);
  const DistortedBasis basis =
      DistortedBasis::build(Potential::soliton(cfg_.model.alpha), grid, kgrid, cfg_.jobs);
  const ContinuousProjector proj(model.rho, model.Qprime, grid.dx());
  const double dx = grid.dx();
  const RealVec& x = model.x;

  std::mt19937_64 rng(cfg_.seed);
  std::uniform_real_distribution<double> amp(-1.0, 1.0), centre(0.0, 5.0), width(0.5, 2.0);
  double iso = 0.0, round_trip = 0.0;
  for (std::size_t n = 0; n < cfg_.dft.check_inputs; ++n) {
    RealVec f(x.size(), 0.0);
    for (int m = 0; m < 3; ++m) {
      const double a = amp(rng), c = centre(rng), w = width(rng);
      for (std::size_t i = 0; i < x.size(); ++i) {
        const double p = (x[i] - c) / w, q = (x[i] + c) / w;
        f[i] += a * (std::exp(-p * p) + std::exp(-q * q));
      }
    }
    const RealVec pf = proj.project(f);
    const ComplexVec ft = basis.forward(pf);
    const double nx = l2_norm(pf, dx);
    iso = std::max(iso, std::abs(basis.k_norm(ft) / nx - 1.0));
    const RealVec back = basis.inverse_real(ft);
    RealVec diff(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) diff[i] = back[i] - pf[i];
    round_trip = std::max(round_trip, l2_norm(diff, dx) / l2_norm(f, dx));
  }
  const double rho_norm = basis.k_norm(basis.forward(model.rho)) / l2_norm(model.rho, dx);

  // <k>^2 multiplier against finite-difference (H + 1) on a smooth input.
  RealVec g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) g[i] = std::exp(-x[i] * x[i] / 2.0);
  const RealVec pg = proj.project(g);
  const RealVec via_k = basis.apply_multiplier([](double k) { return Complex(1.0 + k * k, 0.0); }, pg);
  const RealVec via_x = proj.project(discretize_L(model).apply(pg));
  double mult = 0.0, scale = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mult = std::max(mult, std::abs(via_k[i] - via_x[i]));
    scale = std::max(scale, std::abs(via_x[i]));
  }

  r.gates.push_back(make_gate("isometry_defect", iso, 0.0, 1e-3));
  r.gates.push_back(make_gate("rho_transform_norm", rho_norm, 0.0, 1e-3));
  r.gates.push_back(make_gate("round_trip_defect", round_trip, 0.0, 1e-4));

  const fs::path dir = stage_dir("dft-check");
  json j;
  j["k_grid"] = kgrid.describe();
  j["inputs"] = cfg_.dft.check_inputs;
  j["seed"] = cfg_.seed;
  j["isometry_defect"] = iso;
  j["rho_transform_norm"] = rho_norm;
  j["round_trip_defect"] = round_trip;
  j["multiplier_defect"] = mult / scale;
  j["sup_abs_psi"] = basis.sup_abs_psi();
  j["gates"] = gates_json(r.gates);
  write_json(dir / "dft_report.json", j);
  r.artifacts = {"dft_report.json"};
  return r;
}

StageResult Pipeline::linear_decay() {
  StageResult r;
  const auto& lc = cfg_.linear_decay;
  const GridSpec grid = GridSpec::from_spacing(lc.L, lc.dx);
  const SolitonModel model = build_soliton(cfg_.model.alpha, grid);
  const DistortedBasis basis = DistortedBasis::build(
      Potential::soliton(cfg_.model.alpha), grid,
      KGrid::midpoint(cfg_.dft.profile_dk, cfg_.dft.profile_k_max), cfg_.jobs);
  const ContinuousProjector proj(model.rho, model.Qprime, grid.dx());
  const RealVec f = zeta_profile(lc.data, model.x);
  std::vector<double> times(lc.n_times);
  for (std::size_t i = 0; i < lc.n_times; ++i) {
    times[i] = lc.t1 + (lc.t2 - lc.t1) * static_cast<double>(i) / static_cast<double>(lc.n_times - 1);
  }
  const LinearDecayResult res = linear_decay_probe(basis, proj, f, times);
  RealVec t, s, w;
  for (const auto& smp : res.samples) {
    t.push_back(smp.t);
    s.push_back(smp.sup_norm);
    w.push_back(smp.weighted_sup_norm);
  }
  const FitResult fs_ = fit_decay(t, s, lc.t1, lc.t2, true, cfg_.fit.envelope_width);
  const FitResult fw = fit_decay(t, w, lc.t1, lc.t2, true, cfg_.fit.envelope_width);
  r.gates.push_back(make_gate("sup_slope", fs_.slope, -0.6, -0.4));
  r.gates.push_back(make_gate("weighted_slope", fw.slope, -1.15, -0.85));
  r.warnings = res.warnings;

  const fs::path dir = stage_dir("linear-decay");
  {
    Csv csv(dir / "linear_decay.csv", "t,sup_norm,weighted_sup_norm");
    for (const auto& smp : res.samples) csv.row({smp.t, smp.sup_norm, smp.weighted_sup_norm});
  }
  json j;
  j["data"] = to_string(lc.data.shape);
  j["sup_fit"] = fit_json(fs_);
  j["weighted_fit"] = fit_json(fw);
  j["warnings"] = res.warnings;
  j["gates"] = gates_json(r.gates);
  write_json(dir / "linear_decay.json", j);
  r.artifacts = {"linear_decay.csv", "linear_decay.json"};
  return r;
}

namespace {

DataSpec checked_data(const DynamicsContext& ctx, const DistortedBasis& basis, double b,
                      const ZetaParams& zeta, double limit) {
  DataSpec spec = make_data(ctx, b, zeta);
  spec.norms = data_norms(ctx, spec, basis);
  spec.budget_limit = limit;
  if (limit > 0.0 && spec.norms->budget() > limit) {
    std::ostringstream os;
    os << "data violates the smallness budget: " << spec.norms->budget() << " > "
       << limit << " (epsilon0 * budget_constant)";
    throw ConfigError(os.str());
  }
  return spec;
}

json norms_json(const DataNorms& n) {
  return {{"b", n.b}, {"h2", n.h2}, {"weighted", n.weighted}, {"gamma", n.gamma},
          {"budget", n.budget()}};
}

DynamicsContext make_context(const Config& cfg, const GridSpec& grid) {
  DynamicsContext ctx = DynamicsContext::make(cfg.model.alpha, grid);
  ctx.power = cfg.power();
  return ctx;
}

}  // namespace

StageResult Pipeline::shoot() {
  StageResult r;
  const GridSpec grid = GridSpec::from_spacing(cfg_.shoot_half_width(), cfg_.grid.dx);
  const DynamicsContext ctx = make_context(cfg_, grid);
  const DistortedBasis basis = DistortedBasis::build(
      Potential::soliton(cfg_.model.alpha), grid,
      KGrid::midpoint(cfg_.dft.profile_dk, cfg_.dft.profile_k_max), cfg_.jobs);
  const DataSpec spec = checked_data(ctx, basis, cfg_.data.b, cfg_.data.zeta,
                                     cfg_.data.budget_limit());

  ShootOptions opt;
  opt.horizon = cfg_.shoot.horizon;
  opt.tol = cfg_.shoot.tol;
  opt.s_max = cfg_.shoot.s_max;
  opt.dt = cfg_.time.dt;
  opt.sample_stride = cfg_.time.sample_stride;
  const ShootResult res = shoot_stable(ctx, spec, opt);

  // Sweep over pure Y_- data; the budget does not apply to the sweep.
  json sweep = json::array();
  RealVec gam, sst;
  for (double b : cfg_.shoot.sweep_b) {
    DataSpec sb = make_data(ctx, b, ZetaParams{});
    const ShootResult rb = shoot_stable(ctx, sb, opt);
    gam.push_back(rb.gamma);
    sst.push_back(std::abs(rb.s_star));
    sweep.push_back({{"b", b},
                     {"s_star", rb.s_star},
                     {"gamma", rb.gamma},
                     {"residual", rb.residual.value},
                     {"converged", rb.converged},
                     {"iterations", rb.bracket_history.size()}});
  }
  const double slope = cfg_.shoot.sweep_b.empty() ? std::nan("") : loglog_slope(gam, sst);

  // Stability condition violated on purpose: a_+ should grow like e^{Omega t}.
  EvolveOptions eo;
  eo.T = cfg_.shoot.horizon;
  eo.dt = cfg_.time.dt;
  eo.sample_stride = cfg_.time.sample_stride;
  const Trajectory unstable =
      evolve_modal(ctx, modal_data(ctx, spec, res.s_star + cfg_.shoot.unstable_offset), eo);
  const FitResult rate = growth_rate(unstable, 100.0 * cfg_.shoot.unstable_offset, 1e-2);
  const double rate_err = std::abs(rate.slope - ctx.Omega()) / ctx.Omega();

  const auto& smp = res.trajectory.samples;
  const double a0 = std::abs(smp.front().a), aH = std::abs(smp.back().a);
  r.gates.push_back(make_gate("bracket_width", res.bracket_hi - res.bracket_lo, 0.0, opt.tol));
  r.gates.push_back(make_gate("stability_residual", std::abs(res.residual.value), 0.0,
                              10.0 * (opt.tol + res.residual.floor)));
  r.gates.push_back(make_gate("accepted_escaped", res.trajectory.escaped ? 1.0 : 0.0, 0.0, 0.0));
  if (a0 > 0.0) r.gates.push_back(make_gate("a_horizon_over_a0", aH / a0, 0.0, 1.0));
  if (!cfg_.shoot.sweep_b.empty()) {
    r.gates.push_back(make_gate("manifold_slope", slope, 1.4, std::numeric_limits<double>::infinity()));
  }
  r.gates.push_back(make_gate("unstable_rate_rel_error", rate_err, 0.0, 0.02));

  const fs::path dir = stage_dir("shoot");
  write_trajectory(dir / "trajectory.csv", res.trajectory);
  json hist = json::array();
  for (const auto& h : res.bracket_history) {
    hist.push_back({{"s", h.s}, {"side", to_string(h.side)}, {"exit_time", h.exit_time}});
  }
  json j;
  j["s_star"] = res.s_star;
  j["s_accepted"] = res.s_accepted;
  j["bracket"] = {res.bracket_lo, res.bracket_hi};
  j["converged"] = res.converged;
  j["horizon"] = res.horizon;
  j["gamma"] = res.gamma;
  j["data_norms"] = norms_json(*spec.norms);
  j["residual"] = {{"value", res.residual.value},
                   {"floor", res.residual.floor},
                   {"t_end", res.residual.t_end},
                   {"truncated", res.residual.truncated}};
  j["bracket_history"] = hist;
  j["trajectory"] = trajectory_summary(res.trajectory);
  j["sweep"] = sweep;
  j["manifold_slope"] = slope;
  j["unstable"] = {{"offset", cfg_.shoot.unstable_offset},
                   {"rate", rate.slope},
                   {"rate_ci95", rate.ci95},
                   {"Omega", ctx.Omega()},
                   {"relative_error", rate_err},
                   {"window", {rate.t1, rate.t2}}};
  j["gates"] = gates_json(r.gates);
  write_json(dir / "shoot.json", j);
  r.artifacts = {"shoot.json", "trajectory.csv"};
  if (res.trajectory.escaped) {
    throw EscapeError("accepted shooting trajectory escaped: " + res.trajectory.escape_reason);
  }
  return r;
}

namespace {

EvolveOptions run_options(const Config& cfg, double T) {
  EvolveOptions eo;
  eo.T = T;
  eo.dt = cfg.time.dt;
  eo.sample_stride = cfg.time.sample_stride;
  return eo;
}

}  // namespace

StageResult Pipeline::evolve() {
  StageResult r;
  Cache& c = *cache_;
  const GridSpec grid = GridSpec::from_spacing(cfg_.grid.L, cfg_.grid.dx);
  if (!c.ctx) c.ctx = make_context(cfg_, grid);
  if (!c.basis) {
    c.basis = DistortedBasis::build(Potential::soliton(cfg_.model.alpha), grid,
                                    KGrid::midpoint(cfg_.dft.profile_dk, cfg_.dft.profile_k_max),
                                    cfg_.jobs);
  }
  if (!c.data) {
    c.data = checked_data(*c.ctx, *c.basis, cfg_.data.b, cfg_.data.zeta, cfg_.data.budget_limit());
  }
  const DynamicsContext& ctx = *c.ctx;
  const DataSpec& spec = *c.data;
  const std::string& solver = cfg_.evolve.solver;

  Trajectory tr;
  std::vector<FieldState> fields;
  double s_used = 0.0;
  if (solver == "stable" && cfg_.evolve.s_offset == 0.0) {
    if (!c.stable) {
      EvolveOptions eo = run_options(cfg_, cfg_.time.T);
      eo.keep_snapshots = true;
      c.stable = evolve_stable(ctx, spec.b, spec.zeta1, spec.zeta2, eo);
    }
    tr = *c.stable;
    s_used = tr.fine_a_plus.empty() ? 0.0 : tr.fine_a_plus.front();
  } else {
    // Manifold coefficient from the closure over the shooting horizon.
    double s_star = 0.0;
    if (c.stable) {
      s_star = c.stable->fine_a_plus.front();
    } else {
      const Trajectory head = evolve_stable(ctx, spec.b, spec.zeta1, spec.zeta2,
                                            run_options(cfg_, std::min(cfg_.shoot.horizon, cfg_.time.T)));
      s_star = head.fine_a_plus.front();
    }
    s_used = s_star + cfg_.evolve.s_offset;
    EvolveOptions eo = run_options(cfg_, cfg_.time.T);
    eo.tracking.enabled = cfg_.evolve.tracking;
    if (solver == "full") {
      // The data sit on the continuum soliton; re-aim at the discrete one.
      eo.tracking.at_start = cfg_.evolve.tracking;
      eo.keep_fields = cfg_.evolve.field_stride > 0;
      FullRun run = evolve_full(ctx, prepare_data(ctx, spec, s_used), eo);
      tr = std::move(run.trajectory);
      fields = std::move(run.fields);
    } else {
      eo.keep_snapshots = cfg_.evolve.field_stride > 0;
      tr = evolve_modal(ctx, modal_data(ctx, spec, s_used), eo);
    }
  }

  const fs::path dir = stage_dir("evolve");
  write_trajectory(dir / "trajectory.csv", tr);
  r.artifacts = {"trajectory.csv", "evolve.json"};
  if (cfg_.evolve.field_stride > 0) {
    const std::size_t n = solver == "full" ? fields.size() : tr.snapshots.size();
    for (std::size_t i = 0; i < n; i += cfg_.evolve.field_stride) {
      const FieldState f = solver == "full" ? fields[i]
                                            : compose(tr.snapshots[i], ctx.model.Q, ctx.model.rho);
      char name[32];
      std::snprintf(name, sizeof name, "field_t%04zu.csv", i);
      Csv csv(dir / name, "x,u,ut");
      for (std::size_t k = 0; k < f.u.size(); ++k) csv.row({ctx.model.x[k], f.u[k], f.ut[k]});
      r.artifacts.push_back(name);
    }
  }

  const double drift = relative_energy_drift(tr);
  r.gates.push_back(make_gate("escaped", tr.escaped ? 1.0 : 0.0, 0.0, 0.0));
  if (solver == "full" && !tr.escaped) r.gates.push_back(make_gate("energy_drift", drift, 0.0, 1e-6));

  json j;
  j["solver"] = solver;
  j["s"] = s_used;
  j["s_offset"] = cfg_.evolve.s_offset;
  j["data_norms"] = norms_json(*spec.norms);
  j["trajectory"] = trajectory_summary(tr);
  j["escape_side"] = to_string(classify_escape(tr));
  j["gates"] = gates_json(r.gates);
  write_json(dir / "evolve.json", j);
  if (tr.escaped) {
    std::ostringstream os;
    os << "evolution escaped at t = " << tr.escape_time << " (" << tr.escape_reason << ", "
       << to_string(classify_escape(tr)) << ")";
    throw EscapeError(os.str());
  }
  return r;
}

StageResult Pipeline::decay() {
  StageResult r;
  Cache& c = *cache_;
  const GridSpec grid = GridSpec::from_spacing(cfg_.grid.L, cfg_.grid.dx);
  if (!c.ctx) c.ctx = make_context(cfg_, grid);
  if (!c.basis) {
    c.basis = DistortedBasis::build(Potential::soliton(cfg_.model.alpha), grid,
                                    KGrid::midpoint(cfg_.dft.profile_dk, cfg_.dft.profile_k_max),
                                    cfg_.jobs);
  }
  if (!c.data) {
    c.data = checked_data(*c.ctx, *c.basis, cfg_.data.b, cfg_.data.zeta, cfg_.data.budget_limit());
  }
  const DynamicsContext& ctx = *c.ctx;
  const DataSpec& spec = *c.data;
  const double T = cfg_.time.T;
  std::optional<DataSpec> localized_spec;
  if (cfg_.decay.localized_probe) {
    localized_spec = checked_data(ctx, *c.basis, cfg_.data.b, cfg_.decay.localized,
                                  cfg_.data.budget_limit());
  }
  if (!c.stable) {
    EvolveOptions eo = run_options(cfg_, T);
    eo.keep_snapshots = true;
    c.stable = evolve_stable(ctx, spec.b, spec.zeta1, spec.zeta2, eo);
  }
  const Trajectory& tr = *c.stable;
  if (tr.escaped) throw EscapeError("stable run escaped: " + tr.escape_reason);

  const FitConfig fit{cfg_.fit.t1, cfg_.fit.t2, cfg_.fit.envelope_width};
  ReportOptions ro;
  ro.basis = &*c.basis;
  ro.dynamics = &ctx;
  ro.omega = Dispersion{grid.dx(), cfg_.time.dt};
  const DecayReport rep = decay_report(tr, fit, ro);

  // Compactly supported data: the local rate should beat t^-1.
  std::optional<FitResult> localized;
  std::optional<DataNorms> localized_norms;
  if (cfg_.decay.localized_probe) {
    const DataSpec& sl = *localized_spec;
    localized_norms = sl.norms;
    const Trajectory tl = evolve_stable(ctx, sl.b, sl.zeta1, sl.zeta2, run_options(cfg_, T));
    if (tl.escaped) throw EscapeError("localized-data run escaped: " + tl.escape_reason);
    RealVec t, y;
    for (const auto& s : tl.samples) {
      t.push_back(s.t);
      y.push_back(s.chi_weighted_sup);
    }
    localized = fit_decay(t, y, rep.fit_t1, rep.fit_t2, true, cfg_.fit.envelope_width);
  }


  // Same data to 2T on a grid widened by T.
  std::optional<DecayReport> doubled;
  if (cfg_.decay.doubling) {
    const GridSpec g2 = GridSpec::from_spacing(cfg_.grid.L + T, cfg_.grid.dx);
    const DynamicsContext ctx2 = make_context(cfg_, g2);
    const DataSpec spec2 = make_data(ctx2, cfg_.data.b, cfg_.data.zeta);
    const Trajectory tr2 = evolve_stable(ctx2, spec2.b, spec2.zeta1, spec2.zeta2,
                                         run_options(cfg_, 2.0 * T));
    if (tr2.escaped) throw EscapeError("doubled run escaped: " + tr2.escape_reason);
    ReportOptions r2;
    r2.doubled = true;
    doubled = decay_report(tr2, FitConfig{rep.fit_t1, rep.fit_t2, cfg_.fit.envelope_width}, r2);
  }

  const double eps = cfg_.data.epsilon0;
  const double inf = std::numeric_limits<double>::infinity();
  r.gates.push_back(make_gate("exponent_a", rep.exponent_a.slope, -2.3, -1.7));
  r.gates.push_back(make_gate("exponent_chi_sup", rep.exponent_chi_sup.slope, -0.6, -0.4));
  r.gates.push_back(make_gate("exponent_chi_local", rep.exponent_chi_local.slope, -1.2, -0.8));
  if (doubled) {
    r.gates.push_back(make_gate("sup_integral_doubling_change", doubled->sup_integral_change, 0.0, 0.05));
    r.gates.push_back(make_gate("local_integral_doubling_change", doubled->local_integral_change, 0.0, 0.05));
  }
  r.gates.push_back(make_gate("x_norm_sup_over_eps0", rep.x_norm_series->sup / eps, 0.0, 20.0));
  r.gates.push_back(make_gate("x_norm_final_third_trend", rep.x_norm_series->final_third_trend, -inf, 0.01));
  if (rep.profile_derivative && rep.profile_derivative->fit) {
    r.gates.push_back(make_gate("profile_derivative_slope", rep.profile_derivative->fit->slope, -inf, -1.3));
  }
  if (localized) r.gates.push_back(make_gate("localized_chi_local", localized->slope, -inf, -1.3));

  const fs::path dir = stage_dir("decay-report");
  {
    const auto& xs = *rep.x_norm_series;
    const auto& pd = *rep.profile_derivative;
    Csv csv(dir / "decay_series.csv",
            "t,a,chi_sup,chi_weighted_sup,x_norm,a_term,dk_norm,weighted_norm,dt_profile_norm");
    for (std::size_t i = 0; i < tr.samples.size(); ++i) {
      const auto& s = tr.samples[i];
      const double dtp = i == 0 ? std::nan("") : pd.norm[i - 1];
      csv.row({s.t, s.a, s.chi_sup, s.chi_weighted_sup, xs.total[i], xs.a_term[i], xs.dk_term[i],
               xs.weighted_term[i], dtp});
    }
  }
  auto integ_json = [](const IntegratedDecay& d) {
    return json{{"T", d.T},
                {"sup_integral", d.sup_integral},
                {"local_integral", d.local_integral},
                {"sup_tail_exponent", d.sup_tail_exponent},
                {"local_tail_exponent", d.local_tail_exponent},
                {"sup_tail_convergent", d.sup_tail_convergent},
                {"local_tail_convergent", d.local_tail_convergent}};
  };
  json j;
  j["fit_window"] = {rep.fit_t1, rep.fit_t2};
  j["data"] = to_string(cfg_.data.zeta.shape);
  j["data_norms"] = norms_json(*spec.norms);
  j["epsilon0"] = eps;
  j["closure"] = {{"s_star", tr.fine_a_plus.front()}, {"sweeps", tr.sweeps}, {"change", tr.closure_change}};
  j["exponent_a"] = fit_json(rep.exponent_a);
  j["exponent_chi_sup"] = fit_json(rep.exponent_chi_sup);
  j["exponent_chi_local"] = fit_json(rep.exponent_chi_local);
  j["x_norm"] = {{"sup", rep.x_norm_series->sup},
                 {"final_third_trend", rep.x_norm_series->final_third_trend}};
  if (rep.profile_derivative && rep.profile_derivative->fit) {
    j["profile_derivative"] = fit_json(*rep.profile_derivative->fit);
  }
  j["profile_cauchy"] = rep.profile_cauchy;
  j["integrated"] = integ_json(*rep.integrated);
  if (doubled) {
    j["doubling"] = {{"half", integ_json(*doubled->integrated_half)},
                     {"full", integ_json(*doubled->integrated)},
                     {"sup_change", doubled->sup_integral_change},
                     {"local_change", doubled->local_integral_change}};
  }
  if (localized) {
    j["localized_probe"] = {{"data", to_string(cfg_.decay.localized.shape)},
                            {"data_norms", norms_json(*localized_norms)},
                            {"exponent_chi_local", fit_json(*localized)}};
  }
  j["gates"] = gates_json(r.gates);
  write_json(dir / "decay_report.json", j);
  r.artifacts = {"decay_report.json", "decay_series.csv"};
  return r;
}

// ---------------------------------------------------------------------------

fs::path resolve_output_dir(const std::string& flag, const Config& cfg) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("KGLAB_OUTPUT"); env != nullptr && *env != '\0') return env;
  if (!cfg.output_dir.empty()) return cfg.output_dir;
  return "kglab_out";
}

Config load_config_or_manifest(const std::string& path) {
  if (fs::path(path).extension() == ".json") {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open manifest: " + path);
    json m;
    try {
      in >> m;
    } catch (const json::exception& e) {
      throw ConfigError(std::string("manifest is not valid JSON: ") + e.what());
    }
    if (!m.contains("config") || !m["config"].is_string()) {
      throw ConfigError("manifest has no embedded config: " + path);
    }
    return parse_config(m["config"].get<std::string>());
  }
  return load_config(path);
}

}  // namespace kglab
