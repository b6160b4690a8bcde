#include "kglab/manifold.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "kglab/quadrature.hpp"

namespace kglab {

namespace {

double smooth_step(double y) { return y > 0.0 ? std::exp(-1.0 / y) : 0.0; }

// 1 on [0, R], 0 beyond R + w, C-infinity in between.
double smooth_cutoff(double r, double R, double w) {
  if (r <= R) return 1.0;
  if (r >= R + w) return 0.0;
  const double s = (r - R) / w;
  return smooth_step(1.0 - s) / (smooth_step(1.0 - s) + smooth_step(s));
}

struct Table {
  RealVec x, y1, y2;
};

Table read_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open zeta file '" + path + "'");
  Table t;
  std::string line;
  while (std::getline(in, line)) {
    std::replace(line.begin(), line.end(), ',', ' ');
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ls(line);
    double x, a, b = 0.0;
    if (!(ls >> x >> a)) {
      if (t.x.empty()) continue;  // header row
      throw InvalidInput("malformed row in zeta file: " + line);
    }
    ls >> b;
    t.x.push_back(x);
    t.y1.push_back(a);
    t.y2.push_back(b);
  }
  if (t.x.size() < 2) throw InvalidInput("zeta file needs at least two rows");
  for (std::size_t i = 1; i < t.x.size(); ++i) {
    if (!(t.x[i] > t.x[i - 1])) throw InvalidInput("zeta file abscissae must increase");
  }
  return t;
}

double interp(const RealVec& xs, const RealVec& ys, double x) {
  if (x < xs.front() || x > xs.back()) return 0.0;
  const auto it = std::upper_bound(xs.begin(), xs.end(), x);
  if (it == xs.end()) return ys.back();
  const std::size_t j = static_cast<std::size_t>(it - xs.begin());
  const double w = (x - xs[j - 1]) / (xs[j] - xs[j - 1]);
  return (1.0 - w) * ys[j - 1] + w * ys[j];
}

RealVec derivative(const RealVec& f, double dx) {
  const std::size_t n = f.size();
  RealVec d(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double l = i > 0 ? f[i - 1] : 0.0;
    const double r = i + 1 < n ? f[i + 1] : 0.0;
    d[i] = (r - l) / (2.0 * dx);
  }
  return d;
}

RealVec second_derivative(const RealVec& f, double dx) {
  const std::size_t n = f.size();
  RealVec d(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double l = i > 0 ? f[i - 1] : 0.0;
    const double r = i + 1 < n ? f[i + 1] : 0.0;
    d[i] = (r - 2.0 * f[i] + l) / (dx * dx);
  }
  return d;
}

// Velocity profile for custom files lives in the third column.
RealVec custom_velocity(const ZetaParams& p, const RealVec& x) {
  const Table t = read_table(p.file);
  const bool half = t.x.front() >= 0.0;
  RealVec out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = interp(t.x, t.y2, half ? std::abs(x[i]) : x[i]);
  return out;
}

}  // namespace

ZetaShape parse_zeta_shape(const std::string& name) {
  if (name == "none") return ZetaShape::None;
  if (name == "gaussian") return ZetaShape::Gaussian;
  if (name == "compact_bump") return ZetaShape::CompactBump;
  if (name == "algebraic") return ZetaShape::Algebraic;
  if (name == "custom_file") return ZetaShape::CustomFile;
  throw InvalidInput("unknown zeta_shape '" + name + "'");
}

std::string to_string(ZetaShape s) {
  switch (s) {
    case ZetaShape::None:
      return "none";
    case ZetaShape::Gaussian:
      return "gaussian";
    case ZetaShape::CompactBump:
      return "compact_bump";
    case ZetaShape::Algebraic:
      return "algebraic";
    case ZetaShape::CustomFile:
      return "custom_file";
  }
  return "none";
}

RealVec zeta_profile(const ZetaParams& p, const RealVec& x) {
  RealVec z(x.size(), 0.0);
  switch (p.shape) {
    case ZetaShape::None:
      break;
    case ZetaShape::Gaussian:
      for (std::size_t i = 0; i < x.size(); ++i) {
        const double y = x[i] / p.width;
        z[i] = p.amplitude * std::exp(-y * y);
      }
      break;
    case ZetaShape::CompactBump:
      for (std::size_t i = 0; i < x.size(); ++i) {
        const double y = x[i] / p.width;
        z[i] = std::abs(y) < 1.0 ? p.amplitude * std::exp(1.0 - 1.0 / (1.0 - y * y)) : 0.0;
      }
      break;
    case ZetaShape::Algebraic:
      for (std::size_t i = 0; i < x.size(); ++i) {
        z[i] = p.amplitude * std::pow(1.0 + x[i] * x[i], -0.5 * p.decay) *
               smooth_cutoff(std::abs(x[i]), p.cutoff, p.taper);
      }
      break;
    case ZetaShape::CustomFile: {
      const Table t = read_table(p.file);
      const bool half = t.x.front() >= 0.0;
      for (std::size_t i = 0; i < x.size(); ++i) {
        z[i] = p.amplitude * interp(t.x, t.y1, half ? std::abs(x[i]) : x[i]);
      }
      break;
    }
  }
  return z;
}

DataSpec make_data(const DynamicsContext& ctx, double b, const ZetaParams& zeta) {
  DataSpec d;
  d.b = b;
  const RealVec& x = ctx.model.x;
  const RealVec z = zeta_profile(zeta, x);
  RealVec v(z.size());
  if (zeta.shape == ZetaShape::CustomFile) {
    v = custom_velocity(zeta, x);
    for (double& e : v) e *= zeta.amplitude;
  } else {
    for (std::size_t i = 0; i < z.size(); ++i) v[i] = zeta.velocity_ratio * z[i];
  }
  d.zeta1 = ctx.projector.project(z);
  d.zeta2 = ctx.projector.project(v);
  const double dx = ctx.grid().dx();
  if (std::abs(inner(d.zeta1, ctx.model.rho, dx)) > 1e-8 ||
      std::abs(inner(d.zeta2, ctx.model.rho, dx)) > 1e-8) {
    throw NumericalFailure("projected data keeps a rho component above 1e-8");
  }
  return d;
}

double h1_norm(const RealVec& f, double dx) {
  const RealVec d = derivative(f, dx);
  return std::sqrt(inner(f, f, dx) + inner(d, d, dx));
}

double h2_norm(const RealVec& f, double dx) {
  const RealVec d = derivative(f, dx);
  const RealVec d2 = second_derivative(f, dx);
  return std::sqrt(inner(f, f, dx) + inner(d, d, dx) + inner(d2, d2, dx));
}

double gamma_norm(const DynamicsContext& ctx, const DataSpec& spec) {
  const RealVec& rho = ctx.model.rho;
  const double dx = ctx.grid().dx();
  RealVec g1(rho.size()), g2(rho.size());
  for (std::size_t i = 0; i < rho.size(); ++i) {
    g1[i] = spec.b * rho[i] + spec.zeta1[i];
    g2[i] = -ctx.Omega() * spec.b * rho[i] + spec.zeta2[i];
  }
  const double a = h1_norm(g1, dx);
  return std::sqrt(a * a + inner(g2, g2, dx));
}

DataNorms data_norms(const DynamicsContext& ctx, const DataSpec& spec,
                     const DistortedBasis& basis) {
  if (basis.grid().size() != ctx.grid().size()) {
    throw InvalidInput("data_norms: basis grid does not match the data grid");
  }
  const double dx = ctx.grid().dx();
  DataNorms n;
  n.b = spec.b;
  const RealVec s1 =
      basis.apply_multiplier([](double k) { return Complex(japanese(k), 0.0); }, spec.zeta1);
  const double a = h2_norm(s1, dx);
  const double c = h2_norm(spec.zeta2, dx);
  n.h2 = std::sqrt(a * a + c * c);
  double w = 0.0;
  for (std::size_t i = 0; i < s1.size(); ++i) {
    const double x2 = 1.0 + ctx.model.x[i] * ctx.model.x[i];
    w += x2 * (s1[i] * s1[i] + spec.zeta2[i] * spec.zeta2[i]);
  }
  n.weighted = std::sqrt(w * dx);
  n.gamma = gamma_norm(ctx, spec);
  return n;
}

ModalState modal_data(const DynamicsContext& ctx, const DataSpec& spec, double s) {
  ModalState m;
  m.a = spec.b + s;
  m.adot = ctx.Omega() * (s - spec.b);
  m.chi = spec.zeta1;
  m.chit = spec.zeta2;
  if (m.chi.empty()) m.chi.assign(ctx.grid().size(), 0.0);
  if (m.chit.empty()) m.chit.assign(ctx.grid().size(), 0.0);
  return m;
}

FieldState prepare_data(const DynamicsContext& ctx, const DataSpec& spec, double s) {
  if (spec.norms && spec.budget_limit > 0.0 && spec.norms->budget() > spec.budget_limit) {
    std::ostringstream os;
    os << "smallness budget violated: " << spec.norms->budget() << " > " << spec.budget_limit;
    throw InvalidInput(os.str());
  }
  return compose(modal_data(ctx, spec, s), ctx.model.Q, ctx.model.rho);
}

std::string to_string(EscapeSide s) {
  switch (s) {
    case EscapeSide::GrowPlus:
      return "GrowPlus";
    case EscapeSide::GrowMinus:
      return "GrowMinus";
    case EscapeSide::Undetermined:
      return "Undetermined";
  }
  return "Undetermined";
}

EscapeSide classify_escape(const Trajectory& traj, double growth_threshold) {
  if (traj.fine_a_plus.empty()) return EscapeSide::Undetermined;
  const double ap = traj.fine_a_plus.back();
  if (!traj.escaped && std::abs(ap) <= growth_threshold) return EscapeSide::Undetermined;
  return ap >= 0.0 ? EscapeSide::GrowPlus : EscapeSide::GrowMinus;
}

StabilityResidual stability_residual(const Trajectory& traj, double cutoff) {
  StabilityResidual r;
  const RealVec& t = traj.fine_t;
  const RealVec& F = traj.fine_F;
  const RealVec& ap = traj.fine_a_plus;
  if (t.empty()) return r;
  const double W = traj.Omega;
  std::size_t end = t.size() - 1;
  for (std::size_t n = 0; n < t.size(); ++n) {
    if (std::abs(ap[n]) > cutoff) {
      end = n;
      r.truncated = true;
      break;
    }
  }
  double integral = 0.0, fsup = 0.0;
  for (std::size_t n = 0; n < end; ++n) {
    const double h = t[n + 1] - t[n];
    const double x = W * h;
    const double B1 = -std::expm1(-x) / W;
    const double B2 = (-std::expm1(-x) - x * std::exp(-x)) / (W * W * h);
    integral += std::exp(-W * t[n]) * (F[n] * B1 + (F[n + 1] - F[n]) * B2);
  }
  for (std::size_t n = 0; n <= end; ++n) fsup = std::max(fsup, std::abs(F[n]));
  r.value = 2.0 * W * ap.front() + integral;
  r.t_end = t[end];
  r.floor = std::exp(-W * r.t_end) * fsup;
  return r;
}

ShootResult shoot_stable(const DynamicsContext& ctx, const DataSpec& spec,
                         const ShootOptions& opt) {
  if (!(opt.tol > 0.0) || !(opt.horizon > 0.0)) {
    throw InvalidInput("shoot tolerance and horizon must be positive");
  }
  ShootResult res;
  res.horizon = opt.horizon;
  res.gamma = gamma_norm(ctx, spec);
  const double s_max = opt.s_max > 0.0 ? opt.s_max : std::max(res.gamma, 1e-8);

  EvolveOptions eo;
  eo.T = opt.horizon;
  eo.dt = opt.dt;
  eo.sample_stride = opt.sample_stride;
  validate_evolution(ctx.grid(), eo);

  auto evaluate = [&](double s) {
    const Trajectory tr = evolve_modal(ctx, modal_data(ctx, spec, s), eo);
    BracketEntry e{s, classify_escape(tr, eo.growth_threshold), tr.escaped ? tr.escape_time : opt.horizon};
    res.bracket_history.push_back(e);
    return e;
  };

  BracketEntry lo = evaluate(-s_max);
  BracketEntry hi = evaluate(s_max);
  if (lo.side == EscapeSide::Undetermined && hi.side == EscapeSide::Undetermined) {
    throw BracketFailure("neither bracket end escaped; horizon too short", lo, hi);
  }
  if (lo.side != EscapeSide::GrowMinus || hi.side != EscapeSide::GrowPlus) {
    throw BracketFailure("bracket ends do not escape on opposite sides", lo, hi);
  }
  std::size_t iter = 0;
  double s_star = 0.0;
  bool exact = false;
  while (hi.s - lo.s > opt.tol && iter++ < opt.max_iterations) {
    const double mid = 0.5 * (lo.s + hi.s);
    if (mid <= lo.s || mid >= hi.s) break;
    const BracketEntry m = evaluate(mid);
    if (m.side == EscapeSide::GrowPlus) {
      hi = m;
    } else if (m.side == EscapeSide::GrowMinus) {
      lo = m;
    } else {
      s_star = mid;
      exact = true;
      break;
    }
  }
  res.bracket_lo = lo.s;
  res.bracket_hi = hi.s;
  if (!exact) s_star = 0.5 * (lo.s + hi.s);
  res.s_star = s_star;
  res.converged = exact || hi.s - lo.s <= opt.tol;

  EvolveOptions acc = eo;
  acc.keep_snapshots = opt.keep_snapshots;
  acc.tracking.enabled = opt.track;
  res.s_accepted = s_star + opt.s_offset;
  res.trajectory = evolve_modal(ctx, modal_data(ctx, spec, res.s_accepted), acc);
  res.residual = stability_residual(res.trajectory);
  return res;
}

bool bracket_monotone(const std::vector<BracketEntry>& history) {
  double max_minus = -std::numeric_limits<double>::infinity();
  double min_plus = std::numeric_limits<double>::infinity();
  for (const auto& e : history) {
    if (e.side == EscapeSide::GrowMinus) max_minus = std::max(max_minus, e.s);
    if (e.side == EscapeSide::GrowPlus) min_plus = std::min(min_plus, e.s);
  }
  return max_minus < min_plus;
}

double global_bound_ratio(const DynamicsContext& ctx, const Trajectory& traj) {
  if (traj.snapshots.empty()) throw InvalidInput("global bound needs trajectory snapshots");
  const double dx = ctx.grid().dx();
  const RealVec& rho = ctx.model.rho;
  auto size_of = [&](const ModalState& m) {
    RealVec v(rho.size()), vt(rho.size());
    for (std::size_t i = 0; i < rho.size(); ++i) {
      v[i] = m.a * rho[i] + m.chi[i];
      vt[i] = m.adot * rho[i] + m.chit[i];
    }
    const double a = h1_norm(v, dx);
    return std::sqrt(a * a + inner(vt, vt, dx));
  };
  const double s0 = size_of(traj.snapshots.front());
  if (s0 == 0.0) return 0.0;
  double worst = 0.0;
  for (const auto& m : traj.snapshots) worst = std::max(worst, size_of(m) / s0);
  return worst;
}

}  // namespace kglab
