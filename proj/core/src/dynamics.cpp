#include "kglab/dynamics.hpp"

#include <lapacke.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "kglab/quadrature.hpp"

namespace kglab {

namespace {

bool is_integer_power(double p) { return std::abs(p - std::round(p)) < 1e-12; }

double int_pow(double u, int p) {
  double r = 1.0;
  for (int j = 0; j < p; ++j) r *= u;
  return r;
}

double binomial(int n, int k) {
  double r = 1.0;
  for (int j = 1; j <= k; ++j) r = r * static_cast<double>(n - k + j) / static_cast<double>(j);
  return r;
}

double power_derivative(double u, double p) {
  if (is_integer_power(p)) return p * int_pow(u, static_cast<int>(std::lround(p)) - 1);
  return p * std::pow(std::abs(u), p - 1.0);
}

double power_primitive(double u, double p) {
  if (is_integer_power(p)) return int_pow(u, static_cast<int>(std::lround(p)) + 1) / (p + 1.0);
  return std::pow(std::abs(u), p + 1.0) / (p + 1.0);
}

// Coefficients of the exponential integrator for a' = +-Omega a + F/(2 Omega)
// with F linear on each step.
struct ExpCoeffs {
  double ep, em, E1p, E2p, E1m, E2m, B1, B2;
  ExpCoeffs(double W, double h) {
    const double x = W * h;
    ep = std::exp(x);
    em = std::exp(-x);
    E1p = std::expm1(x) / W;
    E2p = (std::expm1(x) - x) / (W * W * h);
    E1m = -std::expm1(-x) / W;
    E2m = (x + std::expm1(-x)) / (W * W * h);
    B1 = E1m;
    B2 = (-std::expm1(-x) - x * em) / (W * W * h);
  }
};

double weighted_sup(const RealVec& f, const RealVec& x) {
  double m = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) m = std::max(m, std::abs(f[i]) / (1.0 + x[i] * x[i]));
  return m;
}

// ---------------------------------------------------------------------------
// Full field solver.

struct FullWork {
  FieldState s;
  RealVec acc;
  double a = 0.0;
  double adot = 0.0;
  double F = 0.0;
  double usup = 0.0;
};

class FullStepper {
 public:
  using Work = FullWork;

  FullStepper(const DynamicsContext& ctx, const EvolveOptions& opt)
      : ctx_(ctx), opt_(opt), rr_(inner(ctx.model.rho, ctx.model.rho, ctx.grid().dx())) {}

  Work init(const FieldState& s) const {
    Work w;
    w.s = s;
    w.acc.resize(s.u.size());
    refresh(w);
    return w;
  }

  void step(Work& w, double h) const {
    const std::size_t n = w.s.u.size();
    for (std::size_t i = 0; i < n; ++i) {
      w.s.ut[i] += 0.5 * h * w.acc[i];
      w.s.u[i] += h * w.s.ut[i];
    }
    acceleration(w);
    for (std::size_t i = 0; i < n; ++i) w.s.ut[i] += 0.5 * h * w.acc[i];
    w.s.t += h;
    measure(w);
  }

  double a_plus(const Work& w) const { return 0.5 * (w.a + w.adot / ctx_.Omega()); }
  double a(const Work& w) const { return w.a; }
  double F(const Work& w) const { return w.F; }
  double t(const Work& w) const { return w.s.t; }

  std::string blown(const Work& w) const {
    if (w.usup > opt_.u_blowup) return "|u|_inf exceeded blow-up threshold";
    return {};
  }

  void kick(Work& w, double s) const {
    const RealVec& rho = ctx_.model.rho;
    for (std::size_t i = 0; i < rho.size(); ++i) {
      w.s.u[i] += s * rho[i];
      w.s.ut[i] += ctx_.Omega() * s * rho[i];
    }
    refresh(w);
  }

  Sample sample(const Work& w) const {
    Sample smp;
    smp.t = w.s.t;
    smp.a = w.a;
    smp.adot = w.adot;
    smp.a_plus = a_plus(w);
    smp.F = w.F;
    const RealVec& rho = ctx_.model.rho;
    RealVec chi(w.s.u.size());
    for (std::size_t i = 0; i < chi.size(); ++i) chi[i] = w.s.u[i] - ctx_.Q_discrete[i] - w.a * rho[i];
    smp.chi_sup = sup_norm(chi);
    smp.chi_weighted_sup = weighted_sup(chi, ctx_.model.x);
    smp.energy = hamiltonian(w.s, ctx_.grid(), ctx_.power);
    return smp;
  }

  ModalState modal(const Work& w) const {
    return mode_extract(w.s, ctx_.Q_discrete, ctx_.model.rho, ctx_.grid().dx());
  }

  double asymmetry_of(const Work& w) const { return asymmetry(w.s.u); }

 private:
  void refresh(Work& w) const {
    acceleration(w);
    measure(w);
  }

  void acceleration(Work& w) const {
    ctx_.free_op.apply(w.s.u.data(), w.acc.data());
    const RealVec& Qd = ctx_.Q_discrete;
    const double p = ctx_.power;
    double usup = 0.0;
    for (std::size_t i = 0; i < w.acc.size(); ++i) {
      const double u = w.s.u[i];
      usup = std::max(usup, std::abs(u));
      double f;
      if (opt_.nonlinear) {
        f = power_nonlinearity(u, p);
      } else {
        f = power_nonlinearity(Qd[i], p) + power_derivative(Qd[i], p) * (u - Qd[i]);
      }
      w.acc[i] = -w.acc[i] + f;
    }
    w.usup = usup;
  }

  void measure(Work& w) const {
    const RealVec& rho = ctx_.model.rho;
    const RealVec& Qd = ctx_.Q_discrete;
    const double dx = ctx_.grid().dx();
    double sa = 0.0, sd = 0.0, sf = 0.0;
    for (std::size_t i = ctx_.window_lo; i < ctx_.window_hi; ++i) {
      const double v = w.s.u[i] - Qd[i];
      sa += v * rho[i];
      sd += w.s.ut[i] * rho[i];
      if (opt_.nonlinear) sf += nonlinearity(Qd[i], v, ctx_.power) * rho[i];
    }
    w.a = sa * dx / rr_;
    w.adot = sd * dx / rr_;
    w.F = sf * dx;
  }

  const DynamicsContext& ctx_;
  const EvolveOptions& opt_;
  double rr_;
};

// ---------------------------------------------------------------------------
// Modal solver.

struct ModalWork {
  ModalState s;
  double F = 0.0;
  RealVec PcN;
  RealVec Lchi;
  double chisup = 0.0;
};

class ModalStepper {
 public:
  using Work = ModalWork;

  ModalStepper(const DynamicsContext& ctx, const EvolveOptions& opt)
      : ctx_(ctx),
        opt_(opt),
        rr_(inner(ctx.model.rho, ctx.model.rho, ctx.grid().dx())),
        ec_(ctx.Omega(), opt.dt) {}

  Work init(const ModalState& s) const {
    Work w;
    w.s = s;
    w.PcN.assign(s.chi.size(), 0.0);
    w.Lchi.assign(s.chi.size(), 0.0);
    reproject(w.s.chi);
    reproject(w.s.chit);
    w.F = window_F(w.s.a, w.s.chi);
    forcing(w);
    ctx_.lin_op.apply(w.s.chi.data(), w.Lchi.data());
    return w;
  }

  /// One step of size h (must equal opt.dt for the cached coefficients);
  /// if a_plus_next is given, a_+ is prescribed instead of integrated.
  void step(Work& w, double h, const double* a_plus_next = nullptr) const {
    const double W = ctx_.Omega();
    const std::size_t n = w.s.chi.size();
    RealVec& chi = w.s.chi;
    RealVec& chit = w.s.chit;
    for (std::size_t i = 0; i < n; ++i) {
      chit[i] += 0.5 * h * (-w.Lchi[i] + w.PcN[i]);
      chi[i] += h * chit[i];
    }
    reproject(chi);

    const double ap = 0.5 * (w.s.a + w.s.adot / W);
    const double am = 0.5 * (w.s.a - w.s.adot / W);
    const double F0 = w.F;
    double F1 = F0;
    double ap1 = 0.0, am1 = 0.0;
    auto advance = [&](double Fn1) {
      const double dF = Fn1 - F0;
      ap1 = a_plus_next ? *a_plus_next : ec_.ep * ap + (F0 * ec_.E1p + dF * ec_.E2p) / (2.0 * W);
      am1 = ec_.em * am - (F0 * ec_.E1m + dF * ec_.E2m) / (2.0 * W);
    };
    if (opt_.nonlinear) {
      for (int it = 0; it < 6; ++it) {
        advance(F1);
        const double Fnew = window_F(ap1 + am1, chi);
        const bool done = std::abs(Fnew - F1) <= 1e-15 * std::abs(Fnew) + 1e-300;
        F1 = Fnew;
        if (done) break;
      }
    }
    advance(F1);
    w.F = F1;
    w.s.a = ap1 + am1;
    w.s.adot = W * (ap1 - am1);

    forcing(w);
    ctx_.lin_op.apply(chi.data(), w.Lchi.data());
    for (std::size_t i = 0; i < n; ++i) chit[i] += 0.5 * h * (-w.Lchi[i] + w.PcN[i]);
    reproject(chit);
    w.s.t += h;
  }

  double a_plus(const Work& w) const { return 0.5 * (w.s.a + w.s.adot / ctx_.Omega()); }
  double a(const Work& w) const { return w.s.a; }
  double F(const Work& w) const { return w.F; }
  double t(const Work& w) const { return w.s.t; }

  std::string blown(const Work& w) const {
    if (std::abs(w.s.a) > opt_.a_blowup) return "|a| exceeded blow-up threshold";
    if (w.chisup > opt_.chi_blowup) return "|chi|_inf exceeded blow-up threshold";
    return {};
  }

  void kick(Work& w, double s) const {
    w.s.a += s;
    w.s.adot += ctx_.Omega() * s;
    w.F = window_F(w.s.a, w.s.chi);
    forcing(w);
  }

  Sample sample(const Work& w) const {
    Sample smp;
    smp.t = w.s.t;
    smp.a = w.s.a;
    smp.adot = w.s.adot;
    smp.a_plus = a_plus(w);
    smp.F = w.F;
    smp.chi_sup = sup_norm(w.s.chi);
    smp.chi_weighted_sup = weighted_sup(w.s.chi, ctx_.model.x);
    smp.energy = hamiltonian(compose(w.s, ctx_.model.Q, ctx_.model.rho), ctx_.grid(), ctx_.power);
    return smp;
  }

  ModalState modal(const Work& w) const { return w.s; }

  double asymmetry_of(const Work& w) const { return asymmetry(w.s.chi); }

  double orthogonality(const Work& w) const {
    const double dx = ctx_.grid().dx();
    return std::max(std::abs(inner(w.s.chi, ctx_.model.rho, dx)),
                    std::abs(inner(w.s.chit, ctx_.model.rho, dx)));
  }

 private:
  void reproject(RealVec& f) const {
    const RealVec& rho = ctx_.model.rho;
    const double c = inner(f, rho, ctx_.grid().dx()) / rr_;
    for (std::size_t i = 0; i < f.size(); ++i) f[i] -= c * rho[i];
  }

  double window_F(double a, const RealVec& chi) const {
    if (!opt_.nonlinear) return 0.0;
    const RealVec& rho = ctx_.model.rho;
    const RealVec& Q = ctx_.model.Q;
    double s = 0.0;
    for (std::size_t i = ctx_.window_lo; i < ctx_.window_hi; ++i) {
      s += nonlinearity(Q[i], a * rho[i] + chi[i], ctx_.power) * rho[i];
    }
    return s * ctx_.grid().dx();
  }

  // PcN = N(v) - <N(v), rho> rho, and the running sup of chi.
  void forcing(Work& w) const {
    const std::size_t n = w.s.chi.size();
    double chisup = 0.0;
    for (std::size_t i = 0; i < n; ++i) chisup = std::max(chisup, std::abs(w.s.chi[i]));
    w.chisup = chisup;
    if (!opt_.nonlinear) {
      std::fill(w.PcN.begin(), w.PcN.end(), 0.0);
      return;
    }
    const RealVec& rho = ctx_.model.rho;
    const RealVec& Q = ctx_.model.Q;
    for (std::size_t i = 0; i < n; ++i) {
      w.PcN[i] = nonlinearity(Q[i], w.s.a * rho[i] + w.s.chi[i], ctx_.power);
    }
    reproject(w.PcN);
  }

  const DynamicsContext& ctx_;
  const EvolveOptions& opt_;
  double rr_;
  ExpCoeffs ec_;
};

// ---------------------------------------------------------------------------
// Shared driver with optional manifold tracking.

template <class Stepper>
class Runner {
 public:
  using Work = typename Stepper::Work;

  Runner(const Stepper& st, const EvolveOptions& opt) : st_(st), opt_(opt) {}

  Trajectory run(Work& w, std::vector<Work>* sample_states = nullptr) {
    Trajectory tr;
    tr.dt = opt_.dt;
    const auto nsteps = static_cast<std::size_t>(std::llround(opt_.T / opt_.dt));
    const TrackingOptions& trk = opt_.tracking;
    if (trk.enabled && trk.at_start) {
      if (!reshoot(w, trk.start_cap, tr)) {
        fail(tr, w, "tracking could not bracket the manifold at t = 0");
        record_sample(tr, w, sample_states);
        return tr;
      }
    }
    record_fine(tr, w);
    record_sample(tr, w, sample_states);
    double next_check = trk.interval;
    for (std::size_t n = 1; n <= nsteps; ++n) {
      st_.step(w, opt_.dt);
      ++tr.steps;
      record_fine(tr, w);
      tr.max_asymmetry = std::max(tr.max_asymmetry, n % 25 == 0 ? st_.asymmetry_of(w) : 0.0);
      const std::string why = escape_reason(w);
      if (!why.empty()) {
        fail(tr, w, why);
        record_sample(tr, w, sample_states);
        return tr;
      }
      if (trk.enabled && n < nsteps && st_.t(w) >= next_check - 1e-9) {
        next_check += trk.interval;
        if (!reshoot(w, trk.kick_cap, tr)) {
          fail(tr, w, "tracking could not bracket the manifold");
          record_sample(tr, w, sample_states);
          return tr;
        }
        tr.fine_a_plus.back() = st_.a_plus(w);
      }
      if (n % opt_.sample_stride == 0 || n == nsteps) record_sample(tr, w, sample_states);
    }
    return tr;
  }

 private:
  std::string escape_reason(const Work& w) const {
    if (std::abs(st_.a_plus(w)) > opt_.growth_threshold) return "|a_+| exceeded growth threshold";
    return st_.blown(w);
  }

  void fail(Trajectory& tr, const Work& w, const std::string& why) const {
    tr.escaped = true;
    tr.escape_time = st_.t(w);
    tr.escape_side = st_.a_plus(w) >= 0.0 ? 1 : -1;
    tr.escape_reason = why;
  }

  void record_fine(Trajectory& tr, const Work& w) const {
    tr.fine_t.push_back(st_.t(w));
    tr.fine_F.push_back(st_.F(w));
    tr.fine_a.push_back(st_.a(w));
    tr.fine_a_plus.push_back(st_.a_plus(w));
  }

  void record_sample(Trajectory& tr, const Work& w, std::vector<Work>* states) const {
    if (!tr.samples.empty() && tr.samples.back().t == st_.t(w)) return;
    tr.samples.push_back(st_.sample(w));
    if (opt_.keep_snapshots) tr.snapshots.push_back(st_.modal(w));
    if (states) states->push_back(w);
    if constexpr (requires { st_.orthogonality(w); }) {
      tr.max_orthogonality = std::max(tr.max_orthogonality, st_.orthogonality(w));
    }
  }

  // +1 / -1: side on which a kicked copy leaves the neighbourhood; 0: stays.
  int probe(const Work& w, double s, double base) const {
    Work c = w;
    st_.kick(c, s);
    const auto steps = static_cast<std::size_t>(std::ceil(opt_.tracking.probe_horizon / opt_.dt));
    for (std::size_t n = 0; n < steps; ++n) {
      st_.step(c, opt_.dt);
      const double d = st_.a_plus(c) - base;
      if (std::abs(d) > opt_.tracking.probe_threshold || !st_.blown(c).empty()) {
        return d >= 0.0 ? 1 : -1;
      }
    }
    return 0;
  }

  bool reshoot(Work& w, double cap, Trajectory& tr) const {
    const TrackingOptions& trk = opt_.tracking;
    const double base = st_.a_plus(w);
    std::size_t probes = 0;
    auto side = [&](double s) {
      ++probes;
      return probe(w, s, base);
    };
    double lo = -trk.kick_start, hi = trk.kick_start;
    int slo = side(lo), shi = side(hi);
    while (slo == 1) {
      hi = lo;
      shi = 1;
      lo *= 2.0;
      if (-lo > cap) return false;
      slo = side(lo);
    }
    while (shi == -1) {
      lo = hi;
      slo = -1;
      hi *= 2.0;
      if (hi > cap) return false;
      shi = side(hi);
    }
    double s = 0.0;
    if (slo == 0 && shi == 0) {
      s = 0.0;
    } else {
      while (hi - lo > trk.kick_tol) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;
        const int sm = side(mid);
        if (sm > 0) {
          hi = mid;
        } else if (sm < 0) {
          lo = mid;
        } else {
          lo = hi = mid;
        }
      }
      s = 0.5 * (lo + hi);
    }
    st_.kick(w, s);
    tr.kicks.push_back({st_.t(w), s, probes});
    return true;
  }

  const Stepper& st_;
  const EvolveOptions& opt_;
};

}  // namespace

double power_nonlinearity(double u, double p) {
  if (p == 4.0) {
    const double u2 = u * u;
    return u2 * u2;
  }
  if (is_integer_power(p)) return int_pow(u, static_cast<int>(std::lround(p)));
  return std::pow(std::abs(u), p - 1.0) * u;
}

double nonlinearity(double Q, double v, double p) {
  if (p == 4.0) return v * v * (6.0 * Q * Q + v * (4.0 * Q + v));
  if (is_integer_power(p)) {
    const int n = static_cast<int>(std::lround(p));
    double s = 0.0;
    double vj = v * v;
    for (int j = 2; j <= n; ++j) {
      s += binomial(n, j) * int_pow(Q, n - j) * vj;
      vj *= v;
    }
    return s;
  }
  return power_nonlinearity(Q + v, p) - power_nonlinearity(Q, p) - power_derivative(Q, p) * v;
}

RealVec discrete_soliton(const SolitonModel& model, double power) {
  const GridSpec& grid = model.grid;
  const std::size_t n = grid.size();
  const TridiagonalOperator L0 = discretize_schrodinger(grid, RealVec(n, 0.0), 1.0);
  RealVec Q = model.Q;
  RealVec G(n);
  for (int it = 0; it < 30; ++it) {
    L0.apply(Q.data(), G.data());
    double gmax = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      G[i] -= power_nonlinearity(Q[i], power);
      gmax = std::max(gmax, std::abs(G[i]));
    }
    if (gmax < 1e-14) break;
    RealVec d(n), dl(L0.off), du(L0.off);
    for (std::size_t i = 0; i < n; ++i) d[i] = L0.diag[i] - power_derivative(Q[i], power);
    RealVec rhs = G;
    const lapack_int info = LAPACKE_dgtsv(LAPACK_COL_MAJOR, static_cast<lapack_int>(n), 1,
                                          dl.data(), d.data(), du.data(), rhs.data(),
                                          static_cast<lapack_int>(n));
    if (info != 0) throw NumericalFailure("Newton solve for the discrete soliton failed");
    // Keep the iterate exactly even.
    for (std::size_t i = 0; i < n / 2; ++i) {
      const double e = 0.5 * (rhs[i] + rhs[n - 1 - i]);
      rhs[i] = rhs[n - 1 - i] = e;
    }
    for (std::size_t i = 0; i < n; ++i) Q[i] -= rhs[i];
  }
  return Q;
}

DynamicsContext DynamicsContext::make(double alpha, const GridSpec& grid) {
  DynamicsContext c;
  c.model = build_soliton(alpha, grid);
  c.power = 2.0 * alpha + 1.0;
  c.free_op = discretize_schrodinger(grid, RealVec(grid.size(), 0.0), 1.0);
  c.lin_op = discretize_L(c.model);
  c.Q_discrete = discrete_soliton(c.model, c.power);
  c.projector = ContinuousProjector(c.model.rho, c.model.Qprime, grid.dx());
  const double rmax = sup_norm(c.model.rho);
  c.window_lo = grid.size();
  c.window_hi = 0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (std::abs(c.model.rho[i]) > 1e-20 * rmax) {
      c.window_lo = std::min(c.window_lo, i);
      c.window_hi = i + 1;
    }
  }
  return c;
}

double hamiltonian(const FieldState& s, const GridSpec& grid, double power) {
  const std::size_t n = s.u.size();
  const double dx = grid.dx();
  double kin = 0.0, grad = 0.0, mass = 0.0, pot = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    kin += s.ut[i] * s.ut[i];
    mass += s.u[i] * s.u[i];
    pot += power_primitive(s.u[i], power);
    if (i + 1 < n) {
      const double d = s.u[i + 1] - s.u[i];
      grad += d * d;
    }
  }
  grad += s.u.front() * s.u.front() + s.u.back() * s.u.back();
  return 0.5 * dx * (kin + mass) + 0.5 * grad / dx - dx * pot;
}

ModalState mode_extract(const FieldState& s, const RealVec& Q, const RealVec& rho, double dx) {
  const std::size_t n = s.u.size();
  if (Q.size() != n || rho.size() != n) throw InvalidInput("mode_extract: size mismatch");
  ModalState m;
  m.t = s.t;
  m.chi.resize(n);
  for (std::size_t i = 0; i < n; ++i) m.chi[i] = s.u[i] - Q[i];
  const double rr = inner(rho, rho, dx);
  m.a = inner(m.chi, rho, dx) / rr;
  m.adot = inner(s.ut, rho, dx) / rr;
  m.chit = s.ut;
  for (std::size_t i = 0; i < n; ++i) {
    m.chi[i] -= m.a * rho[i];
    m.chit[i] -= m.adot * rho[i];
  }
  return m;
}

FieldState compose(const ModalState& m, const RealVec& Q, const RealVec& rho) {
  FieldState s;
  s.t = m.t;
  s.u.resize(Q.size());
  s.ut.resize(Q.size());
  for (std::size_t i = 0; i < Q.size(); ++i) {
    s.u[i] = Q[i] + m.a * rho[i] + m.chi[i];
    s.ut[i] = m.adot * rho[i] + m.chit[i];
  }
  return s;
}

void validate_evolution(const GridSpec& grid, const EvolveOptions& opt) {
  std::ostringstream os;
  if (!(opt.dt > 0.0) || !(opt.T > 0.0)) {
    os << "time step and horizon must be positive";
  } else if (opt.dt > 0.9 * grid.dx()) {
    os << "CFL violated: dt = " << opt.dt << " > 0.9 dx = " << 0.9 * grid.dx();
  } else if (grid.half_width() < opt.T + 10.0 - 1e-9) {
    os << "light cone violated: L = " << grid.half_width() << " < T + 10 = " << opt.T + 10.0;
  } else if (opt.sample_stride == 0) {
    os << "sample stride must be positive";
  }
  if (!os.str().empty()) throw InvalidInput(os.str());
}

FullRun evolve_full(const DynamicsContext& ctx, const FieldState& state0,
                    const EvolveOptions& opt) {
  validate_evolution(ctx.grid(), opt);
  if (state0.u.size() != ctx.grid().size() || state0.ut.size() != ctx.grid().size()) {
    throw InvalidInput("initial state does not match the grid");
  }
  FullStepper st(ctx, opt);
  FullWork w = st.init(state0);
  std::vector<FullWork> states;
  Runner<FullStepper> runner(st, opt);
  FullRun out;
  out.trajectory = runner.run(w, opt.keep_fields ? &states : nullptr);
  out.trajectory.Omega = ctx.Omega();
  out.final_state = w.s;
  for (auto& s : states) out.fields.push_back(std::move(s.s));
  return out;
}

Trajectory evolve_modal(const DynamicsContext& ctx, const ModalState& state0,
                        const EvolveOptions& opt) {
  validate_evolution(ctx.grid(), opt);
  if (state0.chi.size() != ctx.grid().size() || state0.chit.size() != ctx.grid().size()) {
    throw InvalidInput("initial state does not match the grid");
  }
  ModalStepper st(ctx, opt);
  ModalWork w = st.init(state0);
  Runner<ModalStepper> runner(st, opt);
  Trajectory tr = runner.run(w);
  tr.Omega = ctx.Omega();
  return tr;
}

Trajectory evolve_stable(const DynamicsContext& ctx, double b, const RealVec& chi0,
                         const RealVec& chit0, const EvolveOptions& opt,
                         const StableOptions& sopt) {
  validate_evolution(ctx.grid(), opt);
  const double W = ctx.Omega();
  const double h = opt.dt;
  const auto nsteps = static_cast<std::size_t>(std::llround(opt.T / h));
  const ExpCoeffs ec(W, h);
  ModalStepper st(ctx, opt);

  RealVec ap(nsteps + 1, 0.0);
  Trajectory best;
  for (std::size_t sweep = 1; sweep <= sopt.max_sweeps; ++sweep) {
    Trajectory tr;
    tr.dt = h;
    tr.Omega = W;
    ModalState s0;
    s0.a = ap[0] + b;
    s0.adot = W * (ap[0] - b);
    s0.chi = chi0;
    s0.chit = chit0;
    ModalWork w = st.init(s0);
    auto record = [&](std::size_t n) {
      tr.fine_t.push_back(w.s.t);
      tr.fine_F.push_back(w.F);
      tr.fine_a.push_back(w.s.a);
      tr.fine_a_plus.push_back(ap[n]);
      if (n % opt.sample_stride == 0 || n == nsteps) {
        tr.samples.push_back(st.sample(w));
        if (opt.keep_snapshots) tr.snapshots.push_back(w.s);
        tr.max_orthogonality = std::max(tr.max_orthogonality, st.orthogonality(w));
      }
    };
    record(0);
    for (std::size_t n = 1; n <= nsteps; ++n) {
      st.step(w, h, &ap[n]);
      ++tr.steps;
      record(n);
      if (n % 25 == 0) tr.max_asymmetry = std::max(tr.max_asymmetry, st.asymmetry_of(w));
      const std::string why = st.blown(w);
      if (!why.empty()) throw NumericalFailure("stable closure diverged: " + why);
    }

    RealVec next(nsteps + 1);
    const RealVec& F = tr.fine_F;
    next[nsteps] = -F[nsteps] / (2.0 * W * W);
    for (std::size_t k = nsteps; k-- > 0;) {
      next[k] = ec.em * next[k + 1] - (F[k] * ec.B1 + (F[k + 1] - F[k]) * ec.B2) / (2.0 * W);
    }
    double change = 0.0, scale = 0.0;
    for (std::size_t k = 0; k <= nsteps; ++k) {
      change = std::max(change, std::abs(next[k] - ap[k]));
      scale = std::max(scale, std::abs(next[k]));
    }
    ap.swap(next);
    tr.sweeps = sweep;
    tr.closure_change = change;
    best = std::move(tr);
    if (change <= sopt.tol * std::max(scale, 1e-300) + 1e-300 || change == 0.0) break;
  }
  return best;
}

}  // namespace kglab
