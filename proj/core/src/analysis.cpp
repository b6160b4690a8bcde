#include "kglab/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

#include <boost/math/distributions/students_t.hpp>

#include "kglab/parallel.hpp"
#include "kglab/quadrature.hpp"

namespace kglab {

RealVec sliding_max(const RealVec& t, const RealVec& y, double width) {
  if (t.size() != y.size()) throw InvalidInput("sliding_max: size mismatch");
  const double half = 0.5 * width;
  const std::size_t n = t.size();
  RealVec out(n);
  // Monotone deque over the window [t_i - half, t_i + half].
  std::deque<std::size_t> dq;
  std::size_t hi = 0;
  for (std::size_t i = 0; i < n; ++i) {
    while (hi < n && t[hi] <= t[i] + half) {
      while (!dq.empty() && y[dq.back()] <= y[hi]) dq.pop_back();
      dq.push_back(hi++);
    }
    while (t[dq.front()] < t[i] - half) dq.pop_front();
    out[i] = y[dq.front()];
  }
  return out;
}

FitResult fit_decay(const RealVec& t, const RealVec& y, double t1, double t2, bool envelope,
                    double envelope_width) {
  if (t.size() != y.size()) throw InvalidInput("fit_decay: size mismatch");
  if (!(t2 > t1) || !(t1 > 0.0)) throw InvalidInput("fit_decay: degenerate window");
  const RealVec yy = envelope ? sliding_max(t, y, envelope_width) : y;

  FitResult r;
  r.t1 = t1;
  r.t2 = t2;
  RealVec lx, ly;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t[i] < t1 || t[i] > t2) continue;
    if (!(yy[i] > 0.0) || !std::isfinite(yy[i])) {
      ++r.n_dropped;
      continue;
    }
    lx.push_back(std::log(t[i]));
    ly.push_back(std::log(yy[i]));
  }
  r.n_used = lx.size();
  if (r.n_used == 0) throw InvalidInput("fit_decay: no positive samples in window");
  if (r.n_used < 20) throw InvalidInput("fit_decay: fewer than 20 samples in window");

  const double n = static_cast<double>(r.n_used);
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    mx += lx[i];
    my += ly[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sxx += (lx[i] - mx) * (lx[i] - mx);
    sxy += (lx[i] - mx) * (ly[i] - my);
  }
  if (!(sxx > 0.0)) throw InvalidInput("fit_decay: degenerate window");
  r.slope = sxy / sxx;
  r.intercept = my - r.slope * mx;
  double rss = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    const double e = ly[i] - r.intercept - r.slope * lx[i];
    rss += e * e;
  }
  r.stderr_slope = std::sqrt(rss / (n - 2.0) / sxx);
  const boost::math::students_t dist(n - 2.0);
  r.ci95 = boost::math::quantile(boost::math::complement(dist, 0.025)) * r.stderr_slope;
  return r;
}

FitResult growth_rate(const Trajectory& traj, double lo, double hi) {
  RealVec t, y;
  for (std::size_t i = 0; i < traj.fine_t.size(); ++i) {
    const double v = std::abs(traj.fine_a_plus[i]);
    if (v < lo || v > hi) continue;
    t.push_back(traj.fine_t[i]);
    y.push_back(std::log(v));
  }
  if (t.size() < 20) throw InvalidInput("growth_rate: fewer than 20 samples in range");
  const double n = static_cast<double>(t.size());
  double mt = 0.0, my = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    mt += t[i];
    my += y[i];
  }
  mt /= n;
  my /= n;
  double stt = 0.0, sty = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    stt += (t[i] - mt) * (t[i] - mt);
    sty += (t[i] - mt) * (y[i] - my);
  }
  FitResult r;
  r.slope = sty / stt;
  r.intercept = my - r.slope * mt;
  double rss = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double e = y[i] - r.intercept - r.slope * t[i];
    rss += e * e;
  }
  r.stderr_slope = std::sqrt(rss / (n - 2.0) / stt);
  const boost::math::students_t dist(n - 2.0);
  r.ci95 = boost::math::quantile(boost::math::complement(dist, 0.025)) * r.stderr_slope;
  r.n_used = t.size();
  r.t1 = t.front();
  r.t2 = t.back();
  return r;
}

std::vector<Profile> trajectory_profiles(const Trajectory& traj, const DistortedBasis& basis,
                                         const Dispersion& omega) {
  std::vector<Profile> out(traj.snapshots.size());
  parallel_for(out.size(), [&](std::size_t i) {
    const auto& s = traj.snapshots[i];
    out[i] = profile_from_state(basis, s.chi, s.chit, s.t, omega);
  });
  return out;
}

namespace {

double final_third_trend(const RealVec& t, const RealVec& y) {
  if (t.size() < 3) return 0.0;
  const double t_start = t.front() + 2.0 * (t.back() - t.front()) / 3.0;
  double n = 0, mt = 0, my = 0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t[i] < t_start) continue;
    n += 1;
    mt += t[i];
    my += y[i];
  }
  if (n < 2 || my == 0.0) return 0.0;
  mt /= n;
  my /= n;
  double stt = 0, sty = 0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t[i] < t_start) continue;
    stt += (t[i] - mt) * (t[i] - mt);
    sty += (t[i] - mt) * (y[i] - my);
  }
  return sty / stt * (t.back() - t_start) / my;
}

}  // namespace

XNormSeries x_norm(const Trajectory& traj, const std::vector<Profile>& profiles) {
  if (profiles.size() != traj.samples.size()) {
    throw InvalidInput("x_norm needs one snapshot per sample");
  }
  XNormSeries x;
  const std::size_t n = profiles.size();
  x.t.resize(n);
  x.a_term.resize(n);
  x.dk_term.resize(n);
  x.weighted_term.resize(n);
  x.total.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& s = traj.samples[i];
    x.t[i] = s.t;
    x.a_term[i] = (1.0 + s.t * s.t) * std::abs(s.a);
    x.dk_term[i] = profiles[i].dk_norm;
    x.weighted_term[i] = profiles[i].weighted_norm;
    x.total[i] = x.a_term[i] + x.dk_term[i] + x.weighted_term[i];
    x.sup = std::max(x.sup, x.total[i]);
  }
  x.final_third_trend = final_third_trend(x.t, x.total);
  return x;
}

XNormSeries x_norm(const Trajectory& traj, const DistortedBasis& basis, const Dispersion& omega) {
  return x_norm(traj, trajectory_profiles(traj, basis, omega));
}

namespace {

void fit_derivative(ProfileDerivative& d, double t1, double t2) {
  if (!(t2 > t1)) return;
  try {
    d.fit = fit_decay(d.t, d.norm, t1, t2, false);
  } catch (const InvalidInput&) {
    d.fit.reset();
  }
}

double check_spacing(double t0, double t1) {
  const double h = t1 - t0;
  if (!(h > 0.0)) throw InvalidInput("profile snapshots must be increasing in t");
  if (h > 0.5 + 1e-12) throw InvalidInput("profile snapshots spaced more than 0.5 apart");
  return h;
}

}  // namespace

ProfileDerivative profile_derivative_decay(const std::vector<Profile>& profiles, const KGrid& k,
                                           double t1, double t2) {
  ProfileDerivative d;
  for (std::size_t i = 1; i < profiles.size(); ++i) {
    const auto& p0 = profiles[i - 1];
    const auto& p1 = profiles[i];
    const double h = check_spacing(p0.t, p1.t);
    double acc = 0.0;
    for (std::size_t j = 0; j < k.size(); ++j) {
      acc += k.weight(j) * std::norm((p1.g_tilde[j] - p0.g_tilde[j]) / h);
    }
    d.t.push_back(0.5 * (p0.t + p1.t));
    d.norm.push_back(std::sqrt(acc));
  }
  fit_derivative(d, t1, t2);
  return d;
}

ProfileDerivative profile_derivative_decay(const Trajectory& traj, const DistortedBasis& basis,
                                           double t1, double t2, const Dispersion& omega,
                                           const DynamicsContext* linear_flow) {
  if (linear_flow == nullptr) {
    return profile_derivative_decay(trajectory_profiles(traj, basis, omega), basis.k_grid(), t1,
                                    t2);
  }
  const auto& snaps = traj.snapshots;
  const KGrid& k = basis.k_grid();
  ProfileDerivative d;
  d.t.resize(snaps.empty() ? 0 : snaps.size() - 1);
  d.norm.resize(d.t.size());
  for (std::size_t i = 1; i < snaps.size(); ++i) check_spacing(snaps[i - 1].t, snaps[i].t);
  parallel_for(d.t.size(), [&](std::size_t m) {
    const ModalState& s0 = snaps[m];
    const ModalState& s1 = snaps[m + 1];
    const double h = s1.t - s0.t;
    EvolveOptions lin;
    lin.T = h;
    lin.dt = traj.dt;
    lin.nonlinear = false;
    lin.keep_snapshots = true;
    lin.sample_stride = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(h / traj.dt)));
    const Trajectory free = evolve_modal(*linear_flow, s0, lin);
    const ModalState& f = free.snapshots.back();
    RealVec dchi(s1.chi.size()), dchit(s1.chi.size());
    for (std::size_t i = 0; i < dchi.size(); ++i) {
      dchi[i] = s1.chi[i] - f.chi[i];
      dchit[i] = s1.chit[i] - f.chit[i];
    }
    const ComplexVec c = basis.forward(dchi);
    const ComplexVec ct = basis.forward(dchit);
    double acc = 0.0;
    for (std::size_t j = 0; j < k.size(); ++j) {
      const double w = omega(k[j]);
      acc += k.weight(j) *
             std::norm((omega.velocity_scale(k[j]) * ct[j] - Complex(0.0, w) * c[j]) / h);
    }
    d.t[m] = 0.5 * (s0.t + s1.t);
    d.norm[m] = std::sqrt(acc);
  });
  fit_derivative(d, t1, t2);
  return d;
}

IntegratedDecay integrated_decay(const Trajectory& traj, double T, double p_sup, double p_local,
                                 double envelope_width) {
  IntegratedDecay r;
  r.T = T;
  RealVec t, ys, yl;
  for (const auto& s : traj.samples) {
    if (s.t > T + 1e-9) break;
    t.push_back(s.t);
    ys.push_back(std::pow(s.chi_sup, p_sup));
    yl.push_back(std::pow(s.chi_weighted_sup, p_local));
  }
  for (std::size_t i = 1; i < t.size(); ++i) {
    const double h = t[i] - t[i - 1];
    r.sup_integral += 0.5 * h * (ys[i] + ys[i - 1]);
    r.local_integral += 0.5 * h * (yl[i] + yl[i - 1]);
  }
  const double t_lo = std::max(1.0, 0.5 * T);
  try {
    r.sup_tail_exponent = fit_decay(t, ys, t_lo, T, true, envelope_width).slope;
    r.local_tail_exponent = fit_decay(t, yl, t_lo, T, true, envelope_width).slope;
  } catch (const InvalidInput&) {
    r.sup_tail_exponent = r.local_tail_exponent = 0.0;
  }
  r.sup_tail_convergent = r.sup_tail_exponent < -1.0;
  r.local_tail_convergent = r.local_tail_exponent < -1.0;
  return r;
}

DecayReport decay_report(const Trajectory& traj, const FitConfig& cfg, const ReportOptions& opt) {
  if (traj.samples.size() < 2) throw InvalidInput("decay_report: trajectory too short");
  const double T = traj.samples.back().t;
  DecayReport r;
  r.fit_t1 = cfg.t1;
  r.fit_t2 = cfg.t2 > 0.0 ? cfg.t2 : 0.8 * T;
  if (r.fit_t2 > T + 1e-9 || r.fit_t1 >= r.fit_t2) {
    throw InvalidInput("decay_report: fit window outside the trajectory span");
  }

  const std::size_t n = traj.samples.size();
  RealVec t(n), a(n), cs(n), cl(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& s = traj.samples[i];
    t[i] = s.t;
    a[i] = std::abs(s.a);
    cs[i] = s.chi_sup;
    cl[i] = s.chi_weighted_sup;
  }
  r.exponent_a = fit_decay(t, a, r.fit_t1, r.fit_t2, false);
  r.exponent_chi_sup = fit_decay(t, cs, r.fit_t1, r.fit_t2, true, cfg.envelope_width);
  r.exponent_chi_local = fit_decay(t, cl, r.fit_t1, r.fit_t2, true, cfg.envelope_width);

  r.integrated = integrated_decay(traj, T, kIntegratedSupPower, kIntegratedLocalPower,
                                  cfg.envelope_width);
  if (opt.doubled) {
    r.integrated_half = integrated_decay(traj, 0.5 * T, kIntegratedSupPower,
                                         kIntegratedLocalPower, cfg.envelope_width);
    r.sup_integral_change =
        (r.integrated->sup_integral - r.integrated_half->sup_integral) /
        r.integrated_half->sup_integral;
    r.local_integral_change =
        (r.integrated->local_integral - r.integrated_half->local_integral) /
        r.integrated_half->local_integral;
  }

  if (opt.basis != nullptr && traj.snapshots.size() == n) {
    const auto profiles = trajectory_profiles(traj, *opt.basis, opt.omega);
    r.x_norm_series = x_norm(traj, profiles);
    r.profile_derivative =
        opt.dynamics == nullptr
            ? profile_derivative_decay(profiles, opt.basis->k_grid(), r.fit_t1, r.fit_t2)
            : profile_derivative_decay(traj, *opt.basis, r.fit_t1, r.fit_t2, opt.omega,
                                       opt.dynamics);
    std::size_t i1 = 0, i2 = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (t[i] <= r.fit_t1) i1 = i;
      if (t[i] <= r.fit_t2) i2 = i;
    }
    const auto& g1 = profiles[i1].g_tilde;
    const auto& g2 = profiles[i2].g_tilde;
    double num = 0.0, den = 0.0;
    for (std::size_t j = 0; j < g1.size(); ++j) {
      num += std::norm(g2[j] - g1[j]);
      den += std::norm(g2[j]);
    }
    r.profile_cauchy = den > 0.0 ? std::sqrt(num / den) : 0.0;
  }
  return r;
}

}  // namespace kglab
