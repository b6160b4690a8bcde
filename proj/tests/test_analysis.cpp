#include <cmath>
#include <random>

#include "doctest.h"
#include "kglab/analysis.hpp"
#include "kglab/manifold.hpp"
#include "kglab/quadrature.hpp"
#include "oracles.hpp"

using namespace kglab;

namespace {

RealVec times(double dt, double T) {
  RealVec t;
  for (std::size_t i = 0; dt * static_cast<double>(i) <= T + 1e-9; ++i) t.push_back(dt * static_cast<double>(i));
  return t;
}

Trajectory synthetic(double dt, double T) {
  Trajectory tr;
  for (double t : times(dt, T)) {
    Sample s;
    s.t = t;
    s.a = 1e-3 * std::pow(1.0 + t, -2.0);
    s.chi_sup = 1e-2 * std::pow(1.0 + t, -0.5) * (1.0 + 0.3 * std::cos(t));
    s.chi_weighted_sup = 1e-2 * std::pow(1.0 + t, -1.6) * (1.0 + 0.3 * std::cos(2.0 * t));
    tr.samples.push_back(s);
  }
  return tr;
}

struct LinearSetup {
  DynamicsContext ctx = DynamicsContext::make(1.5, GridSpec::from_spacing(40.0, 0.05));
  DistortedBasis basis = DistortedBasis::build(Potential::soliton(1.5), ctx.grid(),
                                               KGrid::midpoint(0.02, 12.0));
};

const LinearSetup& lin() {
  static const LinearSetup s;
  return s;
}

ModalState gaussian_state(const DynamicsContext& c, double amp) {
  ModalState m;
  RealVec g(c.model.x.size());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = amp * std::exp(-c.model.x[i] * c.model.x[i]);
  m.chi = c.projector.project(g);
  m.chit.assign(g.size(), 0.0);
  return m;
}

}  // namespace

TEST_CASE("power-law fit is exact on a power law") {
  const RealVec t = times(0.4, 150.0);
  RealVec y(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) y[i] = 3.0 * std::pow(t[i], -2.0);
  const FitResult f = fit_decay(t, y, 10.0, 120.0, false);
  CHECK(f.slope == doctest::Approx(-2.0).epsilon(1e-10));
  CHECK(f.intercept == doctest::Approx(std::log(3.0)).epsilon(1e-10));
  CHECK(f.ci95 < 1e-8);
  CHECK(f.n_used == 276);
  CHECK(f.within(-2.0, 1e-10));
  CHECK(f.slope == doctest::Approx(oracle::loglog_slope(t, y, 10.0, 120.0)).epsilon(1e-12));
}

TEST_CASE("envelope fit of an oscillating decay") {
  const RealVec t = times(0.4, 150.0);
  RealVec y(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) y[i] = std::pow(t[i] + 1.0, -0.5) * std::abs(std::cos(t[i]));
  const FitResult f = fit_decay(t, y, 10.0, 120.0, true);
  CHECK(f.slope == doctest::Approx(-0.5).epsilon(0.1));
  CHECK(f.slope == doctest::Approx(oracle::loglog_slope(t, y, 10.0, 120.0, 6.0)).epsilon(1e-10));
  y[100] = 0.0;
  y[101] = -1.0;
  const FitResult raw = fit_decay(t, y, 10.0, 120.0, false);
  CHECK(raw.n_dropped == 2);
}

TEST_CASE("fit preconditions") {
  const RealVec t = times(1.0, 30.0);
  const RealVec y(t.size(), 1.0);
  CHECK_THROWS_AS(fit_decay(t, y, 10.0, 20.0, false), InvalidInput);  // 11 samples
  CHECK_THROWS_AS(fit_decay(t, y, 20.0, 10.0, false), InvalidInput);
  CHECK_THROWS_AS(fit_decay(t, RealVec(t.size(), 0.0), 0.0, 30.0, false), InvalidInput);
}

TEST_CASE("sliding maximum against brute force") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const RealVec t = times(0.4, 60.0);
  RealVec y(t.size());
  for (double& v : y) v = u(rng);
  const RealVec m = sliding_max(t, y, 6.0);
  for (std::size_t i = 0; i < t.size(); ++i) {
    double ref = y[i];
    for (std::size_t j = 0; j < t.size(); ++j) {
      if (std::abs(t[j] - t[i]) <= 3.0 + 1e-9) ref = std::max(ref, y[j]);
    }
    CHECK(m[i] == ref);
  }
}

TEST_CASE("growth rate of an exponential") {
  Trajectory tr;
  for (double t : times(0.04, 8.0)) {
    tr.fine_t.push_back(t);
    tr.fine_a_plus.push_back(-1e-6 * std::exp(2.3 * t));
  }
  const FitResult f = growth_rate(tr, 1e-4, 1e-2);
  CHECK(f.slope == doctest::Approx(2.3).epsilon(1e-10));
  CHECK(std::abs(f.t1 - std::log(100.0) / 2.3) <= 0.04 + 1e-12);
  CHECK_THROWS_AS(growth_rate(tr, 1e-4, 1.1e-4), InvalidInput);
}

TEST_CASE("integrated functionals against the trapezoid rule") {
  const Trajectory tr = synthetic(0.4, 150.0);
  const IntegratedDecay d = integrated_decay(tr, 150.0);
  RealVec t, ys, yl;
  for (const auto& s : tr.samples) {
    t.push_back(s.t);
    ys.push_back(std::pow(s.chi_sup, kIntegratedSupPower));
    yl.push_back(std::pow(s.chi_weighted_sup, kIntegratedLocalPower));
  }
  CHECK(d.sup_integral == doctest::Approx(oracle::trapezoid(t, ys, 150.0)).epsilon(1e-12));
  CHECK(d.local_integral == doctest::Approx(oracle::trapezoid(t, yl, 150.0)).epsilon(1e-12));
  CHECK(d.sup_tail_exponent == doctest::Approx(-0.5 * kIntegratedSupPower).epsilon(0.05));
  CHECK(d.local_tail_exponent == doctest::Approx(-1.6 * kIntegratedLocalPower).epsilon(0.05));
  CHECK(d.sup_tail_convergent);
  CHECK(d.local_tail_convergent);
}

TEST_CASE("decay report is insensitive to subsampling") {
  const Trajectory full = synthetic(0.4, 150.0);
  Trajectory half;
  for (std::size_t i = 0; i < full.samples.size(); i += 2) half.samples.push_back(full.samples[i]);
  const FitConfig cfg;
  const DecayReport a = decay_report(full, cfg);
  const DecayReport b = decay_report(half, cfg);
  CHECK(a.fit_t1 == 10.0);
  CHECK(a.fit_t2 == doctest::Approx(120.0));
  CHECK(a.exponent_a.slope == doctest::Approx(-2.0).epsilon(0.1));
  CHECK(a.exponent_chi_sup.slope == doctest::Approx(-0.5).epsilon(0.1));
  CHECK(a.exponent_chi_local.slope == doctest::Approx(-1.6).epsilon(0.1));
  CHECK(std::abs(a.exponent_a.slope - b.exponent_a.slope) <= a.exponent_a.ci95 + b.exponent_a.ci95);
  CHECK(std::abs(a.exponent_chi_sup.slope - b.exponent_chi_sup.slope) <=
        a.exponent_chi_sup.ci95 + b.exponent_chi_sup.ci95 + 0.02);
  CHECK(std::abs(a.exponent_chi_local.slope - b.exponent_chi_local.slope) <=
        a.exponent_chi_local.ci95 + b.exponent_chi_local.ci95 + 0.02);
}

TEST_CASE("X norm of the zero trajectory") {
  const LinearSetup& s = lin();
  ModalState m;
  m.chi.assign(s.ctx.grid().size(), 0.0);
  m.chit = m.chi;
  EvolveOptions o;
  o.T = 10.0;
  o.keep_snapshots = true;
  const Trajectory tr = evolve_modal(s.ctx, m, o);
  const XNormSeries x = x_norm(tr, s.basis);
  CHECK(x.sup == 0.0);
  CHECK(x.t.size() == tr.samples.size());
}

TEST_CASE("profiles of a discrete linear run") {
  const LinearSetup& s = lin();
  EvolveOptions o;
  o.T = 30.0;
  o.nonlinear = false;
  o.keep_snapshots = true;
  const Trajectory tr = evolve_modal(s.ctx, gaussian_state(s.ctx, 0.1), o);
  const Dispersion w{s.ctx.grid().dx(), o.dt};
  const XNormSeries x = x_norm(tr, s.basis, w);
  const double dk0 = x.dk_term.front(), wt0 = x.weighted_term.front();
  // While the wave overlaps the well, discrete and continuum eigenfunctions
  // differ at O(dx^2), which the <k>^2 weight makes visible; afterwards the
  // profile is frozen.
  std::size_t i10 = 0;
  while (x.t[i10] < 10.0) ++i10;
  for (std::size_t i = 0; i < x.t.size(); ++i) {
    CHECK(x.dk_term[i] == doctest::Approx(dk0).epsilon(2e-2));
    CHECK(x.weighted_term[i] == doctest::Approx(wt0).epsilon(2e-2));
    if (i >= i10) {
      CHECK(x.dk_term[i] == doctest::Approx(x.dk_term[i10]).epsilon(1e-4));
      CHECK(x.weighted_term[i] == doctest::Approx(x.weighted_term[i10]).epsilon(1e-4));
    }
    CHECK(x.a_term[i] == 0.0);
  }
  CHECK(std::abs(x.final_third_trend) < 1e-4);
  const ProfileDerivative pd = profile_derivative_decay(tr, s.basis, 5.0, 25.0, w, &s.ctx);
  double m = 0.0;
  for (double v : pd.norm) m = std::max(m, v);
  CHECK(m < 1e-10 * wt0);
}

TEST_CASE("profile derivative is quadratic in the amplitude") {
  const LinearSetup& s = lin();
  EvolveOptions o;
  o.T = 30.0;
  o.keep_snapshots = true;
  const Dispersion w{s.ctx.grid().dx(), o.dt};
  auto level = [&](double amp) {
    const ModalState m = gaussian_state(s.ctx, amp);
    const Trajectory tr = evolve_stable(s.ctx, 0.0, m.chi, m.chit, o);
    const ProfileDerivative pd = profile_derivative_decay(tr, s.basis, 2.0, 20.0, w, &s.ctx);
    double sum = 0.0;
    for (double v : pd.norm) sum += v;
    return sum;
  };
  const double r = level(2e-3) / level(1e-3);
  CHECK(r == doctest::Approx(4.0).epsilon(0.1));
}
