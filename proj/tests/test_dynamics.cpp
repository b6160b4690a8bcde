#include <cmath>

#include "doctest.h"
#include "kglab/dynamics.hpp"
#include "kglab/quadrature.hpp"

using namespace kglab;

namespace {

const DynamicsContext& ctx40() {
  static const DynamicsContext c = DynamicsContext::make(1.5, GridSpec::from_spacing(40.0, 0.05));
  return c;
}

RealVec bump(const RealVec& x, double a, double w) {
  RealVec f(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) f[i] = a * std::exp(-x[i] * x[i] / (w * w));
  return f;
}

double max_diff(const RealVec& a, const RealVec& b, std::size_t lo = 0, std::size_t hi = 0) {
  if (hi == 0) hi = a.size();
  double m = 0.0;
  for (std::size_t i = lo; i < hi; ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

TEST_CASE("nonlinear remainder matches the direct formula") {
  for (double p : {4.0, 5.0, 4.5}) {
    for (double Q : {0.0, 0.3, 1.2}) {
      for (double v : {-0.7, -1e-3, 2e-2, 0.4}) {
        // u^p for integer p, |u|^{p-1} u otherwise.
        const bool integer = p == std::round(p);
        auto f = [&](double u) { return integer ? std::pow(u, p) : std::pow(std::abs(u), p - 1.0) * u; };
        auto df = [&](double u) { return integer ? p * std::pow(u, p - 1.0) : p * std::pow(std::abs(u), p - 1.0); };
        const double u = Q + v;
        const double fu = f(u), fQ = f(Q), dfQ = df(Q);
        CHECK(nonlinearity(Q, v, p) == doctest::Approx(fu - fQ - dfQ * v).epsilon(1e-9).scale(1e-12));
        CHECK(power_nonlinearity(u, p) == doctest::Approx(fu).epsilon(1e-12));
      }
    }
  }
  CHECK(power_nonlinearity(-2.0, 4.0) == 16.0);
  CHECK(power_nonlinearity(-2.0, 5.0) == -32.0);
}

TEST_CASE("discrete equilibrium converges at second order") {
  auto gap = [](double dx) {
    const DynamicsContext c = DynamicsContext::make(1.5, GridSpec::from_spacing(20.0, dx));
    const RealVec r = c.free_op.apply(c.Q_discrete);
    double res = 0.0;
    for (std::size_t i = 0; i < r.size(); ++i) {
      res = std::max(res, std::abs(r[i] - power_nonlinearity(c.Q_discrete[i], c.power)));
    }
    CHECK(res < 1e-12);
    CHECK(asymmetry(c.Q_discrete) == 0.0);
    return max_diff(c.Q_discrete, c.model.Q);
  };
  const double e1 = gap(0.1), e2 = gap(0.05);
  CHECK(e1 / e2 == doctest::Approx(4.0).epsilon(0.1));
  CHECK(e2 < 1e-3);
}

TEST_CASE("mode decomposition round trip") {
  const DynamicsContext& c = ctx40();
  const double dx = c.grid().dx();
  ModalState m;
  m.t = 1.25;
  m.a = 3e-3;
  m.adot = -2e-3;
  m.chi = c.projector.project(bump(c.model.x, 1e-2, 2.0));
  m.chit = c.projector.project(bump(c.model.x, -5e-3, 1.0));
  const FieldState s = compose(m, c.model.Q, c.model.rho);
  const ModalState back = mode_extract(s, c.model.Q, c.model.rho, dx);
  CHECK(back.t == m.t);
  CHECK(back.a == doctest::Approx(m.a).epsilon(1e-10));
  CHECK(back.adot == doctest::Approx(m.adot).epsilon(1e-10));
  CHECK(max_diff(back.chi, m.chi) < 1e-14);
  CHECK(max_diff(back.chit, m.chit) < 1e-14);
}

TEST_CASE("energy of simple states") {
  const GridSpec g(1.0, 5);
  FieldState s;
  s.u.assign(5, 0.0);
  s.ut.assign(5, 1.0);
  CHECK(hamiltonian(s, g, 4.0) == doctest::Approx(0.5 * 5 * g.dx()));
  s.ut.assign(5, 0.0);
  s.u = {0.0, 0.0, 1.0, 0.0, 0.0};
  // Two unit jumps, mass 1, potential 1/5.
  CHECK(hamiltonian(s, g, 4.0) == doctest::Approx(1.0 / g.dx() + 0.5 * g.dx() - 0.2 * g.dx()));
}

TEST_CASE("linear modal flow: unstable pair in closed form") {
  const DynamicsContext& c = ctx40();
  const double W = c.Omega();
  ModalState m;
  m.a = 2e-4;
  m.adot = 3e-4;
  m.chi.assign(c.grid().size(), 0.0);
  m.chit = m.chi;
  EvolveOptions o;
  o.T = 3.0;
  o.nonlinear = false;
  const Trajectory tr = evolve_modal(c, m, o);
  REQUIRE_FALSE(tr.escaped);
  for (const Sample& s : tr.samples) {
    const double a = m.a * std::cosh(W * s.t) + m.adot / W * std::sinh(W * s.t);
    CHECK(s.a == doctest::Approx(a).epsilon(1e-10));
    CHECK(s.a_plus == doctest::Approx(0.5 * (m.a + m.adot / W) * std::exp(W * s.t)).epsilon(1e-10));
  }
}

TEST_CASE("linear modal flow: dispersive part against exact propagation") {
  const DynamicsContext& c = ctx40();
  const double dx = c.grid().dx();
  const DistortedBasis basis = DistortedBasis::build(Potential::soliton(1.5), c.grid(),
                                                     KGrid::midpoint(0.02, 12.0));
  ModalState m;
  m.chi = c.projector.project(bump(c.model.x, 1.0, 1.0));
  m.chit.assign(m.chi.size(), 0.0);
  EvolveOptions o;
  o.T = 5.0;
  o.nonlinear = false;
  o.keep_snapshots = true;
  const Trajectory tr = evolve_modal(c, m, o);
  const ModalState& last = tr.snapshots.back();
  REQUIRE(last.t == doctest::Approx(5.0));
  const auto exact = basis.linear_propagate(m.chi, m.chit, last.t).first;
  RealVec d(exact.size());
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = last.chi[i] - exact[i];
  CHECK(l2_norm(d, dx) / l2_norm(exact, dx) < 1e-2);
  CHECK(tr.max_orthogonality < 1e-10);
}

TEST_CASE("full solver: static equilibrium, energy and light cone") {
  const DynamicsContext& c = ctx40();
  EvolveOptions o;
  o.T = 20.0;
  o.tracking.enabled = true;
  o.tracking.at_start = true;

  SUBCASE("discrete soliton stays put") {
    FieldState s;
    s.u = c.Q_discrete;
    s.ut.assign(s.u.size(), 0.0);
    const FullRun r = evolve_full(c, s, o);
    CHECK_FALSE(r.trajectory.escaped);
    CHECK(max_diff(r.final_state.u, c.Q_discrete) < 1e-10);
  }

  SUBCASE("perturbed soliton conserves energy") {
    ModalState m;
    m.chi = c.projector.project(bump(c.model.x, 1e-3, 1.5));
    m.chit.assign(m.chi.size(), 0.0);
    const FieldState s = compose(m, c.model.Q, c.model.rho);
    o.keep_fields = true;
    const FullRun r = evolve_full(c, s, o);
    REQUIRE_FALSE(r.trajectory.escaped);
    const double e0 = r.trajectory.samples.front().energy;
    double drift = 0.0;
    for (const Sample& q : r.trajectory.samples) drift = std::max(drift, std::abs(q.energy - e0));
    CHECK(drift / std::abs(e0) < 1e-6);
    CHECK(r.fields.size() == r.trajectory.samples.size());

    // Same data on a wider box: identical near the origin.
    const DynamicsContext wide = DynamicsContext::make(1.5, GridSpec::from_spacing(50.0, 0.05));
    ModalState mw;
    mw.chi = wide.projector.project(bump(wide.model.x, 1e-3, 1.5));
    mw.chit.assign(mw.chi.size(), 0.0);
    const FullRun rw = evolve_full(wide, compose(mw, wide.model.Q, wide.model.rho), o);
    const std::size_t off = wide.grid().center() - c.grid().center();
    double d = 0.0;
    for (std::size_t i = c.grid().center() - 200; i <= c.grid().center() + 200; ++i) {
      d = std::max(d, std::abs(r.final_state.u[i] - rw.final_state.u[i + off]));
    }
    CHECK(d < 1e-10);
  }
}

TEST_CASE("stable closure follows the decaying mode") {
  const DynamicsContext& c = ctx40();
  const double b = 1e-3;
  const RealVec z(c.grid().size(), 0.0);
  EvolveOptions o;
  o.T = 20.0;
  const Trajectory tr = evolve_stable(c, b, z, z, o);
  CHECK_FALSE(tr.escaped);
  CHECK(tr.sweeps >= 1);
  for (const Sample& s : tr.samples) {
    if (s.t > 3.0) break;
    CHECK(s.a == doctest::Approx(b * std::exp(-c.Omega() * s.t)).epsilon(1e-2).scale(1e-9));
  }
  // The manifold correction is quadratic in b.
  CHECK(std::abs(tr.fine_a_plus.front()) < b * b);
}

TEST_CASE("evolution preconditions") {
  const GridSpec g = GridSpec::from_spacing(40.0, 0.05);
  EvolveOptions o;
  o.T = 20.0;
  o.dt = 0.05;
  CHECK_THROWS_AS(validate_evolution(g, o), InvalidInput);
  o.dt = 0.04;
  CHECK_NOTHROW(validate_evolution(g, o));
  o.T = 35.0;
  CHECK_THROWS_AS(validate_evolution(g, o), InvalidInput);
  o.T = 20.0;
  o.sample_stride = 0;
  CHECK_THROWS_AS(validate_evolution(g, o), InvalidInput);
}
