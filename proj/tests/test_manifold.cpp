#include <cmath>
#include <cstdio>
#include <fstream>

#include "doctest.h"
#include "kglab/manifold.hpp"
#include "kglab/quadrature.hpp"

using namespace kglab;

namespace {

const DynamicsContext& ctx() {
  static const DynamicsContext c = DynamicsContext::make(1.5, GridSpec::from_spacing(40.0, 0.05));
  return c;
}

ShootOptions short_shoot() {
  ShootOptions o;
  o.horizon = 30.0;
  o.tol = 1e-11;
  return o;
}

}  // namespace

TEST_CASE("zeta profiles") {
  const RealVec x = GridSpec::from_spacing(100.0, 0.05).nodes();
  const RealVec g = zeta_profile(zeta_params(ZetaShape::Gaussian, 2.0, 1.5), x);
  const RealVec b = zeta_profile(zeta_params(ZetaShape::CompactBump, 1.0, 3.0), x);
  ZetaParams ap = zeta_params(ZetaShape::Algebraic, 1.0, 1.0);
  ap.decay = 1.6;
  ap.cutoff = 40.0;
  ap.taper = 20.0;
  const RealVec a = zeta_profile(ap, x);
  for (const RealVec* f : {&g, &b, &a}) CHECK(asymmetry(*f) == 0.0);
  const std::size_t c = x.size() / 2;
  CHECK(g[c] == 2.0);
  CHECK(g[c + 30] == doctest::Approx(2.0 * std::exp(-1.0)));
  CHECK(b[c] == 1.0);
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (std::abs(x[i]) >= 3.0) CHECK(b[i] == 0.0);
    if (std::abs(x[i]) >= 60.0) CHECK(a[i] == 0.0);
    if (std::abs(x[i]) <= 40.0) CHECK(a[i] == doctest::Approx(std::pow(1.0 + x[i] * x[i], -0.8)));
  }
  CHECK(zeta_profile(ZetaParams{}, x) == RealVec(x.size(), 0.0));
  CHECK(parse_zeta_shape("compact_bump") == ZetaShape::CompactBump);
  CHECK(to_string(ZetaShape::Algebraic) == "algebraic");
  CHECK_THROWS_AS(parse_zeta_shape("square"), InvalidInput);
}

TEST_CASE("custom zeta file") {
  const std::string path = "kglab_test_zeta.csv";
  {
    std::ofstream f(path);
    f << "x,zeta1,zeta2\n0,1,0.5\n2,0,0\n";
  }
  ZetaParams p = zeta_params(ZetaShape::CustomFile, 2.0, 1.0);
  p.file = path;
  const RealVec z = zeta_profile(p, {-3.0, -1.0, 0.0, 1.0, 2.0});
  CHECK(z == RealVec{0.0, 1.0, 2.0, 1.0, 0.0});
  std::remove(path.c_str());
  CHECK_THROWS_AS(zeta_profile(p, {0.0}), InvalidInput);
}

TEST_CASE("data preparation") {
  const DynamicsContext& c = ctx();
  const double dx = c.grid().dx();
  const double W = c.Omega();
  SUBCASE("zero data is the soliton at rest") {
    const DataSpec d = make_data(c, 0.0, ZetaParams{});
    const FieldState s = prepare_data(c, d, 0.0);
    CHECK(s.u == c.model.Q);
    CHECK(s.ut == RealVec(s.u.size(), 0.0));
  }
  SUBCASE("pure decaying mode") {
    const DataSpec d = make_data(c, 0.01, ZetaParams{});
    const ModalState m = modal_data(c, d, 0.0);
    CHECK(m.a == doctest::Approx(0.01));
    CHECK(m.adot == doctest::Approx(-0.01 * W));
  }
  SUBCASE("the unstable coordinate of the data is 2s") {
    ZetaParams z = zeta_params(ZetaShape::Gaussian, 1e-3, 2.0);
    z.velocity_ratio = 0.5;
    const DataSpec d = make_data(c, 2e-3, z);
    CHECK(std::abs(inner(d.zeta1, c.model.rho, dx)) < 1e-12);
    CHECK(std::abs(inner(d.zeta2, c.model.rho, dx)) < 1e-12);
    const double s = 3e-4;
    const FieldState st = prepare_data(c, d, s);
    RealVec v(st.u.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = st.u[i] - c.model.Q[i];
    const double rr = inner(c.model.rho, c.model.rho, dx);
    const double proj = (inner(v, c.model.rho, dx) + inner(st.ut, c.model.rho, dx) / W) / rr;
    CHECK(proj == doctest::Approx(2.0 * s).epsilon(1e-10));
  }
  SUBCASE("budget") {
    DataSpec d = make_data(c, 0.01, ZetaParams{});
    DataNorms n;
    n.b = 0.01;
    n.h2 = 0.02;
    n.weighted = 0.03;
    CHECK(n.budget() == doctest::Approx(0.06));
    d.norms = n;
    d.budget_limit = 0.05;
    CHECK_THROWS_AS(prepare_data(c, d, 0.0), InvalidInput);
    d.budget_limit = 0.0;
    CHECK_NOTHROW(prepare_data(c, d, 0.0));
  }
}

TEST_CASE("escape classification") {
  const DynamicsContext& c = ctx();
  const DataSpec d = make_data(c, 0.0, ZetaParams{});
  EvolveOptions o;
  o.T = 10.0;
  CHECK(classify_escape(evolve_modal(c, modal_data(c, d, 0.0), o)) == EscapeSide::Undetermined);
  CHECK(classify_escape(evolve_modal(c, modal_data(c, d, 0.1), o)) == EscapeSide::GrowPlus);
  CHECK(classify_escape(evolve_modal(c, modal_data(c, d, -0.1), o)) == EscapeSide::GrowMinus);
  CHECK(classify_escape(Trajectory{}) == EscapeSide::Undetermined);
}

TEST_CASE("shooting") {
  const DynamicsContext& c = ctx();
  SUBCASE("zero data") {
    const ShootResult r = shoot_stable(c, make_data(c, 0.0, ZetaParams{}), short_shoot());
    CHECK(std::abs(r.s_star) < 1e-10);
  }
  SUBCASE("decaying-mode data") {
    const double b = 0.01;
    ShootOptions o = short_shoot();
    o.keep_snapshots = true;
    const DataSpec d = make_data(c, b, ZetaParams{});
    const ShootResult r = shoot_stable(c, d, o);
    CHECK(r.converged);
    CHECK(r.bracket_hi - r.bracket_lo <= o.tol);
    CHECK(bracket_monotone(r.bracket_history));
    CHECK_FALSE(r.trajectory.escaped);
    // Quadratic nonlinearity near the soliton: the correction is O(b^2).
    CHECK(std::abs(r.s_star) < b * b);
    CHECK(std::abs(r.s_star) > 0.0);
    CHECK(std::abs(r.residual.value) <= 10.0 * (o.tol + r.residual.floor));
    CHECK(global_bound_ratio(c, r.trajectory) < 10.0);
    CHECK(std::abs(r.trajectory.samples.back().a) < b);

    // Away from s*, the residual is 2 Omega times the offset.
    o.s_offset = 0.01;
    o.keep_snapshots = false;
    const ShootResult off = shoot_stable(c, d, o);
    CHECK(off.s_accepted == doctest::Approx(off.s_star + 0.01));
    CHECK(off.residual.value == doctest::Approx(2.0 * c.Omega() * 0.01).epsilon(0.2));
    CHECK(off.residual.truncated);

    // Reversing b changes s* only at cubic order.
    const ShootResult neg = shoot_stable(c, make_data(c, -b, ZetaParams{}), short_shoot());
    CHECK(std::abs(r.s_star - neg.s_star) < b * b * b * 10.0);
  }
}

TEST_CASE("bracket failures") {
  const DynamicsContext& c = ctx();
  ShootOptions o = short_shoot();
  o.horizon = 0.5;
  o.s_max = 1e-6;
  CHECK_THROWS_AS(shoot_stable(c, make_data(c, 0.0, ZetaParams{}), o), BracketFailure);
  o.tol = 0.0;
  CHECK_THROWS_AS(shoot_stable(c, make_data(c, 0.0, ZetaParams{}), o), InvalidInput);
  CHECK(bracket_monotone({{-1.0, EscapeSide::GrowMinus, 1.0}, {1.0, EscapeSide::GrowPlus, 1.0}}));
  CHECK_FALSE(bracket_monotone({{1.0, EscapeSide::GrowMinus, 1.0}, {-1.0, EscapeSide::GrowPlus, 1.0}}));
}
