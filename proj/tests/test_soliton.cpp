#include <cmath>

#include "doctest.h"
#include "kglab/quadrature.hpp"
#include "kglab/soliton.hpp"
#include "oracles.hpp"

using namespace kglab;

namespace {

double fd2_plain(double (*f)(double, double), double a, double x, double h) {
  return (f(a, x + h) - 2.0 * f(a, x) + f(a, x - h)) / (h * h);
}

// Richardson-extrapolated second difference, O(h^4).
double fd2(double (*f)(double, double), double a, double x, double h) {
  return (4.0 * fd2_plain(f, a, x, 0.5 * h) - fd2_plain(f, a, x, h)) / 3.0;
}

// Discrete -d^2 + 1 + V assembled directly from the closed-form potential.
void assemble(double alpha, const GridSpec& g, std::vector<double>& d, std::vector<double>& e) {
  const RealVec x = g.nodes();
  const double h = g.dx();
  d.resize(x.size());
  e.assign(x.size() - 1, -1.0 / (h * h));
  for (std::size_t i = 0; i < x.size(); ++i) d[i] = 2.0 / (h * h) + 1.0 + oracle::V(alpha, x[i]);
}

}  // namespace

TEST_CASE("profile solves the stationary equation") {
  for (double alpha : {1.5, 2.0, 3.0}) {
    const double p = 2.0 * alpha + 1.0;
    for (double x : {0.0, 0.3, 1.0, 2.5, 5.0}) {
      const double q = soliton_value(alpha, x);
      CHECK(q == doctest::Approx(oracle::Q(alpha, x)).epsilon(1e-13));
      const double res = -fd2(soliton_value, alpha, x, 1e-2) + q - std::pow(q, p);
      CHECK(std::abs(res) < 1e-6);
      const double dq = (soliton_value(alpha, x + 1e-5) - soliton_value(alpha, x - 1e-5)) / 2e-5;
      CHECK(soliton_derivative(alpha, x) == doctest::Approx(dq).epsilon(1e-7));
    }
  }
}

TEST_CASE("linearized potential for the quartic case") {
  for (double x : {0.0, 0.5, 1.7, 4.0}) {
    const double s = 1.0 / std::cosh(1.5 * x);
    CHECK(soliton_potential(1.5, x) == doctest::Approx(-10.0 * s * s).epsilon(1e-13));
    const double q = soliton_value(1.5, x);
    CHECK(soliton_potential(1.5, x) == doctest::Approx(-4.0 * q * q * q).epsilon(1e-12));
  }
}

TEST_CASE("ground-state shape is an eigenfunction with eigenvalue -alpha(alpha+2)") {
  for (double alpha : {1.5, 2.0}) {
    const double lambda = -alpha * (alpha + 2.0);
    for (double x : {0.0, 0.4, 1.3, 3.0}) {
      const double r = ground_state_shape(alpha, x);
      const double res = -fd2(ground_state_shape, alpha, x, 1e-2) +
                         (1.0 + soliton_potential(alpha, x)) * r - lambda * r;
      CHECK(std::abs(res) < 1e-6);
    }
  }
}

TEST_CASE("normalization constant against quadrature and the beta function") {
  const double c_ts = oracle::rho_constant(1.5);
  CHECK(c_ts == doctest::Approx(oracle::rho_constant_beta(1.5)).epsilon(1e-12));
  const SolitonModel m = build_soliton(1.5, GridSpec::from_spacing(40.0, 0.02));
  CHECK(m.c0 == doctest::Approx(c_ts).epsilon(1e-8));
}

TEST_CASE("quartic model constants") {
  const SolitonModel m = build_soliton(1.5, GridSpec::from_spacing(40.0, 0.02));
  CHECK(m.lambda0 == doctest::Approx(-5.25));
  CHECK(m.Omega == doctest::Approx(std::sqrt(21.0) / 2.0));
  for (std::size_t i = 0; i < m.x.size(); i += 97) {
    CHECK(m.Q[i] == doctest::Approx(oracle::Q(1.5, m.x[i])).epsilon(1e-12));
    CHECK(m.rho[i] == doctest::Approx(oracle::rho(1.5, m.x[i])).epsilon(1e-8).scale(1e-12));
  }
  CHECK(l2_norm(m.rho, m.grid.dx()) == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("discrete spectrum below the edge") {
  const GridSpec g = GridSpec::from_spacing(40.0, 0.02);
  const SolitonModel m = build_soliton(1.5, g);
  const SpectrumReport r = spectrum_report(m);
  CHECK(r.lambda0_error < 1e-3);
  CHECK(r.rho_l2_error < 1e-3);
  CHECK_FALSE(r.has_internal_mode);
  CHECK(r.eigenvalue_below == doctest::Approx(-5.25).epsilon(1e-3));
  REQUIRE(r.even_below_edge.size() == 1);
  CHECK(r.even_below_edge[0].parity == 1);

  // Independent count of eigenvalues of the same discretization.
  std::vector<double> d, e;
  assemble(1.5, g, d, e);
  CHECK(oracle::sturm_count(d, e, -5.3) == 0);
  CHECK(oracle::sturm_count(d, e, -5.2) == 1);
  CHECK(oracle::sturm_count(d, e, 1.0) == 2);
  CHECK(static_cast<int>(r.below_edge.size()) == oracle::sturm_count(d, e, 1.0));
  // The second one is the odd translation mode near 0.
  CHECK(oracle::sturm_count(d, e, -1e-3) == 1);
  CHECK(oracle::sturm_count(d, e, 1e-3) == 2);
}

TEST_CASE("other exponents") {
  const SolitonModel m = build_soliton(2.0, GridSpec::from_spacing(30.0, 0.02));
  const SpectrumReport r = spectrum_report(m);
  CHECK(r.eigenvalue_below == doctest::Approx(-8.0).epsilon(1e-3));
  CHECK_FALSE(r.has_internal_mode);
}

TEST_CASE("build_soliton preconditions") {
  CHECK_THROWS_AS(build_soliton(1.0, GridSpec::from_spacing(40.0, 0.02)), InvalidInput);
  CHECK_THROWS_AS(build_soliton(0.5, GridSpec::from_spacing(40.0, 0.02)), InvalidInput);
  CHECK_THROWS_AS(build_soliton(1.5, GridSpec::from_spacing(4.0, 0.02)), InvalidInput);
}

TEST_CASE("tridiagonal apply matches the stencil") {
  const GridSpec g(1.0, 5);
  const TridiagonalOperator op = discretize_schrodinger(g, RealVec(5, 0.0), 1.0);
  const RealVec v{1, 2, 3, 4, 5};
  const RealVec w = op.apply(v);
  const double h2 = g.dx() * g.dx();
  CHECK(w[0] == doctest::Approx((2.0 * 1 - 2) / h2 + 1));
  CHECK(w[2] == doctest::Approx((2.0 * 3 - 2 - 4) / h2 + 3));
  CHECK(w[4] == doctest::Approx((2.0 * 5 - 4) / h2 + 5));
}
