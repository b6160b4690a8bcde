#include "kglab/soliton.hpp"

#include <lapacke.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "kglab/quadrature.hpp"

namespace kglab {

namespace {

double sech(double y) {
  const double a = std::abs(y);
  if (a > 700.0) return 0.0;
  const double e = std::exp(-a);
  return 2.0 * e / (1.0 + e * e);
}

}  // namespace

double soliton_value(double alpha, double x) {
  return std::pow(alpha + 1.0, 0.5 / alpha) * std::pow(sech(alpha * x), 1.0 / alpha);
}

double soliton_derivative(double alpha, double x) {
  return -soliton_value(alpha, x) * std::tanh(alpha * x);
}

double soliton_potential(double alpha, double x) {
  const double s = sech(alpha * x);
  return -(2.0 * alpha + 1.0) * (alpha + 1.0) * s * s;
}

double ground_state_shape(double alpha, double x) {
  return std::pow(sech(alpha * x), (alpha + 1.0) / alpha);
}

SolitonModel build_soliton(double alpha, const GridSpec& grid) {
  if (!(alpha > 1.0) || !std::isfinite(alpha)) {
    throw InvalidInput("alpha must exceed 1");
  }
  if (grid.size() < 3) throw InvalidInput("soliton grid is empty");
  const double edge = std::abs(soliton_potential(alpha, grid.half_width()));
  if (edge > 1e-8) {
    std::ostringstream os;
    os << "domain too small: |V(L)| = " << edge << " > 1e-8";
    throw InvalidInput(os.str());
  }

  SolitonModel m;
  m.alpha = alpha;
  m.grid = grid;
  m.x = grid.nodes();
  const std::size_t n = grid.size();
  m.Q.resize(n);
  m.Qprime.resize(n);
  m.V.resize(n);
  m.rho.resize(n);
  RealVec shape2(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = m.x[i];
    m.Q[i] = soliton_value(alpha, x);
    m.Qprime[i] = soliton_derivative(alpha, x);
    m.V[i] = soliton_potential(alpha, x);
    const double s = ground_state_shape(alpha, x);
    m.rho[i] = s;
    shape2[i] = s * s;
  }
  m.lambda0 = -alpha * (alpha + 2.0);
  m.Omega = std::sqrt(alpha * (alpha + 2.0));
  m.c0 = 1.0 / std::sqrt(simpson(shape2, grid.dx()));
  for (double& r : m.rho) r *= m.c0;
  return m;
}

RealVec TridiagonalOperator::apply(const RealVec& v) const {
  RealVec out(v.size());
  apply(v.data(), out.data());
  return out;
}

void TridiagonalOperator::apply(const double* v, double* out) const {
  const std::size_t n = diag.size();
  if (n == 0) return;
  if (n == 1) {
    out[0] = diag[0] * v[0];
    return;
  }
  out[0] = diag[0] * v[0] + off[0] * v[1];
  for (std::size_t i = 1; i + 1 < n; ++i) {
    out[i] = off[i - 1] * v[i - 1] + diag[i] * v[i] + off[i] * v[i + 1];
  }
  out[n - 1] = off[n - 2] * v[n - 2] + diag[n - 1] * v[n - 1];
}

TridiagonalOperator discretize_schrodinger(const GridSpec& grid, const RealVec& V, double shift) {
  const std::size_t n = grid.size();
  if (V.size() != n) throw InvalidInput("potential does not match grid");
  const double h2 = grid.dx() * grid.dx();
  TridiagonalOperator op;
  op.diag.resize(n);
  op.off.assign(n - 1, -1.0 / h2);
  for (std::size_t i = 0; i < n; ++i) op.diag[i] = 2.0 / h2 + shift + V[i];
  return op;
}

TridiagonalOperator discretize_L(const SolitonModel& model) {
  return discretize_schrodinger(model.grid, model.V, 1.0);
}

std::vector<Eigenpair> tridiagonal_eigenpairs(const TridiagonalOperator& op, double dx,
                                              double upper) {
  const auto n = static_cast<lapack_int>(op.size());
  RealVec d = op.diag;
  RealVec e = op.off;
  e.push_back(0.0);
  // Gershgorin lower bound.
  double lower = 0.0;
  for (lapack_int i = 0; i < n; ++i) {
    double r = 0.0;
    if (i > 0) r += std::abs(op.off[static_cast<std::size_t>(i - 1)]);
    if (i + 1 < n) r += std::abs(op.off[static_cast<std::size_t>(i)]);
    lower = std::min(lower, op.diag[static_cast<std::size_t>(i)] - r);
  }
  lapack_int m = 0;
  RealVec w(static_cast<std::size_t>(n));
  // Eigenvalues below `upper` are few; cap the vector storage accordingly.
  const lapack_int max_vecs = std::min<lapack_int>(n, 64);
  RealVec z(static_cast<std::size_t>(n) * static_cast<std::size_t>(max_vecs));
  std::vector<lapack_int> isuppz(2 * static_cast<std::size_t>(n));
  const lapack_int info =
      LAPACKE_dstevr(LAPACK_COL_MAJOR, 'V', 'V', n, d.data(), e.data(), lower - 1.0, upper, 0, 0,
                     0.0, &m, w.data(), z.data(), n, isuppz.data());
  if (info != 0) {
    throw NumericalFailure("tridiagonal eigensolver failed (info=" + std::to_string(info) + ")");
  }
  if (m > max_vecs) throw NumericalFailure("too many eigenvalues below the requested bound");

  std::vector<Eigenpair> out;
  const std::size_t nn = static_cast<std::size_t>(n);
  for (lapack_int j = 0; j < m; ++j) {
    Eigenpair p;
    p.value = w[static_cast<std::size_t>(j)];
    p.vector.assign(z.begin() + static_cast<std::ptrdiff_t>(j) * n,
                    z.begin() + static_cast<std::ptrdiff_t>(j + 1) * n);
    double even = 0.0;
    for (std::size_t i = 0; i < nn; ++i) even += p.vector[i] * p.vector[nn - 1 - i];
    p.parity = even >= 0.0 ? 1 : -1;
    // Symmetrize onto the detected sector to remove roundoff asymmetry.
    RealVec sym(nn);
    for (std::size_t i = 0; i < nn; ++i) {
      sym[i] = 0.5 * (p.vector[i] + p.parity * p.vector[nn - 1 - i]);
    }
    const double norm = l2_norm(sym, dx);
    std::size_t probe = nn / 2;
    if (p.parity < 0) {
      probe = static_cast<std::size_t>(
          std::max_element(sym.begin() + static_cast<std::ptrdiff_t>(nn / 2), sym.end(),
                           [](double a, double b) { return std::abs(a) < std::abs(b); }) -
          sym.begin());
    }
    const double sign = sym[probe] < 0.0 ? -1.0 : 1.0;
    for (double& v : sym) v *= sign / norm;
    p.vector = std::move(sym);
    out.push_back(std::move(p));
  }
  return out;
}

SpectrumReport spectrum_report(const SolitonModel& model) {
  const double dx = model.grid.dx();
  SpectrumReport rep;
  rep.below_edge = tridiagonal_eigenpairs(discretize_L(model), dx, 1.0);
  if (rep.below_edge.empty()) throw NumericalFailure("no eigenvalue below the continuum edge");

  const double edge_band = 5.0 * dx * dx;
  const double zero_band = 10.0 * dx * dx;
  for (const auto& p : rep.below_edge) {
    if (p.parity > 0) rep.even_below_edge.push_back(p);
    if (p.value > 1.0 - edge_band) {
      std::ostringstream os;
      os << "eigenvalue " << p.value << " lies within 5 dx^2 of the continuum edge";
      rep.warnings.push_back(os.str());
    }
    const bool translation = p.parity < 0 && std::abs(p.value) < zero_band;
    if (p.value > 0.0 && p.value < 1.0 && !translation) rep.has_internal_mode = true;
  }
  if (rep.even_below_edge.empty()) throw NumericalFailure("no even eigenvalue below the edge");

  const Eigenpair& ground = rep.even_below_edge.front();
  rep.eigenvalue_below = ground.value;
  rep.lambda0_error = std::abs(ground.value - model.lambda0);
  RealVec diff(model.rho.size());
  for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = ground.vector[i] - model.rho[i];
  rep.rho_l2_error = l2_norm(diff, dx);
  return rep;
}

}  // namespace kglab
