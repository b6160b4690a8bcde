#include "kglab/scattering.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "kglab/parallel.hpp"
#include "kglab/soliton.hpp"

namespace kglab {

namespace {

constexpr Complex kI{0.0, 1.0};

double sech2(double x) {
  const double a = std::abs(x);
  if (a > 350.0) return 0.0;
  const double e = std::exp(-a);
  const double s = 2.0 * e / (1.0 + e * e);
  return s * s;
}

// RK4 for (m, p)' = (p, sigma 2ik p + V m) where sigma = -1 for Plus, +1 for Minus.
struct JostRhs {
  const Potential& V;
  Complex c;  // sigma * 2ik

  void operator()(double x, Complex m, Complex p, Complex& dm, Complex& dp) const {
    dm = p;
    dp = c * p + V(x) * m;
  }
};

void integrate(const Potential& V, const GridSpec& grid, double k, JostSide side,
               std::size_t n_sub, ComplexVec& m_out, ComplexVec& p_out) {
  const std::size_t n = grid.size();
  const double sigma = side == JostSide::Plus ? -1.0 : 1.0;
  JostRhs rhs{V, sigma * 2.0 * kI * k};
  const double dx = grid.dx();
  const double h = (side == JostSide::Plus ? -dx : dx) / static_cast<double>(n_sub);
  m_out.assign(n, Complex{});
  p_out.assign(n, Complex{});

  Complex m{1.0, 0.0};
  Complex p{0.0, 0.0};
  const std::size_t start = side == JostSide::Plus ? n - 1 : 0;
  m_out[start] = m;
  p_out[start] = p;
  for (std::size_t step = 1; step < n; ++step) {
    const std::size_t from = side == JostSide::Plus ? n - step : step - 1;
    const std::size_t to = side == JostSide::Plus ? n - 1 - step : step;
    const double x0 = grid.node(from);
    for (std::size_t s = 0; s < n_sub; ++s) {
      const double x = x0 + static_cast<double>(s) * h;
      Complex k1m, k1p, k2m, k2p, k3m, k3p, k4m, k4p;
      rhs(x, m, p, k1m, k1p);
      rhs(x + 0.5 * h, m + 0.5 * h * k1m, p + 0.5 * h * k1p, k2m, k2p);
      rhs(x + 0.5 * h, m + 0.5 * h * k2m, p + 0.5 * h * k2p, k3m, k3p);
      rhs(x + h, m + h * k3m, p + h * k3p, k4m, k4p);
      m += h / 6.0 * (k1m + 2.0 * k2m + 2.0 * k3m + k4m);
      p += h / 6.0 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p);
    }
    if (!(std::abs(m) < 1e6)) {
      std::ostringstream os;
      os << "Jost integration diverged at k = " << k << " (|m| > 1e6)";
      throw NumericalFailure(os.str());
    }
    m_out[to] = m;
    p_out[to] = p;
  }
}

// Trapezoid sum of f over the grid.
template <typename F>
Complex grid_sum(const GridSpec& grid, F&& f) {
  const std::size_t n = grid.size();
  Complex s = 0.5 * (f(0) + f(n - 1));
  for (std::size_t i = 1; i + 1 < n; ++i) s += f(i);
  return s * grid.dx();
}

}  // namespace

RealVec Potential::sample(const GridSpec& grid) const {
  RealVec v(grid.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = fn(grid.node(i));
  return v;
}

Potential Potential::soliton(double alpha) {
  Potential p;
  p.fn = [alpha](double x) { return soliton_potential(alpha, x); };
  std::ostringstream os;
  os << "soliton(alpha=" << alpha << ")";
  p.name = os.str();
  p.sup = (2.0 * alpha + 1.0) * (alpha + 1.0);
  return p;
}

Potential Potential::poschl_teller(int l) {
  const double depth = static_cast<double>(l * (l + 1));
  Potential p;
  p.fn = [depth](double x) { return -depth * sech2(x); };
  p.name = "poschl_teller(l=" + std::to_string(l) + ")";
  p.sup = depth;
  return p;
}

Potential Potential::zero() {
  Potential p;
  p.fn = [](double) { return 0.0; };
  p.name = "zero";
  p.sup = 0.0;
  return p;
}

std::size_t default_substeps(double dx, double k) {
  const double by_dx = std::ceil(dx / 0.01 - 1e-12);
  const double by_k = std::ceil(2.0 * std::abs(k) * dx / 0.1 - 1e-12);
  return static_cast<std::size_t>(std::max({1.0, by_dx, by_k}));
}

JostSolution jost_solve(const Potential& V, const GridSpec& grid, double k, JostSide side,
                        std::size_t n_sub) {
  if (k == 0.0) {
    throw InvalidInput("Jost solve at k = 0 is singular; use small_k_extrapolation");
  }
  const double edge = std::max(std::abs(V(grid.half_width())), std::abs(V(-grid.half_width())));
  if (edge > 1e-8) throw InvalidInput("potential has not decayed at the domain edge (|V(L)| > 1e-8)");
  if (n_sub == 0) n_sub = default_substeps(grid.dx(), k);
  JostSolution sol;
  sol.k = k;
  sol.side = side;
  integrate(V, grid, k, side, n_sub, sol.m, sol.dm);
  return sol;
}

double jost_ode_residual(const JostSolution& sol, const Potential& V, const GridSpec& grid) {
  const std::size_t n = grid.size();
  const double dx = grid.dx();
  const double sigma = sol.side == JostSide::Plus ? 1.0 : -1.0;
  double worst = 0.0;
  for (std::size_t i = 3; i + 3 < n; ++i) {
    const auto& d = sol.dm;
    const Complex d2 = (-d[i - 3] + 9.0 * d[i - 2] - 45.0 * d[i - 1] + 45.0 * d[i + 1] -
                        9.0 * d[i + 2] + d[i + 3]) /
                       (60.0 * dx);
    const Complex r = d2 + sigma * 2.0 * kI * sol.k * sol.dm[i] - V(grid.node(i)) * sol.m[i];
    worst = std::max(worst, std::abs(r));
  }
  return worst;
}

double Coefficients::unitarity_defect() const {
  return std::max(std::abs(std::norm(T) + std::norm(R_plus) - 1.0),
                  std::abs(std::norm(T) + std::norm(R_minus) - 1.0));
}

Coefficients coefficients_from_jost(const JostSolution& plus, const JostSolution& minus,
                                    const Potential& V, const GridSpec& grid) {
  const double k = plus.k;
  const RealVec v = V.sample(grid);
  const Complex two_ik = 2.0 * kI * k;
  const Complex int_plus = grid_sum(grid, [&](std::size_t i) { return v[i] * plus.m[i]; });
  const Complex int_minus = grid_sum(grid, [&](std::size_t i) { return v[i] * minus.m[i]; });
  const Complex refl_plus = grid_sum(grid, [&](std::size_t i) {
    return std::exp(-two_ik * grid.node(i)) * v[i] * minus.m[i];
  });
  const Complex refl_minus = grid_sum(grid, [&](std::size_t i) {
    return std::exp(two_ik * grid.node(i)) * v[i] * plus.m[i];
  });
  Coefficients c;
  c.inv_T_plus = 1.0 - int_plus / two_ik;
  c.inv_T_minus = 1.0 - int_minus / two_ik;
  c.T = 1.0 / c.inv_T_plus;
  c.R_plus = c.T * refl_plus / two_ik;
  c.R_minus = c.T * refl_minus / two_ik;
  return c;
}

Coefficients scattering_coefficients(const Potential& V, const GridSpec& grid, double k,
                                     double k_min) {
  if (std::abs(k) < k_min) {
    std::ostringstream os;
    os << "|k| = " << std::abs(k) << " is below k_min = " << k_min
       << "; use small_k_extrapolation";
    throw InvalidInput(os.str());
  }
  const JostSolution plus = jost_solve(V, grid, k, JostSide::Plus);
  const JostSolution minus = jost_solve(V, grid, k, JostSide::Minus);
  return coefficients_from_jost(plus, minus, V, grid);
}

SmallKFit small_k_extrapolation(const std::vector<double>& k, const std::vector<Complex>& y) {
  const std::size_t n = k.size();
  if (n < 3 || y.size() != n) throw InvalidInput("small-k extrapolation needs >= 3 samples");
  double sk = 0.0, skk = 0.0;
  Complex sy{}, sky{};
  for (std::size_t j = 0; j < n; ++j) {
    sk += k[j];
    skk += k[j] * k[j];
    sy += y[j];
    sky += k[j] * y[j];
  }
  const double nn = static_cast<double>(n);
  const double det = nn * skk - sk * sk;
  if (!(std::abs(det) > 0.0)) throw InvalidInput("small-k samples must be distinct");
  SmallKFit fit;
  fit.slope = (nn * sky - sk * sy) / det;
  fit.intercept = (sy - fit.slope * sk) / nn;
  double ss = 0.0;
  for (std::size_t j = 0; j < n; ++j) ss += std::norm(y[j] - fit.intercept - fit.slope * k[j]);
  fit.residual = std::sqrt(ss / nn);
  return fit;
}

std::string to_string(Genericity g) {
  switch (g) {
    case Genericity::Generic:
      return "Generic";
    case Genericity::Resonant:
      return "Resonant";
    case Genericity::Inconclusive:
      return "Inconclusive";
  }
  return "Inconclusive";
}

Complex zero_energy_integral(const Potential& V, const GridSpec& grid) {
  ComplexVec m, p;
  integrate(V, grid, 0.0, JostSide::Plus, default_substeps(grid.dx(), 0.0), m, p);
  const RealVec v = V.sample(grid);
  return grid_sum(grid, [&](std::size_t i) { return v[i] * m[i]; });
}

GenericityReport genericity_classify(const Potential& V, const GridSpec& grid,
                                     const std::vector<double>& k_samples) {
  if (k_samples.size() < 3) throw InvalidInput("genericity needs three small-k samples");
  GenericityReport rep;
  rep.k_samples.assign(k_samples.begin(), k_samples.begin() + 3);
  std::vector<Complex> t, rp, rm;
  for (double k : rep.k_samples) {
    const Coefficients c = scattering_coefficients(V, grid, k, 0.0);
    t.push_back(c.T);
    rp.push_back(c.R_plus);
    rm.push_back(c.R_minus);
  }
  const SmallKFit ft = small_k_extrapolation(rep.k_samples, t);
  const SmallKFit fp = small_k_extrapolation(rep.k_samples, rp);
  const SmallKFit fm = small_k_extrapolation(rep.k_samples, rm);
  rep.T0 = ft.intercept;
  rep.slope_alpha = ft.slope;
  rep.R_plus0 = fp.intercept;
  rep.R_minus0 = fm.intercept;
  rep.T_residual = ft.residual;
  rep.R_residual = std::max(fp.residual, fm.residual);
  rep.zero_energy_integral = zero_energy_integral(V, grid);

  if (rep.T_residual > 0.5 * kGenericT0Threshold || rep.R_residual > 0.5 * kGenericR0Threshold) {
    rep.verdict = Genericity::Inconclusive;
  } else if (std::abs(rep.T0) < kGenericT0Threshold &&
             std::abs(rep.R_plus0 + 1.0) < kGenericR0Threshold) {
    rep.verdict = Genericity::Generic;
  } else {
    rep.verdict = Genericity::Resonant;
  }
  return rep;
}

ScatteringData ScatteringData::assemble(const Potential& V, const GridSpec& grid, const KGrid& k,
                                        bool keep_jost, std::size_t jobs) {
  ScatteringData d;
  d.grid = grid;
  d.k_grid = k;
  d.potential = V;
  const std::size_t np = k.positive_count();
  const std::size_t n = grid.size();
  d.m_plus.assign(np, {});
  d.m_minus.assign(np, {});
  std::vector<Coefficients> coef(np);
  std::vector<double> boundary(np, 0.0);
  parallel_for(
      np,
      [&](std::size_t j) {
        const double kj = k[k.positive_index(j)];
        JostSolution plus = jost_solve(V, grid, kj, JostSide::Plus);
        JostSolution minus = jost_solve(V, grid, kj, JostSide::Minus);
        coef[j] = coefficients_from_jost(plus, minus, V, grid);
        boundary[j] = std::max(std::abs(plus.m[n - 1] - 1.0), std::abs(minus.m[0] - 1.0));
        if (keep_jost) {
          d.m_plus[j] = std::move(plus.m);
          d.m_minus[j] = std::move(minus.m);
        }
      },
      jobs);

  const std::size_t nk = k.size();
  d.T.resize(nk);
  d.R_plus.resize(nk);
  d.R_minus.resize(nk);
  d.unitarity_defect.resize(nk);
  for (std::size_t j = 0; j < np; ++j) {
    const std::size_t ip = k.positive_index(j);
    const std::size_t in = k.negative_index(j);
    d.T[ip] = coef[j].T;
    d.R_plus[ip] = coef[j].R_plus;
    d.R_minus[ip] = coef[j].R_minus;
    d.T[in] = std::conj(coef[j].T);
    d.R_plus[in] = std::conj(coef[j].R_plus);
    d.R_minus[in] = std::conj(coef[j].R_minus);
    const double u = coef[j].unitarity_defect();
    d.unitarity_defect[ip] = d.unitarity_defect[in] = u;
    d.max_unitarity_defect = std::max(d.max_unitarity_defect, u);
    const Complex cons = coef[j].T * std::conj(coef[j].R_minus) +
                         std::conj(coef[j].T) * coef[j].R_plus;
    d.max_consistency_defect = std::max(d.max_consistency_defect, std::abs(cons));
    d.max_boundary_defect = std::max(d.max_boundary_defect, boundary[j]);
  }

  // Negative k is filled by conjugation; audit that relation by direct solves
  // on a sparse subset.
  const std::size_t stride = std::max<std::size_t>(1, np / 8);
  for (std::size_t j = 0; j < np; j += stride) {
    const double kj = k[k.positive_index(j)];
    const Coefficients neg = scattering_coefficients(V, grid, -kj, 0.0);
    const double defect = std::max({std::abs(neg.T - std::conj(coef[j].T)),
                                    std::abs(neg.R_plus - std::conj(coef[j].R_plus)),
                                    std::abs(neg.R_minus - std::conj(coef[j].R_minus))});
    d.max_symmetry_defect = std::max(d.max_symmetry_defect, defect);
  }
  if (!keep_jost) d.release_jost();
  return d;
}

void ScatteringData::release_jost() {
  std::vector<ComplexVec>().swap(m_plus);
  std::vector<ComplexVec>().swap(m_minus);
}

}  // namespace kglab
