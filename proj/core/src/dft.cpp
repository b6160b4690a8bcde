#include "kglab/dft.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "kglab/parallel.hpp"
#include "kglab/quadrature.hpp"

namespace kglab {

namespace {

constexpr Complex kI{0.0, 1.0};

void require_even(const RealVec& h) {
  const double scale = std::max(1.0, sup_norm(h));
  if (asymmetry(h) > 1e-8 * scale) throw InvalidInput("input is not even (asymmetry > 1e-8)");
}

}  // namespace

ContinuousProjector::ContinuousProjector(RealVec rho, RealVec qprime, double dx)
    : rho_(std::move(rho)), dx_(dx) {
  const double qn = l2_norm(qprime, dx);
  qprime_unit_ = std::move(qprime);
  if (qn > 0.0) {
    for (double& v : qprime_unit_) v /= qn;
  }
}

double ContinuousProjector::rho_component(const RealVec& h) const {
  return inner(rho_, h, dx_) / inner(rho_, rho_, dx_);
}

double ContinuousProjector::zero_mode_component(const RealVec& h) const {
  if (qprime_unit_.empty()) return 0.0;
  return std::abs(inner(qprime_unit_, h, dx_));
}

RealVec ContinuousProjector::project(const RealVec& h) const {
  if (h.size() != rho_.size()) throw InvalidInput("projector and input sizes differ");
  require_even(h);
  const double zm = zero_mode_component(h);
  if (zm > 1e-8 * std::max(1.0, l2_norm(h, dx_))) {
    throw NumericalFailure("odd zero-mode component of even input exceeds 1e-8");
  }
  const double c = rho_component(h);
  RealVec out(h);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= c * rho_[i];
  return out;
}

std::pair<RealVec, RealVec> project_continuous(const ContinuousProjector& proj, const RealVec& h,
                                               const RealVec& h_t) {
  return {proj.project(h), proj.project(h_t)};
}

DistortedBasis DistortedBasis::build(const Potential& V, const GridSpec& grid, const KGrid& k,
                                     std::size_t jobs) {
  DistortedBasis b;
  b.grid_ = grid;
  b.k_ = k;
  const std::size_t nx = grid.size();
  const std::size_t nk = k.size();
  b.wx_.assign(nx, grid.dx());
  b.wx_.front() = b.wx_.back() = 0.5 * grid.dx();
  b.psi_.assign(nk * nx, Complex{});
  b.T_.assign(nk, Complex{});
  const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
  const RealVec x = grid.nodes();

  parallel_for(
      k.positive_count(),
      [&](std::size_t j) {
        const std::size_t ip = k.positive_index(j);
        const std::size_t in = k.negative_index(j);
        const double kj = k[ip];
        const JostSolution plus = jost_solve(V, grid, kj, JostSide::Plus);
        const JostSolution minus = jost_solve(V, grid, kj, JostSide::Minus);
        const Coefficients c = coefficients_from_jost(plus, minus, V, grid);
        b.T_[ip] = c.T;
        b.T_[in] = std::conj(c.T);
        Complex* rp = b.psi_.data() + ip * nx;
        Complex* rn = b.psi_.data() + in * nx;
        const Complex scale = c.T * inv_sqrt_2pi;
        for (std::size_t i = 0; i < nx; ++i) {
          const Complex phase{std::cos(kj * x[i]), std::sin(kj * x[i])};
          rp[i] = scale * phase * plus.m[i];
          rn[i] = scale * std::conj(phase) * minus.m[i];
        }
      },
      jobs);
  return b;
}

double DistortedBasis::sup_abs_psi() const { return sup_norm(std::span<const Complex>(psi_)); }

ComplexVec DistortedBasis::forward(const RealVec& h) const {
  const std::size_t nx = grid_.size();
  if (h.size() != nx) throw InvalidInput("forward transform: size mismatch");
  RealVec wh(nx);
  for (std::size_t i = 0; i < nx; ++i) wh[i] = wx_[i] * h[i];
  ComplexVec out(k_.size());
  for (std::size_t ik = 0; ik < k_.size(); ++ik) {
    const Complex* r = row(ik);
    double re = 0.0, im = 0.0;
    for (std::size_t i = 0; i < nx; ++i) {
      re += r[i].real() * wh[i];
      im -= r[i].imag() * wh[i];
    }
    out[ik] = {re, im};
  }
  return out;
}

ComplexVec DistortedBasis::forward(const ComplexVec& h) const {
  const std::size_t nx = grid_.size();
  if (h.size() != nx) throw InvalidInput("forward transform: size mismatch");
  ComplexVec out(k_.size());
  for (std::size_t ik = 0; ik < k_.size(); ++ik) {
    const Complex* r = row(ik);
    double re = 0.0, im = 0.0;
    for (std::size_t i = 0; i < nx; ++i) {
      const double a = r[i].real(), b = -r[i].imag();
      const double c = wx_[i] * h[i].real(), d = wx_[i] * h[i].imag();
      re += a * c - b * d;
      im += a * d + b * c;
    }
    out[ik] = {re, im};
  }
  return out;
}

ComplexVec DistortedBasis::inverse(const ComplexVec& g) const {
  const std::size_t nx = grid_.size();
  if (g.size() != k_.size()) throw InvalidInput("inverse transform: size mismatch");
  RealVec re(nx, 0.0), im(nx, 0.0);
  for (std::size_t ik = 0; ik < k_.size(); ++ik) {
    const double c = k_.weight(ik) * g[ik].real();
    const double d = k_.weight(ik) * g[ik].imag();
    if (c == 0.0 && d == 0.0) continue;
    const Complex* r = row(ik);
    for (std::size_t i = 0; i < nx; ++i) {
      const double a = r[i].real(), b = r[i].imag();
      re[i] += a * c - b * d;
      im[i] += a * d + b * c;
    }
  }
  ComplexVec out(nx);
  for (std::size_t i = 0; i < nx; ++i) out[i] = {re[i], im[i]};
  return out;
}

RealVec DistortedBasis::inverse_real(const ComplexVec& g) const {
  const ComplexVec z = inverse(g);
  RealVec out(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) out[i] = z[i].real();
  return out;
}

double DistortedBasis::k_norm(const ComplexVec& g) const { return weighted_l2(g, k_.weights()); }

double DistortedBasis::gap_bound(const ComplexVec& g) const {
  const std::size_t np = k_.positive_count();
  const double edge = std::max(std::norm(g[np]), std::norm(g[np - 1]));
  return 2.0 * k_.k_min() * edge;
}

RealVec DistortedBasis::apply_multiplier(const Multiplier& m, const RealVec& h) const {
  ComplexVec g = forward(h);
  for (std::size_t ik = 0; ik < g.size(); ++ik) g[ik] *= m(k_[ik]);
  return inverse_real(g);
}

std::pair<RealVec, RealVec> DistortedBasis::linear_propagate(const RealVec& chi0,
                                                             const RealVec& chi1, double t) const {
  const ComplexVec a = forward(chi0);
  const ComplexVec b = forward(chi1);
  ComplexVec c(a.size()), d(a.size());
  for (std::size_t ik = 0; ik < a.size(); ++ik) {
    const double w = japanese(k_[ik]);
    const double cs = std::cos(t * w), sn = std::sin(t * w);
    c[ik] = cs * a[ik] + sn / w * b[ik];
    d[ik] = -w * sn * a[ik] + cs * b[ik];
  }
  return {inverse_real(c), inverse_real(d)};
}

ComplexVec k_derivative(const KGrid& k, const ComplexVec& g) {
  const std::size_t n = k.size();
  const std::size_t np = k.positive_count();
  ComplexVec out(n);
  auto side = [&](std::size_t lo, std::size_t hi) {  // [lo, hi)
    for (std::size_t j = lo; j < hi; ++j) {
      if (j == lo || j + 1 == hi) {
        const bool start = j == lo;
        const std::size_t j0 = start ? lo : hi - 1;
        const std::size_t j1 = start ? lo + 1 : hi - 2;
        const std::size_t j2 = start ? lo + 2 : hi - 3;
        const double h1 = k[j1] - k[j0];
        const double h2 = k[j2] - k[j1];
        out[j0] = -(2.0 * h1 + h2) / (h1 * (h1 + h2)) * g[j0] + (h1 + h2) / (h1 * h2) * g[j1] -
                  h1 / (h2 * (h1 + h2)) * g[j2];
        continue;
      }
      const double h1 = k[j] - k[j - 1];
      const double h2 = k[j + 1] - k[j];
      out[j] = -h2 / (h1 * (h1 + h2)) * g[j - 1] + (h2 - h1) / (h1 * h2) * g[j] +
               h1 / (h2 * (h1 + h2)) * g[j + 1];
    }
  };
  side(0, np);
  side(np, n);
  return out;
}

double Dispersion::operator()(double k) const {
  double mu = 1.0 + k * k;
  if (dx > 0.0) {
    const double s = std::sin(0.5 * k * dx);
    mu = 1.0 + 4.0 * s * s / (dx * dx);
  }
  if (dt > 0.0) {
    const double arg = 0.5 * dt * std::sqrt(mu);
    if (arg >= 1.0) throw InvalidInput("time step beyond the scheme's stability limit");
    return 2.0 * std::asin(arg) / dt;
  }
  return std::sqrt(mu);
}

double Dispersion::velocity_scale(double k) const {
  if (!(dt > 0.0)) return 1.0;
  const double x = (*this)(k) * dt;
  return x / std::sin(x);
}

Profile profile_from_transforms(const KGrid& k, const ComplexVec& chi_tilde,
                                const ComplexVec& chi_t_tilde, double t, const Dispersion& omega) {
  Profile p;
  p.t = t;
  const std::size_t n = k.size();
  p.g_tilde.resize(n);
  p.weighted.resize(n);
  for (std::size_t j = 0; j < n; ++j) {
    const double w = omega(k[j]);
    const double jk = japanese(k[j]);
    const Complex phase{std::cos(t * w), std::sin(t * w)};
    p.g_tilde[j] = phase * (omega.velocity_scale(k[j]) * chi_t_tilde[j] - kI * w * chi_tilde[j]);
    p.weighted[j] = jk * jk * p.g_tilde[j];
  }
  p.dk_g = k_derivative(k, p.g_tilde);
  p.norm = weighted_l2(p.g_tilde, k.weights());
  p.dk_norm = weighted_l2(p.dk_g, k.weights());
  p.weighted_norm = weighted_l2(p.weighted, k.weights());
  return p;
}

Profile profile_from_state(const DistortedBasis& basis, const RealVec& chi, const RealVec& chi_t,
                           double t, const Dispersion& omega) {
  return profile_from_transforms(basis.k_grid(), basis.forward(chi), basis.forward(chi_t), t,
                                 omega);
}

RealVec chi_from_profile(const DistortedBasis& basis, const ComplexVec& g_tilde, double t) {
  ComplexVec gx = basis.inverse(g_tilde);
  for (Complex& v : gx) v = std::conj(v);
  const ComplexVec gc = basis.forward(gx);
  const KGrid& k = basis.k_grid();
  ComplexVec c(k.size());
  for (std::size_t j = 0; j < k.size(); ++j) {
    const double w = japanese(k[j]);
    const Complex e{std::cos(t * w), std::sin(t * w)};
    c[j] = (e * gc[j] - std::conj(e) * g_tilde[j]) / (2.0 * kI * w);
  }
  return basis.inverse_real(c);
}

LinearDecayResult linear_decay_probe(const DistortedBasis& basis, const ContinuousProjector& proj,
                                     const RealVec& f, const std::vector<double>& times) {
  LinearDecayResult res;
  const RealVec pf = proj.project(f);
  const ComplexVec ft = basis.forward(pf);
  const KGrid& k = basis.k_grid();
  const GridSpec& grid = basis.grid();
  const RealVec x = grid.nodes();
  const double edge = grid.half_width() - 2.0;
  bool warned = false;
  for (double t : times) {
    ComplexVec g(ft.size());
    for (std::size_t j = 0; j < g.size(); ++j) {
      const double w = japanese(k[j]);
      g[j] = ft[j] * Complex{std::cos(t * w), std::sin(t * w)} / w;
    }
    const ComplexVec u = basis.inverse(g);
    LinearDecaySample s;
    s.t = t;
    double edge_amp = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
      const double a = std::abs(u[i]);
      s.sup_norm = std::max(s.sup_norm, a);
      s.weighted_sup_norm = std::max(s.weighted_sup_norm, a / (1.0 + x[i] * x[i]));
      if (std::abs(x[i]) >= edge) edge_amp = std::max(edge_amp, a);
    }
    if (!warned && edge_amp > 1e-3 * s.sup_norm) {
      std::ostringstream os;
      os << "wave train reaches |x| = L - 2 at t = " << t << "; sup norms are contaminated";
      res.warnings.push_back(os.str());
      warned = true;
    }
    res.samples.push_back(s);
  }
  return res;
}

}  // namespace kglab
