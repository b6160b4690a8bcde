#pragma once

#include <functional>
#include <string>
#include <vector>

#include "kglab/grid.hpp"
#include "kglab/scattering.hpp"

namespace kglab {

/// Removes the bound-state component <rho, h> rho. The odd zero mode is not
/// subtracted; it vanishes for even input and is audited instead.
class ContinuousProjector {
 public:
  ContinuousProjector() = default;
  ContinuousProjector(RealVec rho, RealVec qprime, double dx);

  /// Throws InvalidInput if h is not even to 1e-8 (relative to max(1, |h|_inf)).
  RealVec project(const RealVec& h) const;
  double rho_component(const RealVec& h) const;
  /// |<h, Q'>| / |Q'| for auditing the parity argument.
  double zero_mode_component(const RealVec& h) const;

  const RealVec& rho() const { return rho_; }
  double dx() const { return dx_; }

 private:
  RealVec rho_;
  RealVec qprime_unit_;
  double dx_ = 0.0;
};

/// (chi, chi_t) = (P_c h, P_c h_t).
std::pair<RealVec, RealVec> project_continuous(const ContinuousProjector& proj, const RealVec& h,
                                               const RealVec& h_t);

using Multiplier = std::function<Complex(double)>;

inline double japanese(double k) { return std::sqrt(1.0 + k * k); }

/// Frequency used to turn chi into a profile. With dx = dt = 0 this is <k>;
/// otherwise it is the frequency of the central-difference / Verlet scheme,
/// which keeps profiles of discrete linear solutions constant in time.
struct Dispersion {
  double dx = 0.0;
  double dt = 0.0;
  double operator()(double k) const;
  /// Verlet velocities of a mode A cos(w t) have amplitude A sin(w dt) / dt;
  /// this factor w dt / sin(w dt) restores A w (1 without a time step).
  double velocity_scale(double k) const;
};

/// Generalized eigenfunctions psi(x, k) tabulated on an x grid and a k grid.
class DistortedBasis {
 public:
  /// Solves the Jost problem per positive k and fills the rows for +-k.
  static DistortedBasis build(const Potential& V, const GridSpec& grid, const KGrid& k,
                              std::size_t jobs = 0);

  const GridSpec& grid() const { return grid_; }
  const KGrid& k_grid() const { return k_; }
  const ComplexVec& T() const { return T_; }
  /// Row-major n_k x n_x table.
  const Complex* row(std::size_t ik) const { return psi_.data() + ik * grid_.size(); }
  Complex psi(std::size_t ik, std::size_t ix) const { return psi_[ik * grid_.size() + ix]; }
  double sup_abs_psi() const;

  ComplexVec forward(const RealVec& h) const;
  ComplexVec forward(const ComplexVec& h) const;
  ComplexVec inverse(const ComplexVec& g) const;
  RealVec inverse_real(const ComplexVec& g) const;

  double k_norm(const ComplexVec& g) const;
  /// Upper bound on the contribution of the excluded gap (-k_min, k_min):
  /// 2 k_min sup |g|^2 near the gap, measured against the grid integral.
  double gap_bound(const ComplexVec& g) const;

  /// F^{-1} m(k) F h, real part.
  RealVec apply_multiplier(const Multiplier& m, const RealVec& h) const;

  /// Exact-in-time evolution of chi_tt + (H + 1) chi = 0 on the continuous
  /// subspace.
  std::pair<RealVec, RealVec> linear_propagate(const RealVec& chi0, const RealVec& chi1,
                                               double t) const;

 private:
  GridSpec grid_;
  KGrid k_ = KGrid::midpoint(1.0, 10.0);
  RealVec wx_;
  ComplexVec psi_;
  ComplexVec T_;
};

/// Profile g(t, k) = e^{it<k>} (chi_t - i<k> chi)~(t, k) with derived arrays.
struct Profile {
  double t = 0.0;
  ComplexVec g_tilde;
  ComplexVec dk_g;      // d/dk g, second-order differences, gap excluded
  ComplexVec weighted;  // <k>^2 g
  double dk_norm = 0.0;
  double weighted_norm = 0.0;
  double norm = 0.0;
};

/// Second-order derivative on the ascending k grid; each side of the gap is
/// differentiated separately with one-sided stencils at its ends.
ComplexVec k_derivative(const KGrid& k, const ComplexVec& g);

Profile profile_from_state(const DistortedBasis& basis, const RealVec& chi, const RealVec& chi_t,
                           double t, const Dispersion& omega = {});
Profile profile_from_transforms(const KGrid& k, const ComplexVec& chi_tilde,
                                const ComplexVec& chi_t_tilde, double t,
                                const Dispersion& omega = {});

/// chi(t) = (2i<D>)^{-1} (e^{it<D>} conj(g) - e^{-it<D>} g), with the
/// conjugation taken in x-space.
RealVec chi_from_profile(const DistortedBasis& basis, const ComplexVec& g_tilde, double t);

struct LinearDecaySample {
  double t = 0.0;
  double sup_norm = 0.0;
  double weighted_sup_norm = 0.0;
};

struct LinearDecayResult {
  std::vector<LinearDecaySample> samples;
  std::vector<std::string> warnings;
};

/// For each t records |<D>^{-1} e^{it<D>} P_c f|_inf and the same with the
/// weight <x>^{-2}.
LinearDecayResult linear_decay_probe(const DistortedBasis& basis, const ContinuousProjector& proj,
                                     const RealVec& f, const std::vector<double>& times);

}  // namespace kglab
