#pragma once

#include <optional>
#include <string>
#include <vector>

#include "kglab/dft.hpp"
#include "kglab/dynamics.hpp"

namespace kglab {

struct FitResult {
  double slope = 0.0;
  double intercept = 0.0;
  double stderr_slope = 0.0;
  double ci95 = 0.0;  // half-width, Student t
  std::size_t n_used = 0;
  std::size_t n_dropped = 0;  // non-positive values removed
  double t1 = 0.0;
  double t2 = 0.0;

  bool within(double target, double tol) const { return std::abs(slope - target) <= tol; }
};

/// Running maximum over a centred window of the given width in t.
RealVec sliding_max(const RealVec& t, const RealVec& y, double width);

/// Least squares on (log t, log y) for t in [t1, t2]. With envelope, y is
/// first replaced by its sliding maximum.
FitResult fit_decay(const RealVec& t, const RealVec& y, double t1, double t2, bool envelope,
                    double envelope_width = 6.0);

/// Exponential rate of |a_+| by least squares on (t, log |a_+|) over the
/// fine samples with lo <= |a_+| <= hi. Result fields t1, t2 give the span.
FitResult growth_rate(const Trajectory& traj, double lo, double hi);

struct XNormSeries {
  RealVec t;
  RealVec a_term;         // <t>^2 |a|
  RealVec dk_term;        // |d_k g|_2
  RealVec weighted_term;  // |<k>^2 g|_2
  RealVec total;
  double sup = 0.0;
  /// Least-squares slope of total over the final third, times the span,
  /// divided by the mean there.
  double final_third_trend = 0.0;
};

/// Profiles for every snapshot of the trajectory.
std::vector<Profile> trajectory_profiles(const Trajectory& traj, const DistortedBasis& basis,
                                         const Dispersion& omega = {});

XNormSeries x_norm(const Trajectory& traj, const std::vector<Profile>& profiles);
XNormSeries x_norm(const Trajectory& traj, const DistortedBasis& basis,
                   const Dispersion& omega = {});

struct ProfileDerivative {
  RealVec t;     // midpoints
  RealVec norm;  // |d_t g|_2
  std::optional<FitResult> fit;
};

ProfileDerivative profile_derivative_decay(const std::vector<Profile>& profiles, const KGrid& k,
                                           double t1, double t2);
/// With `linear_flow` set, the free discrete evolution between snapshots is
/// subtracted before differencing, so only the Duhamel increment of the
/// nonlinearity remains (the plain difference has an O(dx^2) floor from the
/// mismatch between continuum and discrete eigenfunctions).
ProfileDerivative profile_derivative_decay(const Trajectory& traj, const DistortedBasis& basis,
                                           double t1, double t2, const Dispersion& omega = {},
                                           const DynamicsContext* linear_flow = nullptr);

struct IntegratedDecay {
  double T = 0.0;
  double sup_integral = 0.0;    // int_0^T |chi|_inf^{p_sup}
  double local_integral = 0.0;  // int_0^T |<x>^{-2} chi|_inf^{p_local}
  double sup_tail_exponent = 0.0;    // fitted decay of the integrand near T
  double local_tail_exponent = 0.0;
  bool sup_tail_convergent = false;  // tail exponent < -1
  bool local_tail_convergent = false;
};

inline constexpr double kIntegratedSupPower = 2.1;
inline constexpr double kIntegratedLocalPower = 1.1;

IntegratedDecay integrated_decay(const Trajectory& traj, double T,
                                 double p_sup = kIntegratedSupPower,
                                 double p_local = kIntegratedLocalPower,
                                 double envelope_width = 6.0);

struct FitConfig {
  double t1 = 10.0;
  double t2 = 0.0;  // 0: 0.8 T
  double envelope_width = 6.0;
};

struct DecayReport {
  FitResult exponent_a;
  FitResult exponent_chi_sup;
  FitResult exponent_chi_local;
  double fit_t1 = 0.0;
  double fit_t2 = 0.0;
  std::optional<XNormSeries> x_norm_series;
  std::optional<ProfileDerivative> profile_derivative;
  std::optional<IntegratedDecay> integrated;          // over the run
  std::optional<IntegratedDecay> integrated_half;     // over the first half
  double sup_integral_change = 0.0;    // (I(T) - I(T/2)) / I(T/2)
  double local_integral_change = 0.0;
  double profile_cauchy = 0.0;  // |g(t2) - g(t1)|_2 / |g(t2)|_2 over the fit window
};

struct ReportOptions {
  const DistortedBasis* basis = nullptr;       // enables X-norm and profile diagnostics
  const DynamicsContext* dynamics = nullptr;   // linear-flow correction for d_t g
  Dispersion omega;
  bool doubled = false;  // integrated functionals compare [0, T/2] with [0, T]
};

DecayReport decay_report(const Trajectory& traj, const FitConfig& cfg,
                         const ReportOptions& opt = {});

}  // namespace kglab
