#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "kglab/dft.hpp"
#include "kglab/dynamics.hpp"

namespace kglab {

enum class ZetaShape { None, Gaussian, CompactBump, Algebraic, CustomFile };
ZetaShape parse_zeta_shape(const std::string& name);
std::string to_string(ZetaShape s);

struct ZetaParams {
  ZetaShape shape = ZetaShape::None;
  double amplitude = 0.0;   // peak of the unprojected profile
  double width = 1.0;       // Gaussian width / bump half-width
  double decay = 1.6;       // algebraic: <x>^{-decay}
  double cutoff = 40.0;     // algebraic: smooth cutoff starts here
  double taper = 20.0;      // algebraic: cutoff reaches zero at cutoff + taper
  double velocity_ratio = 0.0;  // zeta2 = velocity_ratio * zeta1
  std::string file;         // custom_file: two columns x, zeta1 (optional third: zeta2)
};

inline ZetaParams zeta_params(ZetaShape shape, double amplitude, double width) {
  ZetaParams z;
  z.shape = shape;
  z.amplitude = amplitude;
  z.width = width;
  return z;
}

/// Unprojected even profile on the given nodes.
RealVec zeta_profile(const ZetaParams& p, const RealVec& x);

struct DataNorms {
  double b = 0.0;
  double h2 = 0.0;        // |(sqrt(H+1) zeta1, zeta2)|_{H^2}
  double weighted = 0.0;  // |<x>(sqrt(H+1) zeta1, zeta2)|_{L^2}
  double gamma = 0.0;     // |(gamma1, gamma2)|_{H^1 x L^2}
  double budget() const { return std::abs(b) + h2 + weighted; }
};

/// gamma = b Y_- + (zeta1, zeta2), zeta_j even and orthogonal to rho.
struct DataSpec {
  double b = 0.0;
  RealVec zeta1;
  RealVec zeta2;
  std::optional<DataNorms> norms;
  double budget_limit = 0.0;  // 0 disables the check
};

/// zeta_j = P_c of the profile; throws if the projection leaves a rho
/// component above 1e-8.
DataSpec make_data(const DynamicsContext& ctx, double b, const ZetaParams& zeta);

double h1_norm(const RealVec& f, double dx);
double h2_norm(const RealVec& f, double dx);
double gamma_norm(const DynamicsContext& ctx, const DataSpec& spec);

/// Needs a basis on ctx's grid for sqrt(H + 1).
DataNorms data_norms(const DynamicsContext& ctx, const DataSpec& spec,
                     const DistortedBasis& basis);

/// a0 = b + s, a1 = Omega (s - b).
ModalState modal_data(const DynamicsContext& ctx, const DataSpec& spec, double s);
/// (Q + a0 rho + zeta1, a1 rho + zeta2). Throws InvalidInput on budget violation.
FieldState prepare_data(const DynamicsContext& ctx, const DataSpec& spec, double s);

enum class EscapeSide { GrowPlus, GrowMinus, Undetermined };
std::string to_string(EscapeSide s);
EscapeSide classify_escape(const Trajectory& traj, double growth_threshold = 0.5);

struct StabilityResidual {
  double value = 0.0;
  double floor = 0.0;   // e^{-Omega t_end} sup |F|
  double t_end = 0.0;
  bool truncated = false;  // linear-regime cutoff reached before the horizon
};

/// 2 Omega a_+(0) + int_0^{t_end} e^{-Omega s} F ds by product integration
/// with F linear per step; t_end is the first time |a_+| > cutoff, or the end.
StabilityResidual stability_residual(const Trajectory& traj, double cutoff = 0.05);

struct ShootOptions {
  double horizon = 60.0;
  double tol = 1e-12;
  double s_max = 0.0;     // 0: use |gamma|
  double s_offset = 0.0;  // applied to the accepted trajectory only
  double dt = 0.04;
  std::size_t sample_stride = 10;
  bool track = true;
  bool keep_snapshots = false;
  std::size_t max_iterations = 200;
};

struct BracketEntry {
  double s = 0.0;
  EscapeSide side = EscapeSide::Undetermined;
  double exit_time = 0.0;
};

struct ShootResult {
  double s_star = 0.0;
  double bracket_lo = 0.0;
  double bracket_hi = 0.0;
  std::vector<BracketEntry> bracket_history;
  double horizon = 0.0;
  StabilityResidual residual;
  Trajectory trajectory;
  bool converged = false;
  double gamma = 0.0;
  double s_accepted = 0.0;
};

class BracketFailure : public std::runtime_error {
 public:
  BracketFailure(const std::string& what, BracketEntry lo, BracketEntry hi)
      : std::runtime_error(what), lo_(lo), hi_(hi) {}
  const BracketEntry& lo() const { return lo_; }
  const BracketEntry& hi() const { return hi_; }

 private:
  BracketEntry lo_;
  BracketEntry hi_;
};

/// Bisection on the Y_+ coefficient s over [-s_max, s_max] with the modal
/// solver. ctx must cover L >= horizon + 10.
ShootResult shoot_stable(const DynamicsContext& ctx, const DataSpec& spec,
                         const ShootOptions& opt);

/// GrowPlus entries all lie above GrowMinus entries.
bool bracket_monotone(const std::vector<BracketEntry>& history);

/// max over snapshots of |(v, v_t)|_{H^1 x L^2} / |(v(0), v_t(0))|.
double global_bound_ratio(const DynamicsContext& ctx, const Trajectory& traj);

}  // namespace kglab
