#pragma once

#include <string>
#include <vector>

#include "kglab/dft.hpp"
#include "kglab/grid.hpp"
#include "kglab/soliton.hpp"

namespace kglab {

struct FieldState {
  double t = 0.0;
  RealVec u;
  RealVec ut;
};

/// v = a rho + chi with <chi, rho> = <chit, rho> = 0.
struct ModalState {
  double t = 0.0;
  double a = 0.0;
  double adot = 0.0;
  RealVec chi;
  RealVec chit;
};

/// Everything a solver needs about the background soliton on one grid.
struct DynamicsContext {
  SolitonModel model;
  double power = 4.0;               // p = 2 alpha + 1
  TridiagonalOperator free_op;      // -d^2 + 1
  TridiagonalOperator lin_op;       // -d^2 + 1 + V
  RealVec Q_discrete;               // equilibrium of the discrete full equation
  ContinuousProjector projector;
  std::size_t window_lo = 0;        // nodes where rho is not negligible
  std::size_t window_hi = 0;

  static DynamicsContext make(double alpha, const GridSpec& grid);

  const GridSpec& grid() const { return model.grid; }
  double Omega() const { return model.Omega; }
};

/// f(u) = u^p for integer p, |u|^{p-1} u otherwise.
double power_nonlinearity(double u, double p);
/// N(v) = f(Q + v) - f(Q) - f'(Q) v (binomial expansion for integer p).
double nonlinearity(double Q, double v, double p);

/// Discrete equilibrium of -D2 Q + Q = f(Q), Newton from the analytic profile.
RealVec discrete_soliton(const SolitonModel& model, double power);

/// 1/2 sum (ut^2 + (D+ u)^2 + u^2) dx - sum F(u) dx with F' = f and the
/// Dirichlet ghost values included in the gradient term.
double hamiltonian(const FieldState& s, const GridSpec& grid, double power);

ModalState mode_extract(const FieldState& s, const RealVec& Q, const RealVec& rho, double dx);
FieldState compose(const ModalState& m, const RealVec& Q, const RealVec& rho);

struct Sample {
  double t = 0.0;
  double a = 0.0;
  double adot = 0.0;
  double a_plus = 0.0;
  double chi_sup = 0.0;
  double chi_weighted_sup = 0.0;  // |<x>^{-2} chi|_inf
  double energy = 0.0;
  double F = 0.0;                 // <N(v), rho>
};

struct Kick {
  double t = 0.0;
  double s = 0.0;
  std::size_t probes = 0;
};

struct Trajectory {
  std::vector<Sample> samples;
  std::vector<ModalState> snapshots;  // aligned with samples when kept
  // Per-step series.
  RealVec fine_t;
  RealVec fine_F;
  RealVec fine_a;
  RealVec fine_a_plus;
  std::vector<Kick> kicks;
  double dt = 0.0;
  double Omega = 0.0;
  bool escaped = false;
  int escape_side = 0;
  double escape_time = 0.0;
  std::string escape_reason;
  std::size_t steps = 0;
  std::size_t sweeps = 0;          // stable closure only
  double closure_change = 0.0;     // stable closure only
  double max_orthogonality = 0.0;  // modal solvers
  double max_asymmetry = 0.0;
};

struct TrackingOptions {
  bool enabled = false;
  double interval = 2.0;
  double probe_horizon = 20.0;
  double probe_threshold = 1e-3;
  double kick_start = 1e-12;
  double kick_cap = 1e-8;
  double kick_tol = 1e-16;
  bool at_start = false;
  double start_cap = 1e-3;
};

struct EvolveOptions {
  double T = 150.0;
  double dt = 0.04;
  std::size_t sample_stride = 10;
  bool nonlinear = true;
  bool keep_snapshots = false;
  bool keep_fields = false;       // full solver: keep FieldState per sample
  double growth_threshold = 0.5;  // |a_+| beyond which the run has escaped
  double u_blowup = 5.0;
  double a_blowup = 2.0;
  double chi_blowup = 5.0;
  TrackingOptions tracking;
};

/// Checks dt <= 0.9 dx and L >= T + 10; throws InvalidInput otherwise.
void validate_evolution(const GridSpec& grid, const EvolveOptions& opt);

struct FullRun {
  Trajectory trajectory;
  FieldState final_state;
  std::vector<FieldState> fields;  // per sample, when keep_fields
};

/// Velocity Verlet for u_tt = u_xx - u + f(u). Modal quantities are measured
/// against ctx.Q_discrete.
FullRun evolve_full(const DynamicsContext& ctx, const FieldState& state0,
                    const EvolveOptions& opt);

/// a_+- by an exponential integrator with piecewise-linear F, chi by velocity
/// Verlet with re-projection every step.
Trajectory evolve_modal(const DynamicsContext& ctx, const ModalState& state0,
                        const EvolveOptions& opt);

struct StableOptions {
  std::size_t max_sweeps = 60;
  double tol = 1e-12;  // relative change of a_+ between sweeps
};

/// Trajectory on the stable manifold through (a_-(0) = b, chi0, chit0):
/// alternates a forward pass for (a_-, chi) with a_+ prescribed and a backward
/// pass a_+(t) = -1/(2 Omega) int_t^T e^{Omega(t-s)} F ds with a quasi-static
/// end value, until a_+ stops changing. The a_+(0) found is the manifold
/// coefficient.
Trajectory evolve_stable(const DynamicsContext& ctx, double b, const RealVec& chi0,
                         const RealVec& chit0, const EvolveOptions& opt,
                         const StableOptions& sopt = {});

}  // namespace kglab
