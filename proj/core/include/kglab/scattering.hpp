#pragma once

#include <functional>
#include <string>
#include <vector>

#include "kglab/grid.hpp"

namespace kglab {

/// Real potential given pointwise. RK4 needs values between grid nodes, so
/// the potential is a function rather than a sampled array.
struct Potential {
  std::function<double(double)> fn;
  std::string name;
  double sup = 0.0;  // max |V|

  double operator()(double x) const { return fn(x); }
  RealVec sample(const GridSpec& grid) const;

  static Potential soliton(double alpha);
  /// V = -l(l+1) sech^2 x (reflectionless for integer l).
  static Potential poschl_teller(int l = 1);
  static Potential zero();
};

enum class JostSide { Plus, Minus };

/// m(x) = e^{-+ikx} f(x) on the grid together with m'(x).
struct JostSolution {
  double k = 0.0;
  JostSide side = JostSide::Plus;
  ComplexVec m;
  ComplexVec dm;
};

/// Integrates m'' + 2ik m' = V m (Plus, from x = L leftwards) or
/// m'' - 2ik m' = V m (Minus, from x = -L rightwards) with m = 1, m' = 0 at the
/// start. RK4 with n_sub substeps per grid cell; n_sub = 0 picks a default
/// that keeps 2|k| h below 0.1.
JostSolution jost_solve(const Potential& V, const GridSpec& grid, double k, JostSide side,
                        std::size_t n_sub = 0);

std::size_t default_substeps(double dx, double k);

/// max over interior nodes of |m'' +- 2ik m' - V m| with m'' from sixth-order
/// differences of the stored m'.
double jost_ode_residual(const JostSolution& sol, const Potential& V, const GridSpec& grid);

struct Coefficients {
  Complex T;
  Complex R_plus;
  Complex R_minus;
  Complex inv_T_plus;   // 1/T from m_+
  Complex inv_T_minus;  // 1/T from m_-

  double unitarity_defect() const;
};

/// T, R+- from the quadrature formulas. Requires |k| >= k_min.
Coefficients coefficients_from_jost(const JostSolution& plus, const JostSolution& minus,
                                    const Potential& V, const GridSpec& grid);
Coefficients scattering_coefficients(const Potential& V, const GridSpec& grid, double k,
                                     double k_min = 1e-3);

struct SmallKFit {
  Complex intercept;
  Complex slope;
  double residual = 0.0;  // RMS misfit of the linear model
};

/// Complex linear least squares y ~ intercept + slope k (>= 3 samples).
SmallKFit small_k_extrapolation(const std::vector<double>& k, const std::vector<Complex>& y);

enum class Genericity { Generic, Resonant, Inconclusive };
std::string to_string(Genericity g);

struct GenericityReport {
  Genericity verdict = Genericity::Inconclusive;
  Complex T0;
  Complex R_plus0;
  Complex R_minus0;
  Complex slope_alpha;
  double T_residual = 0.0;
  double R_residual = 0.0;
  Complex zero_energy_integral;  // int V m_+(x, 0) dx
  std::vector<double> k_samples;
};

inline constexpr double kGenericT0Threshold = 0.05;
inline constexpr double kGenericR0Threshold = 0.1;

/// Classification from the three smallest k samples; see kGeneric* thresholds.
GenericityReport genericity_classify(const Potential& V, const GridSpec& grid,
                                     const std::vector<double>& k_samples);

/// Zero-energy solution m_+(x, 0) of m'' = V m with m(L) = 1, and int V m dx.
Complex zero_energy_integral(const Potential& V, const GridSpec& grid);

/// Jost data on an x grid and a symmetric k grid. Jost arrays are stored for
/// positive k only (row-major, n_kpos x n_x); negative k follow from
/// m(x, -k) = conj(m(x, k)).
struct ScatteringData {
  GridSpec grid;
  KGrid k_grid = KGrid::midpoint(1.0, 10.0);
  Potential potential;
  std::vector<ComplexVec> m_plus;
  std::vector<ComplexVec> m_minus;
  ComplexVec T;
  ComplexVec R_plus;
  ComplexVec R_minus;
  RealVec unitarity_defect;
  double max_unitarity_defect = 0.0;
  double max_symmetry_defect = 0.0;
  double max_consistency_defect = 0.0;  // |T conj(R-) + conj(T) R+|
  double max_boundary_defect = 0.0;     // |m(+-L) - 1|

  static ScatteringData assemble(const Potential& V, const GridSpec& grid, const KGrid& k,
                                 bool keep_jost = true, std::size_t jobs = 0);

  /// Drops the Jost tables once the caller has used them.
  void release_jost();
};

}  // namespace kglab
