#pragma once

#include <string>
#include <vector>

#include "kglab/grid.hpp"

namespace kglab {

/// Soliton profile, linearization potential and discrete eigendata.
struct SolitonModel {
  double alpha = 1.5;
  GridSpec grid;
  RealVec x;
  RealVec Q;
  RealVec Qprime;
  RealVec V;
  double lambda0 = 0.0;
  double Omega = 0.0;
  RealVec rho;
  double c0 = 0.0;
};

double soliton_value(double alpha, double x);
double soliton_derivative(double alpha, double x);
/// V = -(2 alpha + 1) Q^{2 alpha} = -(2 alpha + 1)(alpha + 1) sech^2(alpha x).
double soliton_potential(double alpha, double x);
/// Unnormalized ground state sech^{(alpha+1)/alpha}(alpha x).
double ground_state_shape(double alpha, double x);

/// Throws InvalidInput for alpha <= 1 or when |V(+-L)| > 1e-8.
SolitonModel build_soliton(double alpha, const GridSpec& grid);

/// Symmetric tridiagonal matrix with Dirichlet ends (ghost nodes are zero).
struct TridiagonalOperator {
  RealVec diag;
  RealVec off;  // off[i] couples i and i+1

  std::size_t size() const { return diag.size(); }
  RealVec apply(const RealVec& v) const;
  void apply(const double* v, double* out) const;
};

/// -d^2/dx^2 + shift + V by second-order central differences.
TridiagonalOperator discretize_schrodinger(const GridSpec& grid, const RealVec& V,
                                           double shift = 1.0);
TridiagonalOperator discretize_L(const SolitonModel& model);

struct Eigenpair {
  double value = 0.0;
  int parity = 0;  // +1 even, -1 odd
  RealVec vector;  // unit L2 norm (trapezoid), positive at x = 0 if even
};

struct SpectrumReport {
  std::vector<Eigenpair> below_edge;       // all sectors, ascending
  std::vector<Eigenpair> even_below_edge;  // even sector only
  bool has_internal_mode = false;          // eigenvalue in (0, 1)
  double eigenvalue_below = 0.0;           // lambda0 estimate
  double lambda0_error = 0.0;
  double rho_l2_error = 0.0;               // ground vector vs analytic rho
  std::vector<std::string> warnings;
};

/// Eigenvalues of the discretized operator below the continuum edge 1.
/// A near-zero odd eigenvalue is the translation mode and is not internal.
SpectrumReport spectrum_report(const SolitonModel& model);

/// Eigenpairs of an arbitrary tridiagonal operator with value <= upper.
std::vector<Eigenpair> tridiagonal_eigenpairs(const TridiagonalOperator& op, double dx,
                                              double upper);

}  // namespace kglab
