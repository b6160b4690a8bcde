#pragma once

#include <cstddef>
#include <span>

#include "kglab/grid.hpp"

namespace kglab {

/// Fourth-order Gregory weights for n equispaced samples with spacing h.
/// Falls back to the trapezoid rule when n < 8.
RealVec gregory_weights(std::size_t n, double h);

double trapezoid(std::span<const double> f, double dx);
double simpson(std::span<const double> f, double dx);

/// Trapezoid inner product <f, g> on a uniform grid.
double inner(std::span<const double> f, std::span<const double> g, double dx);
double l2_norm(std::span<const double> f, double dx);
double sup_norm(std::span<const double> f);
double sup_norm(std::span<const Complex> f);

/// max |f(x) - f(-x)| on a symmetric grid.
double asymmetry(std::span<const double> f);

/// Weighted L2 norm over k: sqrt(sum w_j |g_j|^2).
double weighted_l2(std::span<const Complex> g, std::span<const double> w);

}  // namespace kglab
