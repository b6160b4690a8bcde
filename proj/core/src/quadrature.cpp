#include "kglab/quadrature.hpp"

#include <algorithm>
#include <cmath>

namespace kglab {

RealVec gregory_weights(std::size_t n, double h) {
  if (n < 2) throw InvalidInput("quadrature needs at least two samples");
  RealVec w(n, h);
  if (n < 8) {
    w.front() = w.back() = 0.5 * h;
    return w;
  }
  static constexpr double kEnd[3] = {3.0 / 8.0, 7.0 / 6.0, 23.0 / 24.0};
  for (std::size_t j = 0; j < 3; ++j) {
    w[j] = kEnd[j] * h;
    w[n - 1 - j] = kEnd[j] * h;
  }
  return w;
}

double trapezoid(std::span<const double> f, double dx) {
  if (f.size() < 2) return 0.0;
  double s = 0.5 * (f.front() + f.back());
  for (std::size_t i = 1; i + 1 < f.size(); ++i) s += f[i];
  return s * dx;
}

double simpson(std::span<const double> f, double dx) {
  const std::size_t n = f.size();
  if (n < 3 || n % 2 == 0) throw InvalidInput("Simpson's rule needs an odd number (>= 3) of samples");
  double s = f.front() + f.back();
  for (std::size_t i = 1; i + 1 < n; ++i) s += (i % 2 == 1 ? 4.0 : 2.0) * f[i];
  return s * dx / 3.0;
}

double inner(std::span<const double> f, std::span<const double> g, double dx) {
  const std::size_t n = f.size();
  if (g.size() != n) throw InvalidInput("inner product of arrays with different lengths");
  if (n < 2) return 0.0;
  double s = 0.5 * (f[0] * g[0] + f[n - 1] * g[n - 1]);
  for (std::size_t i = 1; i + 1 < n; ++i) s += f[i] * g[i];
  return s * dx;
}

double l2_norm(std::span<const double> f, double dx) { return std::sqrt(inner(f, f, dx)); }

double sup_norm(std::span<const double> f) {
  double m = 0.0;
  for (double v : f) m = std::max(m, std::abs(v));
  return m;
}

double sup_norm(std::span<const Complex> f) {
  double m = 0.0;
  for (const Complex& v : f) m = std::max(m, std::abs(v));
  return m;
}

double asymmetry(std::span<const double> f) {
  double m = 0.0;
  const std::size_t n = f.size();
  for (std::size_t i = 0; i < n / 2; ++i) m = std::max(m, std::abs(f[i] - f[n - 1 - i]));
  return m;
}

double weighted_l2(std::span<const Complex> g, std::span<const double> w) {
  double s = 0.0;
  for (std::size_t j = 0; j < g.size(); ++j) s += w[j] * std::norm(g[j]);
  return std::sqrt(s);
}

}  // namespace kglab
