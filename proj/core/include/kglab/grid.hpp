#pragma once

#include <complex>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace kglab {

using Complex = std::complex<double>;
using RealVec = std::vector<double>;
using ComplexVec = std::vector<Complex>;

/// Raised when a caller violates a documented precondition.
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a numerical procedure cannot deliver its contract.
class NumericalFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Uniform grid on [-L, L] with an odd number of nodes, so x = 0 is a node.
class GridSpec {
 public:
  GridSpec() = default;
  GridSpec(double half_width, std::size_t n_points);

  /// Grid with spacing as close to `dx` as possible while keeping L fixed.
  static GridSpec from_spacing(double half_width, double dx);

  double half_width() const { return half_width_; }
  std::size_t size() const { return n_points_; }
  std::size_t center() const { return n_points_ / 2; }
  double dx() const { return 2.0 * half_width_ / static_cast<double>(n_points_ - 1); }
  double node(std::size_t i) const {
    return -half_width_ + static_cast<double>(i) * dx();
  }
  RealVec nodes() const;

  /// Index of the node mirrored through x = 0.
  std::size_t mirror(std::size_t i) const { return n_points_ - 1 - i; }

 private:
  double half_width_ = 0.0;
  std::size_t n_points_ = 0;
};

/// Symmetric set of nonzero wavenumbers with quadrature weights for dk.
///
/// Nodes are stored in ascending order: -k_{N-1}, ..., -k_0, k_0, ..., k_{N-1},
/// where k_0 = k_min > 0. The gap (-k_min, k_min) is excluded.
class KGrid {
 public:
  enum class Kind { LogUniform, Midpoint };

  /// n_log log-spaced nodes on [k_min, k_split], then n_lin uniform nodes on
  /// (k_split, k_max]. Weights are fourth-order Gregory weights on each segment
  /// (the log segment in the variable ln k).
  static KGrid log_uniform(double k_min, double k_split, double k_max,
                           std::size_t n_log, std::size_t n_lin);

  /// Uniform midpoint nodes k_j = (j + 1/2) dk, j < n. On the full line this is
  /// the trapezoid rule shifted off k = 0.
  static KGrid midpoint(double dk, double k_max);

  Kind kind() const { return kind_; }
  std::size_t size() const { return k_.size(); }
  std::size_t positive_count() const { return k_.size() / 2; }
  double k_min() const { return k_[positive_count()]; }
  double k_max() const { return k_.back(); }

  const RealVec& nodes() const { return k_; }
  const RealVec& weights() const { return w_; }
  double operator[](std::size_t i) const { return k_[i]; }
  double weight(std::size_t i) const { return w_[i]; }

  /// Index of the j-th positive node (j = 0 is k_min).
  std::size_t positive_index(std::size_t j) const { return positive_count() + j; }
  /// Index of -k_j.
  std::size_t negative_index(std::size_t j) const { return positive_count() - 1 - j; }
  /// Index of the node -k for node i.
  std::size_t mirror(std::size_t i) const { return size() - 1 - i; }

  std::string describe() const;

 private:
  KGrid(Kind kind, RealVec positive_nodes, RealVec positive_weights);

  Kind kind_ = Kind::LogUniform;
  RealVec k_;
  RealVec w_;
};

}  // namespace kglab
