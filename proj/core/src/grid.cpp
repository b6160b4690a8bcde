#include "kglab/grid.hpp"

#include <cmath>
#include <sstream>

#include "kglab/quadrature.hpp"

namespace kglab {

GridSpec::GridSpec(double half_width, std::size_t n_points)
    : half_width_(half_width), n_points_(n_points) {
  if (!(half_width > 0.0) || !std::isfinite(half_width)) {
    throw InvalidInput("grid half-width must be positive and finite");
  }
  if (n_points < 3 || n_points % 2 == 0) {
    throw InvalidInput("grid needs an odd number (>= 3) of nodes so that x = 0 is a node");
  }
}

GridSpec GridSpec::from_spacing(double half_width, double dx) {
  if (!(dx > 0.0)) throw InvalidInput("grid spacing must be positive");
  if (!(half_width > 0.0)) throw InvalidInput("grid half-width must be positive");
  const auto half = static_cast<std::size_t>(std::llround(half_width / dx));
  return GridSpec(half_width, 2 * std::max<std::size_t>(half, 1) + 1);
}

RealVec GridSpec::nodes() const {
  RealVec x(n_points_);
  const double h = dx();
  const std::size_t c = center();
  for (std::size_t i = 0; i < n_points_; ++i) {
    // Symmetric construction keeps x(-i) == -x(i) bit for bit.
    const double offset = static_cast<double>(i >= c ? i - c : c - i) * h;
    x[i] = i >= c ? offset : -offset;
  }
  return x;
}

KGrid::KGrid(Kind kind, RealVec positive_nodes, RealVec positive_weights) : kind_(kind) {
  const std::size_t n = positive_nodes.size();
  k_.resize(2 * n);
  w_.resize(2 * n);
  for (std::size_t j = 0; j < n; ++j) {
    k_[n + j] = positive_nodes[j];
    w_[n + j] = positive_weights[j];
    k_[n - 1 - j] = -positive_nodes[j];
    w_[n - 1 - j] = positive_weights[j];
  }
}

KGrid KGrid::log_uniform(double k_min, double k_split, double k_max, std::size_t n_log,
                         std::size_t n_lin) {
  if (!(k_min > 0.0) || !(k_split > k_min) || !(k_max > k_split)) {
    throw InvalidInput("k grid requires 0 < k_min < k_split < k_max");
  }
  if (n_log < 8 || n_lin < 8) {
    throw InvalidInput("k grid segments need at least 8 nodes each");
  }
  RealVec nodes;
  RealVec weights;
  nodes.reserve(n_log + n_lin);
  weights.reserve(n_log + n_lin);

  // Log segment: uniform in u = ln k, integrand f(k) k du.
  const double u0 = std::log(k_min);
  const double du = (std::log(k_split) - u0) / static_cast<double>(n_log - 1);
  const RealVec glog = gregory_weights(n_log, du);
  for (std::size_t j = 0; j < n_log; ++j) {
    const double k = j + 1 == n_log ? k_split : std::exp(u0 + du * static_cast<double>(j));
    nodes.push_back(k);
    weights.push_back(glog[j] * k);
  }

  // Uniform segment shares the node k_split with the log segment.
  const double dk = (k_max - k_split) / static_cast<double>(n_lin);
  const RealVec glin = gregory_weights(n_lin + 1, dk);
  weights.back() += glin[0];
  for (std::size_t j = 1; j <= n_lin; ++j) {
    nodes.push_back(k_split + dk * static_cast<double>(j));
    weights.push_back(glin[j]);
  }
  return KGrid(Kind::LogUniform, std::move(nodes), std::move(weights));
}

KGrid KGrid::midpoint(double dk, double k_max) {
  if (!(dk > 0.0) || !(k_max > dk)) throw InvalidInput("midpoint k grid requires 0 < dk < k_max");
  const auto n = static_cast<std::size_t>(std::llround(k_max / dk));
  if (n < 8) throw InvalidInput("midpoint k grid needs at least 8 positive nodes");
  RealVec nodes(n);
  RealVec weights(n, dk);
  for (std::size_t j = 0; j < n; ++j) nodes[j] = (static_cast<double>(j) + 0.5) * dk;
  return KGrid(Kind::Midpoint, std::move(nodes), std::move(weights));
}

std::string KGrid::describe() const {
  std::ostringstream os;
  os << (kind_ == Kind::Midpoint ? "midpoint" : "log+uniform") << " k-grid, " << size()
     << " nodes, k_min=" << k_min() << ", k_max=" << k_max();
  return os.str();
}

}  // namespace kglab
