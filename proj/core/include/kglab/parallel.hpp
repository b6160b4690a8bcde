#pragma once

#include <cstddef>
#include <functional>

namespace kglab {

/// Number of workers used when a caller passes jobs = 0.
std::size_t default_jobs();
void set_default_jobs(std::size_t jobs);

/// Runs body(i) for i in [0, n) on up to `jobs` threads (0 = default).
/// Exceptions from workers are rethrown on the calling thread.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body,
                  std::size_t jobs = 0);

}  // namespace kglab
