#include "kglab/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace kglab {

namespace {
std::atomic<std::size_t> g_jobs{0};
}

std::size_t default_jobs() {
  const std::size_t j = g_jobs.load();
  if (j > 0) return j;
  return std::max(1u, std::thread::hardware_concurrency());
}

void set_default_jobs(std::size_t jobs) { g_jobs.store(jobs); }

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body,
                  std::size_t jobs) {
  if (n == 0) return;
  const std::size_t workers = std::min(n, jobs == 0 ? default_jobs() : jobs);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto run = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        body(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        next = n;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(workers - 1);
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(run);
  run();
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace kglab
