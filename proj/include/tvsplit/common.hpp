#pragma once

// Shared error hierarchy, version tag, and the worker-pool primitive used by
// the search and experiment layers.

#include <atomic>
#include <cstdlib>
#include <functional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace tvsplit {

inline constexpr const char* kVersion = "0.1.0";

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed shapes/sizes anywhere in the library.
struct DimensionMismatch : Error {
  using Error::Error;
};

// Precondition violations that are not shape errors (NaNs, bad scalars, ...).
struct InvalidArgument : Error {
  using Error::Error;
};

// Worker count resolution: explicit argument wins, then TVSPLIT_THREADS,
// then hardware concurrency. Always at least 1.
inline std::size_t resolve_worker_count(std::size_t requested = 0) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("TVSPLIT_THREADS")) {
    char* end = nullptr;
    const unsigned long v = std::strtoul(env, &end, 10);
    if (end != env && v > 0) return static_cast<std::size_t>(v);
  }
  const unsigned hc = std::thread::hardware_concurrency();
  return hc > 0 ? hc : 1;
}

// Runs fn(i) for i in [0, count). Each index owns its output slot, so results
// are deterministic regardless of the worker count. The first exception (by
// lowest index) is rethrown after all workers join; callers that must record
// failures per index (the grid search) catch inside fn instead.
inline void parallel_for_indexed(std::size_t count,
                                 const std::function<void(std::size_t)>& fn,
                                 std::size_t max_workers = 0) {
  if (count == 0) return;
  const std::size_t workers = std::min(resolve_worker_count(max_workers), count);
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(count);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&]() {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= count) return;
        try {
          fn(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  for (std::size_t i = 0; i < count; ++i)
    if (errors[i]) std::rethrow_exception(errors[i]);
}

}  // namespace tvsplit
