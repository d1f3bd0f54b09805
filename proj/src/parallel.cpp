#include "dnclab/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cstdlib>
#include <cstring>
#include <thread>
#include <vector>

namespace dnclab {

unsigned thread_count() {
  const char* env = std::getenv("DNCLAB_THREADS");
  unsigned requested = 0;
  if (env && *env) {
    const char* end = env + std::strlen(env);
    auto [ptr, ec] = std::from_chars(env, end, requested);
    if (ec != std::errc() || ptr != end) {
      throw ConfigError("DNCLAB_THREADS must be a non-negative integer, got '" + std::string(env) + "'");
    }
  }
  if (requested == 0) requested = std::max(1u, std::thread::hardware_concurrency());
  return requested;
}

void parallel_for(Index n, const std::function<void(Index)>& fn) {
  if (n <= 0) return;
  const auto workers = static_cast<Index>(std::min<unsigned long>(thread_count(), static_cast<unsigned long>(n)));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n));
  auto run = [&](Index i) {
    try {
      fn(i);
    } catch (...) {
      errors[static_cast<std::size_t>(i)] = std::current_exception();
    }
  };
  if (workers <= 1) {
    for (Index i = 0; i < n; ++i) run(i);
  } else {
    std::atomic<Index> next{0};
    std::vector<std::jthread> pool;
    for (Index w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (Index i = next++; i < n; i = next++) run(i);
      });
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace dnclab
