#include "qv/common.hpp"

#include <algorithm>
#include <cstdlib>
#include <thread>

namespace qv {

int worker_count() {
  static const int cached = [] {
    const char* env = std::getenv("QVAE_THREADS");
    long requested = env ? std::strtol(env, nullptr, 10) : 0;
    if (requested <= 0) {
      unsigned hw = std::thread::hardware_concurrency();
      return static_cast<int>(std::clamp(hw, 1u, 16u));
    }
    return static_cast<int>(std::min<long>(requested, 64));
  }();
  return cached;
}

void parallel_for(std::int64_t n, const std::function<void(std::int64_t, std::int64_t)>& fn) {
  if (n <= 0) return;
  const int workers = static_cast<int>(std::min<std::int64_t>(worker_count(), n));
  if (workers <= 1 || n < 4) {
    fn(0, n);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  const std::int64_t chunk = (n + workers - 1) / workers;
  for (int w = 0; w < workers; ++w) {
    const std::int64_t begin = w * chunk;
    const std::int64_t end = std::min<std::int64_t>(begin + chunk, n);
    if (begin >= end) break;
    pool.emplace_back(fn, begin, end);
  }
  for (auto& t : pool) t.join();
}

}  // namespace qv
