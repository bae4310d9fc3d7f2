#include "core/parallel.h"

#include <algorithm>
#include <atomic>

namespace pagetext {

namespace {
std::atomic<int> g_threads{0};
thread_local bool t_in_worker = false;
}  // namespace

void set_num_threads(int n) { g_threads.store(n < 0 ? 0 : n); }

int num_threads() {
  int n = g_threads.load();
  if (n == 0) {
    unsigned hw = std::thread::hardware_concurrency();
    n = hw == 0 ? 1 : static_cast<int>(hw);
  }
  return n;
}

void parallel_for(int64_t n, const std::function<void(int64_t, int64_t)>& fn) {
  if (n <= 0) return;
  int workers = num_threads();
  if (workers <= 1 || t_in_worker || n < 2 * workers) {
    fn(0, n);
    return;
  }
  workers = static_cast<int>(std::min<int64_t>(workers, n));
  int64_t chunk = (n + workers - 1) / workers;
  std::vector<std::thread> pool;
  pool.reserve(static_cast<size_t>(workers) - 1);
  for (int w = 1; w < workers; ++w) {
    int64_t b = w * chunk;
    int64_t e = std::min<int64_t>(n, b + chunk);
    if (b >= e) break;
    pool.emplace_back([&fn, b, e] {
      t_in_worker = true;
      fn(b, e);
      t_in_worker = false;
    });
  }
  fn(0, std::min<int64_t>(n, chunk));
  for (auto& t : pool) t.join();
}

}  // namespace pagetext
