#include "lkreg/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <thread>
#include <vector>

namespace lkreg {

namespace {
std::atomic<int> g_max_threads{0};
std::atomic<bool> g_sequential{false};

int hardware_threads() {
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}
}  // namespace

void set_max_threads(int n) { g_max_threads.store(n < 0 ? 0 : n); }

int max_threads() {
  if (g_sequential.load()) return 1;
  const int cap = g_max_threads.load();
  return cap == 0 ? hardware_threads() : std::min(cap, hardware_threads() * 4);
}

void set_sequential(bool on) { g_sequential.store(on); }
bool sequential_mode() { return g_sequential.load(); }

void parallel_chunks(index_t n, index_t grain,
                     const std::function<void(index_t, index_t)>& fn) {
  if (n <= 0) return;
  if (grain <= 0) grain = 1;
  const index_t nchunks = (n + grain - 1) / grain;
  const int threads = static_cast<int>(
      std::min<index_t>(nchunks, static_cast<index_t>(max_threads())));
  if (threads <= 1) {
    for (index_t c = 0; c < nchunks; ++c)
      fn(c * grain, std::min(n, (c + 1) * grain));
    return;
  }
  std::atomic<index_t> next{0};
  auto worker = [&] {
    for (;;) {
      const index_t c = next.fetch_add(1);
      if (c >= nchunks) return;
      fn(c * grain, std::min(n, (c + 1) * grain));
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(threads - 1));
  for (int t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
}

}  // namespace lkreg
