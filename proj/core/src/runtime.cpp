#include "edgeseg/runtime.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <condition_variable>
#include <limits>
#include <mutex>
#include <stdexcept>
#include <thread>
#include <vector>

namespace edgeseg::runtime {

namespace {

std::atomic<int> g_num_threads{1};

/// Lazily started worker pool. Workers park on a condition variable between
/// parallel_for calls and claim chunks through an atomic cursor, so any
/// worker count drains any range.
class Pool {
 public:
  explicit Pool(int workers) {
    for (int i = 0; i < workers; ++i) {
      threads_.emplace_back([this] { worker_loop(); });
    }
  }

  ~Pool() {
    {
      std::lock_guard<std::mutex> lk(mu_);
      stop_ = true;
    }
    cv_.notify_all();
    for (auto& t : threads_) t.join();
  }

  void run(std::int64_t count, const std::function<void(std::int64_t, std::int64_t)>& fn) {
    const int participants = static_cast<int>(threads_.size()) + 1;  // workers + caller
    {
      std::lock_guard<std::mutex> lk(mu_);
      fn_ = &fn;
      count_ = count;
      chunk_ = std::max<std::int64_t>(1, (count + participants - 1) / participants);
      next_.store(0);
      active_ = static_cast<int>(threads_.size());
      ++epoch_;
    }
    cv_.notify_all();
    drain();
    std::unique_lock<std::mutex> lk(mu_);
    done_cv_.wait(lk, [this] { return active_ == 0; });
    fn_ = nullptr;
  }

 private:
  void drain() {
    for (;;) {
      const std::int64_t b = next_.fetch_add(chunk_);
      if (b >= count_) break;
      (*fn_)(b, std::min(count_, b + chunk_));
    }
  }

  void worker_loop() {
    std::uint64_t seen = 0;
    for (;;) {
      std::unique_lock<std::mutex> lk(mu_);
      cv_.wait(lk, [&] { return stop_ || epoch_ != seen; });
      if (stop_) return;
      seen = epoch_;
      lk.unlock();
      drain();
      lk.lock();
      if (--active_ == 0) done_cv_.notify_all();
    }
  }

  std::vector<std::thread> threads_;
  std::mutex mu_;
  std::condition_variable cv_;
  std::condition_variable done_cv_;
  const std::function<void(std::int64_t, std::int64_t)>* fn_ = nullptr;
  std::int64_t count_ = 0;
  std::int64_t chunk_ = 1;
  std::atomic<std::int64_t> next_{0};
  int active_ = 0;
  std::uint64_t epoch_ = 0;
  bool stop_ = false;
};

Pool& pool(int workers) {
  static Pool p(workers);  // sized at first parallel use, reused afterwards
  return p;
}

}  // namespace

void set_num_threads(int n) {
  if (n < 1) throw std::invalid_argument("set_num_threads: thread count must be >= 1");
  g_num_threads.store(n);
}

int num_threads() { return g_num_threads.load(); }

void parallel_for(std::int64_t count,
                  const std::function<void(std::int64_t, std::int64_t)>& fn) {
  if (count <= 0) return;
  const int n = num_threads();
  if (n <= 1 || count == 1) {
    fn(0, count);
    return;
  }
  pool(n - 1).run(count, fn);
}

std::int64_t timer_resolution_ns() {
  using clock = std::chrono::steady_clock;
  std::int64_t best = std::numeric_limits<std::int64_t>::max();
  for (int i = 0; i < 64; ++i) {
    const auto t0 = clock::now();
    auto t1 = clock::now();
    while (t1 == t0) t1 = clock::now();
    best = std::min<std::int64_t>(
        best, std::chrono::duration_cast<std::chrono::nanoseconds>(t1 - t0).count());
  }
  return std::max<std::int64_t>(best, 1);
}

}  // namespace edgeseg::runtime
