#include "vpx/parallel.hpp"

#include <condition_variable>
#include <cstdlib>
#include <mutex>
#include <thread>
#include <vector>

#include "vpx/common.hpp"

namespace vpx {
namespace {

int resolve_threads() {
  if (const char* env = std::getenv("VPX_THREADS")) {
    char* end = nullptr;
    long v = std::strtol(env, &end, 10);
    check(end != env && *end == '\0' && v >= 1 && v <= 256,
          std::string("VPX_THREADS must be an integer in [1,256], got \"") + env + "\"");
    return static_cast<int>(v);
  }
  unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

// Minimal fork-join pool. Workers park between parallel_for calls; the
// calling thread always executes chunk 0 itself.
class Pool {
 public:
  Pool() : threads_(resolve_threads()) {
    for (int i = 1; i < threads_; ++i) {
      workers_.emplace_back([this, i] { worker_loop(i); });
    }
  }

  ~Pool() {
    {
      std::lock_guard<std::mutex> lk(mu_);
      stop_ = true;
      ++epoch_;
    }
    cv_.notify_all();
    for (auto& t : workers_) t.join();
  }

  int threads() const { return threads_; }

  void run(std::int64_t n, const std::function<void(std::int64_t, std::int64_t)>& body) {
    const int chunks = threads_;
    if (chunks == 1 || n < 2) {
      if (n > 0) body(0, n);
      return;
    }
    {
      std::lock_guard<std::mutex> lk(mu_);
      n_ = n;
      body_ = &body;
      pending_ = chunks - 1;
      ++epoch_;
    }
    cv_.notify_all();
    run_chunk(0);
    std::unique_lock<std::mutex> lk(mu_);
    done_cv_.wait(lk, [this] { return pending_ == 0; });
    body_ = nullptr;
  }

 private:
  void run_chunk(int idx) {
    const std::int64_t per = (n_ + threads_ - 1) / threads_;
    const std::int64_t b = per * idx;
    const std::int64_t e = std::min<std::int64_t>(n_, b + per);
    if (b < e) (*body_)(b, e);
  }

  void worker_loop(int idx) {
    std::uint64_t seen = 0;
    for (;;) {
      {
        std::unique_lock<std::mutex> lk(mu_);
        cv_.wait(lk, [this, seen] { return epoch_ != seen; });
        seen = epoch_;
        if (stop_) return;
      }
      run_chunk(idx);
      {
        std::lock_guard<std::mutex> lk(mu_);
        if (--pending_ == 0) done_cv_.notify_one();
      }
    }
  }

  int threads_;
  std::vector<std::thread> workers_;
  std::mutex mu_;
  std::condition_variable cv_;
  std::condition_variable done_cv_;
  std::uint64_t epoch_ = 0;
  std::int64_t n_ = 0;
  const std::function<void(std::int64_t, std::int64_t)>* body_ = nullptr;
  int pending_ = 0;
  bool stop_ = false;
};

Pool& pool() {
  static Pool p;
  return p;
}

}  // namespace

int worker_threads() { return pool().threads(); }

void parallel_for(std::int64_t n, const std::function<void(std::int64_t, std::int64_t)>& body) {
  pool().run(n, body);
}

}  // namespace vpx
