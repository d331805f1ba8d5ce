#include "tpf/parallel.hpp"

#include <atomic>
#include <condition_variable>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

#include "tpf/errors.hpp"

namespace tpf {

namespace {

class Pool {
 public:
  explicit Pool(int workers) {
    for (int i = 0; i < workers; ++i) {
      threads_.emplace_back([this] { worker_loop(); });
    }
  }

  ~Pool() {
    {
      std::unique_lock lk(mu_);
      stop_ = true;
    }
    cv_.notify_all();
    for (auto& t : threads_) t.join();
  }

  int size() const { return static_cast<int>(threads_.size()) + 1; }

  void run(std::size_t n, const std::function<void(std::size_t)>& fn) {
    if (n == 0) return;
    if (threads_.empty() || n == 1) {
      for (std::size_t i = 0; i < n; ++i) fn(i);
      return;
    }
    {
      std::unique_lock lk(mu_);
      fn_ = &fn;
      next_.store(0, std::memory_order_relaxed);
      limit_ = n;
      error_ = nullptr;
      const std::size_t chunks = 4 * static_cast<std::size_t>(size());
      chunk_ = (n + chunks - 1) / chunks;
      if (chunk_ == 0) chunk_ = 1;
      pending_ = static_cast<int>(threads_.size());
      generation_ += 1;
    }
    cv_.notify_all();
    drain();  // the calling thread works too
    std::unique_lock lk(mu_);
    done_cv_.wait(lk, [this] { return pending_ == 0; });
    fn_ = nullptr;
    if (error_) std::rethrow_exception(error_);
  }

 private:
  void drain() {
    for (;;) {
      const std::size_t begin = next_.fetch_add(chunk_);
      if (begin >= limit_) break;
      const std::size_t end = std::min(begin + chunk_, limit_);
      try {
        for (std::size_t i = begin; i < end; ++i) (*fn_)(i);
      } catch (...) {
        std::unique_lock lk(mu_);
        if (!error_) error_ = std::current_exception();
        next_.store(limit_, std::memory_order_relaxed);
      }
    }
  }

  void worker_loop() {
    std::uint64_t seen = 0;
    for (;;) {
      {
        std::unique_lock lk(mu_);
        cv_.wait(lk, [&] { return stop_ || generation_ != seen; });
        if (stop_) return;
        seen = generation_;
      }
      drain();
      std::unique_lock lk(mu_);
      if (--pending_ == 0) done_cv_.notify_all();
    }
  }

  std::vector<std::thread> threads_;
  std::mutex mu_;
  std::condition_variable cv_;
  std::condition_variable done_cv_;
  std::exception_ptr error_ = nullptr;
  const std::function<void(std::size_t)>* fn_ = nullptr;
  std::atomic<std::size_t> next_{0};
  std::size_t limit_ = 0;
  std::size_t chunk_ = 1;
  std::uint64_t generation_ = 0;
  int pending_ = 0;
  bool stop_ = false;
};

std::mutex pool_mu;
int requested_threads = 1;
Pool* pool = nullptr;  // lazily (re)built; intentionally leaked at exit

Pool& get_pool() {
  std::unique_lock lk(pool_mu);
  if (pool == nullptr || pool->size() != requested_threads) {
    delete pool;
    pool = new Pool(requested_threads - 1);
  }
  return *pool;
}

}  // namespace

void set_num_threads(int n) {
  if (n < 1) throw usage_error("set_num_threads: need at least one thread");
  std::unique_lock lk(pool_mu);
  requested_threads = n;
}

int num_threads() {
  std::unique_lock lk(pool_mu);
  return requested_threads;
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
  get_pool().run(n, fn);
}

}  // namespace tpf
