#pragma once

#include <condition_variable>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

#include "lfmc/common.hpp"

namespace lfmc {

/// Fixed pool that runs `fn(i)` for i in [0, count), each worker taking a
/// contiguous block. With one worker everything runs on the calling thread.
class WorkerPool {
 public:
  explicit WorkerPool(int workers = 1) : workers_(workers) {
    if (workers < 1) throw ConfigError("worker count must be >= 1");
    for (int w = 1; w < workers_; ++w) threads_.emplace_back([this, w] { loop(w); });
  }

  ~WorkerPool() {
    {
      std::lock_guard lk(mu_);
      stop_ = true;
      ++generation_;
    }
    cv_.notify_all();
    for (auto& t : threads_) t.join();
  }

  WorkerPool(const WorkerPool&) = delete;
  WorkerPool& operator=(const WorkerPool&) = delete;

  int size() const { return workers_; }

  void parallel_for(int count, const std::function<void(int)>& fn) {
    if (workers_ == 1 || count <= 1) {
      for (int i = 0; i < count; ++i) fn(i);
      return;
    }
    {
      std::lock_guard lk(mu_);
      fn_ = &fn;
      count_ = count;
      pending_ = workers_ - 1;
      error_ = nullptr;
      ++generation_;
    }
    cv_.notify_all();
    run_block(0);
    std::unique_lock lk(mu_);
    done_cv_.wait(lk, [&] { return pending_ == 0; });
    fn_ = nullptr;
    if (error_) std::rethrow_exception(error_);
  }

 private:
  void run_block(int w) {
    const int lo = count_ * w / workers_, hi = count_ * (w + 1) / workers_;
    try {
      for (int i = lo; i < hi; ++i) (*fn_)(i);
    } catch (...) {
      std::lock_guard lk(mu_);
      if (!error_) error_ = std::current_exception();
    }
  }

  void loop(int w) {
    std::uint64_t seen = 0;
    for (;;) {
      {
        std::unique_lock lk(mu_);
        cv_.wait(lk, [&] { return generation_ != seen; });
        seen = generation_;
        if (stop_) return;
      }
      run_block(w);
      {
        std::lock_guard lk(mu_);
        --pending_;
      }
      done_cv_.notify_one();
    }
  }

  int workers_;
  std::vector<std::thread> threads_;
  std::mutex mu_;
  std::condition_variable cv_, done_cv_;
  const std::function<void(int)>* fn_ = nullptr;
  int count_ = 0;
  int pending_ = 0;
  std::uint64_t generation_ = 0;
  bool stop_ = false;
  std::exception_ptr error_;
};

}  // namespace lfmc
