#pragma once

// Persistent thread pool for rollout fan-out. map() returns results in job
// index order, so any reduction over them is independent of scheduling.

#include <condition_variable>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <functional>
#include <mutex>
#include <optional>
#include <thread>
#include <vector>

#include "epoet/error.hpp"

namespace epoet {

class WorkerPool {
 public:
  explicit WorkerPool(int num_workers = 1) {
    require(num_workers >= 1, ErrorKind::config, "num_workers must be >= 1");
    num_workers_ = num_workers;
    for (int i = 1; i < num_workers; ++i) threads_.emplace_back([this] { worker_loop(); });
  }

  WorkerPool(const WorkerPool&) = delete;
  WorkerPool& operator=(const WorkerPool&) = delete;

  ~WorkerPool() {
    {
      std::lock_guard lock(mu_);
      stopping_ = true;
    }
    cv_.notify_all();
    for (auto& t : threads_) t.join();
  }

  int size() const { return num_workers_; }

  /// Runs fn(i) for i in [0, n). The calling thread participates. If any job
  /// throws, the exception of the lowest failing index is rethrown.
  template <typename Fn>
  auto map(std::size_t n, Fn&& fn) -> std::vector<decltype(fn(std::size_t{}))> {
    using R = decltype(fn(std::size_t{}));
    std::vector<std::optional<R>> slots(n);
    std::vector<std::exception_ptr> errors(n);
    run_batch(n, [&](std::size_t i) {
      try {
        slots[i].emplace(fn(i));
      } catch (...) {
        errors[i] = std::current_exception();
      }
    });
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
    std::vector<R> out;
    out.reserve(n);
    for (auto& s : slots) out.push_back(std::move(*s));
    return out;
  }

 private:
  void run_batch(std::size_t n, const std::function<void(std::size_t)>& job) {
    if (n == 0) return;
    if (threads_.empty()) {
      for (std::size_t i = 0; i < n; ++i) job(i);
      return;
    }
    std::unique_lock lock(mu_);
    job_ = &job;
    total_ = n;
    next_ = 0;
    pending_ = n;
    ++generation_;
    lock.unlock();
    cv_.notify_all();
    drain();
    lock.lock();
    done_cv_.wait(lock, [this] { return pending_ == 0; });
    job_ = nullptr;
  }

  // Claims and runs jobs of the current batch until none remain.
  void drain() {
    for (;;) {
      std::unique_lock lock(mu_);
      if (job_ == nullptr || next_ >= total_) return;
      const std::size_t i = next_++;
      const auto* job = job_;
      lock.unlock();
      (*job)(i);
      lock.lock();
      if (--pending_ == 0) done_cv_.notify_all();
    }
  }

  void worker_loop() {
    std::uint64_t seen = 0;
    for (;;) {
      {
        std::unique_lock lock(mu_);
        cv_.wait(lock, [&] { return stopping_ || generation_ != seen; });
        if (stopping_) return;
        seen = generation_;
      }
      drain();
    }
  }

  int num_workers_ = 1;
  std::vector<std::thread> threads_;
  std::mutex mu_;
  std::condition_variable cv_;
  std::condition_variable done_cv_;
  const std::function<void(std::size_t)>* job_ = nullptr;
  std::size_t total_ = 0;
  std::size_t next_ = 0;
  std::size_t pending_ = 0;
  std::uint64_t generation_ = 0;
  bool stopping_ = false;
};

}  // namespace epoet
