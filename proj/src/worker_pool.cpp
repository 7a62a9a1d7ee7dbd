#include "sufa/worker_pool.hpp"

#include <cstdlib>
#include <string>

namespace sufa {

WorkerPool::WorkerPool(std::size_t workers) : workers_(workers == 0 ? 1 : workers) {
  // Worker 0 is the calling thread.
  for (std::size_t id = 1; id < workers_; ++id) {
    threads_.emplace_back([this, id] { worker_loop(id); });
  }
}

WorkerPool::~WorkerPool() {
  {
    std::lock_guard lock(mutex_);
    stop_ = true;
  }
  start_cv_.notify_all();
  for (auto& t : threads_) t.join();
}

void WorkerPool::run(std::size_t count, const std::function<void(std::size_t)>& task) {
  if (count == 0) return;
  if (workers_ == 1) {
    for (std::size_t i = 0; i < count; ++i) task(i);
    return;
  }
  {
    std::lock_guard lock(mutex_);
    task_ = &task;
    count_ = count;
    pending_ = workers_ - 1;
    error_ = nullptr;
    ++generation_;
  }
  start_cv_.notify_all();

  std::exception_ptr local;
  try {
    for (std::size_t i = 0; i < count; i += workers_) task(i);
  } catch (...) {
    local = std::current_exception();
  }

  std::unique_lock lock(mutex_);
  done_cv_.wait(lock, [this] { return pending_ == 0; });
  task_ = nullptr;
  if (local) std::rethrow_exception(local);
  if (error_) std::rethrow_exception(error_);
}

void WorkerPool::worker_loop(std::size_t id) {
  std::size_t seen = 0;
  for (;;) {
    const std::function<void(std::size_t)>* task = nullptr;
    std::size_t count = 0;
    {
      std::unique_lock lock(mutex_);
      start_cv_.wait(lock, [&] { return stop_ || generation_ != seen; });
      if (stop_) return;
      seen = generation_;
      task = task_;
      count = count_;
    }
    std::exception_ptr local;
    try {
      for (std::size_t i = id; i < count; i += workers_) (*task)(i);
    } catch (...) {
      local = std::current_exception();
    }
    {
      std::lock_guard lock(mutex_);
      if (local && !error_) error_ = local;
      --pending_;
    }
    done_cv_.notify_one();
  }
}

std::size_t workers_from_environment() {
  if (const char* env = std::getenv("SUFA_WORKERS")) {
    try {
      const long v = std::stol(env);
      if (v > 0) return static_cast<std::size_t>(v);
    } catch (...) {
    }
  }
  return 1;
}

}  // namespace sufa
