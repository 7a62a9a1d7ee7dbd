#pragma once

#include <condition_variable>
#include <cstddef>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace sufa {

// Fixed-size pool of persistent threads. Task i of a batch always runs on
// worker i % size(), so a given batch has a fixed task-to-worker assignment.
class WorkerPool {
 public:
  explicit WorkerPool(std::size_t workers);
  ~WorkerPool();

  WorkerPool(const WorkerPool&) = delete;
  WorkerPool& operator=(const WorkerPool&) = delete;

  std::size_t size() const { return workers_; }

  /// Runs task(i) for i in [0, count) and blocks until all finish. The first
  /// exception thrown by any task is rethrown here.
  void run(std::size_t count, const std::function<void(std::size_t)>& task);

 private:
  void worker_loop(std::size_t id);

  std::size_t workers_;
  std::vector<std::thread> threads_;
  std::mutex mutex_;
  std::condition_variable start_cv_;
  std::condition_variable done_cv_;
  const std::function<void(std::size_t)>* task_ = nullptr;
  std::size_t count_ = 0;
  std::size_t generation_ = 0;
  std::size_t pending_ = 0;
  bool stop_ = false;
  std::exception_ptr error_;
};

/// Worker count from SUFA_WORKERS, defaulting to 1.
std::size_t workers_from_environment();

}  // namespace sufa
