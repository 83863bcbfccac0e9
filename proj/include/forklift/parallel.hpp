#pragma once

#include <condition_variable>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace forklift {

// Fixed set of worker threads running index-parallel jobs. Indices are
// split into contiguous blocks, one per worker, so each worker touches a
// disjoint set of items. With fewer than two workers jobs run inline.
class WorkerPool {
 public:
  explicit WorkerPool(int workers);
  ~WorkerPool();
  WorkerPool(const WorkerPool&) = delete;
  WorkerPool& operator=(const WorkerPool&) = delete;

  int workers() const { return workers_; }

  // Calls fn(i) for i in [0, n); returns when all calls are done. The first
  // exception thrown by any call is rethrown here.
  void run(int n, const std::function<void(int)>& fn);

 private:
  void loop(int id);

  int workers_;
  std::vector<std::thread> threads_;
  std::mutex mu_;
  std::condition_variable wake_;
  std::condition_variable done_;
  const std::function<void(int)>* job_ = nullptr;
  int n_ = 0;
  unsigned long generation_ = 0;
  int pending_ = 0;
  bool stop_ = false;
  std::exception_ptr error_;
};

}  // namespace forklift
