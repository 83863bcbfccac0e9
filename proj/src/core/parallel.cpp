#include "forklift/parallel.hpp"

#include <algorithm>

namespace forklift {

WorkerPool::WorkerPool(int workers) : workers_(std::max(1, workers)) {
  if (workers_ < 2) return;
  for (int i = 0; i < workers_; ++i) threads_.emplace_back([this, i] { loop(i); });
}

WorkerPool::~WorkerPool() {
  {
    std::lock_guard lock(mu_);
    stop_ = true;
  }
  wake_.notify_all();
  for (auto& t : threads_) t.join();
}

void WorkerPool::run(int n, const std::function<void(int)>& fn) {
  if (threads_.empty()) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::unique_lock lock(mu_);
  job_ = &fn;
  n_ = n;
  pending_ = workers_;
  error_ = nullptr;
  ++generation_;
  wake_.notify_all();
  done_.wait(lock, [this] { return pending_ == 0; });
  job_ = nullptr;
  if (error_) std::rethrow_exception(error_);
}

void WorkerPool::loop(int id) {
  unsigned long seen = 0;
  for (;;) {
    const std::function<void(int)>* job;
    int n;
    {
      std::unique_lock lock(mu_);
      wake_.wait(lock, [&] { return stop_ || generation_ != seen; });
      if (stop_) return;
      seen = generation_;
      job = job_;
      n = n_;
    }
    const int per = (n + workers_ - 1) / workers_;
    const int lo = std::min(n, id * per), hi = std::min(n, lo + per);
    std::exception_ptr err;
    try {
      for (int i = lo; i < hi; ++i) (*job)(i);
    } catch (...) {
      err = std::current_exception();
    }
    std::lock_guard lock(mu_);
    if (err && !error_) error_ = err;
    if (--pending_ == 0) done_.notify_one();
  }
}

}  // namespace forklift
