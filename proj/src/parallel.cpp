#include "hybridnet/parallel.hpp"

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace hybridnet {
namespace {

thread_local bool inside_parallel_region = false;

std::size_t threads_from_env() {
  const char* env = std::getenv("HYBRIDNET_THREADS");
  if (env == nullptr || *env == '\0') return 1;
  try {
    long v = std::stol(env);
    return v < 1 ? 1 : static_cast<std::size_t>(v);
  } catch (const std::exception&) {
    return 1;
  }
}

// Fixed set of workers that pull task indices from a shared counter.
class Pool {
 public:
  explicit Pool(std::size_t workers) {
    for (std::size_t i = 0; i < workers; ++i) threads_.emplace_back([this] { worker_loop(); });
  }

  ~Pool() {
    {
      std::lock_guard lock(mutex_);
      stopping_ = true;
    }
    wake_.notify_all();
    for (auto& t : threads_) t.join();
  }

  std::size_t size() const { return threads_.size() + 1; }

  void run(std::size_t num_tasks, const std::function<void(std::size_t)>& task) {
    std::unique_lock lock(mutex_);
    task_ = &task;
    num_tasks_ = num_tasks;
    next_.store(0);
    pending_workers_ = threads_.size();
    error_ = nullptr;
    ++generation_;
    lock.unlock();
    wake_.notify_all();

    drain();

    lock.lock();
    done_.wait(lock, [this] { return pending_workers_ == 0; });
    task_ = nullptr;
    if (error_) std::rethrow_exception(error_);
  }

 private:
  void drain() {
    for (;;) {
      std::size_t i = next_.fetch_add(1);
      if (i >= num_tasks_) return;
      try {
        (*task_)(i);
      } catch (...) {
        std::lock_guard lock(mutex_);
        if (!error_) error_ = std::current_exception();
      }
    }
  }

  void worker_loop() {
    inside_parallel_region = true;
    std::uint64_t seen = 0;
    for (;;) {
      {
        std::unique_lock lock(mutex_);
        wake_.wait(lock, [&] { return stopping_ || generation_ != seen; });
        if (stopping_) return;
        seen = generation_;
      }
      drain();
      {
        std::lock_guard lock(mutex_);
        --pending_workers_;
      }
      done_.notify_one();
    }
  }

  std::vector<std::thread> threads_;
  std::mutex mutex_;
  std::condition_variable wake_;
  std::condition_variable done_;
  const std::function<void(std::size_t)>* task_ = nullptr;
  std::size_t num_tasks_ = 0;
  std::atomic<std::size_t> next_{0};
  std::size_t pending_workers_ = 0;
  std::uint64_t generation_ = 0;
  bool stopping_ = false;
  std::exception_ptr error_;
};

struct PoolHolder {
  std::mutex mutex;
  std::size_t requested = threads_from_env();
  std::unique_ptr<Pool> pool;
};

PoolHolder& holder() {
  static PoolHolder h;
  return h;
}

}  // namespace

std::size_t thread_count() {
  auto& h = holder();
  std::lock_guard lock(h.mutex);
  return h.requested;
}

void set_thread_count(std::size_t n) {
  auto& h = holder();
  std::lock_guard lock(h.mutex);
  h.requested = n < 1 ? 1 : n;
  if (h.pool && h.pool->size() != h.requested) h.pool.reset();
}

void parallel_for(std::size_t num_tasks, const std::function<void(std::size_t)>& task) {
  if (inside_parallel_region) {
    for (std::size_t i = 0; i < num_tasks; ++i) task(i);
    return;
  }
  auto& h = holder();
  std::unique_lock lock(h.mutex);
  if (h.requested <= 1 || num_tasks <= 1) {
    lock.unlock();
    for (std::size_t i = 0; i < num_tasks; ++i) task(i);
    return;
  }
  if (!h.pool) h.pool = std::make_unique<Pool>(h.requested - 1);
  // Nested calls from inside a task run inline.
  inside_parallel_region = true;
  try {
    h.pool->run(num_tasks, task);
  } catch (...) {
    inside_parallel_region = false;
    throw;
  }
  inside_parallel_region = false;
}

}  // namespace hybridnet
