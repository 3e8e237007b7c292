// Shared compute pool for candidate scoring.
#pragma once

#include <condition_variable>
#include <cstddef>
#include <deque>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace cpm {

class ComputePool {
  public:
    // threads == 0 picks std::thread::hardware_concurrency().
    explicit ComputePool(size_t threads = 0);
    ~ComputePool();

    ComputePool(const ComputePool &) = delete;
    ComputePool &operator=(const ComputePool &) = delete;

    size_t size() const { return workers_.empty() ? 1 : workers_.size(); }

    // Calls fn(chunk_index) for chunk_index in [0, chunks) and blocks until all return.
    // The calling thread runs chunks too. Safe to call from several threads at once.
    void run(size_t chunks, const std::function<void(size_t)> &fn);

  private:
    void worker_loop();

    std::vector<std::thread> workers_;
    std::deque<std::function<void()>> queue_;
    std::mutex mu_;
    std::condition_variable cv_;
    bool stop_ = false;
};

// Process-wide pool used by the matchers.
ComputePool &compute_pool();

// Rebuilds the process-wide pool; 0 means one thread per core. Not safe while matches are running.
void set_compute_threads(size_t threads);

} // namespace cpm
