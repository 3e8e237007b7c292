#include "cpm/parallel.hpp"

#include <atomic>
#include <exception>
#include <memory>

namespace cpm {

ComputePool::ComputePool(size_t threads) {
    if (threads == 0) {
        threads = std::max(1u, std::thread::hardware_concurrency());
    }
    if (threads > 1) {
        for (size_t i = 0; i < threads; ++i) {
            workers_.emplace_back([this] { worker_loop(); });
        }
    }
}

ComputePool::~ComputePool() {
    {
        std::lock_guard lock(mu_);
        stop_ = true;
    }
    cv_.notify_all();
    for (auto &w : workers_) {
        w.join();
    }
}

void ComputePool::worker_loop() {
    while (true) {
        std::function<void()> task;
        {
            std::unique_lock lock(mu_);
            cv_.wait(lock, [this] { return stop_ || !queue_.empty(); });
            if (queue_.empty()) {
                return;
            }
            task = std::move(queue_.front());
            queue_.pop_front();
        }
        task();
    }
}

void ComputePool::run(size_t chunks, const std::function<void(size_t)> &fn) {
    if (chunks == 0) {
        return;
    }
    if (workers_.empty() || chunks == 1) {
        for (size_t c = 0; c < chunks; ++c) {
            fn(c);
        }
        return;
    }

    struct Batch {
        std::atomic<size_t> next{0};
        std::atomic<size_t> done{0};
        std::mutex mu;
        std::condition_variable cv;
        std::exception_ptr error;
    };
    auto batch = std::make_shared<Batch>();
    auto drain = [batch, chunks, &fn] {
        for (size_t c = batch->next.fetch_add(1); c < chunks; c = batch->next.fetch_add(1)) {
            try {
                fn(c);
            } catch (...) {
                std::lock_guard lock(batch->mu);
                if (!batch->error) {
                    batch->error = std::current_exception();
                }
            }
            if (batch->done.fetch_add(1) + 1 == chunks) {
                std::lock_guard lock(batch->mu);
                batch->cv.notify_all();
            }
        }
    };

    const size_t helpers = std::min(workers_.size(), chunks - 1);
    {
        std::lock_guard lock(mu_);
        for (size_t i = 0; i < helpers; ++i) {
            queue_.emplace_back(drain);
        }
    }
    cv_.notify_all();
    drain();
    std::unique_lock lock(batch->mu);
    batch->cv.wait(lock, [&] { return batch->done.load() == chunks; });
    if (batch->error) {
        std::rethrow_exception(batch->error);
    }
}

namespace {

std::mutex g_pool_mu;
std::unique_ptr<ComputePool> g_pool;

} // namespace

ComputePool &compute_pool() {
    std::lock_guard lock(g_pool_mu);
    if (!g_pool) {
        g_pool = std::make_unique<ComputePool>(0);
    }
    return *g_pool;
}

void set_compute_threads(size_t threads) {
    std::lock_guard lock(g_pool_mu);
    g_pool = std::make_unique<ComputePool>(threads);
}

} // namespace cpm
