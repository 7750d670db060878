#pragma once

// Deterministic replica scheduling. Replicas are cut into fixed blocks; workers claim blocks from
// a shared counter and the block tallies are merged in block order, so the result does not depend
// on the number of workers or on timing.

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "polywalk/errors.hpp"

namespace polywalk {

inline constexpr std::uint64_t kReplicaBlock = 4096;
inline constexpr const char* kWorkersEnv = "POLYWALK_WORKERS";

/// Worker count from POLYWALK_WORKERS, else the hardware concurrency.
inline unsigned default_workers() {
    if (const char* env = std::getenv(kWorkersEnv)) {
        try {
            const long v = std::stol(env);
            if (v >= 1) return static_cast<unsigned>(v);
        } catch (const std::exception&) {
        }
        fail(Errc::parse_error, std::string(kWorkersEnv) + " must be a positive integer");
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

/// Integer counters merged by addition.
struct CountTally {
    std::vector<std::uint64_t> counts;

    explicit CountTally(std::size_t n = 0) : counts(n, 0) {}
    std::uint64_t& operator[](std::size_t i) { return counts[i]; }
    std::uint64_t operator[](std::size_t i) const { return counts[i]; }
    CountTally& operator+=(const CountTally& o) {
        if (counts.size() < o.counts.size()) counts.resize(o.counts.size(), 0);
        for (std::size_t i = 0; i < o.counts.size(); ++i) counts[i] += o.counts[i];
        return *this;
    }
};

/// Runs body(replica, tally) for replica = 0..replicas-1. Tally needs copy construction from
/// `zero` and operator+=.
template <class Tally, class Body>
Tally run_replicas(std::uint64_t replicas, unsigned workers, const Tally& zero, Body body,
                   std::uint64_t block = kReplicaBlock) {
    require(block >= 1, Errc::precondition_violation, "replica block must be positive");
    const std::uint64_t blocks = (replicas + block - 1) / block;
    std::vector<Tally> partial(static_cast<std::size_t>(blocks), zero);
    std::atomic<std::uint64_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;

    auto work = [&] {
        for (;;) {
            const std::uint64_t b = next.fetch_add(1);
            if (b >= blocks) return;
            try {
                const std::uint64_t end = std::min(replicas, (b + 1) * block);
                for (std::uint64_t r = b * block; r < end; ++r) body(r, partial[static_cast<std::size_t>(b)]);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!error) error = std::current_exception();
                next.store(blocks);
            }
        }
    };

    const unsigned n_threads = static_cast<unsigned>(std::min<std::uint64_t>(std::max(1u, workers), blocks));
    if (n_threads <= 1) {
        work();
    } else {
        std::vector<std::jthread> pool;
        pool.reserve(n_threads);
        for (unsigned t = 0; t < n_threads; ++t) pool.emplace_back(work);
    }
    if (error) std::rethrow_exception(error);

    Tally total = zero;
    for (const auto& t : partial) total += t;
    return total;
}

}  // namespace polywalk
