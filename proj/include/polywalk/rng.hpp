#pragma once

// Counter-based random streams. A stream is addressed by (master seed, command, replica, substream);
// the address maps injectively onto the Philox4x32-10 key and the upper counter words, so any
// replica can be regenerated independently of scheduling.

#include <array>
#include <cstdint>
#include <limits>
#include <vector>

#include "polywalk/errors.hpp"
#include "polywalk/pmf.hpp"

namespace polywalk {

class Philox4x32 {
public:
    using Counter = std::array<std::uint32_t, 4>;
    using Key = std::array<std::uint32_t, 2>;

    static Counter block(Counter ctr, Key key) {
        for (int round = 0; round < 10; ++round) {
            if (round > 0) {
                key[0] += kW0;
                key[1] += kW1;
            }
            const std::uint64_t p0 = std::uint64_t{kM0} * ctr[0];
            const std::uint64_t p1 = std::uint64_t{kM1} * ctr[2];
            const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
            const auto lo0 = static_cast<std::uint32_t>(p0);
            const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
            const auto lo1 = static_cast<std::uint32_t>(p1);
            ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
        }
        return ctr;
    }

private:
    static constexpr std::uint32_t kM0 = 0xD2511F53u;
    static constexpr std::uint32_t kM1 = 0xCD9E8D57u;
    static constexpr std::uint32_t kW0 = 0x9E3779B9u;
    static constexpr std::uint32_t kW1 = 0xBB67AE85u;
};

enum class CommandId : std::uint16_t {
    construct_params = 1,
    simulate = 2,
    estimate = 3,
    verify = 4,
    acceptance = 5,
    testing = 6,
};

struct StreamAddress {
    std::uint64_t seed = 0;
    std::uint16_t command = 0;
    std::uint32_t replica = 0;
    std::uint16_t substream = 0;
};

class RandomStream {
public:
    using result_type = std::uint32_t;

    explicit RandomStream(StreamAddress addr = {}) : addr_(addr) {
        key_ = {static_cast<std::uint32_t>(addr.seed), static_cast<std::uint32_t>(addr.seed >> 32)};
        ctr_ = {0u, 0u, addr.replica,
                (static_cast<std::uint32_t>(addr.command) << 16) | static_cast<std::uint32_t>(addr.substream)};
    }

    const StreamAddress& address() const noexcept { return addr_; }

    /// Independent stream sharing seed, command and replica.
    RandomStream substream(std::uint16_t index) const {
        StreamAddress a = addr_;
        a.substream = index;
        return RandomStream(a);
    }

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }
    result_type operator()() { return next_u32(); }

    std::uint32_t next_u32() {
        if (used_ == 4) refill();
        return buffer_[used_++];
    }

    std::uint64_t next_u64() {
        const std::uint64_t hi = next_u32();
        return (hi << 32) | next_u32();
    }

    /// Uniform on [0, 1) with 53 random bits.
    double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform on {0, ..., n-1} without modulo bias.
    std::uint64_t uniform_below(std::uint64_t n) {
        require(n > 0, Errc::precondition_violation, "uniform_below(0)");
        std::uint64_t x = next_u64();
        unsigned __int128 m = static_cast<unsigned __int128>(x) * n;
        auto low = static_cast<std::uint64_t>(m);
        if (low < n) {
            const std::uint64_t threshold = (0 - n) % n;
            while (low < threshold) {
                x = next_u64();
                m = static_cast<unsigned __int128>(x) * n;
                low = static_cast<std::uint64_t>(m);
            }
        }
        return static_cast<std::uint64_t>(m >> 64);
    }

    /// Uniform on {0, ..., hi}.
    std::uint64_t uniform_inclusive(std::uint64_t hi) {
        if (hi == std::numeric_limits<std::uint64_t>::max()) return next_u64();
        return uniform_below(hi + 1);
    }

    bool bernoulli(double p) { return uniform01() < p; }

    int fair_sign() { return (next_u32() & 1u) ? 1 : -1; }

    /// G on {1, 2, ...} with P(G = g) = (2/3)(1/3)^(g-1).
    std::uint32_t geometric_two_thirds() {
        std::uint32_t g = 1;
        while (uniform_below(3) == 0) ++g;
        return g;
    }

    /// Number of 32-bit words consumed so far.
    std::uint64_t words_consumed() const noexcept {
        const std::uint64_t blocks = (std::uint64_t{ctr_[1]} << 32) | ctr_[0];
        return blocks * 4 - (4 - used_);
    }

private:
    void refill() {
        buffer_ = Philox4x32::block(ctr_, key_);
        if (++ctr_[0] == 0) ++ctr_[1];
        used_ = 0;
    }

    StreamAddress addr_;
    Philox4x32::Key key_{};
    Philox4x32::Counter ctr_{};
    Philox4x32::Counter buffer_{};
    unsigned used_ = 4;
};

inline RandomStream derive_stream(std::uint64_t master_seed, CommandId command, std::uint32_t replica) {
    return RandomStream(StreamAddress{master_seed, static_cast<std::uint16_t>(command), replica, 0});
}

/// Walker/Vose alias table over a floating law; O(1) sampling.
class AliasTable {
public:
    AliasTable() = default;

    explicit AliasTable(const FloatPMF& p) : offset_(p.offset()) {
        const auto w = p.weights();
        const std::size_t n = w.size();
        prob_.assign(n, 0.0);
        alias_.assign(n, 0);
        double total = 0.0;
        for (double x : w) total += x;
        std::vector<double> scaled(n);
        std::vector<std::uint32_t> small;
        std::vector<std::uint32_t> large;
        for (std::size_t i = 0; i < n; ++i) {
            scaled[i] = w[i] * static_cast<double>(n) / total;
            (scaled[i] < 1.0 ? small : large).push_back(static_cast<std::uint32_t>(i));
        }
        while (!small.empty() && !large.empty()) {
            const auto s = small.back();
            small.pop_back();
            const auto l = large.back();
            prob_[s] = scaled[s];
            alias_[s] = l;
            scaled[l] = (scaled[l] + scaled[s]) - 1.0;
            if (scaled[l] < 1.0) {
                large.pop_back();
                small.push_back(l);
            }
        }
        for (auto i : large) prob_[i] = 1.0;
        for (auto i : small) prob_[i] = 1.0;
    }

    std::int64_t sample(RandomStream& rng) const {
        const auto i = static_cast<std::size_t>(rng.uniform_below(prob_.size()));
        const std::size_t j = rng.uniform01() < prob_[i] ? i : alias_[i];
        return offset_ + static_cast<std::int64_t>(j);
    }

    std::size_t size() const noexcept { return prob_.size(); }

private:
    std::int64_t offset_ = 0;
    std::vector<double> prob_;
    std::vector<std::uint32_t> alias_;
};

}  // namespace polywalk
