#pragma once

// Random laws with exact rational weights, for property runs.

#include <cstdint>
#include <vector>

#include "polywalk/pmf.hpp"
#include "polywalk/rational.hpp"
#include "polywalk/rng.hpp"
#include "polywalk/waiting_time.hpp"

namespace polywalk {

/// Mixture of 1..max_levels uniform levels with integer weights in [1, 20] and y gaps in [1, max_gap].
inline WaitingTimeLaw random_waiting_law(RandomStream& rng, std::size_t max_levels = 4, std::uint64_t max_gap = 8,
                                         bool allow_zero_first = true) {
    const auto levels = 1 + static_cast<std::size_t>(rng.uniform_below(max_levels));
    std::vector<std::uint64_t> weights(levels);
    std::uint64_t total = 0;
    for (auto& w : weights) total += (w = 1 + rng.uniform_below(20));
    std::vector<WaitingLevel> out;
    std::uint64_t y = allow_zero_first ? rng.uniform_inclusive(max_gap) : 1 + rng.uniform_below(max_gap);
    for (std::size_t l = 0; l < levels; ++l) {
        if (l > 0) y += 1 + rng.uniform_below(max_gap);
        out.push_back({Rational(static_cast<unsigned long>(weights[l])) / static_cast<unsigned long>(total), y});
    }
    return WaitingTimeLaw(std::move(out));
}

/// Law on {0, ..., m} with non-increasing integer-proportional weights.
inline ExactPMF random_nonincreasing_pmf(RandomStream& rng, std::size_t max_len = 12, std::uint64_t max_weight = 30) {
    const auto len = 1 + static_cast<std::size_t>(rng.uniform_below(max_len));
    std::vector<std::uint64_t> c(len);
    std::uint64_t cur = 1 + rng.uniform_below(max_weight);
    std::uint64_t total = 0;
    for (std::size_t i = 0; i < len; ++i) {
        c[i] = cur;
        total += cur;
        cur = 1 + rng.uniform_below(cur);  // next weight in [1, cur]
    }
    std::vector<Rational> w;
    w.reserve(len);
    for (auto v : c) w.emplace_back(Rational(static_cast<unsigned long>(v)) / static_cast<unsigned long>(total));
    return ExactPMF::from_weights(0, std::move(w));
}

/// Symmetric law with non-increasing weights on |x| = 0, 1, ..., m.
inline ExactPMF random_symmetric_unimodal(RandomStream& rng, std::size_t max_half = 20, std::uint64_t max_weight = 40) {
    const auto half = static_cast<std::size_t>(rng.uniform_below(max_half + 1));
    std::vector<std::uint64_t> c(half + 1);
    std::uint64_t cur = 1 + rng.uniform_below(max_weight);
    for (std::size_t i = 0; i <= half; ++i) {
        c[i] = cur;
        // long flat stretches keep the variance large
        if (rng.uniform_below(3) == 0) cur = 1 + rng.uniform_below(cur);
    }
    std::uint64_t total = c[0];
    for (std::size_t i = 1; i <= half; ++i) total += 2 * c[i];
    std::vector<Rational> w(2 * half + 1);
    for (std::size_t i = 0; i <= half; ++i) {
        const Rational v = Rational(static_cast<unsigned long>(c[i])) / static_cast<unsigned long>(total);
        w[half + i] = v;
        w[half - i] = v;
    }
    return ExactPMF::from_weights(-static_cast<std::int64_t>(half), std::move(w));
}

}  // namespace polywalk
