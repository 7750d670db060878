#pragma once

// Waiting-time laws sum_l p_l R[0, y_l], their level truncations, and the coupled level bundles.

#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "polywalk/errors.hpp"
#include "polywalk/pmf.hpp"
#include "polywalk/rational.hpp"
#include "polywalk/rng.hpp"

namespace polywalk {

/// Largest y for which uniform draws on [0, y] are exact integers in a double-free path.
inline constexpr std::uint64_t kSamplingLimit = std::uint64_t{1} << 53;

struct WaitingLevel {
    Rational p;
    std::uint64_t y;
};

class WaitingTimeLaw {
public:
    explicit WaitingTimeLaw(std::vector<WaitingLevel> levels) : levels_(std::move(levels)) {
        require(!levels_.empty(), Errc::invalid_mixture, "waiting-time law needs at least one level");
        Rational total = 0;
        for (std::size_t l = 0; l < levels_.size(); ++l) {
            require(levels_[l].p > 0, Errc::invalid_mixture, "level weights must be positive");
            if (l > 0) require(levels_[l].y > levels_[l - 1].y, Errc::invalid_mixture, "y_l must increase strictly");
            total += levels_[l].p;
        }
        require(total == 1, Errc::invalid_mixture, "level weights must sum to one");
        cumulative_.reserve(levels_.size());
        Rational acc = 0;
        for (const auto& lv : levels_) {
            acc += lv.p;
            cumulative_.push_back(acc.get_d());
        }
    }

    /// Parses "p:y,p:y,..." with p given as n/d or a decimal.
    static WaitingTimeLaw parse(std::string_view spec) {
        std::vector<WaitingLevel> levels;
        std::string s(spec);
        std::istringstream in(s);
        std::string item;
        while (std::getline(in, item, ',')) {
            const auto colon = item.find(':');
            require(colon != std::string::npos, Errc::parse_error, "law level '" + item + "' is not p:y");
            const auto ystr = item.substr(colon + 1);
            require(!ystr.empty() && ystr.find_first_not_of("0123456789") == std::string::npos, Errc::parse_error,
                    "bad y in '" + item + "'");
            levels.push_back({parse_rational(item.substr(0, colon)), std::stoull(ystr)});
        }
        return WaitingTimeLaw(std::move(levels));
    }

    std::string to_spec() const {
        std::string out;
        for (const auto& lv : levels_) {
            if (!out.empty()) out += ',';
            out += lv.p.get_str() + ":" + std::to_string(lv.y);
        }
        return out;
    }

    /// Number of levels L.
    std::size_t levels() const noexcept { return levels_.size(); }
    /// 1-based level access.
    const WaitingLevel& level(std::size_t k) const {
        require(k >= 1 && k <= levels_.size(), Errc::out_of_range, "level index out of range");
        return levels_[k - 1];
    }
    std::uint64_t y(std::size_t k) const { return level(k).y; }
    const Rational& p(std::size_t k) const { return level(k).p; }
    std::uint64_t y_max() const noexcept { return levels_.back().y; }

    /// z_k = p_1 + ... + p_k.
    Rational z(std::size_t k) const {
        require(k >= 1 && k <= levels_.size(), Errc::out_of_range, "level index out of range");
        Rational s = 0;
        for (std::size_t l = 0; l < k; ++l) s += levels_[l].p;
        return s;
    }
    double z_double(std::size_t k) const { return cumulative_.at(k - 1); }

    /// Draws a level in 1..k from p_l / z_k.
    std::size_t sample_level(std::size_t k, RandomStream& rng) const {
        const double u = rng.uniform01() * cumulative_[k - 1];
        std::size_t l = 0;
        while (l + 1 < k && u >= cumulative_[l]) ++l;
        return l + 1;
    }

    const std::vector<WaitingLevel>& raw() const noexcept { return levels_; }

private:
    std::vector<WaitingLevel> levels_;
    std::vector<double> cumulative_;
};

/// Exact pmf of the mixture; weight at t is sum over levels with y_l >= t of p_l / (y_l + 1).
template <class W = Rational>
LatticePMF<W> as_pmf(const WaitingTimeLaw& law, std::size_t cap = kDefaultSupportCap) {
    require(law.y_max() < cap, Errc::support_overflow, "waiting-time support exceeds cap");
    const auto n = static_cast<std::size_t>(law.y_max() + 1);
    std::vector<W> w(n, WeightTraits<W>::zero());
    // Suffix accumulation: add each level's height at its right edge, then sweep leftwards.
    std::vector<W> step(n + 1, WeightTraits<W>::zero());
    for (const auto& lv : law.raw()) {
        W h;
        if constexpr (WeightTraits<W>::exact) {
            h = lv.p / rational_from_uint64(lv.y + 1);
        } else {
            h = lv.p.get_d() / static_cast<double>(lv.y + 1);
        }
        step[static_cast<std::size_t>(lv.y)] += h;
    }
    W running = WeightTraits<W>::zero();
    for (std::size_t t = n; t-- > 0;) {
        running += step[t];
        w[t] = running;
    }
    return LatticePMF<W>::trusted(0, std::move(w));
}

/// Levels 1..k renormalized by z_k.
inline WaitingTimeLaw truncated_law(const WaitingTimeLaw& law, std::size_t k) {
    require(k >= 1 && k <= law.levels(), Errc::out_of_range, "truncation level out of range");
    const Rational zk = law.z(k);
    std::vector<WaitingLevel> out;
    out.reserve(k);
    for (std::size_t l = 1; l <= k; ++l) {
        Rational p = law.p(l) / zk;
        out.push_back({p, law.y(l)});
    }
    return WaitingTimeLaw(std::move(out));
}

/// One coupled draw (T, kappa, T^(1), ..., T^(K)).
struct Bundle {
    std::uint64_t T = 0;
    std::size_t kappa = 1;
    std::vector<std::uint64_t> levels;  // levels[k-1] = T^(k)

    std::uint64_t at(std::size_t k) const { return levels.at(k - 1); }
};

namespace detail {

inline void check_sampling_range(std::uint64_t y, const char* what) {
    require(y <= kSamplingLimit, Errc::sampling_range, std::string(what) + ": y exceeds 2^53");
}

/// Draw from truncated_law(law, k) without materializing it.
inline std::uint64_t draw_truncated(const WaitingTimeLaw& law, std::size_t k, RandomStream& rng) {
    const auto l = law.sample_level(k, rng);
    return rng.uniform_inclusive(law.y(l));
}

inline Bundle fill_bundle(const WaitingTimeLaw& law, std::size_t K, std::size_t kappa, RandomStream& rng) {
    Bundle b;
    b.kappa = kappa;
    b.T = rng.uniform_inclusive(law.y(kappa));
    b.levels.resize(K);
    for (std::size_t k = 1; k <= K; ++k) b.levels[k - 1] = (k < kappa) ? draw_truncated(law, k, rng) : b.T;
    return b;
}

}  // namespace detail

/// kappa ~ {p_l}, T ~ R[0, y_kappa]; levels below kappa independent from their truncated laws.
inline Bundle sample_bundle(const WaitingTimeLaw& law, std::size_t K, RandomStream& rng) {
    require(K >= 1 && K <= law.levels(), Errc::out_of_range, "bundle level out of range");
    detail::check_sampling_range(law.y_max(), "sample_bundle");
    const auto kappa = law.sample_level(law.levels(), rng);
    return detail::fill_bundle(law, K, kappa, rng);
}

/// Bundle conditioned on kappa <= K.
inline Bundle sample_truncated_bundle(const WaitingTimeLaw& law, std::size_t K, RandomStream& rng) {
    require(K >= 1 && K <= law.levels(), Errc::out_of_range, "bundle level out of range");
    detail::check_sampling_range(law.y(K), "sample_truncated_bundle");
    const auto kappa = law.sample_level(K, rng);
    return detail::fill_bundle(law, K, kappa, rng);
}

struct DLambdaResult {
    Rational sup_prob;  // sup_t P(|eps T - t| <= lambda)
    Rational value;     // 1 - (1 - sup_prob)^(d-1)
    bool non_degenerate = false;
};

/// Box-avoidance factor for the horizontal part of a d-dimensional walk.
inline DLambdaResult dlambda_sup(const WaitingTimeLaw& law, double lambda, int d) {
    require(lambda > 0, Errc::precondition_violation, "lambda must be positive");
    require(d >= 3, Errc::precondition_violation, "dimension must be at least 3");
    const auto tau = as_pmf<Rational>(law);
    const Rational half(1, 2);
    const auto signed_law = mix<Rational>({{half, tau}, {half, reflect(tau)}});
    DLambdaResult r;
    r.sup_prob = concentration(signed_law, 2.0 * lambda);
    Rational miss = 1 - r.sup_prob;
    Rational pow = 1;
    for (int i = 0; i < d - 1; ++i) pow *= miss;
    r.value = 1 - pow;
    r.non_degenerate = r.value < 1;
    return r;
}

}  // namespace polywalk
