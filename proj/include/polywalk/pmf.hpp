#pragma once

// Exact and floating arithmetic on finitely supported integer laws.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "polywalk/errors.hpp"
#include "polywalk/rational.hpp"

namespace polywalk {

inline constexpr std::size_t kDefaultSupportCap = std::size_t{1} << 24;

enum class PmfMode { exact, floating };

/// Law on the integers with finite, tight support. Weight i belongs to offset() + i.
template <class W>
class LatticePMF {
public:
    using weight_type = W;
    using traits = WeightTraits<W>;

    LatticePMF() : offset_(0), weights_{traits::one()} {}

    /// Validates nonnegativity and unit mass, then trims zero weights at both ends.
    static LatticePMF from_weights(std::int64_t offset, std::vector<W> weights) {
        require(!weights.empty(), Errc::invalid_pmf, "empty weight vector");
        W total = traits::zero();
        for (const W& w : weights) {
            require(w >= 0, Errc::invalid_pmf, "negative weight");
            total += w;
        }
        require(traits::is_one(total), Errc::invalid_pmf, "weights do not sum to one");
        return trusted(offset, std::move(weights));
    }

    /// Skips the mass check; used by operations whose output is a law by construction.
    static LatticePMF trusted(std::int64_t offset, std::vector<W> weights) {
        LatticePMF p;
        std::size_t lo = 0;
        std::size_t hi = weights.size();
        while (lo < hi && weights[lo] == 0) ++lo;
        while (hi > lo && weights[hi - 1] == 0) --hi;
        require(lo < hi, Errc::invalid_pmf, "law without mass");
        p.offset_ = offset + static_cast<std::int64_t>(lo);
        p.weights_.assign(std::make_move_iterator(weights.begin() + static_cast<std::ptrdiff_t>(lo)),
                          std::make_move_iterator(weights.begin() + static_cast<std::ptrdiff_t>(hi)));
        return p;
    }

    static LatticePMF point_mass(std::int64_t x) {
        LatticePMF p;
        p.offset_ = x;
        return p;
    }

    std::int64_t offset() const noexcept { return offset_; }
    std::int64_t min_support() const noexcept { return offset_; }
    std::int64_t max_support() const noexcept {
        return offset_ + static_cast<std::int64_t>(weights_.size()) - 1;
    }
    std::size_t size() const noexcept { return weights_.size(); }
    std::span<const W> weights() const noexcept { return weights_; }
    static constexpr PmfMode mode() noexcept { return traits::exact ? PmfMode::exact : PmfMode::floating; }

    W at(std::int64_t x) const {
        if (x < offset_ || x > max_support()) return traits::zero();
        return weights_[static_cast<std::size_t>(x - offset_)];
    }

    W total_mass() const {
        W s = traits::zero();
        for (const W& w : weights_) s += w;
        return s;
    }

    friend bool operator==(const LatticePMF& a, const LatticePMF& b) {
        return a.offset_ == b.offset_ && a.weights_ == b.weights_;
    }

private:
    std::int64_t offset_;
    std::vector<W> weights_;
};

using ExactPMF = LatticePMF<Rational>;
using FloatPMF = LatticePMF<double>;

template <class W>
struct MomentSummary {
    W mean;
    W variance;
    W second_moment;
};

struct SymmetryReport {
    bool symmetric = false;
    bool unimodal = false;
};

template <class W>
struct MixComponent {
    W weight;
    LatticePMF<W> law;
};

template <class W>
struct XLaw {
    LatticePMF<W> law;
    W truncation_mass;  // P(G > g_max), discarded before renormalization
};

inline FloatPMF to_floating(const ExactPMF& p) {
    std::vector<double> w;
    w.reserve(p.size());
    for (const auto& x : p.weights()) w.push_back(x.get_d());
    return FloatPMF::trusted(p.offset(), std::move(w));
}

template <class W>
LatticePMF<W> uniform_pmf(std::int64_t a, std::int64_t b) {
    require(a <= b, Errc::invalid_interval, "uniform_pmf requires a <= b");
    const auto n = b - a + 1;
    return LatticePMF<W>::trusted(a, std::vector<W>(static_cast<std::size_t>(n), WeightTraits<W>::ratio(1, n)));
}

template <class W>
LatticePMF<W> mix(std::span<const MixComponent<W>> components) {
    using T = WeightTraits<W>;
    require(!components.empty(), Errc::invalid_mixture, "no components");
    W total = T::zero();
    std::int64_t lo = std::numeric_limits<std::int64_t>::max();
    std::int64_t hi = std::numeric_limits<std::int64_t>::min();
    for (const auto& c : components) {
        require(c.weight >= 0, Errc::invalid_mixture, "negative mixture weight");
        total += c.weight;
        lo = std::min(lo, c.law.min_support());
        hi = std::max(hi, c.law.max_support());
    }
    require(T::is_one(total), Errc::invalid_mixture, "mixture weights do not sum to one");
    std::vector<W> acc(static_cast<std::size_t>(hi - lo + 1), T::zero());
    for (const auto& c : components) {
        const auto base = static_cast<std::size_t>(c.law.offset() - lo);
        const auto w = c.law.weights();
        for (std::size_t i = 0; i < w.size(); ++i) acc[base + i] += c.weight * w[i];
    }
    return LatticePMF<W>::trusted(lo, std::move(acc));
}

template <class W>
LatticePMF<W> mix(std::initializer_list<MixComponent<W>> components) {
    return mix(std::span<const MixComponent<W>>(components.begin(), components.size()));
}

template <class W>
LatticePMF<W> convolve(const LatticePMF<W>& p, const LatticePMF<W>& q, std::size_t cap = kDefaultSupportCap) {
    const std::size_t n = p.size() + q.size() - 1;
    require(n <= cap, Errc::support_overflow,
            "convolution support " + std::to_string(n) + " exceeds cap " + std::to_string(cap));
    std::vector<W> out(n, WeightTraits<W>::zero());
    const auto a = p.weights();
    const auto b = q.weights();
    for (std::size_t i = 0; i < a.size(); ++i) {
        for (std::size_t j = 0; j < b.size(); ++j) out[i + j] += a[i] * b[j];
    }
    return LatticePMF<W>::trusted(p.offset() + q.offset(), std::move(out));
}

/// m-fold self-convolution by repeated squaring.
template <class W>
LatticePMF<W> convolution_power(const LatticePMF<W>& p, std::uint64_t m, std::size_t cap = kDefaultSupportCap) {
    LatticePMF<W> result = LatticePMF<W>::point_mass(0);
    LatticePMF<W> base = p;
    bool first = true;
    while (m > 0) {
        if (m & 1u) {
            result = first ? base : convolve(result, base, cap);
            first = false;
        }
        m >>= 1u;
        if (m > 0) base = convolve(base, base, cap);
    }
    return result;
}

template <class W>
LatticePMF<W> reflect(const LatticePMF<W>& p) {
    const auto w = p.weights();
    std::vector<W> out(w.rbegin(), w.rend());
    return LatticePMF<W>::trusted(-p.max_support(), std::move(out));
}

template <class W>
MomentSummary<W> moments(const LatticePMF<W>& p) {
    using T = WeightTraits<W>;
    W mean = T::zero();
    W second = T::zero();
    const auto w = p.weights();
    for (std::size_t i = 0; i < w.size(); ++i) {
        const W x = T::from_int(p.offset() + static_cast<std::int64_t>(i));
        const W wx = w[i] * x;
        mean += wx;
        second += wx * x;
    }
    W var = second - mean * mean;
    if constexpr (!T::exact) var = std::max(var, 0.0);
    return {mean, var, second};
}

template <class W>
SymmetryReport is_symmetric_unimodal(const LatticePMF<W>& p) {
    using T = WeightTraits<W>;
    SymmetryReport r;
    r.symmetric = p.min_support() == -p.max_support();
    if (r.symmetric) {
        const auto w = p.weights();
        for (std::size_t i = 0, j = w.size() - 1; i < j; ++i, --j) {
            if (!T::equal(w[i], w[j])) {
                r.symmetric = false;
                break;
            }
        }
    }
    r.unimodal = true;
    for (std::int64_t x = 0; x < p.max_support() && r.unimodal; ++x) {
        if (!T::less_equal(p.at(x + 1), p.at(x))) r.unimodal = false;
    }
    for (std::int64_t x = 0; x > p.min_support() && r.unimodal; --x) {
        if (!T::less_equal(p.at(x - 1), p.at(x))) r.unimodal = false;
    }
    return r;
}

template <class W>
W max_point_prob(const LatticePMF<W>& p) {
    const auto w = p.weights();
    return *std::max_element(w.begin(), w.end());
}

/// Mass of {x : |x| < c}, strict inequality.
template <class W>
W interval_mass(const LatticePMF<W>& p, double c) {
    require(c > 0.0, Errc::precondition_violation, "interval_mass requires c > 0");
    const auto m = static_cast<std::int64_t>(std::ceil(c)) - 1;
    W s = WeightTraits<W>::zero();
    for (std::int64_t x = std::max(-m, p.min_support()); x <= std::min(m, p.max_support()); ++x) s += p.at(x);
    return s;
}

/// Concentration function: sup_x p([x, x + lambda]).
template <class W>
W concentration(const LatticePMF<W>& p, double lambda) {
    require(lambda >= 0.0, Errc::precondition_violation, "concentration requires lambda >= 0");
    const auto w = p.weights();
    const double span_atoms = std::floor(lambda) + 1.0;
    const std::size_t k = span_atoms >= static_cast<double>(w.size()) ? w.size() : static_cast<std::size_t>(span_atoms);
    W window = WeightTraits<W>::zero();
    for (std::size_t i = 0; i < k; ++i) window += w[i];
    W best = window;
    for (std::size_t i = k; i < w.size(); ++i) {
        window += w[i];
        window -= w[i - k];
        if (best < window) best = window;
    }
    return best;
}

namespace detail {

/// Adds weight * (law + reflect(law)) / 2 into a dense accumulator starting at acc_offset.
template <class W>
void add_symmetrized(std::vector<W>& acc, std::int64_t acc_offset, const LatticePMF<W>& law, const W& weight) {
    const W half = weight / W(2);
    const auto w = law.weights();
    for (std::size_t i = 0; i < w.size(); ++i) {
        const std::int64_t x = law.offset() + static_cast<std::int64_t>(i);
        const W h = half * w[i];
        acc[static_cast<std::size_t>(x - acc_offset)] += h;
        acc[static_cast<std::size_t>(-x - acc_offset)] += h;
    }
}

}  // namespace detail

/// Law of eps * sum_{i<=g} (-1)^i T_i with T_i iid tau and eps a fair sign.
template <class W>
LatticePMF<W> alternating_sum_law(const LatticePMF<W>& tau, std::uint64_t g, std::size_t cap = kDefaultSupportCap) {
    require(tau.min_support() >= 0, Errc::precondition_violation, "tau must live on the nonnegative integers");
    require(g >= 1, Errc::precondition_violation, "g must be positive");
    const auto rtau = reflect(tau);
    LatticePMF<W> y = rtau;
    for (std::uint64_t i = 2; i <= g; ++i) y = convolve(y, (i % 2 == 1) ? rtau : tau, cap);
    const std::int64_t r = std::max(std::abs(y.min_support()), std::abs(y.max_support()));
    std::vector<W> acc(static_cast<std::size_t>(2 * r + 1), WeightTraits<W>::zero());
    detail::add_symmetrized(acc, -r, y, WeightTraits<W>::one());
    return LatticePMF<W>::trusted(-r, std::move(acc));
}

/// Exact law of X = eps * sum_{i<=G} (-1)^i T_i with P(G=g) = (2/3)(1/3)^(g-1), G cut at g_max and renormalized.
template <class W>
XLaw<W> law_of_X(const LatticePMF<W>& tau, std::uint64_t g_max = 20, std::size_t cap = kDefaultSupportCap) {
    using T = WeightTraits<W>;
    require(tau.min_support() >= 0, Errc::precondition_violation, "tau must live on the nonnegative integers");
    require(g_max >= 1, Errc::precondition_violation, "g_max must be positive");
    const W third = T::ratio(1, 3);
    W tail = T::one();
    for (std::uint64_t g = 0; g < g_max; ++g) tail *= third;
    const W norm = T::one() - tail;

    const std::int64_t reach = static_cast<std::int64_t>(g_max) * tau.max_support();
    require(static_cast<std::size_t>(2 * reach + 1) <= cap, Errc::support_overflow, "law_of_X support exceeds cap");
    std::vector<W> acc(static_cast<std::size_t>(2 * reach + 1), T::zero());

    const auto rtau = reflect(tau);
    LatticePMF<W> y = LatticePMF<W>::point_mass(0);
    W pg = T::ratio(2, 3);
    for (std::uint64_t g = 1; g <= g_max; ++g) {
        y = convolve(y, (g % 2 == 1) ? rtau : tau, cap);
        detail::add_symmetrized(acc, -reach, y, W(pg / norm));
        pg *= third;
    }
    return {LatticePMF<W>::trusted(-reach, std::move(acc)), tail};
}

// Text format: header "offset=<int> mode=<exact|float>", then one weight per line.

template <class W>
std::string to_text(const LatticePMF<W>& p) {
    std::string out = "offset=" + std::to_string(p.offset()) + " mode=" + WeightTraits<W>::mode_name + "\n";
    for (const auto& w : p.weights()) {
        if constexpr (WeightTraits<W>::exact) {
            out += w.get_num().get_str() + "/" + w.get_den().get_str();
        } else {
            char buf[64];
            auto res = std::to_chars(buf, buf + sizeof(buf), w);
            out.append(buf, res.ptr);
        }
        out += '\n';
    }
    return out;
}

inline PmfMode pmf_text_mode(std::string_view text) {
    const auto eol = text.find('\n');
    const auto header = text.substr(0, eol);
    if (header.find("mode=exact") != std::string_view::npos) return PmfMode::exact;
    if (header.find("mode=float") != std::string_view::npos) return PmfMode::floating;
    fail(Errc::parse_error, "pmf header lacks mode");
}

template <class W>
LatticePMF<W> parse_pmf(std::string_view text) {
    std::istringstream in{std::string(text)};
    std::string line;
    require(static_cast<bool>(std::getline(in, line)), Errc::parse_error, "missing pmf header");
    std::int64_t offset = 0;
    std::string mode;
    {
        std::istringstream h(line);
        std::string tok;
        bool have_offset = false;
        while (h >> tok) {
            if (tok.rfind("offset=", 0) == 0) {
                const auto v = tok.substr(7);
                auto res = std::from_chars(v.data(), v.data() + v.size(), offset);
                require(res.ec == std::errc{} && res.ptr == v.data() + v.size(), Errc::parse_error,
                        "bad offset '" + v + "'");
                have_offset = true;
            } else if (tok.rfind("mode=", 0) == 0) {
                mode = tok.substr(5);
            } else {
                fail(Errc::parse_error, "unknown header token '" + tok + "'");
            }
        }
        require(have_offset, Errc::parse_error, "pmf header lacks offset");
    }
    require(mode == WeightTraits<W>::mode_name, Errc::parse_error, "pmf mode '" + mode + "' does not match reader");
    std::vector<W> weights;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        if constexpr (WeightTraits<W>::exact) {
            weights.push_back(parse_rational(line));
        } else {
            double v = 0;
            auto res = std::from_chars(line.data(), line.data() + line.size(), v);
            require(res.ec == std::errc{} && res.ptr == line.data() + line.size(), Errc::parse_error,
                    "bad weight on line " + std::to_string(lineno));
            weights.push_back(v);
        }
    }
    return LatticePMF<W>::from_weights(offset, std::move(weights));
}

}  // namespace polywalk
