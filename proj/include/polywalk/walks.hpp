#pragma once

// Lattice walks driven by hierarchical increments, and detectors for returns, sign changes,
// level crossings, V_n and segment/box hits.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "polywalk/errors.hpp"
#include "polywalk/pmf.hpp"
#include "polywalk/rational.hpp"
#include "polywalk/rng.hpp"
#include "polywalk/waiting_time.hpp"

namespace polywalk {

/// Positions S_0 = 0, S_1, ..., S_n of a dim-dimensional integer walk, stored row-major.
class WalkPath {
public:
    explicit WalkPath(int dim = 1) : dim_(dim), coords_(static_cast<std::size_t>(dim), 0) {
        require(dim >= 1, Errc::precondition_violation, "walk dimension must be positive");
    }

    int dim() const noexcept { return dim_; }
    std::size_t size() const noexcept { return coords_.size() / static_cast<std::size_t>(dim_); }
    std::size_t steps() const noexcept { return size() - 1; }

    std::span<const std::int64_t> position(std::size_t n) const {
        require(n < size(), Errc::out_of_range, "path index out of range");
        return std::span<const std::int64_t>(coords_).subspan(n * static_cast<std::size_t>(dim_),
                                                               static_cast<std::size_t>(dim_));
    }
    std::int64_t at(std::size_t n, int coord) const { return position(n)[static_cast<std::size_t>(coord)]; }

    void push(std::span<const std::int64_t> pos) {
        require(pos.size() == static_cast<std::size_t>(dim_), Errc::dimension_mismatch, "position has wrong dimension");
        coords_.insert(coords_.end(), pos.begin(), pos.end());
    }

    /// Appends position(last) + step.
    void advance(std::span<const std::int64_t> step) {
        require(step.size() == static_cast<std::size_t>(dim_), Errc::dimension_mismatch, "step has wrong dimension");
        const std::size_t base = coords_.size() - static_cast<std::size_t>(dim_);
        for (std::size_t c = 0; c < step.size(); ++c) coords_.push_back(coords_[base + c] + step[c]);
    }

    /// Path with the given positions, which must start at the origin.
    static WalkPath from_rows(int dim, const std::vector<std::vector<std::int64_t>>& rows) {
        require(!rows.empty(), Errc::precondition_violation, "path needs at least the origin");
        for (auto x : rows.front()) require(x == 0, Errc::precondition_violation, "path must start at the origin");
        WalkPath p(dim);
        for (std::size_t i = 1; i < rows.size(); ++i) p.push(rows[i]);
        return p;
    }

    /// One-dimensional path 0, s_1, ..., s_n.
    static WalkPath line(std::initializer_list<std::int64_t> values) {
        WalkPath p(1);
        bool first = true;
        for (auto v : values) {
            if (first) {
                require(v == 0, Errc::precondition_violation, "path must start at the origin");
                first = false;
                continue;
            }
            p.push(std::span<const std::int64_t>(&v, 1));
        }
        return p;
    }

private:
    int dim_;
    std::vector<std::int64_t> coords_;
};

struct Interval {
    double lo = 0;
    double hi = 0;
};

/// Closed axis-parallel box.
struct Box {
    std::vector<Interval> sides;

    Box() = default;
    explicit Box(std::vector<Interval> s) : sides(std::move(s)) {
        for (const auto& iv : sides) require(iv.lo <= iv.hi, Errc::invalid_interval, "box side with lo > hi");
    }
    static Box cube(int dim, double half_width) {
        return Box(std::vector<Interval>(static_cast<std::size_t>(dim), Interval{-half_width, half_width}));
    }
    int dim() const noexcept { return static_cast<int>(sides.size()); }
};

enum class EventKind { return_to_origin, sign_change, level_crossing, interval_hit, v_n, segment_hit };

inline const char* to_string(EventKind k) {
    switch (k) {
        case EventKind::return_to_origin: return "return";
        case EventKind::sign_change: return "sign_change";
        case EventKind::level_crossing: return "level_crossing";
        case EventKind::interval_hit: return "interval_hit";
        case EventKind::v_n: return "V_n";
        case EventKind::segment_hit: return "segment_hit";
    }
    return "unknown";
}

struct EventRecord {
    EventKind kind;
    std::size_t n = 0;      // step index; two-step events refer to (S_n, S_{n+1})
    int coord = -1;         // -1 when the event involves all coordinates
    std::int64_t payload = 0;

    friend bool operator==(const EventRecord&, const EventRecord&) = default;
};

// Increments ----------------------------------------------------------------------------------

struct IncrementDraw {
    std::int64_t x = 0;
    std::uint32_t flips = 0;           // G
    int sign = 1;                      // epsilon
    std::vector<std::size_t> kappas;   // level index of each of the G waiting times
};

/// X = eps * sum_{i<=G} (-1)^i T_i. With a level K, each T_i is drawn from the K-truncated law.
inline IncrementDraw sample_increment(const WaitingTimeLaw& law, std::optional<std::size_t> K, RandomStream& rng) {
    const std::size_t level = K.value_or(law.levels());
    require(level >= 1 && level <= law.levels(), Errc::out_of_range, "truncation level out of range");
    detail::check_sampling_range(law.y(level), "sample_increment");
    IncrementDraw d;
    d.sign = rng.fair_sign();
    d.flips = rng.geometric_two_thirds();
    d.kappas.reserve(d.flips);
    std::int64_t sum = 0;
    for (std::uint32_t i = 1; i <= d.flips; ++i) {
        const auto kappa = law.sample_level(level, rng);
        d.kappas.push_back(kappa);
        const auto t = static_cast<std::int64_t>(rng.uniform_inclusive(law.y(kappa)));
        sum += (i % 2 == 0) ? t : -t;
    }
    d.x = d.sign * sum;
    return d;
}

/// Coupled increments X^{(1)|K}, ..., X^{(K)|K} sharing eps, G and the bundles.
struct CoupledIncrement {
    std::vector<std::int64_t> x;  // x[k-1] = X^{(k)|K}
    std::uint32_t flips = 0;
    std::uint32_t top_level_terms = 0;  // number of terms with kappa = K
};

/// Fills `out` in place; the bundle draw order matches sample_truncated_bundle.
inline void sample_coupled_increment(const WaitingTimeLaw& law, std::size_t K, RandomStream& rng,
                                     CoupledIncrement& out) {
    require(K >= 1 && K <= law.levels(), Errc::out_of_range, "bundle level out of range");
    detail::check_sampling_range(law.y(K), "sample_coupled_increment");
    out.x.assign(K, 0);
    out.top_level_terms = 0;
    const int sign = rng.fair_sign();
    out.flips = rng.geometric_two_thirds();
    for (std::uint32_t i = 1; i <= out.flips; ++i) {
        const std::int64_t s = (i % 2 == 0) ? 1 : -1;
        const auto kappa = law.sample_level(K, rng);
        if (kappa == K) ++out.top_level_terms;
        const auto t = static_cast<std::int64_t>(rng.uniform_inclusive(law.y(kappa)));
        for (std::size_t k = 1; k <= K; ++k) {
            const auto tk = (k < kappa) ? static_cast<std::int64_t>(detail::draw_truncated(law, k, rng)) : t;
            out.x[k - 1] += s * tk;
        }
    }
    for (auto& v : out.x) v *= sign;
}

inline CoupledIncrement sample_coupled_increment(const WaitingTimeLaw& law, std::size_t K, RandomStream& rng) {
    CoupledIncrement c;
    sample_coupled_increment(law, K, rng, c);
    return c;
}

/// d independent coordinate walks of n steps; coordinate c draws from substream c + 1.
inline WalkPath simulate_walk(int d, const WaitingTimeLaw& law, std::optional<std::size_t> K, std::size_t n,
                              const RandomStream& rng) {
    require(d >= 1, Errc::precondition_violation, "dimension must be positive");
    require(n >= 1, Errc::precondition_violation, "walk needs at least one step");
    std::vector<RandomStream> streams;
    for (int c = 0; c < d; ++c) streams.push_back(rng.substream(static_cast<std::uint16_t>(c + 1)));
    WalkPath path(d);
    std::vector<std::int64_t> step(static_cast<std::size_t>(d));
    for (std::size_t i = 0; i < n; ++i) {
        for (int c = 0; c < d; ++c) step[static_cast<std::size_t>(c)] = sample_increment(law, K, streams[c]).x;
        path.advance(step);
    }
    return path;
}

/// Walk with iid increments from a finite step law, one alias draw per coordinate and step.
inline WalkPath simulate_lattice_walk(int d, const FloatPMF& step_law, std::size_t n, const RandomStream& rng) {
    require(n >= 1, Errc::precondition_violation, "walk needs at least one step");
    const AliasTable table(step_law);
    std::vector<RandomStream> streams;
    for (int c = 0; c < d; ++c) streams.push_back(rng.substream(static_cast<std::uint16_t>(c + 1)));
    WalkPath path(d);
    std::vector<std::int64_t> step(static_cast<std::size_t>(d));
    for (std::size_t i = 0; i < n; ++i) {
        for (int c = 0; c < d; ++c) step[static_cast<std::size_t>(c)] = table.sample(streams[c]);
        path.advance(step);
    }
    return path;
}

/// Step law of the lazy unit walk: 0 w.p. 1/2, +-1 w.p. 1/4 each.
template <class W = Rational>
LatticePMF<W> lazy_step_law() {
    using T = WeightTraits<W>;
    return LatticePMF<W>::from_weights(-1, {T::ratio(1, 4), T::ratio(1, 2), T::ratio(1, 4)});
}

/// Step law of the simple walk: +-1 w.p. 1/2 each.
template <class W = Rational>
LatticePMF<W> simple_step_law() {
    using T = WeightTraits<W>;
    return LatticePMF<W>::from_weights(-1, {T::ratio(1, 2), T::zero(), T::ratio(1, 2)});
}

/// Draws (S_n, S_{n+1}) for one coordinate: S_n from its exact n-fold law, then one more step.
class StepPairSampler {
public:
    StepPairSampler(const FloatPMF& step_law, std::uint64_t n, std::size_t cap = kDefaultSupportCap)
        : n_(n), step_(step_law), at_n_(n == 0 ? FloatPMF::point_mass(0) : convolution_power(step_law, n, cap)) {}

    std::uint64_t n() const noexcept { return n_; }

    std::pair<std::int64_t, std::int64_t> sample(RandomStream& rng) const {
        const auto s = at_n_.sample(rng);
        return {s, s + step_.sample(rng)};
    }

private:
    std::uint64_t n_;
    AliasTable step_;
    AliasTable at_n_;
};

// Detectors ----------------------------------------------------------------------------------

namespace detail {
inline int sgn(std::int64_t v) { return (v > 0) - (v < 0); }
}  // namespace detail

/// Steps n with S_n * S_{n+1} < 0 (strict) or sgn(S_n) = -sgn(S_{n+1}) != 0 (literal form).
inline std::vector<EventRecord> detect_sign_change(const WalkPath& path, int coord, bool strict = true) {
    require(coord >= 0 && coord < path.dim(), Errc::out_of_range, "coordinate out of range");
    std::vector<EventRecord> out;
    for (std::size_t n = 0; n + 1 < path.size(); ++n) {
        const auto a = path.at(n, coord);
        const auto b = path.at(n + 1, coord);
        const bool hit = strict ? (detail::sgn(a) * detail::sgn(b) < 0)
                                : (detail::sgn(a) == -detail::sgn(b) && detail::sgn(a) != 0);
        if (hit) out.push_back({EventKind::sign_change, n, coord, b - a});
    }
    return out;
}

/// Steps n with level in the closed interval between S_n and S_{n+1}.
inline std::vector<EventRecord> detect_level_crossing(const WalkPath& path, int coord, double level) {
    require(coord >= 0 && coord < path.dim(), Errc::out_of_range, "coordinate out of range");
    std::vector<EventRecord> out;
    for (std::size_t n = 0; n + 1 < path.size(); ++n) {
        const auto a = static_cast<double>(path.at(n, coord));
        const auto b = static_cast<double>(path.at(n + 1, coord));
        if (std::min(a, b) <= level && level <= std::max(a, b))
            out.push_back({EventKind::level_crossing, n, coord, path.at(n + 1, coord) - path.at(n, coord)});
    }
    return out;
}

/// Steps n whose coordinate segment [S_n, S_{n+1}] meets [lo, hi].
inline std::vector<EventRecord> detect_interval_hits(const WalkPath& path, int coord, double lo, double hi) {
    require(coord >= 0 && coord < path.dim(), Errc::out_of_range, "coordinate out of range");
    std::vector<EventRecord> out;
    for (std::size_t n = 0; n + 1 < path.size(); ++n) {
        const auto a = static_cast<double>(path.at(n, coord));
        const auto b = static_cast<double>(path.at(n + 1, coord));
        if (std::min(a, b) <= hi && lo <= std::max(a, b)) out.push_back({EventKind::interval_hit, n, coord, 0});
    }
    return out;
}

/// Times n >= 1 with S_n = 0 in every coordinate.
inline std::vector<EventRecord> detect_returns(const WalkPath& path) {
    std::vector<EventRecord> out;
    for (std::size_t n = 1; n < path.size(); ++n) {
        const auto p = path.position(n);
        if (std::all_of(p.begin(), p.end(), [](auto v) { return v == 0; }))
            out.push_back({EventKind::return_to_origin, n, -1, 0});
    }
    return out;
}

/// Strict sign flip of coordinate 0 while coordinate 1 sits at 0 at both ends.
inline std::vector<EventRecord> detect_Vn(const WalkPath& path) {
    require(path.dim() == 2, Errc::dimension_mismatch, "V_n needs a two-dimensional path");
    std::vector<EventRecord> out;
    for (std::size_t n = 0; n + 1 < path.size(); ++n) {
        const auto a = path.at(n, 0);
        const auto b = path.at(n + 1, 0);
        if (detail::sgn(a) * detail::sgn(b) < 0 && path.at(n, 1) == 0 && path.at(n + 1, 1) == 0)
            out.push_back({EventKind::v_n, n, -1, b - a});
    }
    return out;
}

// Segment against box ------------------------------------------------------------------------

namespace detail {

/// Fraction num/den with den > 0, compared exactly in 128-bit arithmetic.
struct Frac {
    __int128 num;
    __int128 den;
};
inline bool frac_le(const Frac& a, const Frac& b) { return a.num * b.den <= b.num * a.den; }

inline bool all_integral(const Box& box) {
    return std::all_of(box.sides.begin(), box.sides.end(), [](const Interval& iv) {
        return iv.lo == std::floor(iv.lo) && iv.hi == std::floor(iv.hi) && std::abs(iv.lo) < 0x1.0p52 &&
               std::abs(iv.hi) < 0x1.0p52;
    });
}

/// Slab test over t in [0, 1] with rationals; endpoints and bounds given exactly.
inline bool slab_test_rational(std::span<const Rational> p0, std::span<const Rational> p1, const Box& box) {
    Rational t_lo = 0;
    Rational t_hi = 1;
    for (std::size_t c = 0; c < p0.size(); ++c) {
        const Rational lo = rational_from_double(box.sides[c].lo);
        const Rational hi = rational_from_double(box.sides[c].hi);
        const Rational d = p1[c] - p0[c];
        if (d == 0) {
            if (p0[c] < lo || p0[c] > hi) return false;
            continue;
        }
        Rational a = (lo - p0[c]) / d;
        Rational b = (hi - p0[c]) / d;
        if (b < a) std::swap(a, b);
        if (a > t_lo) t_lo = a;
        if (b < t_hi) t_hi = b;
        if (t_lo > t_hi) return false;
    }
    return true;
}

}  // namespace detail

/// Closed segment [p0, p1] against a closed box, decided exactly for integer endpoints.
inline bool segment_hits_box(std::span<const std::int64_t> p0, std::span<const std::int64_t> p1, const Box& box) {
    require(p0.size() == p1.size() && static_cast<int>(p0.size()) == box.dim(), Errc::dimension_mismatch,
            "segment and box dimensions differ");
    if (detail::all_integral(box)) {
        detail::Frac t_lo{0, 1};
        detail::Frac t_hi{1, 1};
        for (std::size_t c = 0; c < p0.size(); ++c) {
            const auto lo = static_cast<__int128>(box.sides[c].lo);
            const auto hi = static_cast<__int128>(box.sides[c].hi);
            const __int128 s = p0[c];
            const __int128 d = static_cast<__int128>(p1[c]) - s;
            if (d == 0) {
                if (s < lo || s > hi) return false;
                continue;
            }
            detail::Frac a{lo - s, d};
            detail::Frac b{hi - s, d};
            if (d < 0) {
                a = {s - lo, -d};
                b = {s - hi, -d};
                std::swap(a, b);
            }
            if (!detail::frac_le(a, t_lo)) t_lo = a;
            if (!detail::frac_le(t_hi, b)) t_hi = b;
            if (!detail::frac_le(t_lo, t_hi)) return false;
        }
        return true;
    }
    std::vector<Rational> a;
    std::vector<Rational> b;
    for (std::size_t c = 0; c < p0.size(); ++c) {
        a.push_back(rational_from_int64(p0[c]));
        b.push_back(rational_from_int64(p1[c]));
    }
    return detail::slab_test_rational(a, b, box);
}

/// Real endpoints, evaluated exactly on their binary values.
inline bool segment_hits_box(std::span<const double> p0, std::span<const double> p1, const Box& box) {
    require(p0.size() == p1.size() && static_cast<int>(p0.size()) == box.dim(), Errc::dimension_mismatch,
            "segment and box dimensions differ");
    std::vector<Rational> a;
    std::vector<Rational> b;
    for (std::size_t c = 0; c < p0.size(); ++c) {
        a.push_back(rational_from_double(p0[c]));
        b.push_back(rational_from_double(p1[c]));
    }
    return detail::slab_test_rational(a, b, box);
}

inline bool segment_hits_box(std::initializer_list<double> p0, std::initializer_list<double> p1, const Box& box) {
    return segment_hits_box(std::span<const double>(p0.begin(), p0.size()),
                            std::span<const double>(p1.begin(), p1.size()), box);
}

struct PolygonalHits {
    std::size_t count = 0;
    std::vector<std::size_t> indices;
};

inline PolygonalHits count_polygonal_hits(const WalkPath& path, const Box& box) {
    require(path.dim() == box.dim(), Errc::dimension_mismatch, "path and box dimensions differ");
    PolygonalHits h;
    for (std::size_t n = 0; n + 1 < path.size(); ++n) {
        if (segment_hits_box(path.position(n), path.position(n + 1), box)) h.indices.push_back(n);
    }
    h.count = h.indices.size();
    return h;
}

inline std::vector<EventRecord> detect_segment_hits(const WalkPath& path, const Box& box) {
    std::vector<EventRecord> out;
    for (auto n : count_polygonal_hits(path, box).indices) out.push_back({EventKind::segment_hit, n, -1, 0});
    return out;
}

// CSV ----------------------------------------------------------------------------------------

inline std::string events_to_csv(std::span<const EventRecord> events) {
    std::ostringstream os;
    os << "kind,n,coord,payload\n";
    for (const auto& e : events) os << to_string(e.kind) << ',' << e.n << ',' << e.coord << ',' << e.payload << '\n';
    return os.str();
}

inline std::string path_to_csv(const WalkPath& path) {
    std::ostringstream os;
    os << "n";
    for (int c = 0; c < path.dim(); ++c) os << ",x" << c;
    os << '\n';
    for (std::size_t n = 0; n < path.size(); ++n) {
        os << n;
        for (auto v : path.position(n)) os << ',' << v;
        os << '\n';
    }
    return os.str();
}

}  // namespace polywalk
