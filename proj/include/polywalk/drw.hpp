#pragma once

// Directionally reinforced random walk on Z^d: the walker holds an axis direction for an iid
// waiting time, then turns to one of the other 2d-1 directions (or one of the 2d-2 perpendicular ones).

#include <algorithm>
#include <cstdint>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "polywalk/errors.hpp"
#include "polywalk/rng.hpp"
#include "polywalk/waiting_time.hpp"
#include "polywalk/walks.hpp"

namespace polywalk {

/// Signed unit vector along one axis.
struct Direction {
    int axis = 0;
    int sign = 1;

    /// +-(axis + 1), the form used in trace exports.
    int signed_index() const noexcept { return sign * (axis + 1); }
    friend bool operator==(const Direction&, const Direction&) = default;
};

enum class TurnRule { full, perpendicular };

struct DRWConfig {
    int d = 2;
    WaitingTimeLaw law{{{Rational(1), 0}}};
    TurnRule rule = TurnRule::full;
    std::size_t phases = 1;
    std::optional<Direction> initial_direction;  // default: axis 0 with a fair sign
};

struct Phase {
    Direction direction;
    std::uint64_t duration = 0;
    std::vector<std::int64_t> start;
};

struct DRWTrace {
    int d = 0;
    TurnRule rule = TurnRule::full;
    std::vector<Phase> phases;
    std::vector<std::int64_t> final_position;
};

namespace detail {

inline Direction next_direction(Direction cur, int d, TurnRule rule, RandomStream& rng) {
    if (rule == TurnRule::full) {
        // 2d - 1 candidates: every signed axis except the current one
        auto idx = static_cast<int>(rng.uniform_below(static_cast<std::uint64_t>(2 * d - 1)));
        const int cur_idx = 2 * cur.axis + (cur.sign > 0 ? 0 : 1);
        if (idx >= cur_idx) ++idx;
        return {idx / 2, (idx % 2 == 0) ? 1 : -1};
    }
    auto idx = static_cast<int>(rng.uniform_below(static_cast<std::uint64_t>(2 * d - 2)));
    int axis = idx / 2;
    if (axis >= cur.axis) ++axis;
    return {axis, (idx % 2 == 0) ? 1 : -1};
}

}  // namespace detail

inline DRWTrace simulate_drw(const DRWConfig& cfg, RandomStream& rng) {
    require(cfg.d >= 1, Errc::precondition_violation, "dimension must be positive");
    require(cfg.rule == TurnRule::full || cfg.d >= 2, Errc::precondition_violation,
            "perpendicular turns need d >= 2");
    require(cfg.phases >= 1, Errc::precondition_violation, "at least one phase is required");
    detail::check_sampling_range(cfg.law.y_max(), "simulate_drw");

    DRWTrace tr;
    tr.d = cfg.d;
    tr.rule = cfg.rule;
    tr.phases.reserve(cfg.phases);
    std::vector<std::int64_t> pos(static_cast<std::size_t>(cfg.d), 0);
    Direction dir = cfg.initial_direction.value_or(Direction{0, 0});
    if (!cfg.initial_direction) dir.sign = rng.fair_sign();
    require(dir.axis >= 0 && dir.axis < cfg.d && (dir.sign == 1 || dir.sign == -1), Errc::precondition_violation,
            "initial direction out of range");

    const std::size_t L = cfg.law.levels();
    for (std::size_t j = 0; j < cfg.phases; ++j) {
        if (j > 0) dir = detail::next_direction(dir, cfg.d, cfg.rule, rng);
        const auto level = cfg.law.sample_level(L, rng);
        const auto t = rng.uniform_inclusive(cfg.law.y(level));
        tr.phases.push_back({dir, t, pos});
        pos[static_cast<std::size_t>(dir.axis)] += dir.sign * static_cast<std::int64_t>(t);
    }
    tr.final_position = pos;
    return tr;
}

/// Positions where a vertical phase gives way to a horizontal one (d = 2), starting from the origin;
/// a trailing vertical run contributes its end point.
inline WalkPath embedded_walk(const DRWTrace& tr) {
    require(tr.d == 2, Errc::dimension_mismatch, "embedded walk needs d = 2");
    WalkPath path(2);
    for (std::size_t j = 1; j < tr.phases.size(); ++j) {
        if (tr.phases[j - 1].direction.axis == 1 && tr.phases[j].direction.axis == 0) path.push(tr.phases[j].start);
    }
    if (!tr.phases.empty() && tr.phases.back().direction.axis == 1) path.push(tr.final_position);
    return path;
}

/// Lengths of the horizontal runs (number of consecutive horizontal phases) between vertical phases.
inline std::vector<std::size_t> horizontal_run_lengths(const DRWTrace& tr) {
    std::vector<std::size_t> runs;
    std::size_t cur = 0;
    for (const auto& ph : tr.phases) {
        if (ph.direction.axis == 0) {
            ++cur;
        } else if (cur > 0) {
            runs.push_back(cur);
            cur = 0;
        }
    }
    return runs;
}

struct PointEvents {
    std::size_t visits = 0;             // integer times spent at the point, phase interiors included
    std::size_t endpoint_visits = 0;    // phase starts and the final position located at the point
    std::size_t direction_changes = 0;  // phase boundaries located at the point
};

inline PointEvents point_events(const DRWTrace& tr, std::span<const std::int64_t> point) {
    require(point.size() == static_cast<std::size_t>(tr.d), Errc::dimension_mismatch, "point has wrong dimension");
    PointEvents ev;
    auto equal = [&](const std::vector<std::int64_t>& p) { return std::equal(p.begin(), p.end(), point.begin()); };
    for (std::size_t j = 0; j < tr.phases.size(); ++j) {
        const auto& ph = tr.phases[j];
        if (equal(ph.start)) {
            ++ev.endpoint_visits;
            if (j > 0) ++ev.direction_changes;
        }
        const auto ax = static_cast<std::size_t>(ph.direction.axis);
        bool aligned = true;
        for (std::size_t c = 0; c < point.size(); ++c)
            if (c != ax && ph.start[c] != point[c]) aligned = false;
        if (!aligned) continue;
        const std::int64_t off = (point[ax] - ph.start[ax]) * ph.direction.sign;
        const auto span = std::max<std::uint64_t>(ph.duration, 1);
        if (off >= 0 && static_cast<std::uint64_t>(off) < span) ++ev.visits;
    }
    if (equal(tr.final_position)) {
        ++ev.visits;
        ++ev.endpoint_visits;
    }
    return ev;
}

inline std::string trace_to_csv(const DRWTrace& tr) {
    static const char* names[] = {"x", "y", "z", "w"};
    std::ostringstream os;
    os << "phase_index,direction,duration";
    for (int c = 0; c < tr.d; ++c) os << ",start_" << (c < 4 ? std::string(names[c]) : std::to_string(c));
    os << '\n';
    for (std::size_t j = 0; j < tr.phases.size(); ++j) {
        const auto& ph = tr.phases[j];
        os << j << ',' << ph.direction.signed_index() << ',' << ph.duration;
        for (auto v : ph.start) os << ',' << v;
        os << '\n';
    }
    return os.str();
}

}  // namespace polywalk
