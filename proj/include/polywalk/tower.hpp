#pragma once

// Positive magnitudes far beyond double range, stored as iterated exponentials exp^h(v).
// Canonical form: h > 0 only when exp(v) would overflow, so the ordering is (h, v) lexicographic.

#include <cmath>
#include <cstdio>
#include <limits>
#include <string>

#include "polywalk/errors.hpp"

namespace polywalk {

class Tower {
public:
    Tower() = default;
    Tower(double v) : height_(0), value_(v) {}  // NOLINT: implicit from double is intended
    Tower(int height, double v) : height_(height), value_(v) { normalize(); }

    int height() const noexcept { return height_; }
    double top() const noexcept { return value_; }
    bool is_double() const noexcept { return height_ == 0; }
    double to_double() const noexcept {
        return height_ == 0 ? value_ : std::numeric_limits<double>::infinity();
    }

    Tower log() const {
        if (height_ == 0) {
            require(value_ > 0, Errc::precondition_violation, "log of non-positive magnitude");
            return Tower(std::log(value_));
        }
        return Tower(height_ - 1, value_);
    }

    Tower exp() const {
        if (height_ == 0) {
            const double e = std::exp(value_);
            if (std::isfinite(e)) return Tower(e);
        }
        return Tower(height_ + 1, value_);
    }

    friend bool operator<(const Tower& a, const Tower& b) {
        if (a.height_ != b.height_) return a.height_ < b.height_;
        return a.value_ < b.value_;
    }
    friend bool operator>(const Tower& a, const Tower& b) { return b < a; }
    friend bool operator<=(const Tower& a, const Tower& b) { return !(b < a); }
    friend bool operator>=(const Tower& a, const Tower& b) { return !(a < b); }
    friend bool operator==(const Tower& a, const Tower& b) {
        return a.height_ == b.height_ && a.value_ == b.value_;
    }

    std::string to_string() const {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%.17g", value_);
        if (height_ == 0) return buf;
        std::string s = buf;
        for (int i = 0; i < height_; ++i) s = "exp(" + s + ")";
        return s;
    }

private:
    void normalize() {
        while (height_ > 0) {
            const double e = std::exp(value_);
            if (!std::isfinite(e)) break;
            value_ = e;
            --height_;
        }
    }

    int height_ = 0;
    double value_ = 0.0;
};

inline Tower tower_sub(const Tower& a, const Tower& b);
inline Tower tower_add(const Tower& a, const Tower& b);

/// a + s for a double s of either sign; the result must stay nonnegative when a is huge.
inline Tower tower_add_double(const Tower& a, double s) {
    if (s == 0.0) return a;
    if (a.is_double()) {
        const double r = a.top() + s;
        if (std::isfinite(r)) return Tower(r);
    }
    return s >= 0 ? tower_add(a, Tower(s)) : tower_sub(a, Tower(-s));
}

/// Sum of two nonnegative magnitudes.
inline Tower tower_add(const Tower& x, const Tower& y) {
    const Tower& a = (x < y) ? y : x;
    const Tower& b = (x < y) ? x : y;
    if (b.is_double() && b.top() <= 0) return tower_add_double(a, b.top());
    if (a.is_double()) {
        const double s = a.top() + b.top();
        if (std::isfinite(s)) return Tower(s);
        return Tower(1, std::log(a.top()) + std::log1p(b.top() / a.top()));
    }
    const Tower la = a.log();
    const Tower lb = b.log();
    const Tower d = tower_sub(la, lb);
    if (d > Tower(40.0)) return a;
    return tower_add_double(la, std::log1p(std::exp(-d.to_double()))).exp();
}

/// a - b for a >= b >= 0.
inline Tower tower_sub(const Tower& a, const Tower& b) {
    require(b <= a, Errc::precondition_violation, "tower_sub would go negative");
    if (a.is_double()) return Tower(a.top() - b.top());
    if (b.is_double() && b.top() <= 0) return tower_add_double(a, -b.top());
    const Tower la = a.log();
    const Tower lb = b.log();
    const Tower d = tower_sub(la, lb);
    if (d > Tower(40.0)) return a;
    const double dd = d.to_double();
    if (dd == 0.0) return Tower(0.0);
    return tower_add_double(la, std::log1p(-std::exp(-dd))).exp();
}

/// c * a for c > 0.
inline Tower tower_scale(double c, const Tower& a) {
    require(c > 0, Errc::precondition_violation, "tower_scale needs a positive factor");
    if (a.is_double()) {
        const double r = c * a.top();
        if (std::isfinite(r)) return Tower(r);
        return Tower(1, std::log(c) + std::log(a.top()));
    }
    return tower_add_double(a.log(), std::log(c)).exp();
}

/// a - b as a double, +-inf when the gap leaves double range.
inline double tower_difference(const Tower& a, const Tower& b) {
    if (b <= a) return tower_sub(a, b).to_double();
    return -tower_sub(b, a).to_double();
}

/// coef * scale + offset, the log-magnitude form used for hierarchy parameters.
struct LogLinear {
    double coef = 0.0;
    double offset = 0.0;

    Tower evaluate(const Tower& scale) const {
        if (coef == 0.0) return Tower(offset);
        if (scale.is_double()) {
            const double r = coef * scale.top() + offset;
            if (std::isfinite(r)) return Tower(r);
        }
        require(coef > 0, Errc::precondition_violation, "negative coefficient on an unbounded scale");
        return tower_add_double(tower_scale(coef, scale), offset);
    }

    /// Signed value; +-inf when it leaves double range.
    double evaluate_signed(const Tower& scale) const {
        if (coef == 0.0) return offset;
        if (scale.is_double()) return coef * scale.top() + offset;
        return coef > 0 ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
    }

    friend LogLinear operator-(const LogLinear& a, const LogLinear& b) {
        return {a.coef - b.coef, a.offset - b.offset};
    }
    friend LogLinear operator+(const LogLinear& a, const LogLinear& b) {
        return {a.coef + b.coef, a.offset + b.offset};
    }
    friend LogLinear operator*(double s, const LogLinear& a) { return {s * a.coef, s * a.offset}; }
};

}  // namespace polywalk
