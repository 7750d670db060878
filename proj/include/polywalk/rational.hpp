#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>

#include <gmpxx.h>

#include "polywalk/errors.hpp"

namespace polywalk {

using Rational = mpq_class;
using BigInt = mpz_class;

inline Rational make_rational(long num, unsigned long den = 1) {
    Rational r(num, den);
    r.canonicalize();
    return r;
}

static_assert(sizeof(long) == 8, "64-bit long assumed for GMP conversions");

inline Rational rational_from_int64(std::int64_t v) { return Rational(static_cast<long>(v)); }

inline Rational rational_from_uint64(std::uint64_t v) { return Rational(static_cast<unsigned long>(v)); }

/// Exact conversion of a finite double.
inline Rational rational_from_double(double v) {
    Rational r;
    mpq_set_d(r.get_mpq_t(), v);
    return r;
}

inline std::string to_string(const Rational& r) { return r.get_str(); }

/// Accepts "n", "n/d", and plain decimals such as "0.75" or "-1.25".
inline Rational parse_rational(std::string_view text) {
    std::string s(text);
    require(!s.empty(), Errc::parse_error, "empty rational");
    try {
        if (auto dot = s.find('.'); dot != std::string::npos) {
            require(s.find('/') == std::string::npos && s.find_first_of("eE") == std::string::npos,
                    Errc::parse_error, "bad decimal '" + s + "'");
            std::string digits = s.substr(0, dot) + s.substr(dot + 1);
            if (digits.empty() || digits == "-" || digits == "+") fail(Errc::parse_error, "bad decimal '" + s + "'");
            BigInt num(digits, 10);
            BigInt den;
            mpz_ui_pow_ui(den.get_mpz_t(), 10, s.size() - dot - 1);
            Rational r(num, den);
            r.canonicalize();
            return r;
        }
        Rational r(s, 10);
        require(r.get_den() != 0, Errc::parse_error, "zero denominator in '" + s + "'");
        r.canonicalize();
        return r;
    } catch (const std::invalid_argument&) {
        fail(Errc::parse_error, "bad rational '" + s + "'");
    }
}

/// Arithmetic-mode traits shared by the exact (Rational) and floating (double) weight types.
template <class W>
struct WeightTraits;

template <>
struct WeightTraits<Rational> {
    static constexpr bool exact = true;
    static constexpr const char* mode_name = "exact";
    static Rational zero() { return Rational(0); }
    static Rational one() { return Rational(1); }
    static Rational from_int(std::int64_t v) { return rational_from_int64(v); }
    static Rational ratio(std::int64_t num, std::int64_t den) {
        Rational r = from_int(num) / from_int(den);
        return r;
    }
    static double to_double(const Rational& r) { return r.get_d(); }
    static bool equal(const Rational& a, const Rational& b) { return a == b; }
    static bool less_equal(const Rational& a, const Rational& b) { return a <= b; }
    static bool is_one(const Rational& a) { return a == 1; }
};

template <>
struct WeightTraits<double> {
    static constexpr bool exact = false;
    static constexpr const char* mode_name = "float";
    static constexpr double tolerance = 1e-12;
    static double zero() { return 0.0; }
    static double one() { return 1.0; }
    static double from_int(std::int64_t v) { return static_cast<double>(v); }
    static double ratio(std::int64_t num, std::int64_t den) {
        return static_cast<double>(num) / static_cast<double>(den);
    }
    static double to_double(double v) { return v; }
    static bool equal(double a, double b) { return std::abs(a - b) <= tolerance; }
    static bool less_equal(double a, double b) { return a <= b + tolerance; }
    static bool is_one(double a) { return std::abs(a - 1.0) <= tolerance; }
};

}  // namespace polywalk
