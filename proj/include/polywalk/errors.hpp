#pragma once

#include <stdexcept>
#include <string>

namespace polywalk {

enum class Errc {
    invalid_interval,
    invalid_mixture,
    invalid_pmf,
    support_overflow,
    precondition_violation,
    out_of_range,
    sampling_range,
    infeasible_window,
    dimension_mismatch,
    hypothesis_violation,
    degenerate_input,
    parse_error,
};

inline const char* to_string(Errc c) {
    switch (c) {
        case Errc::invalid_interval: return "invalid-interval";
        case Errc::invalid_mixture: return "invalid-mixture";
        case Errc::invalid_pmf: return "invalid-pmf";
        case Errc::support_overflow: return "support-overflow";
        case Errc::precondition_violation: return "precondition-violation";
        case Errc::out_of_range: return "out-of-range";
        case Errc::sampling_range: return "sampling-range";
        case Errc::infeasible_window: return "infeasible-window";
        case Errc::dimension_mismatch: return "dimension-mismatch";
        case Errc::hypothesis_violation: return "hypothesis-violation";
        case Errc::degenerate_input: return "degenerate-input";
        case Errc::parse_error: return "parse-error";
    }
    return "unknown";
}

class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& what) { throw Error(code, what); }

inline void require(bool cond, Errc code, const std::string& what) {
    if (!cond) fail(code, what);
}

}  // namespace polywalk
