#pragma once

// Recursive hierarchy parameters (p_k, y_k, c_k) kept in log-magnitude form.
//
// Every level-k logarithm is stored as an affine form coef * L_k + offset with L_k = ln(1/p_k),
// and ln L_{k+1} is an affine form in L_k. Constraint slacks are computed on these forms, so the
// astronomically large parts cancel symbolically instead of numerically.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "polywalk/errors.hpp"
#include "polywalk/rational.hpp"
#include "polywalk/tower.hpp"
#include "polywalk/waiting_time.hpp"

namespace polywalk {

/// Moments of the flip count G.
struct CountMoments {
    double mean = 1.5;
    double variance = 0.75;
};

struct AConstant {
    double A = 0;
    double b = 0;           // Chebyshev threshold fraction, b = E(G)/2
    double inv_sqrt_b = 0;  // first term of the bound
    double B = 0;           // Chebyshev constant
};

/// A = 1/sqrt(b) + B, with B = max(E G, Var G) / (E G - b)^2 bounding
/// [q(1-q)E G + q^2 Var G] / ((E G - b) q)^2 * q uniformly in q = p_k / z_k in (0, 1].
inline AConstant compute_A(CountMoments g = {}) {
    require(g.mean > 0 && g.variance >= 0, Errc::precondition_violation, "bad count moments");
    AConstant a;
    a.b = g.mean / 2.0;
    a.inv_sqrt_b = 1.0 / std::sqrt(a.b);
    const double gap = g.mean - a.b;
    a.B = std::max(g.mean, g.variance) / (gap * gap);
    a.A = a.inv_sqrt_b + a.B;
    return a;
}

struct LevelParams {
    int k = 0;
    LogLinear ln_L;  // ln ln(1/p_k), affine in L_{k-1}; coef 0 at k = 2
    LogLinear ln_c;  // ln c_k, affine in L_k
    LogLinear ln_y;  // ln y_k, affine in L_k
    std::optional<std::uint64_t> p_log2;  // p_k = 2^-p_log2 exactly
    std::optional<std::uint64_t> c_exact;
    std::optional<std::uint64_t> y_exact;
};

struct NextLevelP {
    int k = 0;
    LogLinear ln_L;
    std::optional<std::uint64_t> p_log2;
};

struct HierarchyParams {
    double A = 0;
    std::vector<LevelParams> levels;  // k = 2..k_max
    NextLevelP next;                  // p_{k_max + 1}, needed by the last (lest1) check

    int k_max() const { return levels.empty() ? 1 : levels.back().k; }

    /// L_k = ln(1/p_k) for k = 2..k_max+1, at index k - 2.
    std::vector<Tower> scales() const {
        std::vector<Tower> out;
        Tower prev(0.0);
        for (const auto& lv : levels) {
            prev = lv.ln_L.evaluate(prev).exp();
            out.push_back(prev);
        }
        out.push_back(next.ln_L.evaluate(prev).exp());
        return out;
    }

    /// p_1 absorbs the residual mass of the constructed levels.
    double p1() const {
        double rest = 0;
        for (const auto& L : scales()) rest += std::exp(-L.to_double());
        rest -= std::exp(-scales().back().to_double());
        return 1.0 - rest;
    }

    /// Waiting law restricted to levels 1..K (conditioned on kappa <= K); needs exact y_k <= 2^53.
    /// Masses of levels above K below double resolution are dropped.
    WaitingTimeLaw waiting_law(int K) const {
        require(K >= 1 && K <= k_max(), Errc::out_of_range, "waiting_law level out of range");
        std::vector<WaitingLevel> out;
        Rational tail_above = 0;
        Rational lower = 0;
        for (const auto& lv : levels) {
            require(lv.k > K || (lv.y_exact && *lv.y_exact <= kSamplingLimit && lv.p_log2), Errc::sampling_range,
                    "level " + std::to_string(lv.k) + " is not sampling-representable");
            if (lv.p_log2 && *lv.p_log2 < 4096) {
                Rational p(1);
                mpz_mul_2exp(p.get_den_mpz_t(), p.get_den_mpz_t(), *lv.p_log2);
                (lv.k <= K ? lower : tail_above) += p;
            }
        }
        const Rational z = 1 - tail_above;
        out.push_back({(1 - lower - tail_above) / z, 1});
        for (const auto& lv : levels) {
            if (lv.k > K) break;
            Rational p(1);
            mpz_mul_2exp(p.get_den_mpz_t(), p.get_den_mpz_t(), *lv.p_log2);
            out.push_back({p / z, *lv.y_exact});
        }
        return WaitingTimeLaw(std::move(out));
    }
};

struct ConstraintCheck {
    int k = 0;
    std::string constraint;  // ck, pest, pkhalf, lest1_lower, lest1_upper, p1
    bool holds = false;
    bool exact = false;  // decided by integer arithmetic rather than the log-domain slack
    double slack = 0;    // log-domain margin; +inf when the margin leaves double range
};

struct ParamsReport {
    std::vector<ConstraintCheck> checks;
    bool all_hold() const {
        return std::all_of(checks.begin(), checks.end(), [](const auto& c) { return c.holds; });
    }
};

inline constexpr double kLogSlackTolerance = 1e-9;

namespace detail {

inline BigInt pow2(std::uint64_t e) {
    BigInt r = 1;
    mpz_mul_2exp(r.get_mpz_t(), r.get_mpz_t(), e);
    return r;
}

inline BigInt ceil_sqrt(const BigInt& n) {
    BigInt s;
    mpz_sqrt(s.get_mpz_t(), n.get_mpz_t());
    if (s * s < n) s += 1;
    return s;
}

inline std::uint64_t to_u64(const BigInt& z) {
    require(mpz_sizeinbase(z.get_mpz_t(), 2) <= 64, Errc::out_of_range, "integer exceeds 64 bits");
    std::uint64_t v = 0;
    mpz_export(&v, nullptr, -1, sizeof(v), 0, 0, z.get_mpz_t());
    return v;
}

inline BigInt from_u64(std::uint64_t v) { return BigInt(static_cast<unsigned long>(v)); }

}  // namespace detail

inline ParamsReport validate_params(const HierarchyParams& hp) {
    ParamsReport rep;
    const auto L = hp.scales();
    const double ln2 = std::log(2.0);
    const double lnA = std::log(hp.A);
    auto push = [&](int k, const char* name, double slack, std::optional<bool> exact) {
        ConstraintCheck c;
        c.k = k;
        c.constraint = name;
        c.slack = slack;
        c.exact = exact.has_value();
        c.holds = exact ? *exact : slack >= -kLogSlackTolerance;
        rep.checks.push_back(c);
    };

    const double p1 = hp.p1();
    push(1, "p1", std::log(p1) - std::log(0.5), std::nullopt);

    for (std::size_t i = 0; i < hp.levels.size(); ++i) {
        const auto& lv = hp.levels[i];
        const int k = lv.k;
        const double lnk = std::log(static_cast<double>(k));
        const Tower& Lk = L[i];
        const Tower& Lnext = L[i + 1];
        const LogLinear& ln_L_next = (i + 1 < hp.levels.size()) ? hp.levels[i + 1].ln_L : hp.next.ln_L;
        const std::optional<std::uint64_t> e_next =
            (i + 1 < hp.levels.size()) ? hp.levels[i + 1].p_log2 : hp.next.p_log2;

        // c_k > k^8 / p_k^2
        {
            const double slack = (lv.ln_c - LogLinear{2.0, 8.0 * lnk}).evaluate_signed(Lk);
            std::optional<bool> exact;
            if (lv.c_exact && lv.p_log2) {
                BigInt k8 = 1;
                for (int j = 0; j < 8; ++j) k8 *= k;
                exact = detail::from_u64(*lv.c_exact) > k8 * detail::pow2(2 * *lv.p_log2);
            }
            push(k, "ck", slack, exact);
        }

        // y_k sqrt(p_k) >= max(12 c_k, y_{k-1} sqrt(p_{k-1}))
        {
            const LogLinear lhs = lv.ln_y - LogLinear{0.5, 0.0};
            const double s1 = (lhs - (lv.ln_c + LogLinear{0.0, std::log(12.0)})).evaluate_signed(Lk);
            double s2 = 0;
            if (i == 0) {
                // y_1 = 1, so the second term is sqrt(p_1)
                s2 = lhs.evaluate_signed(Lk) - 0.5 * std::log(p1);
            } else {
                const auto& prev = hp.levels[i - 1];
                const Tower prev_val = (prev.ln_y - LogLinear{0.5, 0.0}).evaluate(L[i - 1]);
                s2 = tower_difference(lhs.evaluate(Lk), prev_val);
            }
            std::optional<bool> exact;
            if (lv.y_exact && lv.c_exact && lv.p_log2) {
                const BigInt y = detail::from_u64(*lv.y_exact);
                const BigInt c12 = 12 * detail::from_u64(*lv.c_exact);
                bool ok = y * y >= c12 * c12 * detail::pow2(*lv.p_log2);
                if (i == 0) {
                    ok = ok && y * y >= detail::pow2(*lv.p_log2);  // y_1 sqrt(p_1) <= 1
                } else {
                    const auto& prev = hp.levels[i - 1];
                    if (prev.y_exact && prev.p_log2) {
                        const BigInt yp = detail::from_u64(*prev.y_exact);
                        ok = ok && y * y * detail::pow2(*prev.p_log2) >= yp * yp * detail::pow2(*lv.p_log2);
                    }
                }
                exact = ok;
            }
            push(k, "pest", std::min(s1, s2), exact);
        }

        // 0 < p_{k+1} <= p_k / 2
        {
            const double slack = tower_difference(Lnext, tower_add_double(Lk, ln2));
            std::optional<bool> exact;
            if (lv.p_log2 && e_next) exact = *e_next >= *lv.p_log2 + 1;
            push(k, "pkhalf", slack, exact);
        }

        // 1/(2k^4) <= (A / (p_k y_k))^2 ln(1/p_{k+1}) <= 1/k^4, all in logs over L_k
        {
            const LogLinear expr = LogLinear{2.0, 2.0 * lnA} - 2.0 * lv.ln_y + ln_L_next;
            push(k, "lest1_lower", (expr + LogLinear{0.0, ln2 + 4.0 * lnk}).evaluate_signed(Lk), std::nullopt);
            push(k, "lest1_upper", (LogLinear{0.0, -4.0 * lnk} - expr).evaluate_signed(Lk), std::nullopt);
        }
    }
    return rep;
}

inline HierarchyParams construct_params(double A, int k_max) {
    require(A > 0, Errc::precondition_violation, "A must be positive");
    require(k_max >= 2, Errc::precondition_violation, "k_max must be at least 2");
    const double ln2 = std::log(2.0);
    const double lnA = std::log(A);

    HierarchyParams hp;
    hp.A = A;

    LogLinear ln_L{0.0, std::log(2.0 * ln2)};  // p_2 = 1/4
    std::optional<std::uint64_t> p_log2 = 2;
    Tower L(2.0 * ln2);
    Tower prev_L(0.0);

    for (int k = 2; k <= k_max; ++k) {
        LevelParams lv;
        lv.k = k;
        lv.ln_L = ln_L;
        lv.p_log2 = p_log2;
        const double lnk = std::log(static_cast<double>(k));
        const LevelParams* prev = hp.levels.empty() ? nullptr : &hp.levels.back();

        // c_k = floor(k^8 / p_k^2) + 1, the least admissible integer.
        if (p_log2 && 8.0 * std::log2(static_cast<double>(k)) + 2.0 * static_cast<double>(*p_log2) < 52.0) {
            std::uint64_t k8 = 1;
            for (int j = 0; j < 8; ++j) k8 *= static_cast<std::uint64_t>(k);
            lv.c_exact = (k8 << (2 * *p_log2)) + 1;
            lv.ln_c = {0.0, std::log(static_cast<double>(*lv.c_exact))};
        } else {
            const double corr = L.is_double() ? std::log1p(std::exp(-(8.0 * lnk + 2.0 * L.top()))) : 0.0;
            lv.ln_c = {2.0, 8.0 * lnk + corr};
        }

        // y_k: least integer meeting (pest) and leaving room for p_{k+1} <= p_k / 2 at the window centre.
        const bool exact_y = p_log2 && lv.c_exact && (prev == nullptr || (prev->y_exact && prev->p_log2));
        std::optional<std::uint64_t> y_exact;
        if (exact_y) {
            const BigInt c12 = 12 * detail::from_u64(*lv.c_exact);
            BigInt y = detail::ceil_sqrt(c12 * c12 * detail::pow2(*p_log2));
            const BigInt y_prev = prev == nullptr
                                      ? detail::ceil_sqrt(detail::pow2(*p_log2))
                                      : detail::ceil_sqrt(detail::from_u64(*prev->y_exact) *
                                                          detail::from_u64(*prev->y_exact) *
                                                          detail::pow2(*p_log2 - *prev->p_log2));
            if (y_prev > y) y = y_prev;
            const double y_half = A * k * k * std::sqrt(std::sqrt(2.0) * (L.top() + ln2)) *
                                  std::exp2(static_cast<double>(*p_log2));
            const BigInt y_h(std::ceil(y_half));
            if (y_h > y) y = y_h;
            if (mpz_sizeinbase(y.get_mpz_t(), 2) <= 53) y_exact = detail::to_u64(y);
        }
        if (y_exact) {
            lv.y_exact = y_exact;
            lv.ln_y = {0.0, std::log(static_cast<double>(*y_exact))};
        } else {
            struct Candidate {
                LogLinear form;
                Tower value;
            };
            std::vector<Candidate> cands;
            const LogLinear f1{lv.ln_c.coef + 0.5, std::log(12.0) + lv.ln_c.offset};
            cands.push_back({f1, f1.evaluate(L)});
            if (prev == nullptr) {
                cands.push_back({LogLinear{0.5, 0.0}, LogLinear{0.5, 0.0}.evaluate(L)});
            } else {
                const LogLinear v_form = prev->ln_y - LogLinear{0.5, 0.0};
                const double v = v_form.evaluate_signed(prev_L);
                if (std::isfinite(v)) cands.push_back({LogLinear{0.5, v}, LogLinear{0.5, v}.evaluate(L)});
            }
            if (L.height() <= 1) {
                const double ln_l = tower_add_double(L, ln2).log().to_double();
                const LogLinear f3{1.0, lnA + 2.0 * lnk + 0.25 * ln2 + 0.5 * ln_l};
                cands.push_back({f3, f3.evaluate(L)});
            }
            // On a non-double scale the leading coefficient decides.
            auto better = [&](const Candidate& a, const Candidate& b) {
                if (L.is_double()) return a.value > b.value;
                if (a.form.coef != b.form.coef) return a.form.coef > b.form.coef;
                return a.form.offset > b.form.offset;
            };
            const Candidate* best = &cands.front();
            for (const auto& c : cands)
                if (better(c, *best)) best = &c;
            lv.ln_y = best->form;
            if (best->value.is_double()) lv.ln_y.offset += std::log1p(std::exp(-best->value.top()));
        }

        // ln L_{k+1} at the geometric centre of the (lest1) window:
        // (A / (p_k y_k))^2 L_{k+1} = 1 / (sqrt(2) k^4).
        const LogLinear target{2.0 * lv.ln_y.coef - 2.0, 2.0 * (lv.ln_y.offset - lnA - 2.0 * lnk) - 0.5 * ln2};
        const Tower L_next = target.evaluate(L).exp();
        require(L_next >= tower_add_double(L, ln2), Errc::infeasible_window,
                "no p_" + std::to_string(k + 1) + " <= p_k / 2 inside the (lest1) window");

        LogLinear next_form = target;
        std::optional<std::uint64_t> next_log2;
        if (p_log2 && L_next.is_double() && L_next.top() / ln2 < 0x1.0p52) {
            auto e = static_cast<std::uint64_t>(std::llround(L_next.top() / ln2));
            e = std::max(e, *p_log2 + 1);
            next_log2 = e;
            next_form = {0.0, std::log(static_cast<double>(e) * ln2)};
        }

        hp.levels.push_back(lv);
        prev_L = L;
        L = next_form.evaluate(L).exp();
        ln_L = next_form;
        p_log2 = next_log2;
    }
    hp.next = {k_max + 1, ln_L, p_log2};

    const auto rep = validate_params(hp);
    for (const auto& c : rep.checks) {
        require(c.holds, Errc::infeasible_window,
                "constructed level " + std::to_string(c.k) + " violates " + c.constraint);
    }
    return hp;
}

// Serialization ---------------------------------------------------------------------------------

namespace detail {

inline nlohmann::json magnitude_json(const Tower& t) {
    if (t.is_double()) return t.top();
    return t.to_string();
}

inline nlohmann::json loglinear_json(const LogLinear& f) { return {{"coef", f.coef}, {"offset", f.offset}}; }

inline LogLinear loglinear_from(const nlohmann::json& j) {
    return {j.at("coef").get<double>(), j.at("offset").get<double>()};
}

template <class T>
std::optional<T> optional_from(const nlohmann::json& j, const char* key) {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    return j.at(key).get<T>();
}

inline nlohmann::json p_json(const Tower& L, const std::optional<std::uint64_t>& log2) {
    const double inv_ln10 = 1.0 / std::log(10.0);
    nlohmann::json j;
    if (L.is_double()) {
        const double log10p = -L.top() * inv_ln10;
        const double e = std::floor(log10p);
        j["log10"] = log10p;
        j["mantissa"] = std::pow(10.0, log10p - e);
    } else {
        j["log10"] = "-" + tower_scale(inv_ln10, L).to_string();
        j["mantissa"] = nullptr;
    }
    j["log2_exact"] = log2 ? nlohmann::json(*log2) : nlohmann::json(nullptr);
    return j;
}

}  // namespace detail

inline nlohmann::json to_json(const HierarchyParams& hp) {
    const double inv_ln10 = 1.0 / std::log(10.0);
    const auto L = hp.scales();
    nlohmann::json j;
    j["format"] = "polywalk-hierarchy-params";
    j["version"] = 1;
    j["A"] = hp.A;
    j["p1"] = hp.p1();
    j["y1"] = 1;
    nlohmann::json levels = nlohmann::json::array();
    for (std::size_t i = 0; i < hp.levels.size(); ++i) {
        const auto& lv = hp.levels[i];
        nlohmann::json e;
        e["k"] = lv.k;
        e["p"] = detail::p_json(L[i], lv.p_log2);
        e["log10_y"] = detail::magnitude_json(tower_scale(inv_ln10, lv.ln_y.evaluate(L[i])));
        e["log10_c"] = detail::magnitude_json(tower_scale(inv_ln10, lv.ln_c.evaluate(L[i])));
        e["y_exact"] = lv.y_exact ? nlohmann::json(*lv.y_exact) : nlohmann::json(nullptr);
        e["c_exact"] = lv.c_exact ? nlohmann::json(*lv.c_exact) : nlohmann::json(nullptr);
        e["ln_ln_inv_p"] = detail::loglinear_json(lv.ln_L);
        e["ln_c"] = detail::loglinear_json(lv.ln_c);
        e["ln_y"] = detail::loglinear_json(lv.ln_y);
        levels.push_back(e);
    }
    j["levels"] = levels;
    nlohmann::json nx;
    nx["k"] = hp.next.k;
    nx["p"] = detail::p_json(L.back(), hp.next.p_log2);
    nx["ln_ln_inv_p"] = detail::loglinear_json(hp.next.ln_L);
    j["next"] = nx;
    return j;
}

inline HierarchyParams params_from_json(const nlohmann::json& j) {
    try {
        require(j.value("format", "") == "polywalk-hierarchy-params", Errc::parse_error, "not a params file");
        HierarchyParams hp;
        hp.A = j.at("A").get<double>();
        for (const auto& e : j.at("levels")) {
            LevelParams lv;
            lv.k = e.at("k").get<int>();
            lv.ln_L = detail::loglinear_from(e.at("ln_ln_inv_p"));
            lv.ln_c = detail::loglinear_from(e.at("ln_c"));
            lv.ln_y = detail::loglinear_from(e.at("ln_y"));
            lv.p_log2 = detail::optional_from<std::uint64_t>(e.at("p"), "log2_exact");
            lv.c_exact = detail::optional_from<std::uint64_t>(e, "c_exact");
            lv.y_exact = detail::optional_from<std::uint64_t>(e, "y_exact");
            require(lv.k == static_cast<int>(hp.levels.size()) + 2, Errc::parse_error, "levels must run k = 2, 3, ...");
            hp.levels.push_back(lv);
        }
        require(!hp.levels.empty(), Errc::parse_error, "params file has no levels");
        const auto& nx = j.at("next");
        hp.next.k = nx.at("k").get<int>();
        hp.next.ln_L = detail::loglinear_from(nx.at("ln_ln_inv_p"));
        hp.next.p_log2 = detail::optional_from<std::uint64_t>(nx.at("p"), "log2_exact");
        return hp;
    } catch (const nlohmann::json::exception& ex) {
        fail(Errc::parse_error, std::string("params file: ") + ex.what());
    }
}

}  // namespace polywalk
