#pragma once

// Batch runners over the randomized corpora; each returns report rows for the CLI and the
// acceptance binary.

#include <cstdint>
#include <string>
#include <vector>

#include "polywalk/corpus.hpp"
#include "polywalk/params.hpp"
#include "polywalk/verify.hpp"

namespace polywalk {

struct LemmaSuiteConfig {
    std::uint64_t seed = 1;
    std::size_t momest_cases = 10'000;
    std::size_t unimod_cases = 100;
    std::size_t unimodest_cases = 1'000;
    std::size_t event_chains = 13;
    std::uint64_t g_max = 20;
    std::vector<std::uint64_t> maxest_y{1, 2, 3, 4, 5, 8, 13, 16, 32, 64};
    std::vector<std::uint64_t> maxest_m{1, 2, 3, 4, 5, 6, 8, 12, 16, 24, 32, 64, 128};
    std::vector<std::uint64_t> r_grid{1, 2, 3, 4, 6, 8};
};

inline CheckReport run_momest_suite(const LemmaSuiteConfig& cfg) {
    CheckReport rep;
    auto rng = derive_stream(cfg.seed, CommandId::verify, 0).substream(1);
    std::size_t fails = 0;
    double worst = 0;
    for (std::size_t i = 0; i < cfg.momest_cases; ++i) {
        const auto tau = (i % 2 == 0) ? as_pmf<Rational>(random_waiting_law(rng)) : random_nonincreasing_pmf(rng);
        const auto r = check_momest(tau);
        if (r.rhs > 0) worst = std::max(worst, Rational(r.lhs / r.rhs).get_d());
        if (!r.holds || !r.corollary_holds) {
            ++fails;
            rep.add({"momest", "case=" + std::to_string(i) + " " + detail::describe(tau), fmt(r.lhs), fmt(r.rhs),
                     fmt(Rational(r.rhs - r.lhs)), false});
        }
    }
    rep.add({"momest", "cases=" + std::to_string(cfg.momest_cases) + " stat=max (ET)^2/((3/4)ET^2)", fmt(worst), "1",
             fmt(1.0 - worst), fails == 0});
    return rep;
}

inline CheckReport run_unimod_suite(const LemmaSuiteConfig& cfg) {
    CheckReport rep;
    auto rng = derive_stream(cfg.seed, CommandId::verify, 0).substream(2);
    std::size_t fails = 0;
    double worst_upper = 0;  // max Var X / (4 E G Var T)
    for (std::size_t i = 0; i < cfg.unimod_cases; ++i) {
        const auto tau = as_pmf<Rational>(random_waiting_law(rng, 3, 6));
        const auto r = check_unimod(tau, cfg.g_max);
        if (r.var_T > 0) worst_upper = std::max(worst_upper, Rational(r.var_pmf / (4 * r.mean_G * r.var_T)).get_d());
        if (!r.holds()) {
            ++fails;
            rep.add({"unimod", "case=" + std::to_string(i) + " " + detail::describe(tau), fmt(r.var_pmf),
                     fmt(r.var_wald), "", false});
        }
    }
    rep.add({"unimod", "cases=" + std::to_string(cfg.unimod_cases) + " g_max=" + std::to_string(cfg.g_max) +
                           " stat=max VarX/(4 EG VarT)",
             fmt(worst_upper), "1", fmt(1.0 - worst_upper), fails == 0});
    return rep;
}

inline CheckReport run_unimodest_suite(const LemmaSuiteConfig& cfg) {
    CheckReport rep;
    auto rng = derive_stream(cfg.seed, CommandId::verify, 0).substream(3);
    std::size_t fails = 0;
    double worst = std::numeric_limits<double>::infinity();
    std::size_t done = 0;
    while (done < cfg.unimodest_cases) {
        auto mu = random_symmetric_unimodal(rng);
        if (mu.size() < 2) continue;
        const auto grid = unimodest_grid(mu);
        const auto r = check_unimodest(mu, grid);
        worst = std::min(worst, r.min_ratio);
        if (!r.holds) {
            ++fails;
            rep.add({"unimodest", "case=" + std::to_string(done) + " " + detail::describe(mu) + " c=" + fmt(r.argmin_c),
                     fmt(r.min_ratio), fmt(kUnimodestConstant), "", false});
        }
        ++done;
    }
    rep.add({"unimodest",
             "cases=" + std::to_string(cfg.unimodest_cases) + " stat=min mass*sigma/c d'=" + fmt(kUnimodestConstant),
             fmt(worst), fmt(kUnimodestConstant.get_d()), fmt(worst - kUnimodestConstant.get_d()), fails == 0});
    return rep;
}

inline CheckReport run_maxest_suite(const LemmaSuiteConfig& cfg) {
    CheckReport rep;
    const auto r = check_maxest(cfg.maxest_y, cfg.maxest_m);
    for (const auto& c : r.cells)
        if (!c.holds)
            rep.add({"maxest", "y=" + std::to_string(c.y) + " m=" + std::to_string(c.m), fmt(c.stat),
                     fmt(kMaxestBound), fmt(kMaxestBound - c.stat), false});
    rep.add({"maxest", "cells=" + std::to_string(r.cells.size()) + " stat=sup max_x P(x) sqrt(m) y", fmt(r.sup),
             fmt(kMaxestBound), fmt(kMaxestBound - r.sup), r.holds});
    return rep;
}

inline CheckReport run_recurrevents_suite(const LemmaSuiteConfig& cfg) {
    CheckReport rep;
    const auto systems = default_event_corpus(cfg.seed, cfg.event_chains);
    for (const auto& sys : systems) {
        try {
            const auto r = check_recurrevents(sys, cfg.r_grid);
            Rational worst_margin = 1;
            const RecurrRow* worst = nullptr;
            for (const auto& row : r.rows) {
                const Rational m = row.p_phi_gt_r - row.bound;
                if (!worst || m < worst_margin) {
                    worst_margin = m;
                    worst = &row;
                }
            }
            rep.add({"recurrevents", sys.name + " E(Phi)=" + fmt(r.expected_phi.get_d()) + " r=" + std::to_string(worst->r),
                     fmt(worst->p_phi_gt_r.get_d()), fmt(worst->bound.get_d()), fmt(worst_margin.get_d()), r.holds()});
        } catch (const Error& e) {
            rep.add({"recurrevents", sys.name + " error=" + to_string(e.code()), "", "", "", false});
        }
    }
    return rep;
}

inline CheckReport run_lemma_suite(const LemmaSuiteConfig& cfg) {
    CheckReport rep;
    rep.append(run_momest_suite(cfg));
    rep.append(run_unimod_suite(cfg));
    rep.append(run_unimodest_suite(cfg));
    rep.append(run_maxest_suite(cfg));
    rep.append(run_recurrevents_suite(cfg));
    return rep;
}

inline CheckReport qkn2_report(const WaitingTimeLaw& law, double A, std::span<const Qkn2Row> rows) {
    CheckReport rep;
    for (const auto& r : rows)
        rep.add({"qkn2", "law=" + law.to_spec() + " A=" + fmt(A) + " n=" + std::to_string(r.n) +
                             " replicas=" + std::to_string(r.replicas) + " s1=" + fmt(r.s1) +
                             " s2_point=" + fmt(r.s2.point),
                 fmt(r.s2.ci_hi), fmt(r.bound), fmt(r.bound - r.s2.ci_hi), r.holds});
    return rep;
}

inline CheckReport params_report(const ParamsReport& pr) {
    CheckReport rep;
    for (const auto& c : pr.checks)
        rep.add({"params_" + c.constraint, "k=" + std::to_string(c.k) + (c.exact ? " exact" : " log-domain"),
                 fmt(c.slack), "0", fmt(c.slack), c.holds});
    return rep;
}

}  // namespace polywalk
