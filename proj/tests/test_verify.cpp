#include <gtest/gtest.h>

#include <cmath>

#include "polywalk/corpus.hpp"
#include "polywalk/params.hpp"
#include "polywalk/verify.hpp"

using namespace polywalk;

namespace {

Rational q(long n, long d = 1) { return make_rational(n, static_cast<unsigned long>(d)); }

RandomStream test_rng(std::uint16_t sub) { return derive_stream(2024, CommandId::testing, 0).substream(sub); }

StreamPlan plan(std::uint64_t seed, std::uint16_t sub = 0) {
    StreamPlan p;
    p.seed = seed;
    p.command = CommandId::testing;
    p.substream = sub;
    return p;
}

Errc code_of(const auto& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    return Errc::out_of_range;
}

const std::vector<std::uint64_t> kRGrid{1, 2, 3, 4, 6, 8};

}  // namespace

TEST(Momest, Examples) {
    const auto r = check_momest(ExactPMF::from_weights(0, {q(1, 2), q(1, 2)}));
    EXPECT_EQ(r.lhs, q(1, 4));
    EXPECT_EQ(r.rhs, q(3, 8));
    EXPECT_TRUE(r.holds);
    EXPECT_TRUE(r.corollary_holds);
    const auto z = check_momest(ExactPMF::point_mass(0));
    EXPECT_EQ(z.lhs, 0);
    EXPECT_EQ(z.rhs, 0);
    EXPECT_TRUE(z.holds);
}

TEST(Momest, TightensForWideUniforms) {
    const auto r = check_momest(uniform_pmf<Rational>(0, 1000));
    const double ratio = Rational(r.lhs / r.rhs).get_d();
    EXPECT_GT(ratio, 0.99);
    EXPECT_LE(ratio, 1.0);
}

TEST(Momest, Preconditions) {
    EXPECT_EQ(code_of([] { check_momest(ExactPMF::from_weights(0, {q(1, 4), q(3, 4)})); }),
              Errc::precondition_violation);
    EXPECT_EQ(code_of([] { check_momest(ExactPMF::from_weights(-1, {q(1, 2), q(1, 2)})); }),
              Errc::precondition_violation);
}

TEST(Momest, RandomCorpus) {
    auto rng = test_rng(1);
    for (int i = 0; i < 2000; ++i) {
        const auto r = check_momest(random_nonincreasing_pmf(rng));
        ASSERT_TRUE(r.holds && r.corollary_holds);
    }
}

TEST(Unimod, UniformZeroOne) {
    const auto r = check_unimod(ExactPMF::from_weights(0, {q(1, 2), q(1, 2)}), 20);
    EXPECT_TRUE(r.holds());
    EXPECT_NEAR(r.var_pmf.get_d(), 9.0 / 16.0, 1e-8);
    EXPECT_EQ(r.var_T, q(1, 4));
    EXPECT_NEAR(Rational(4 * r.mean_G * r.var_T).get_d(), 1.5, 1e-8);
    EXPECT_LT(r.truncation_mass.get_d(), 1e-9);
}

TEST(Unimod, PointMassIsTight) {
    const auto r = check_unimod(ExactPMF::point_mass(0));
    EXPECT_TRUE(r.holds());
    EXPECT_EQ(r.var_pmf, 0);
    EXPECT_EQ(r.var_T, 0);
}

TEST(Unimod, RandomCorpus) {
    auto rng = test_rng(2);
    for (int i = 0; i < 60; ++i) {
        const auto r = check_unimod(random_nonincreasing_pmf(rng, 6, 12), 12);
        ASSERT_TRUE(r.holds()) << i;
    }
}

TEST(Unimodest, Examples) {
    const auto mu = ExactPMF::from_weights(-1, {q(1, 4), q(1, 2), q(1, 4)});
    const std::vector<double> c{0.7};
    const auto r = check_unimodest(mu, c);
    EXPECT_NEAR(r.min_ratio, 0.5 * std::sqrt(0.5) / 0.7, 1e-12);
    EXPECT_TRUE(r.holds);
    const std::vector<double> too_big{0.8};
    EXPECT_EQ(code_of([&] { check_unimodest(mu, too_big); }), Errc::precondition_violation);
    const auto skew = ExactPMF::from_weights(-1, {q(1, 2), q(1, 4), q(1, 4)});
    EXPECT_EQ(code_of([&] { check_unimodest(skew, c); }), Errc::precondition_violation);
}

TEST(Unimodest, WideUniformAtSigma) {
    const auto mu = uniform_pmf<Rational>(-10, 10);
    const auto grid = unimodest_grid(mu);
    const double sigma = std::sqrt(440.0 / 12.0);
    EXPECT_EQ(grid.size(), 7u);
    EXPECT_NEAR(grid.back(), sigma, 1e-12);
    const std::vector<double> at_sigma{grid.back()};
    const auto r = check_unimodest(mu, at_sigma);
    EXPECT_NEAR(r.min_ratio, 13.0 / 21.0, 1e-12);
    EXPECT_TRUE(r.holds);
}

TEST(Unimodest, ConstantDerivation) {
    const double d = kContinuousUnimodConstant * (1 - 1 / std::sqrt(3.0)) * std::sqrt(0.9);
    EXPECT_NEAR(kContinuousUnimodConstant, 2 * std::sqrt(3.0) / 9, 1e-15);
    EXPECT_LE(kUnimodestConstant.get_d(), d);
    EXPECT_GT(kUnimodestConstant.get_d(), d - 1e-4);
}

TEST(Unimodest, RandomCorpus) {
    auto rng = test_rng(3);
    for (int i = 0; i < 300; ++i) {
        const auto mu = random_symmetric_unimodal(rng);
        if (moments(mu).variance < 1) continue;
        ASSERT_TRUE(check_unimodest(mu, unimodest_grid(mu)).holds);
    }
}

TEST(Maxest, Examples) {
    const std::vector<std::uint64_t> y{1};
    const std::vector<std::uint64_t> m{1, 2};
    const auto r = check_maxest(y, m);
    ASSERT_EQ(r.cells.size(), 2u);
    EXPECT_DOUBLE_EQ(r.cells[0].stat, 0.5);
    EXPECT_EQ(r.cells[0].stat_sq, q(1, 4));
    EXPECT_NEAR(r.cells[1].stat, std::sqrt(2.0) / 2, 1e-15);
    EXPECT_TRUE(r.holds);
}

TEST(Maxest, GridSupremumAndTrend) {
    const std::vector<std::uint64_t> y{1, 2, 3, 5, 16, 64};
    const std::vector<std::uint64_t> m{1, 2, 3, 8, 32, 128};
    const auto r = check_maxest(y, m);
    EXPECT_TRUE(r.holds);
    EXPECT_LE(r.sup, kMaxestBound);
    const std::vector<std::uint64_t> y64{64};
    const std::vector<std::uint64_t> m128{128};
    // local limit: sqrt(6 / pi) y / sqrt(y (y + 2))
    EXPECT_NEAR(check_maxest(y64, m128).cells[0].stat, std::sqrt(6 / M_PI) * 64 / std::sqrt(64.0 * 66), 0.003);
    const std::vector<std::uint64_t> huge{1'000'000};
    EXPECT_EQ(code_of([&] { check_maxest(huge, m128, 1 << 20); }), Errc::support_overflow);
}

TEST(Recurrevents, Bernoulli) {
    const auto r = check_recurrevents(bernoulli_system(q(3, 10), 10), kRGrid);
    EXPECT_EQ(r.expected_phi, 4);
    // Phi = 1 + Bin(10, 3/10) since E_0 always occurs
    double tail = 0;
    for (int j = 2; j <= 10; ++j)
        tail += std::exp(std::lgamma(11.0) - std::lgamma(j + 1.0) - std::lgamma(11.0 - j)) * std::pow(0.3, j) *
                std::pow(0.7, 10 - j);
    EXPECT_NEAR(r.rows[1].p_phi_gt_r.get_d(), tail, 1e-12);
    EXPECT_NEAR(r.rows[1].p_phi_gt_r.get_d(), 0.8507, 1e-4);
    EXPECT_EQ(r.rows[1].bound, q(1, 2));
    EXPECT_TRUE(r.holds());
    Rational total = 0;
    for (const auto& p : r.phi_law) total += p;
    EXPECT_EQ(total, 1);
}

TEST(Recurrevents, CertainEvents) {
    const auto r = check_recurrevents(bernoulli_system(q(1), 8), kRGrid);
    EXPECT_EQ(r.expected_phi, 9);
    for (const auto& row : r.rows) EXPECT_EQ(row.p_phi_gt_r, 1);
}

TEST(Recurrevents, RenewalCorpus) {
    for (const auto& sys : default_event_corpus(5, 12)) {
        const auto r = check_recurrevents(sys, kRGrid);
        EXPECT_TRUE(r.holds()) << sys.name;
        EXPECT_LE(r.paths, kMaxEnumeratedPaths);
    }
}

TEST(Recurrevents, ViolationHasWitness) {
    // from 0 the chain commits to 1 or 2 forever; E_n = {state 1}
    EventSystem s;
    s.name = "split";
    s.horizon = 3;
    s.kernel = [](int st) {
        if (st == 0) return std::vector<std::pair<int, Rational>>{{1, q(1, 2)}, {2, q(1, 2)}};
        return std::vector<std::pair<int, Rational>>{{st, q(1)}};
    };
    s.event = [](std::size_t, std::span<const int> path) { return path.back() == 1; };
    try {
        check_recurrevents(s, kRGrid);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::hypothesis_violation);
        EXPECT_NE(std::string(e.what()).find("| F_2"), std::string::npos) << e.what();
    }
}

TEST(EstimateEvent, SimpleWalkReturn) {
    EventSpec spec;
    spec.step = simple_step_law<double>();
    const auto e = estimate_event_prob(spec, 2, 100'000, plan(1));
    EXPECT_LE(e.ci_lo, 0.5);
    EXPECT_GE(e.ci_hi, 0.5);
    EXPECT_DOUBLE_EQ(*exact_event_prob(spec, 2), 0.5);
}

TEST(EstimateEvent, CalibrationOverSeeds) {
    EventSpec spec;
    const double exact = *exact_event_prob(spec, 2);
    EXPECT_DOUBLE_EQ(exact, 3.0 / 8.0);
    int covered = 0;
    for (std::uint64_t seed = 1; seed <= 100; ++seed) {
        const auto e = estimate_event_prob(spec, 2, 4000, plan(seed));
        covered += e.ci_lo <= exact && exact <= e.ci_hi;
    }
    EXPECT_GE(covered, 95);
}

TEST(EstimateEvent, ExactOraclesAgree) {
    const std::vector<EstimateEvent> kinds{EstimateEvent::sign_change, EstimateEvent::level_crossing,
                                           EstimateEvent::interval_hit, EstimateEvent::box_visit,
                                           EstimateEvent::v_n};
    std::uint16_t sub = 0;
    for (auto kind : kinds) {
        EventSpec spec;
        spec.kind = kind;
        spec.dim = 2;
        const auto e = estimate_event_prob(spec, 9, 200'000, plan(77, ++sub));
        const double exact = *exact_event_prob(spec, 9);
        EXPECT_LE(e.ci_lo, exact) << to_string(kind);
        EXPECT_GE(e.ci_hi, exact) << to_string(kind);
    }
}

TEST(EstimateEvent, ImpossibleAndDegenerate) {
    EventSpec spec;
    spec.kind = EstimateEvent::sign_change;
    spec.step = FloatPMF::from_weights(0, {0.5, 0.5});  // never negative
    const auto e = estimate_event_prob(spec, 5, 1000, plan(3));
    EXPECT_EQ(e.point, 0.0);
    EXPECT_EQ(e.ci_lo, 0.0);
    EXPECT_GT(e.ci_hi, 0.0);

    EventSpec still;
    still.step = FloatPMF::point_mass(0);
    still.dim = 3;
    EXPECT_EQ(estimate_event_prob(still, 10, 100, plan(3)).point, 1.0);
    EXPECT_EQ(code_of([] { estimate_event_prob(EventSpec{}, 2, 99, plan(3)); }), Errc::precondition_violation);
    EXPECT_FALSE(exact_event_prob(EventSpec{EstimateEvent::segment_hit}, 3).has_value());
}

TEST(EstimateEvent, WorkerCountInvariant) {
    EventSpec spec;
    spec.kind = EstimateEvent::segment_hit;
    spec.dim = 3;
    auto p1 = plan(9);
    auto p4 = plan(9);
    p4.workers = 4;
    EXPECT_EQ(estimate_event_prob(spec, 16, 20'000, p1).successes, estimate_event_prob(spec, 16, 20'000, p4).successes);
    EXPECT_EQ(parse_estimate_event("V_n"), EstimateEvent::v_n);
    EXPECT_EQ(code_of([] { parse_estimate_event("nope"); }), Errc::parse_error);
}

TEST(Quantile, GammaDefinition) {
    const auto heavy = FloatPMF::from_weights(-2, {0.05, 0.4, 0.1, 0.4, 0.05});
    EXPECT_EQ(quantile_gamma(heavy, 0.5), 0);
    EXPECT_EQ(quantile_gamma(heavy, 0.1), 1);
    EXPECT_EQ(quantile_gamma(heavy, 0.95), 0);
    // P(|X| > g) = 2 (10 - g) / 21
    const auto wide = uniform_pmf<double>(-10, 10);
    EXPECT_EQ(quantile_gamma(wide, 0.5), 4);
}

FloatPMF unit_heavy() { return FloatPMF::from_weights(-5, {0.15, 0, 0, 0, 0.35, 0, 0.35, 0, 0, 0, 0.15}); }

TEST(Quantile, HeavyLawBound) {
    const auto heavy = unit_heavy();
    const auto r = check_quantile_bound(heavy, 0.5, 64, 1'000'000, plan(11));
    EXPECT_TRUE(r.holds);
    EXPECT_GT(r.lhs.point, r.rhs_lo);
    EXPECT_GT(r.lhs_exact, r.rhs_exact);
    EXPECT_LE(r.lhs.ci_lo, r.lhs_exact);
    EXPECT_GE(r.lhs.ci_hi, r.lhs_exact);
}

TEST(Quantile, Edges) {
    const auto zero = check_quantile_bound(FloatPMF::point_mass(0), 0.5, 16, 1000, plan(12));
    EXPECT_EQ(zero.lhs.point, 0.0);
    EXPECT_EQ(zero.rhs_lo, 0.0);
    EXPECT_TRUE(zero.holds);

    const auto heavy = unit_heavy();
    const auto near_one = check_quantile_bound(heavy, 0.99, 32, 100'000, plan(13));
    EXPECT_EQ(near_one.gamma, 0);
    EXPECT_TRUE(near_one.holds);
}

TEST(Qkn2, DegenerateRejected) {
    const auto law = WaitingTimeLaw::parse("999999999999/1000000000000:1,1/1000000000000:16");
    const std::vector<std::uint64_t> n{16};
    EXPECT_EQ(code_of([&] { check_qkn2(law, compute_A().A, n, 1000, plan(1)); }), Errc::degenerate_input);
    const auto three = WaitingTimeLaw::parse("1/2:1,1/4:4,1/4:9");
    EXPECT_EQ(code_of([&] { check_qkn2(three, compute_A().A, n, 1000, plan(1)); }), Errc::precondition_violation);
}

TEST(Qkn2, OneStepMatchesExactLaw) {
    const auto law = WaitingTimeLaw::parse("3/4:1,1/4:16");
    const std::vector<std::uint64_t> n{1};
    const auto rows = check_qkn2(law, compute_A().A, n, 200'000, plan(2));
    ASSERT_EQ(rows.size(), 1u);
    const double exact = zero_mass_of_X(as_pmf(law), kQkn2GMax).get_d();
    EXPECT_LE(rows[0].s2.ci_lo, exact);
    EXPECT_GE(rows[0].s2.ci_hi, exact);
    EXPECT_NEAR(rows[0].s1, zero_mass_of_X(as_pmf(truncated_law(law, 1)), kQkn2GMax).get_d(), 1e-12);
    EXPECT_LE(rows[0].s1_coupled.ci_lo, rows[0].s1);
    EXPECT_GE(rows[0].s1_coupled.ci_hi, rows[0].s1);
    EXPECT_TRUE(rows[0].holds);
}

TEST(Series, SyntheticPowerLaws) {
    std::vector<FitPoint> half, flips;
    for (double n = 1; n <= 1024; n *= 2) {
        half.push_back({n, std::pow(n, -0.5), std::pow(n, -0.5), std::pow(n, -0.5)});
        flips.push_back({n, 0.5, 0.5, 0.5});
    }
    const auto rows = series_partial_sums(half, flips);
    ASSERT_EQ(rows.size(), half.size());
    double harmonic = 0;
    for (int k = 1; k <= 1024; ++k) harmonic += 1.0 / k;
    EXPECT_NEAR(rows.back().sum_sq, harmonic, 1e-9);
    EXPECT_NEAR(rows.back().sum_cross, 0.5 * [] {
        double s = 0;
        for (int k = 1; k <= 1024; ++k) s += std::pow(k, -0.5);
        return s;
    }(), 1e-9);

    std::vector<FitPoint> fast;
    for (double n = 1; n <= 1024; n *= 2) fast.push_back({n, std::pow(n, -0.6), std::pow(n, -0.6), std::pow(n, -0.6)});
    const auto conv = series_partial_sums(fast, flips);
    // dyadic blocks of n^-1.2 shrink by 2^-0.2; harmonic blocks approach ln 2
    for (std::size_t i = conv.size() - 2; i < conv.size(); ++i) {
        const double prev = conv[i - 1].sum_sq - conv[i - 2].sum_sq;
        const double cur = conv[i].sum_sq - conv[i - 1].sum_sq;
        EXPECT_NEAR(cur / prev, std::pow(2.0, -0.2), 0.01);
        EXPECT_NEAR(rows[i].sum_sq - rows[i - 1].sum_sq, std::log(2.0), 0.01);
    }
    EXPECT_THROW(series_partial_sums(std::span(half).first(1), std::span(flips).first(1)), Error);
}

TEST(Series, LogSeriesIdentity) {
    for (double qv : {0.5, 0.1, 0.01}) EXPECT_NEAR(log_series(qv), std::log(1 / qv), kLogSeriesTolerance);
    EXPECT_THROW(log_series(0.0), Error);
}

TEST(LawScalars, ZeroAndTailMass) {
    const auto delta = zero_mass_of_X(ExactPMF::point_mass(1)).get_d();
    EXPECT_NEAR(delta, 0.25, 1e-8);
    EXPECT_NEAR(tail_mass_of_X(ExactPMF::point_mass(1), 1.0).get_d(), 0.75, 1e-8);
    EXPECT_EQ(zero_mass_of_X(ExactPMF::point_mass(0)), 1);
}

TEST(CheckReport, Csv) {
    CheckReport rep;
    rep.add({"momest", "tau=R[0,1]", fmt(q(1, 4)), fmt(q(3, 8)), fmt(0.125), true});
    rep.add({"maxest", "y=1,m=1", fmt(0.5), fmt(1.5), fmt(1.0), false});
    EXPECT_EQ(rep.failures(), 1u);
    EXPECT_EQ(rep.to_csv(), "check_name,param_summary,lhs,rhs,margin,holds\n"
                            "momest,\"tau=R[0,1]\",1/4,3/8,0.125,true\n"
                            "maxest,\"y=1,m=1\",0.5,1.5,1,false\n");
}
