#include <gtest/gtest.h>

#include <cmath>
#include <map>

#include "polywalk/corpus.hpp"
#include "polywalk/stats.hpp"
#include "polywalk/walks.hpp"

using namespace polywalk;

namespace {

RandomStream test_rng(std::uint16_t sub) { return derive_stream(4242, CommandId::testing, 0).substream(sub); }

std::vector<std::size_t> steps_of(const std::vector<EventRecord>& ev) {
    std::vector<std::size_t> out;
    for (const auto& e : ev) out.push_back(e.n);
    return out;
}

WalkPath random_lattice_path(int d, std::size_t n, RandomStream& rng, int reach = 3) {
    WalkPath p(d);
    std::vector<std::int64_t> step(static_cast<std::size_t>(d));
    for (std::size_t i = 0; i < n; ++i) {
        for (auto& s : step) s = static_cast<std::int64_t>(rng.uniform_below(2 * reach + 1)) - reach;
        p.advance(step);
    }
    return p;
}

}  // namespace

TEST(WalkPath, Basics) {
    const auto p = WalkPath::from_rows(2, {{0, 0}, {1, 0}, {1, -1}});
    EXPECT_EQ(p.size(), 3u);
    EXPECT_EQ(p.steps(), 2u);
    EXPECT_EQ(p.at(2, 1), -1);
    EXPECT_THROW(p.position(3), Error);
    EXPECT_THROW(WalkPath::from_rows(1, {{1}}), Error);
    EXPECT_THROW(WalkPath(0), Error);
}

TEST(Increment, ZeroLaw) {
    const auto law = WaitingTimeLaw::parse("1:0");
    auto rng = test_rng(1);
    for (int i = 0; i < 1000; ++i) ASSERT_EQ(sample_increment(law, std::nullopt, rng).x, 0);
}

TEST(Increment, MatchesLawOfX) {
    auto corpus_rng = test_rng(2);
    auto rng = test_rng(3);
    for (int l = 0; l < 10; ++l) {
        const auto law = random_waiting_law(corpus_rng, 3, 4);
        const auto oracle = law_of_X(as_pmf<double>(law), 20).law;
        std::map<std::int64_t, std::uint64_t> counts;
        for (int i = 0; i < 100'000; ++i) {
            const auto x = sample_increment(law, std::nullopt, rng).x;
            // G beyond 20 has probability 3^-20; fold such draws into the support edge
            ++counts[std::clamp(x, oracle.min_support(), oracle.max_support())];
        }
        EXPECT_GT(chi_square_gof(counts, oracle).p_value, 0.01) << law.to_spec();
    }
}

TEST(Increment, UniformPairFrequencies) {
    // tau = R[0,1]: P(X = 0) from the exact law, 10^6 draws within 3 standard errors
    const auto law = WaitingTimeLaw::parse("1:1");
    const double p0 = law_of_X(as_pmf<double>(law), 20).law.at(0);
    auto rng = test_rng(4);
    const int n = 1'000'000;
    int zeros = 0;
    for (int i = 0; i < n; ++i) zeros += sample_increment(law, std::nullopt, rng).x == 0;
    EXPECT_NEAR(static_cast<double>(zeros) / n, p0, 3 * std::sqrt(p0 * (1 - p0) / n));
}

TEST(Increment, TruncatedLevel) {
    const auto law = WaitingTimeLaw::parse("3/4:1,1/4:16");
    const auto oracle = law_of_X(as_pmf<double>(truncated_law(law, 1)), 20).law;
    auto rng = test_rng(5);
    std::map<std::int64_t, std::uint64_t> counts;
    for (int i = 0; i < 100'000; ++i) {
        const auto d = sample_increment(law, 1, rng);
        for (auto k : d.kappas) ASSERT_EQ(k, 1u);
        ++counts[std::clamp(d.x, oracle.min_support(), oracle.max_support())];
    }
    EXPECT_GT(chi_square_gof(counts, oracle).p_value, 0.01);
}

TEST(Increment, CoupledLevelsHaveTruncatedLaws) {
    const auto law = WaitingTimeLaw::parse("1/2:1,1/4:4,1/4:9");
    auto rng = test_rng(6);
    std::vector<std::map<std::int64_t, std::uint64_t>> counts(3);
    CoupledIncrement inc;
    for (int i = 0; i < 100'000; ++i) {
        sample_coupled_increment(law, 3, rng, inc);
        for (std::size_t k = 0; k < 3; ++k) ++counts[k][inc.x[k]];
    }
    for (std::size_t k = 1; k <= 3; ++k) {
        const auto oracle = law_of_X(as_pmf<double>(truncated_law(law, k)), 20).law;
        std::map<std::int64_t, std::uint64_t> c;
        for (const auto& [x, n] : counts[k - 1]) c[std::clamp(x, oracle.min_support(), oracle.max_support())] += n;
        EXPECT_GT(chi_square_gof(c, oracle).p_value, 0.01) << "level " << k;
    }
}

TEST(SimulateWalk, LengthAndSymmetry) {
    const auto law = WaitingTimeLaw::parse("1/2:1,1/2:3");
    EXPECT_THROW(simulate_walk(1, law, std::nullopt, 0, test_rng(7)), Error);
    EXPECT_EQ(simulate_walk(1, law, std::nullopt, 1, test_rng(7)).size(), 2u);

    const int reps = 10'000;
    double sum0 = 0, sum1 = 0, sq0 = 0, sq1 = 0, cross = 0;
    for (int r = 0; r < reps; ++r) {
        const auto p = simulate_walk(2, law, std::nullopt, 100, derive_stream(99, CommandId::testing, r));
        const auto a = static_cast<double>(p.at(100, 0));
        const auto b = static_cast<double>(p.at(100, 1));
        sum0 += a;
        sum1 += b;
        sq0 += a * a;
        sq1 += b * b;
        cross += a * b;
    }
    const double m0 = sum0 / reps, m1 = sum1 / reps;
    const double v0 = sq0 / reps - m0 * m0, v1 = sq1 / reps - m1 * m1;
    EXPECT_LT(std::abs(m0), 3 * std::sqrt(v0 / reps));
    EXPECT_LT(std::abs(m1), 3 * std::sqrt(v1 / reps));
    EXPECT_LT(std::abs((cross / reps - m0 * m1) / std::sqrt(v0 * v1)), 0.03);
}

TEST(SimulateWalk, Deterministic) {
    const auto law = WaitingTimeLaw::parse("1/2:1,1/2:3");
    const auto a = simulate_walk(3, law, std::nullopt, 50, derive_stream(5, CommandId::testing, 2));
    const auto b = simulate_walk(3, law, std::nullopt, 50, derive_stream(5, CommandId::testing, 2));
    EXPECT_EQ(path_to_csv(a), path_to_csv(b));
}

TEST(StepPairSampler, MatchesExactLaw) {
    const auto step = lazy_step_law<double>();
    const StepPairSampler sampler(step, 8);
    const auto at8 = convolution_power(step, 8);
    auto rng = test_rng(8);
    std::map<std::int64_t, std::uint64_t> s, diff;
    for (int i = 0; i < 200'000; ++i) {
        const auto [a, b] = sampler.sample(rng);
        ++s[a];
        ++diff[b - a];
    }
    EXPECT_GT(chi_square_gof(s, at8).p_value, 0.001);
    EXPECT_GT(chi_square_gof(diff, step).p_value, 0.001);
}

TEST(SignChange, Examples) {
    EXPECT_EQ(steps_of(detect_sign_change(WalkPath::line({0, 1, -2, -3}), 0)), (std::vector<std::size_t>{1}));
    EXPECT_TRUE(detect_sign_change(WalkPath::line({0, 1, 0, -1}), 0).empty());
    EXPECT_TRUE(detect_sign_change(WalkPath::line({0, 1, 0, -1}), 0, false).empty());
    auto rng = test_rng(9);
    WalkPath simple(1);
    for (int i = 0; i < 10'000; ++i) {
        const std::int64_t s = rng.fair_sign();
        simple.advance(std::span<const std::int64_t>(&s, 1));
    }
    EXPECT_TRUE(detect_sign_change(simple, 0).empty());
}

TEST(LevelCrossing, Examples) {
    const auto p = WalkPath::line({0, 2});
    EXPECT_EQ(steps_of(detect_level_crossing(p, 0, 1.0)), (std::vector<std::size_t>{0}));
    EXPECT_EQ(steps_of(detect_level_crossing(p, 0, 2.0)), (std::vector<std::size_t>{0}));
    EXPECT_TRUE(detect_level_crossing(WalkPath::line({0, 0, 0}), 0, 1.0).empty());
}

TEST(SegmentHitsBox, Examples) {
    const auto cube = Box::cube(3, 1.0);
    EXPECT_TRUE(segment_hits_box({-2, -2, -2}, {2, 2, 2}, cube));
    EXPECT_FALSE(segment_hits_box({2, 0, 0}, {3, 0, 0}, cube));
    EXPECT_TRUE(segment_hits_box({2, 0, 0}, {-2, 0, 0}, cube));
    // corner touch and diagonal miss
    EXPECT_TRUE(segment_hits_box({2, 0, 0}, {0, 2, 0}, cube));
    EXPECT_FALSE(segment_hits_box({3, 0, 0}, {0, 3, 0}, cube));
    EXPECT_TRUE(segment_hits_box({1, 1, 1}, {1, 1, 1}, cube));
    const Box half = Box::cube(2, 0.5);
    EXPECT_TRUE(segment_hits_box({-1.0, 1.0}, {1.0, -1.0}, half));
    EXPECT_FALSE(segment_hits_box({1.0, 0.0}, {0.0, 2.0}, half));
}

TEST(SegmentHitsBox, IntegerAndFloatingAgree) {
    auto rng = test_rng(10);
    const auto cube = Box::cube(3, 1.0);
    for (int i = 0; i < 20'000; ++i) {
        std::vector<std::int64_t> a(3), b(3);
        std::vector<double> fa(3), fb(3);
        for (int c = 0; c < 3; ++c) {
            a[c] = static_cast<std::int64_t>(rng.uniform_below(9)) - 4;
            b[c] = static_cast<std::int64_t>(rng.uniform_below(9)) - 4;
            fa[c] = static_cast<double>(a[c]);
            fb[c] = static_cast<double>(b[c]);
        }
        ASSERT_EQ(segment_hits_box(std::span<const std::int64_t>(a), std::span<const std::int64_t>(b), cube),
                  segment_hits_box(std::span<const double>(fa), std::span<const double>(fb), cube));
    }
}

TEST(PolygonalHits, Examples) {
    const auto inside = WalkPath::from_rows(3, {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, -1}});
    EXPECT_EQ(count_polygonal_hits(inside, Box::cube(3, 1.0)).count, 3u);
    const Box far({{2, 5}, {2, 5}, {2, 5}});
    const auto away = WalkPath::from_rows(3, {{0, 0, 0}, {-1, 0, 0}, {-1, -1, -1}});
    EXPECT_EQ(count_polygonal_hits(away, far).count, 0u);
    EXPECT_THROW(count_polygonal_hits(away, Box::cube(2, 1.0)), Error);
}

TEST(PolygonalHits, ImpliesEveryCoordinateInterval) {
    auto rng = test_rng(11);
    const auto cube = Box::cube(3, 1.0);
    for (int i = 0; i < 300; ++i) {
        const auto p = random_lattice_path(3, 60, rng, 2);
        const auto hits = detect_segment_hits(p, cube);
        std::size_t min_coord = p.steps();
        for (int c = 0; c < 3; ++c) {
            const auto ih = steps_of(detect_interval_hits(p, c, -1.0, 1.0));
            min_coord = std::min(min_coord, ih.size());
            for (const auto& h : hits) ASSERT_TRUE(std::binary_search(ih.begin(), ih.end(), h.n));
        }
        EXPECT_LE(hits.size(), min_coord);
    }
}

TEST(IntervalHits, InsideOrLevelCrossing) {
    auto rng = test_rng(12);
    for (int i = 0; i < 300; ++i) {
        const auto p = random_lattice_path(1, 80, rng, 4);
        const auto up = steps_of(detect_level_crossing(p, 0, 1.0));
        const auto down = steps_of(detect_level_crossing(p, 0, -1.0));
        for (const auto& e : detect_interval_hits(p, 0, -1.0, 1.0)) {
            const bool inside = std::abs(p.at(e.n, 0)) <= 1;
            const bool crossed = std::binary_search(up.begin(), up.end(), e.n) ||
                                 std::binary_search(down.begin(), down.end(), e.n);
            ASSERT_TRUE(inside || crossed);
        }
    }
}

TEST(Detectors, NegationSymmetry) {
    auto rng = test_rng(13);
    for (int i = 0; i < 200; ++i) {
        const auto p = random_lattice_path(1, 50, rng, 3);
        WalkPath neg(1);
        for (std::size_t n = 1; n < p.size(); ++n) {
            const std::int64_t v = -p.at(n, 0);
            neg.push(std::span<const std::int64_t>(&v, 1));
        }
        EXPECT_EQ(steps_of(detect_sign_change(p, 0)), steps_of(detect_sign_change(neg, 0)));
        EXPECT_EQ(steps_of(detect_level_crossing(p, 0, 2.0)), steps_of(detect_level_crossing(neg, 0, -2.0)));
    }
}

TEST(Vn, Examples) {
    EXPECT_EQ(steps_of(detect_Vn(WalkPath::from_rows(2, {{0, 0}, {1, 0}, {-2, 0}}))), (std::vector<std::size_t>{1}));
    EXPECT_TRUE(detect_Vn(WalkPath::from_rows(2, {{0, 0}, {1, 0}, {-2, 1}})).empty());
    EXPECT_TRUE(detect_Vn(WalkPath::from_rows(2, {{0, 0}, {0, 0}, {-2, 0}})).empty());
    EXPECT_THROW(detect_Vn(WalkPath(3)), Error);
}

TEST(Returns, Examples) {
    const auto p = WalkPath::from_rows(2, {{0, 0}, {1, 0}, {0, 0}, {0, 1}, {0, 0}});
    EXPECT_EQ(steps_of(detect_returns(p)), (std::vector<std::size_t>{2, 4}));
}

TEST(Csv, Formats) {
    const auto p = WalkPath::from_rows(2, {{0, 0}, {1, -1}});
    EXPECT_EQ(path_to_csv(p), "n,x0,x1\n0,0,0\n1,1,-1\n");
    const std::vector<EventRecord> ev{{EventKind::sign_change, 3, 0, -4}, {EventKind::segment_hit, 5, -1, 0}};
    EXPECT_EQ(events_to_csv(ev), "kind,n,coord,payload\nsign_change,3,0,-4\nsegment_hit,5,-1,0\n");
}
