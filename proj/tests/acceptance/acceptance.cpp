// Acceptance runner: one PASS/FAIL line per criterion; exit status 1 if any selected criterion fails.

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>

#include "polywalk/drw.hpp"
#include "polywalk/params.hpp"
#include "polywalk/suites.hpp"
#include "polywalk/walks.hpp"

using namespace polywalk;
namespace fs = std::filesystem;

namespace {

// Tolerances and sizes, pinned.
constexpr double kLemmaLimitSec = 300;

constexpr double kReturnSlopeLo = -0.56;
constexpr double kReturnSlopeHi = -0.44;
constexpr double kCrossingSlopeLo = -0.60;
constexpr double kCrossingSlopeHi = -0.40;
constexpr std::uint64_t kCrossingReplicas = 1'000'000;
constexpr double kScalingLimitSec = 600;

constexpr double kSegmentSlopeMax = -1.3;
constexpr std::uint64_t kSegmentReplicas = 10'000'000;
constexpr std::size_t kTailPaths = 10'000;
constexpr std::size_t kTailLength = 10'000;
constexpr std::size_t kTailStart = 100;
constexpr double kTailMeanMax = 0.2;
constexpr double kSegmentLimitSec = 1800;

constexpr double kBoxSlopeLo = -1.15;
constexpr double kBoxSlopeHi = -0.85;
constexpr std::uint64_t kBoxReplicas = 1'000'000;
constexpr double kDLambda = 0.25;
constexpr int kDLambdaDim = 3;
constexpr std::size_t kDLambdaLaws = 10;

constexpr int kParamsKMax = 5;
constexpr std::uint64_t kC2 = 4097;
constexpr std::uint64_t kY2Min = 98'328;
constexpr double kParamsLimitSec = 60;

constexpr const char* kDrwLaw = "3/4:1,1/4:3";
constexpr std::size_t kDrwIncrements = 100'000;
constexpr double kDrwMarginalP = 0.01;
constexpr double kDrwIndependenceP = 0.001;
constexpr std::int64_t kDrwJointEdge = 4;
constexpr double kDrwLimitSec = 300;

constexpr const char* kQkn2Law = "3/4:1,1/4:16";
constexpr std::uint64_t kQkn2Replicas = 1'000'000;
constexpr double kQkn2LimitSec = 900;

constexpr std::uint64_t kReproReplicas = 200'000;

constexpr std::uint64_t kSeed = 20'240'601;

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

struct Outcome {
    bool pass = false;
    std::string detail;
};

StreamPlan plan(std::uint16_t substream) {
    StreamPlan p;
    p.seed = kSeed;
    p.command = CommandId::acceptance;
    p.substream = substream;
    p.workers = default_workers();
    return p;
}

std::vector<std::uint64_t> doubling(std::uint64_t lo, std::uint64_t hi) {
    std::vector<std::uint64_t> out;
    for (auto n = lo; n <= hi; n *= 2) out.push_back(n);
    return out;
}

std::vector<FitPoint> mc_points(const EventSpec& spec, std::span<const std::uint64_t> grid, std::uint64_t replicas,
                                std::uint16_t substream_base) {
    std::vector<FitPoint> pts;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const auto e = estimate_event_prob(spec, grid[i], replicas, plan(static_cast<std::uint16_t>(substream_base + i)));
        pts.push_back({static_cast<double>(grid[i]), e.point, e.ci_lo, e.ci_hi});
        std::cout << "  n=" << grid[i] << " p=" << num(e.point) << " ci=[" << num(e.ci_lo) << "," << num(e.ci_hi)
                  << "]\n";
    }
    return pts;
}

// 1: exact lemma suites ---------------------------------------------------------------------

Outcome criterion_1() {
    const auto t0 = Clock::now();
    const LemmaSuiteConfig cfg;
    const auto rep = run_lemma_suite(cfg);
    std::size_t systems = 0;
    for (const auto& row : rep.rows) {
        if (row.check == "recurrevents") ++systems;
        std::cout << "  " << row.check << " [" << row.params << "] lhs=" << row.lhs << " rhs=" << row.rhs
                  << (row.holds ? "" : " FAILED") << '\n';
    }
    std::size_t max_horizon = 0;
    for (const auto& sys : default_event_corpus(cfg.seed, cfg.event_chains)) max_horizon = std::max(max_horizon, sys.horizon);
    const double sec = since(t0);
    const bool pass = rep.all_hold() && systems >= 20 && max_horizon <= 14 && sec <= kLemmaLimitSec;
    return {pass, "failures=" + std::to_string(rep.failures()) + " event_systems=" + std::to_string(systems) +
                      " max_N=" + std::to_string(max_horizon) + " time=" + num(sec) + "s"};
}

// 2: n^-1/2 scaling -------------------------------------------------------------------------

Outcome criterion_2() {
    const auto t0 = Clock::now();
    const auto lazy = lazy_step_law<double>();
    std::vector<FitPoint> exact;
    for (auto n : doubling(16, 512)) {
        const double p = convolution_power(lazy, n).at(0);
        exact.push_back({static_cast<double>(n), p, p, p});
    }
    const auto fit_exact = fit_exponent(exact);

    EventSpec spec;
    spec.kind = EstimateEvent::level_crossing;
    spec.level = 1.0;
    const auto grid = doubling(16, 1024);
    const auto fit_mc = fit_exponent(mc_points(spec, grid, kCrossingReplicas, 0));
    const double sec = since(t0);
    const bool pass = fit_exact.slope >= kReturnSlopeLo && fit_exact.slope <= kReturnSlopeHi &&
                      fit_mc.slope >= kCrossingSlopeLo && fit_mc.slope <= kCrossingSlopeHi && sec <= kScalingLimitSec;
    return {pass, "return_slope=" + num(fit_exact.slope) + " crossing_slope=" + num(fit_mc.slope) + " ci=[" +
                      num(fit_mc.slope_lo) + "," + num(fit_mc.slope_hi) + "] time=" + num(sec) + "s"};
}

// 3a: segment hits in 3D ---------------------------------------------------------------------

Outcome criterion_3a() {
    const auto t0 = Clock::now();
    EventSpec spec;
    spec.kind = EstimateEvent::segment_hit;
    spec.dim = 3;
    const auto grid = doubling(16, 512);
    const auto pts = mc_points(spec, grid, kSegmentReplicas, 0);
    // per-coordinate upper bound: each coordinate's segment must meet [-1, 1]
    EventSpec coord = spec;
    coord.kind = EstimateEvent::interval_hit;
    std::vector<FitPoint> bound;
    for (auto n : grid) {
        const double b = *exact_event_prob(coord, n);
        bound.push_back({static_cast<double>(n), b, b, b});
    }
    bool under_bound = true;
    for (std::size_t i = 0; i < pts.size(); ++i) under_bound = under_bound && pts[i].ci_lo <= bound[i].p;
    const auto fit = fit_exponent(pts);
    const auto fit_bound = fit_exponent(bound);
    const double sec = since(t0);
    const bool pass = fit.slope <= kSegmentSlopeMax && under_bound && sec <= kSegmentLimitSec;
    return {pass, "slope=" + num(fit.slope) + " ci=[" + num(fit.slope_lo) + "," + num(fit.slope_hi) +
                      "] product_bound_slope=" + num(fit_bound.slope) +
                      " below_product_bound=" + (under_bound ? "yes" : "no") + " time=" + num(sec) + "s"};
}

// 3b: hits after n = 100 along long paths -----------------------------------------------------

Outcome criterion_3b() {
    const auto t0 = Clock::now();
    const auto lazy = lazy_step_law<double>();
    const Box box = Box::cube(3, 1.0);
    auto tally = run_replicas(kTailPaths, default_workers(), CountTally(2), [&](std::uint64_t r, CountTally& t) {
        const auto rng = derive_stream(kSeed, CommandId::acceptance, static_cast<std::uint32_t>(r)).substream(300);
        const auto path = simulate_lattice_walk(3, lazy, kTailLength, rng);
        const auto hits = count_polygonal_hits(path, box);
        for (auto n : hits.indices)
            if (n >= kTailStart) ++t[0];
        t[1] += hits.count;
    });
    const double mean_tail = static_cast<double>(tally[0]) / kTailPaths;
    const double mean_all = static_cast<double>(tally[1]) / kTailPaths;
    const double sec = since(t0);
    const bool pass = mean_tail <= kTailMeanMax && sec <= kSegmentLimitSec;
    return {pass, "mean_hits_after_" + std::to_string(kTailStart) + "=" + num(mean_tail) + " (limit " +
                      num(kTailMeanMax) + ") mean_hits_total=" + num(mean_all) + " time=" + num(sec) + "s"};
}

// 4: box visits in 2D and the concentration bound -------------------------------------------

Outcome criterion_4() {
    const auto t0 = Clock::now();
    EventSpec spec;
    spec.kind = EstimateEvent::box_visit;
    spec.dim = 2;
    const auto fit = fit_exponent(mc_points(spec, doubling(16, 1024), kBoxReplicas, 0));

    auto rng = derive_stream(kSeed, CommandId::acceptance, 0).substream(400);
    std::size_t laws = 0;
    bool below_one = true;
    Rational worst = 0;
    while (laws < kDLambdaLaws) {
        const auto law = random_waiting_law(rng, 4, 8, false);
        const auto r = dlambda_sup(law, kDLambda, kDLambdaDim);
        if (!r.non_degenerate) continue;
        ++laws;
        below_one = below_one && r.value < 1;
        if (r.value > worst) worst = r.value;
        std::cout << "  law " << law.to_spec() << " D=" << num(r.value.get_d()) << '\n';
    }
    const bool pass = fit.slope >= kBoxSlopeLo && fit.slope <= kBoxSlopeHi && below_one;
    return {pass, "box_slope=" + num(fit.slope) + " ci=[" + num(fit.slope_lo) + "," + num(fit.slope_hi) +
                      "] max_D=" + num(worst.get_d()) + " over " + std::to_string(laws) + " laws time=" +
                      num(since(t0)) + "s"};
}

// 5: parameter construction -------------------------------------------------------------------

Outcome criterion_5() {
    const auto t0 = Clock::now();
    const auto hp = construct_params(compute_A().A, kParamsKMax);
    const auto rep = validate_params(hp);
    double min_slack = std::numeric_limits<double>::infinity();
    bool all_nonneg = true;
    for (const auto& c : rep.checks) {
        min_slack = std::min(min_slack, c.slack);
        all_nonneg = all_nonneg && c.holds && c.slack >= -kLogSlackTolerance;
        std::cout << "  k=" << c.k << ' ' << c.constraint << " slack=" << num(c.slack) << (c.holds ? "" : " FAILED")
                  << '\n';
    }
    const auto& lv2 = hp.levels.front();
    const bool c2 = lv2.c_exact && *lv2.c_exact == kC2;
    const bool y2 = lv2.y_exact && *lv2.y_exact >= kY2Min;
    const double sec = since(t0);
    const bool pass = rep.all_hold() && all_nonneg && c2 && y2 && sec <= kParamsLimitSec;
    return {pass, "checks=" + std::to_string(rep.checks.size()) + " min_slack=" + num(min_slack) +
                      " c2=" + (lv2.c_exact ? std::to_string(*lv2.c_exact) : "?") +
                      " y2=" + (lv2.y_exact ? std::to_string(*lv2.y_exact) : "?") +
                      " time=" + num(sec) + "s"};
}

// 6: embedded walk of the DRW -----------------------------------------------------------------

Outcome criterion_6() {
    const auto t0 = Clock::now();
    DRWConfig cfg;
    cfg.d = 2;
    cfg.law = WaitingTimeLaw::parse(kDrwLaw);
    cfg.phases = 4 * kDrwIncrements;
    auto rng = derive_stream(kSeed, CommandId::acceptance, 0).substream(600);
    WalkPath w(2);
    for (;;) {
        w = embedded_walk(simulate_drw(cfg, rng));
        // the final increment may be cut off by the end of the trace and is dropped
        if (w.size() >= kDrwIncrements + 2) break;
        cfg.phases *= 2;
    }
    const auto oracle = law_of_X(as_pmf<double>(cfg.law), 20).law;
    std::map<std::int64_t, std::uint64_t> hx, vy;
    const auto n_bins = static_cast<std::size_t>(2 * kDrwJointEdge + 1);
    std::vector<std::vector<std::uint64_t>> joint(n_bins, std::vector<std::uint64_t>(n_bins, 0));
    for (std::size_t i = 0; i < kDrwIncrements; ++i) {
        const auto dx = w.at(i + 1, 0) - w.at(i, 0);
        const auto dy = w.at(i + 1, 1) - w.at(i, 1);
        ++hx[std::clamp(dx, oracle.min_support(), oracle.max_support())];
        ++vy[std::clamp(dy, oracle.min_support(), oracle.max_support())];
        ++joint[clamp_bin(dx, kDrwJointEdge)][clamp_bin(dy, kDrwJointEdge)];
    }
    const auto gx = chi_square_gof(hx, oracle);
    const auto gy = chi_square_gof(vy, oracle);
    const auto ind = chi_square_independence(joint);
    const double sec = since(t0);
    const bool pass =
        gx.p_value > kDrwMarginalP && gy.p_value > kDrwMarginalP && ind.p_value > kDrwIndependenceP && sec <= kDrwLimitSec;
    return {pass, "p_horizontal=" + num(gx.p_value) + " p_vertical=" + num(gy.p_value) +
                      " p_independence=" + num(ind.p_value) + " increments=" + std::to_string(kDrwIncrements) +
                      " time=" + num(sec) + "s"};
}

// 7: two-level return recursion ----------------------------------------------------------------

Outcome criterion_7() {
    const auto t0 = Clock::now();
    const auto law = WaitingTimeLaw::parse(kQkn2Law);
    const std::vector<std::uint64_t> grid{16, 64, 256};
    const double A = compute_A().A;
    const auto rows = check_qkn2(law, A, grid, kQkn2Replicas, plan(700));
    bool all = true;
    std::string detail;
    for (const auto& r : rows) {
        all = all && r.holds;
        std::cout << "  n=" << r.n << " s1=" << num(r.s1) << " s2=" << num(r.s2.point) << " s2_hi=" << num(r.s2.ci_hi)
                  << " bound=" << num(r.bound) << " replicas=" << r.replicas << '\n';
        detail += " n=" + std::to_string(r.n) + ":" + num(r.s2.ci_hi) + "<=" + num(r.bound);
    }
    const double sec = since(t0);
    return {all && sec <= kQkn2LimitSec, "A=" + num(A) + detail + " time=" + num(sec) + "s"};
}

// 8: reproducibility across worker counts -----------------------------------------------------

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

Outcome criterion_8() {
    const auto root = fs::temp_directory_path() / ("polywalk-acceptance-" + std::to_string(kSeed));
    fs::remove_all(root);
    const std::string base = std::string(POLYWALK_CLI) +
                             " --command estimate --event segment_hit --dim 3 --n-grid 16,32,64,128,256 --replicas " +
                             std::to_string(kReproReplicas) + " --seed " + std::to_string(kSeed);
    for (const char* w : {"1", "8"}) {
        const std::string cmd = base + " --workers " + w + " --out-dir " + (root / w).string() + " > /dev/null";
        if (std::system(cmd.c_str()) != 0) return {false, "estimate run with workers=" + std::string(w) + " failed"};
    }
    std::size_t compared = 0;
    for (const auto& entry : fs::directory_iterator(root / "1")) {
        const auto name = entry.path().filename();
        if (name == "run.log") continue;
        ++compared;
        if (slurp(entry.path()) != slurp(root / "8" / name)) return {false, name.string() + " differs"};
    }
    fs::remove_all(root);
    return {compared >= 3, "identical_files=" + std::to_string(compared) + " (run.log excluded)"};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"acceptance criteria"};
    std::vector<std::string> selected;
    app.add_option("--criterion", selected, "criterion id (1 2 3a 3b 4 5 6 7 8); default all");
    CLI11_PARSE(app, argc, argv);

    const std::vector<std::pair<std::string, std::function<Outcome()>>> all{
        {"1", criterion_1},   {"2", criterion_2}, {"3a", criterion_3a}, {"3b", criterion_3b}, {"4", criterion_4},
        {"5", criterion_5},   {"6", criterion_6}, {"7", criterion_7},   {"8", criterion_8}};
    if (selected.empty())
        for (const auto& [id, fn] : all) selected.push_back(id);

    int failures = 0;
    for (const auto& id : selected) {
        const auto it = std::find_if(all.begin(), all.end(), [&](const auto& c) { return c.first == id; });
        if (it == all.end()) {
            std::cerr << "unknown criterion " << id << '\n';
            return 2;
        }
        Outcome o;
        try {
            o = it->second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        std::cout << "criterion " << id << ": " << (o.pass ? "PASS" : "FAIL") << "  " << o.detail << std::endl;
        failures += !o.pass;
    }
    return failures == 0 ? 0 : 1;
}
