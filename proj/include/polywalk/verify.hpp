#pragma once

// Exact lemma checks, the counting-variable harness, Monte Carlo estimators and the (qkn2)
// recursion check.

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "polywalk/errors.hpp"
#include "polywalk/pmf.hpp"
#include "polywalk/rational.hpp"
#include "polywalk/replicas.hpp"
#include "polywalk/rng.hpp"
#include "polywalk/stats.hpp"
#include "polywalk/waiting_time.hpp"
#include "polywalk/walks.hpp"

namespace polywalk {

// Report rows ---------------------------------------------------------------------------------

struct CheckRow {
    std::string check;
    std::string params;
    std::string lhs;
    std::string rhs;
    std::string margin;
    bool holds = false;
};

inline std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}
inline std::string fmt(const Rational& v) { return v.get_str(); }

struct CheckReport {
    std::vector<CheckRow> rows;

    void add(CheckRow row) { rows.push_back(std::move(row)); }
    void append(const CheckReport& other) { rows.insert(rows.end(), other.rows.begin(), other.rows.end()); }
    std::size_t failures() const {
        std::size_t f = 0;
        for (const auto& r : rows) f += !r.holds;
        return f;
    }
    bool all_hold() const { return failures() == 0; }

    std::string to_csv() const {
        std::ostringstream os;
        os << "check_name,param_summary,lhs,rhs,margin,holds\n";
        for (const auto& r : rows)
            os << r.check << ",\"" << r.params << "\"," << r.lhs << ',' << r.rhs << ',' << r.margin << ','
               << (r.holds ? "true" : "false") << '\n';
        return os.str();
    }
};

namespace detail {

inline void require_nonincreasing_from_zero(const ExactPMF& tau) {
    require(tau.min_support() == 0, Errc::precondition_violation, "law must start at 0 with positive weight");
    const auto w = tau.weights();
    for (std::size_t i = 1; i < w.size(); ++i)
        require(w[i] <= w[i - 1], Errc::precondition_violation, "weights must be non-increasing");
}

inline std::string describe(const ExactPMF& p) {
    return "support=[" + std::to_string(p.min_support()) + "," + std::to_string(p.max_support()) + "]";
}

}  // namespace detail

// Moment estimate -----------------------------------------------------------------------------

struct MomestResult {
    Rational lhs;  // (E T)^2
    Rational rhs;  // (3/4) E T^2
    Rational variance;
    bool holds = false;
    bool corollary_holds = false;  // (E T)^2 <= 3 Var T
};

inline MomestResult check_momest(const ExactPMF& tau) {
    detail::require_nonincreasing_from_zero(tau);
    const auto m = moments(tau);
    MomestResult r;
    r.lhs = m.mean * m.mean;
    r.rhs = Rational(3, 4) * m.second_moment;
    r.variance = m.variance;
    r.holds = r.lhs <= r.rhs;
    r.corollary_holds = r.lhs <= 3 * m.variance;
    return r;
}

// Unimodality and the variance sandwich -------------------------------------------------------

struct UnimodResult {
    SymmetryReport shape;
    Rational var_pmf;
    Rational var_wald;
    Rational var_T;
    Rational mean_G;  // of G conditioned on G <= g_max
    Rational truncation_mass;
    bool wald_agrees = false;
    bool lower_ok = false;  // Var T <= Var X
    bool upper_ok = false;  // Var X <= 4 E(G) Var T
    bool holds() const { return shape.symmetric && shape.unimodal && wald_agrees && lower_ok && upper_ok; }
};

inline UnimodResult check_unimod(const ExactPMF& tau, std::uint64_t g_max = 20) {
    detail::require_nonincreasing_from_zero(tau);
    const auto x = law_of_X(tau, g_max);
    UnimodResult r;
    r.shape = is_symmetric_unimodal(x.law);
    r.truncation_mass = x.truncation_mass;
    r.var_pmf = moments(x.law).variance;

    const auto mt = moments(tau);
    r.var_T = mt.variance;
    const Rational norm = 1 - x.truncation_mass;
    Rational pg(2, 3);
    Rational odd = 0;
    Rational eg = 0;
    for (std::uint64_t g = 1; g <= g_max; ++g) {
        const Rational w = pg / norm;
        eg += w * static_cast<unsigned long>(g);
        if (g % 2 == 1) odd += w;
        pg /= 3;
    }
    r.mean_G = eg;
    r.var_wald = eg * mt.variance + odd * mt.mean * mt.mean;
    r.wald_agrees = r.var_wald == r.var_pmf;
    r.lower_ok = r.var_T <= r.var_pmf;
    r.upper_ok = r.var_pmf <= 4 * eg * r.var_T;
    return r;
}

// Unimodal lower bound ------------------------------------------------------------------------

/// Discrete constant for mu(|x| < c) >= c d' / sigma:
/// d' = min(1/4, d (1 - 1/sqrt 3) sqrt(9/10)) with d = 2 sqrt(3) / 9, rounded down.
inline const Rational kUnimodestConstant{1543, 10000};
inline constexpr double kContinuousUnimodConstant = 0.38490017945975050;  // 2 sqrt(3) / 9

struct UnimodestResult {
    double min_ratio = 0;  // min over the grid of mu(|x| < c) sigma / c
    double argmin_c = 0;
    bool holds = false;
};

inline UnimodestResult check_unimodest(const ExactPMF& mu, std::span<const double> c_grid,
                                       const Rational& d_prime = kUnimodestConstant) {
    const auto shape = is_symmetric_unimodal(mu);
    require(shape.symmetric && shape.unimodal, Errc::precondition_violation, "law must be symmetric unimodal");
    const Rational var = moments(mu).variance;
    require(var > 0, Errc::precondition_violation, "law must have positive variance");
    require(!c_grid.empty(), Errc::precondition_violation, "empty c grid");
    UnimodestResult r;
    r.holds = true;
    r.min_ratio = std::numeric_limits<double>::infinity();
    const double sigma = std::sqrt(var.get_d());
    for (double c : c_grid) {
        const Rational cq = rational_from_double(c);
        require(c > 0 && cq * cq <= var, Errc::precondition_violation, "c must satisfy 0 < c <= sigma");
        const Rational mass = interval_mass(mu, c);
        // mass >= c d' / sigma  <=>  mass^2 var >= (c d')^2
        if (mass * mass * var < cq * cq * d_prime * d_prime) r.holds = false;
        const double ratio = mass.get_d() * sigma / c;
        if (ratio < r.min_ratio) {
            r.min_ratio = ratio;
            r.argmin_c = c;
        }
    }
    return r;
}

/// c = 1, ..., floor(sigma), plus sigma itself.
inline std::vector<double> unimodest_grid(const ExactPMF& mu) {
    const double sigma = std::sqrt(moments(mu).variance.get_d());
    std::vector<double> grid;
    for (double c = 1; c <= sigma; c += 1) grid.push_back(c);
    // largest double not exceeding sigma
    double s = sigma;
    const Rational var = moments(mu).variance;
    while (rational_from_double(s) * rational_from_double(s) > var) s = std::nextafter(s, 0.0);
    if (s > 0) grid.push_back(s);
    return grid;
}

// Maximum point probability of convolved uniforms ---------------------------------------------

struct MaxestCell {
    std::uint64_t y = 0;
    std::uint64_t m = 0;
    double stat = 0;    // max_x P(x) sqrt(m) y
    Rational stat_sq;   // exact square of stat
    bool holds = false; // stat <= bound
};

struct MaxestResult {
    std::vector<MaxestCell> cells;
    double sup = 0;
    bool holds = false;
};

inline constexpr double kMaxestBound = 1.5;

/// Uses integer counts: the m-fold convolution of R[0, y] is counts / (y + 1)^m.
inline MaxestResult check_maxest(std::span<const std::uint64_t> y_grid, std::span<const std::uint64_t> m_grid,
                                 std::size_t cap = kDefaultSupportCap) {
    const Rational bound_sq = rational_from_double(kMaxestBound) * rational_from_double(kMaxestBound);
    MaxestResult res;
    res.holds = true;
    for (auto y : y_grid) {
        require(y >= 1, Errc::precondition_violation, "y must be at least 1");
        for (auto m : m_grid) {
            require(m >= 1, Errc::precondition_violation, "m must be at least 1");
            require(m * y + 1 <= cap, Errc::support_overflow, "convolution support exceeds cap");
            std::vector<BigInt> counts(1, BigInt(1));
            for (std::uint64_t j = 0; j < m; ++j) {
                // multiply by (1 + z + ... + z^y) with a sliding window sum
                std::vector<BigInt> next(counts.size() + y, BigInt(0));
                BigInt window = 0;
                for (std::size_t i = 0; i < next.size(); ++i) {
                    if (i < counts.size()) window += counts[i];
                    if (i >= y + 1 && i - y - 1 < counts.size()) window -= counts[i - y - 1];
                    next[i] = window;
                }
                counts = std::move(next);
            }
            BigInt best = 0;
            for (const auto& c : counts)
                if (c > best) best = c;
            BigInt denom = 1;
            for (std::uint64_t j = 0; j < m; ++j) denom *= static_cast<unsigned long>(y + 1);
            MaxestCell cell;
            cell.y = y;
            cell.m = m;
            Rational p(best, denom);
            p.canonicalize();
            cell.stat_sq = p * p * static_cast<unsigned long>(m) * static_cast<unsigned long>(y * y);
            cell.stat = std::sqrt(cell.stat_sq.get_d());
            cell.holds = cell.stat_sq <= bound_sq;
            res.holds = res.holds && cell.holds;
            res.sup = std::max(res.sup, cell.stat);
            res.cells.push_back(cell);
        }
    }
    return res;
}

// Counting-variable estimate ------------------------------------------------------------------

/// Finite-horizon Markov system with an adapted event per step; E_0 is the whole space.
struct EventSystem {
    std::string name;
    int initial_state = 0;
    std::size_t horizon = 0;
    std::function<std::vector<std::pair<int, Rational>>(int state)> kernel;
    std::function<bool(std::size_t n, std::span<const int> path)> event;  // path = s_0..s_n
};

inline constexpr std::uint64_t kMaxEnumeratedPaths = 10'000'000;

struct RecurrRow {
    std::uint64_t r = 0;
    Rational p_phi_gt_r;
    Rational bound;  // 1 - r / E(Phi)
    bool holds = false;
};

struct RecurrResult {
    Rational expected_phi;
    std::vector<Rational> event_prob;  // P(E_n), n = 0..N
    std::vector<Rational> phi_law;     // P(Phi = j), j = 0..N+1
    std::vector<RecurrRow> rows;
    std::uint64_t paths = 0;
    bool holds() const {
        for (const auto& r : rows)
            if (!r.holds) return false;
        return true;
    }
};

namespace detail {

class EventTree {
public:
    explicit EventTree(const EventSystem& s) : sys_(s) {}

    std::uint64_t count_paths() const {
        // path counts by (depth, state), memoized on states reached
        std::map<int, std::uint64_t> layer{{sys_.initial_state, 1}};
        for (std::size_t n = 0; n < sys_.horizon; ++n) {
            std::map<int, std::uint64_t> next;
            for (const auto& [st, cnt] : layer)
                for (const auto& [to, p] : sys_.kernel(st)) {
                    if (p == 0) continue;
                    next[to] += cnt;
                    require(next[to] <= kMaxEnumeratedPaths, Errc::support_overflow,
                            sys_.name + ": more than 10^7 paths");
                }
            layer = std::move(next);
        }
        std::uint64_t total = 0;
        for (const auto& [st, cnt] : layer) total += cnt;
        require(total <= kMaxEnumeratedPaths, Errc::support_overflow, sys_.name + ": more than 10^7 paths");
        return total;
    }

    /// f[j] = P(E_{m+j} | path) for the node at depth m = path.size() - 1.
    std::vector<Rational> visit(std::vector<int>& path, std::size_t successes, const Rational& prob) {
        const std::size_t m = path.size() - 1;
        const bool here = (m == 0) || sys_.event(m, path);
        const std::size_t succ = successes + (here ? 1 : 0);
        std::vector<Rational> f(sys_.horizon - m + 1, Rational(0));
        f[0] = here ? 1 : 0;
        if (m == sys_.horizon) {
            if (phi_.size() <= succ) phi_.resize(succ + 1, Rational(0));
            phi_[succ] += prob;
            ++paths_;
        } else {
            const auto moves = sys_.kernel(path.back());
            Rational total = 0;
            for (const auto& [to, p] : moves) {
                require(p >= 0, Errc::invalid_pmf, sys_.name + ": negative transition probability");
                total += p;
            }
            require(total == 1, Errc::invalid_pmf, sys_.name + ": transition row does not sum to one");
            for (const auto& [to, p] : moves) {
                if (p == 0) continue;
                path.push_back(to);
                const auto g = visit(path, succ, prob * p);
                path.pop_back();
                for (std::size_t j = 0; j < g.size(); ++j) f[j + 1] += p * g[j];
            }
        }
        if (check_ && here && m >= 1) {
            for (std::size_t j = 1; j < f.size(); ++j) {
                if (f[j] > (*unconditional_)[j] && !witness_) {
                    std::ostringstream os;
                    os << sys_.name << ": P(E_" << m + j << " | F_" << m << ") = " << f[j] << " > P(E_" << j
                       << ") = " << (*unconditional_)[j] << " at state " << path.back();
                    witness_ = os.str();
                }
            }
        }
        return f;
    }

    void enable_check(const std::vector<Rational>* unconditional) {
        check_ = true;
        unconditional_ = unconditional;
    }
    const std::optional<std::string>& witness() const { return witness_; }
    std::vector<Rational> take_phi() { return std::move(phi_); }
    std::uint64_t paths() const { return paths_; }

private:
    const EventSystem& sys_;
    bool check_ = false;
    const std::vector<Rational>* unconditional_ = nullptr;
    std::optional<std::string> witness_;
    std::vector<Rational> phi_;
    std::uint64_t paths_ = 0;
};

}  // namespace detail

/// Exhaustive check of P(Phi > r) >= 1 - r / E(Phi). The hypothesis P(E_n | F_m) <= P(E_{n-m}) on E_m
/// is verified at every node first; a violation throws hypothesis_violation with a witness.
inline RecurrResult check_recurrevents(const EventSystem& sys, std::span<const std::uint64_t> r_grid) {
    require(sys.horizon >= 1, Errc::precondition_violation, "horizon must be positive");
    detail::EventTree tree(sys);
    tree.count_paths();
    std::vector<int> path{sys.initial_state};
    RecurrResult res;
    res.event_prob = tree.visit(path, 0, Rational(1));
    res.phi_law = tree.take_phi();
    res.paths = tree.paths();

    detail::EventTree checker(sys);
    checker.enable_check(&res.event_prob);
    checker.visit(path, 0, Rational(1));
    if (checker.witness()) fail(Errc::hypothesis_violation, *checker.witness());

    res.expected_phi = 0;
    for (const auto& p : res.event_prob) res.expected_phi += p;
    for (auto r : r_grid) {
        RecurrRow row;
        row.r = r;
        row.p_phi_gt_r = 0;
        for (std::size_t j = r + 1; j < res.phi_law.size(); ++j) row.p_phi_gt_r += res.phi_law[j];
        row.bound = 1 - Rational(static_cast<unsigned long>(r)) / res.expected_phi;
        row.holds = row.p_phi_gt_r >= row.bound;
        res.rows.push_back(row);
    }
    return res;
}

/// iid Bernoulli(p) events.
inline EventSystem bernoulli_system(const Rational& p, std::size_t horizon) {
    EventSystem s;
    s.name = "bernoulli(" + p.get_str() + ",N=" + std::to_string(horizon) + ")";
    s.horizon = horizon;
    s.kernel = [p](int) { return std::vector<std::pair<int, Rational>>{{1, p}, {0, 1 - p}}; };
    s.event = [](std::size_t, std::span<const int> path) { return path.back() == 1; };
    return s;
}

/// Returns to 0 of a walk with the given integer step law.
inline EventSystem walk_return_system(const ExactPMF& step, std::size_t horizon, std::string label) {
    EventSystem s;
    s.name = std::move(label) + "(N=" + std::to_string(horizon) + ")";
    s.horizon = horizon;
    std::vector<std::pair<std::int64_t, Rational>> moves;
    for (std::size_t i = 0; i < step.size(); ++i)
        if (step.weights()[i] != 0) moves.emplace_back(step.offset() + static_cast<std::int64_t>(i), step.weights()[i]);
    s.kernel = [moves](int st) {
        std::vector<std::pair<int, Rational>> out;
        for (const auto& [dx, p] : moves) out.emplace_back(st + static_cast<int>(dx), p);
        return out;
    };
    s.event = [](std::size_t, std::span<const int> path) { return path.back() == 0; };
    return s;
}

/// Returns to state 0 of a finite Markov chain started at 0.
inline EventSystem markov_return_system(std::vector<std::vector<Rational>> matrix, std::size_t horizon,
                                        std::string label) {
    for (const auto& row : matrix) {
        require(row.size() == matrix.size(), Errc::dimension_mismatch, "transition matrix must be square");
        Rational t = 0;
        for (const auto& p : row) t += p;
        require(t == 1, Errc::invalid_pmf, "transition row does not sum to one");
    }
    EventSystem s;
    s.name = std::move(label) + "(N=" + std::to_string(horizon) + ")";
    s.horizon = horizon;
    s.kernel = [matrix](int st) {
        std::vector<std::pair<int, Rational>> out;
        const auto& row = matrix.at(static_cast<std::size_t>(st));
        for (std::size_t j = 0; j < row.size(); ++j)
            if (row[j] != 0) out.emplace_back(static_cast<int>(j), row[j]);
        return out;
    };
    s.event = [](std::size_t, std::span<const int> path) { return path.back() == 0; };
    return s;
}

/// Random chain on 2..4 states with rational entries of denominator <= 12.
inline std::vector<std::vector<Rational>> random_chain(RandomStream& rng) {
    const auto n = 2 + static_cast<std::size_t>(rng.uniform_below(3));
    std::vector<std::vector<Rational>> m(n, std::vector<Rational>(n, Rational(0)));
    for (auto& row : m) {
        std::vector<unsigned long> w(n);
        unsigned long total = 0;
        for (auto& v : w) total += (v = static_cast<unsigned long>(rng.uniform_below(4)));
        if (total == 0) {
            w[rng.uniform_below(n)] = 1;
            total = 1;
        }
        for (std::size_t j = 0; j < n; ++j) row[j] = Rational(w[j]) / total;
    }
    return m;
}

/// Corpus of event systems satisfying the hypothesis: Bernoulli, certain, walk returns, chain returns.
inline std::vector<EventSystem> default_event_corpus(std::uint64_t seed, std::size_t chains = 12) {
    std::vector<EventSystem> out;
    out.push_back(bernoulli_system(Rational(3, 10), 10));
    out.push_back(bernoulli_system(Rational(1, 2), 12));
    out.push_back(bernoulli_system(Rational(1, 7), 14));
    out.push_back(bernoulli_system(Rational(1), 8));
    out.push_back(walk_return_system(simple_step_law<Rational>(), 14, "simple-walk-return"));
    out.push_back(walk_return_system(lazy_step_law<Rational>(), 10, "lazy-walk-return"));
    out.push_back(walk_return_system(ExactPMF::from_weights(-2, {Rational(1, 6), Rational(1, 6), Rational(1, 3),
                                                                 Rational(1, 6), Rational(1, 6)}),
                                     8, "wide-walk-return"));
    auto rng = derive_stream(seed, CommandId::testing, 0).substream(11);
    for (std::size_t i = 0; i < chains; ++i)
        out.push_back(markov_return_system(random_chain(rng), 8 + i % 5, "chain-return-" + std::to_string(i)));
    return out;
}

// Monte Carlo event estimates -----------------------------------------------------------------

enum class EstimateEvent { return_to_origin, sign_change, level_crossing, interval_hit, box_visit, v_n, segment_hit };

inline const char* to_string(EstimateEvent e) {
    switch (e) {
        case EstimateEvent::return_to_origin: return "return";
        case EstimateEvent::sign_change: return "sign_change";
        case EstimateEvent::level_crossing: return "level_crossing";
        case EstimateEvent::interval_hit: return "interval_hit";
        case EstimateEvent::box_visit: return "box_visit";
        case EstimateEvent::v_n: return "V_n";
        case EstimateEvent::segment_hit: return "segment_hit";
    }
    return "unknown";
}

inline EstimateEvent parse_estimate_event(const std::string& s) {
    for (auto e : {EstimateEvent::return_to_origin, EstimateEvent::sign_change, EstimateEvent::level_crossing,
                   EstimateEvent::interval_hit, EstimateEvent::box_visit, EstimateEvent::v_n,
                   EstimateEvent::segment_hit})
        if (s == to_string(e)) return e;
    fail(Errc::parse_error, "unknown event '" + s + "'");
}

/// Event on the pair (S_n, S_{n+1}) of a d-dimensional walk with iid coordinate steps.
struct EventSpec {
    EstimateEvent kind = EstimateEvent::return_to_origin;
    int dim = 1;
    FloatPMF step = lazy_step_law<double>();
    double level = 1.0;  // level crossings, coordinate 0
    double box_half = 1.0;  // [-h, h]^dim for interval hits, box visits and segment hits
};

struct StreamPlan {
    std::uint64_t seed = 0;
    CommandId command = CommandId::estimate;
    std::uint16_t substream = 0;
    unsigned workers = 1;
};

namespace detail {

inline bool event_holds(const EventSpec& spec, std::span<const std::int64_t> a, std::span<const std::int64_t> b,
                        const Box& box) {
    switch (spec.kind) {
        case EstimateEvent::return_to_origin:
            return std::all_of(a.begin(), a.end(), [](auto v) { return v == 0; });
        case EstimateEvent::sign_change: return sgn(a[0]) * sgn(b[0]) < 0;
        case EstimateEvent::level_crossing: {
            const auto lo = static_cast<double>(std::min(a[0], b[0]));
            const auto hi = static_cast<double>(std::max(a[0], b[0]));
            return lo <= spec.level && spec.level <= hi;
        }
        case EstimateEvent::interval_hit:
            for (std::size_t c = 0; c < a.size(); ++c) {
                const auto lo = static_cast<double>(std::min(a[c], b[c]));
                const auto hi = static_cast<double>(std::max(a[c], b[c]));
                if (hi < -spec.box_half || lo > spec.box_half) return false;
            }
            return true;
        case EstimateEvent::box_visit:
            return std::all_of(a.begin(), a.end(),
                               [&](auto v) { return std::abs(static_cast<double>(v)) <= spec.box_half; });
        case EstimateEvent::v_n: return sgn(a[0]) * sgn(b[0]) < 0 && a[1] == 0 && b[1] == 0;
        case EstimateEvent::segment_hit: return segment_hits_box(a, b, box);
    }
    return false;
}

}  // namespace detail

/// Frequency of the event at step n; S_n is drawn from its exact law, then one more step.
inline EstimateWithCI estimate_event_prob(const EventSpec& spec, std::uint64_t n, std::uint64_t replicas,
                                          const StreamPlan& plan, double confidence = kDefaultConfidence) {
    require(replicas >= 100, Errc::precondition_violation, "at least 100 replicas are required");
    require(spec.dim >= 1, Errc::precondition_violation, "dimension must be positive");
    require(spec.kind != EstimateEvent::v_n || spec.dim == 2, Errc::dimension_mismatch, "V_n needs dim = 2");
    const Box box = Box::cube(spec.dim, spec.box_half);
    const auto d = static_cast<std::size_t>(spec.dim);

    if (spec.step.size() == 1 && spec.step.offset() == 0) {
        // X = 0 almost surely: the walk never leaves the origin
        const std::vector<std::int64_t> origin(d, 0);
        const bool hit = (n >= 1 || spec.kind != EstimateEvent::return_to_origin) &&
                         detail::event_holds(spec, origin, origin, box);
        auto e = wilson_interval(hit ? replicas : 0, replicas, confidence);
        e.seed = plan.seed;
        return e;
    }

    const StepPairSampler sampler(spec.step, n);
    auto tally = run_replicas(replicas, plan.workers, CountTally(1), [&](std::uint64_t r, CountTally& t) {
        RandomStream rng(StreamAddress{plan.seed, static_cast<std::uint16_t>(plan.command),
                                       static_cast<std::uint32_t>(r), plan.substream});
        std::int64_t a[8];
        std::int64_t b[8];
        for (std::size_t c = 0; c < d; ++c) std::tie(a[c], b[c]) = sampler.sample(rng);
        if (detail::event_holds(spec, std::span<const std::int64_t>(a, d), std::span<const std::int64_t>(b, d), box))
            ++t[0];
    });
    auto e = wilson_interval(tally[0], replicas, confidence);
    e.seed = plan.seed;
    return e;
}

/// Exact probability of the same event, for product events available from the one-step law.
inline std::optional<double> exact_event_prob(const EventSpec& spec, std::uint64_t n) {
    const auto at_n = n == 0 ? FloatPMF::point_mass(0) : convolution_power(spec.step, n);
    const auto& step = spec.step;
    auto coord_prob = [&](auto pred) {
        double s = 0;
        for (std::int64_t x = at_n.min_support(); x <= at_n.max_support(); ++x)
            for (std::int64_t dx = step.min_support(); dx <= step.max_support(); ++dx)
                if (pred(x, x + dx)) s += at_n.at(x) * step.at(dx);
        return s;
    };
    const double h = spec.box_half;
    switch (spec.kind) {
        case EstimateEvent::return_to_origin: return std::pow(at_n.at(0), spec.dim);
        case EstimateEvent::sign_change:
            return coord_prob([](std::int64_t a, std::int64_t b) { return detail::sgn(a) * detail::sgn(b) < 0; });
        case EstimateEvent::level_crossing:
            return coord_prob([&](std::int64_t a, std::int64_t b) {
                return static_cast<double>(std::min(a, b)) <= spec.level &&
                       spec.level <= static_cast<double>(std::max(a, b));
            });
        case EstimateEvent::interval_hit:
            return std::pow(coord_prob([&](std::int64_t a, std::int64_t b) {
                                return !(static_cast<double>(std::max(a, b)) < -h ||
                                         static_cast<double>(std::min(a, b)) > h);
                            }),
                            spec.dim);
        case EstimateEvent::box_visit: {
            double s = 0;
            for (std::int64_t x = at_n.min_support(); x <= at_n.max_support(); ++x)
                if (std::abs(static_cast<double>(x)) <= h) s += at_n.at(x);
            return std::pow(s, spec.dim);
        }
        case EstimateEvent::v_n: {
            const double flip =
                coord_prob([](std::int64_t a, std::int64_t b) { return detail::sgn(a) * detail::sgn(b) < 0; });
            return flip * at_n.at(0) * step.at(0);
        }
        case EstimateEvent::segment_hit: return std::nullopt;
    }
    return std::nullopt;
}

// Quantile bound for sign changes -------------------------------------------------------------

/// Largest integer gamma with P(|X| > gamma) >= alpha; 0 when no such gamma exists.
inline std::int64_t quantile_gamma(const FloatPMF& x_law, double alpha) {
    require(alpha > 0 && alpha < 1, Errc::precondition_violation, "alpha must lie in (0, 1)");
    const std::int64_t reach = std::max(std::abs(x_law.min_support()), std::abs(x_law.max_support()));
    std::int64_t gamma = 0;
    for (std::int64_t g = 0; g <= reach; ++g) {
        double above = 0;
        for (std::int64_t x = x_law.min_support(); x <= x_law.max_support(); ++x)
            if (std::abs(x) > g) above += x_law.at(x);
        if (above >= alpha) gamma = g;
    }
    return gamma;
}

struct QuantileBoundResult {
    std::int64_t gamma = 0;
    EstimateWithCI lhs;        // P(S_n S_{n+1} < 0)
    EstimateWithCI small_abs;  // P(|S_n| <= gamma)
    double rhs_lo = 0;         // (alpha / 2) * small_abs.ci_lo
    double lhs_exact = 0;
    double rhs_exact = 0;
    bool holds = false;
};

inline constexpr double kQuantileSlack = 0.0;

inline QuantileBoundResult check_quantile_bound(const FloatPMF& x_law, double alpha, std::uint64_t n,
                                                std::uint64_t replicas, const StreamPlan& plan,
                                                double confidence = kDefaultConfidence) {
    QuantileBoundResult r;
    r.gamma = quantile_gamma(x_law, alpha);
    const auto at_n = convolution_power(x_law, n);
    for (std::int64_t s = at_n.min_support(); s <= at_n.max_support(); ++s) {
        const double ps = at_n.at(s);
        if (std::abs(s) <= r.gamma) r.rhs_exact += ps;
        for (std::int64_t dx = x_law.min_support(); dx <= x_law.max_support(); ++dx)
            if (detail::sgn(s) * detail::sgn(s + dx) < 0) r.lhs_exact += ps * x_law.at(dx);
    }
    r.rhs_exact *= alpha / 2.0;

    if (x_law.size() == 1 && x_law.offset() == 0) {
        r.lhs = wilson_interval(0, replicas, confidence);
        r.small_abs = wilson_interval(replicas, replicas, confidence);
        r.rhs_lo = 0;
        r.lhs_exact = 0;
        r.rhs_exact = 0;
        r.holds = true;  // degenerate: both sides are 0 once S_n = 0 is excluded from sign changes
        return r;
    }

    const StepPairSampler sampler(x_law, n);
    const std::int64_t gamma = r.gamma;
    auto tally = run_replicas(replicas, plan.workers, CountTally(2), [&](std::uint64_t rep, CountTally& t) {
        RandomStream rng(StreamAddress{plan.seed, static_cast<std::uint16_t>(plan.command),
                                       static_cast<std::uint32_t>(rep), plan.substream});
        const auto [a, b] = sampler.sample(rng);
        if (detail::sgn(a) * detail::sgn(b) < 0) ++t[0];
        if (std::abs(a) <= gamma) ++t[1];
    });
    r.lhs = wilson_interval(tally[0], replicas, confidence);
    r.small_abs = wilson_interval(tally[1], replicas, confidence);
    r.rhs_lo = alpha / 2.0 * r.small_abs.ci_lo;
    r.holds = r.lhs.ci_hi >= r.rhs_lo * (1.0 - kQuantileSlack);
    return r;
}

// Return-probability recursion ----------------------------------------------------------------

struct Qkn2Row {
    std::uint64_t n = 0;
    double s1 = 0;              // exact P(S^(1)_n = 0)
    EstimateWithCI s2;          // P(S^(2)_n = 0)
    EstimateWithCI s1_coupled;  // P(S^{(1)|2}_n = 0), same law as S^(1)_n
    double bound = 0;           // s1 (1 - p2)^n + A / (p2 y2 sqrt n)
    std::uint64_t replicas = 0;
    bool holds = false;
};

inline constexpr double kQkn2MinP2 = 1e-9;
inline constexpr std::uint64_t kQkn2GMax = 40;

/// Exact P(S_n = 0) for every n in the grid, with X built from tau.
inline std::vector<double> exact_return_probs(const FloatPMF& tau, std::span<const std::uint64_t> n_grid,
                                              std::uint64_t g_max = kQkn2GMax) {
    const auto x = law_of_X(tau, g_max).law;
    std::vector<double> out;
    for (auto n : n_grid) out.push_back(convolution_power(x, n).at(0));
    return out;
}

inline std::vector<Qkn2Row> check_qkn2(const WaitingTimeLaw& law, double A, std::span<const std::uint64_t> n_grid,
                                       std::uint64_t replicas, const StreamPlan& plan,
                                       double confidence = kDefaultConfidence, bool escalate = true) {
    require(law.levels() == 2, Errc::precondition_violation, "check_qkn2 needs a two-level law");
    require(!n_grid.empty(), Errc::precondition_violation, "empty n grid");
    for (std::size_t i = 1; i < n_grid.size(); ++i)
        require(n_grid[i] > n_grid[i - 1], Errc::precondition_violation, "n grid must increase");
    const double p2 = law.p(2).get_d();
    require(p2 >= kQkn2MinP2, Errc::degenerate_input, "p_2 too small: the bound degenerates");
    const double y2 = static_cast<double>(law.y(2));
    require(y2 > 0, Errc::degenerate_input, "y_2 must be positive");

    const auto tau1 = as_pmf<double>(truncated_law(law, 1));
    const auto s1 = exact_return_probs(tau1, n_grid);
    const std::uint64_t n_max = n_grid.back();

    auto run = [&](std::uint64_t reps) {
        const std::size_t G = n_grid.size();
        return run_replicas(reps, plan.workers, CountTally(2 * G), [&](std::uint64_t r, CountTally& t) {
            RandomStream rng(StreamAddress{plan.seed, static_cast<std::uint16_t>(plan.command),
                                           static_cast<std::uint32_t>(r), plan.substream});
            CoupledIncrement inc;
            std::int64_t s_1 = 0;
            std::int64_t s_2 = 0;
            std::size_t gi = 0;
            for (std::uint64_t step = 1; step <= n_max; ++step) {
                sample_coupled_increment(law, 2, rng, inc);
                s_1 += inc.x[0];
                s_2 += inc.x[1];
                if (step == n_grid[gi]) {
                    if (s_2 == 0) ++t[2 * gi];
                    if (s_1 == 0) ++t[2 * gi + 1];
                    ++gi;
                }
            }
        });
    };

    auto build = [&](const CountTally& tally, std::uint64_t reps) {
        std::vector<Qkn2Row> rows;
        for (std::size_t i = 0; i < n_grid.size(); ++i) {
            Qkn2Row row;
            row.n = n_grid[i];
            row.s1 = s1[i];
            row.s2 = wilson_interval(tally[2 * i], reps, confidence);
            row.s2.seed = plan.seed;
            row.s1_coupled = wilson_interval(tally[2 * i + 1], reps, confidence);
            row.bound = s1[i] * std::pow(1.0 - p2, static_cast<double>(row.n)) +
                        A / (p2 * y2 * std::sqrt(static_cast<double>(row.n)));
            row.replicas = reps;
            row.holds = row.s2.ci_hi <= row.bound;
            rows.push_back(row);
        }
        return rows;
    };

    auto rows = build(run(replicas), replicas);
    const bool ok = std::all_of(rows.begin(), rows.end(), [](const Qkn2Row& r) { return r.holds; });
    if (!ok && escalate) rows = build(run(replicas * 10), replicas * 10);
    return rows;
}

// Series diagnostics --------------------------------------------------------------------------

struct SeriesRow {
    std::uint64_t n = 0;
    double sum_sq = 0, sum_sq_lo = 0, sum_sq_hi = 0;           // sum of P(S_k = 0)^2
    double sum_cross = 0, sum_cross_lo = 0, sum_cross_hi = 0;  // sum of P(S_k = 0) P(S_k S_{k+1} < 0)
};

namespace detail {

/// Piecewise log-log interpolation of grid values at integer n.
inline double loglog_interp(std::span<const FitPoint> pts, double n, double FitPoint::*field) {
    if (n <= pts.front().n) return pts.front().*field;
    for (std::size_t i = 1; i < pts.size(); ++i) {
        if (n <= pts[i].n) {
            const double a = pts[i - 1].*field;
            const double b = pts[i].*field;
            if (!(a > 0) || !(b > 0)) return a + (b - a) * (n - pts[i - 1].n) / (pts[i].n - pts[i - 1].n);
            const double t = std::log(n / pts[i - 1].n) / std::log(pts[i].n / pts[i - 1].n);
            return std::exp(std::log(a) + t * (std::log(b) - std::log(a)));
        }
    }
    return pts.back().*field;
}

}  // namespace detail

/// Partial sums over n = first..last grid point, interpolating between grid points.
inline std::vector<SeriesRow> series_partial_sums(std::span<const FitPoint> returns, std::span<const FitPoint> flips) {
    require(returns.size() >= 2 && returns.size() == flips.size(), Errc::precondition_violation,
            "series grids must match and have at least two points");
    for (std::size_t i = 0; i < returns.size(); ++i) {
        require(returns[i].n == flips[i].n, Errc::precondition_violation, "series grids must match");
        if (i > 0) require(returns[i].n > returns[i - 1].n, Errc::precondition_violation, "grid must increase");
    }
    std::vector<SeriesRow> out;
    SeriesRow acc;
    const auto first = static_cast<std::uint64_t>(returns.front().n);
    const auto last = static_cast<std::uint64_t>(returns.back().n);
    std::size_t next_grid = 0;
    for (std::uint64_t n = first; n <= last; ++n) {
        const auto x = static_cast<double>(n);
        const double r = detail::loglog_interp(returns, x, &FitPoint::p);
        const double rl = detail::loglog_interp(returns, x, &FitPoint::ci_lo);
        const double rh = detail::loglog_interp(returns, x, &FitPoint::ci_hi);
        const double f = detail::loglog_interp(flips, x, &FitPoint::p);
        const double fl = detail::loglog_interp(flips, x, &FitPoint::ci_lo);
        const double fh = detail::loglog_interp(flips, x, &FitPoint::ci_hi);
        acc.n = n;
        acc.sum_sq += r * r;
        acc.sum_sq_lo += rl * rl;
        acc.sum_sq_hi += rh * rh;
        acc.sum_cross += r * f;
        acc.sum_cross_lo += rl * fl;
        acc.sum_cross_hi += rh * fh;
        if (next_grid < returns.size() && x == returns[next_grid].n) {
            out.push_back(acc);
            ++next_grid;
        }
    }
    return out;
}

/// sum_{n>=1} (1 - q)^n / n, summed until terms drop below double resolution.
inline double log_series(double q) {
    require(q > 0 && q < 1, Errc::precondition_violation, "q must lie in (0, 1)");
    const double r = 1.0 - q;
    double sum = 0;
    double comp = 0;
    double power = 1;
    for (std::uint64_t n = 1;; ++n) {
        power *= r;
        const double term = power / static_cast<double>(n);
        const double y = term - comp;
        const double t = sum + y;
        comp = (t - sum) - y;
        sum = t;
        if (term < 1e-20 * sum) break;
    }
    return sum;
}

inline constexpr double kLogSeriesTolerance = 1e-10;

// Law-level scalars ---------------------------------------------------------------------------

/// delta = P(X = 0) for the increment law built from tau.
inline Rational zero_mass_of_X(const ExactPMF& tau, std::uint64_t g_max = 20) { return law_of_X(tau, g_max).law.at(0); }

/// P(c <= |X|).
inline Rational tail_mass_of_X(const ExactPMF& tau, double c, std::uint64_t g_max = 20) {
    return 1 - interval_mass(law_of_X(tau, g_max).law, c);
}

}  // namespace polywalk
