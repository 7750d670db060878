#pragma once

// Wilson intervals, chi-square tests and log-log exponent fits.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>

#include "polywalk/errors.hpp"
#include "polywalk/pmf.hpp"

namespace polywalk {

inline constexpr double kDefaultConfidence = 0.99;

/// Two-sided standard normal quantile for the given confidence.
inline double normal_quantile(double confidence) {
    require(confidence > 0 && confidence < 1, Errc::precondition_violation, "confidence must lie in (0, 1)");
    static const boost::math::normal standard;
    return boost::math::quantile(standard, 0.5 + confidence / 2.0);
}

struct EstimateWithCI {
    double point = 0;
    double ci_lo = 0;
    double ci_hi = 0;
    std::uint64_t successes = 0;
    std::uint64_t replicas = 0;
    std::uint64_t seed = 0;
};

inline EstimateWithCI wilson_interval(std::uint64_t successes, std::uint64_t trials,
                                      double confidence = kDefaultConfidence) {
    require(trials > 0, Errc::precondition_violation, "Wilson interval needs trials");
    require(successes <= trials, Errc::precondition_violation, "more successes than trials");
    const double z = normal_quantile(confidence);
    const double n = static_cast<double>(trials);
    const double p = static_cast<double>(successes) / n;
    const double z2 = z * z;
    const double denom = 1.0 + z2 / n;
    const double centre = (p + z2 / (2.0 * n)) / denom;
    const double half = z * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n)) / denom;
    EstimateWithCI e;
    e.point = p;
    e.ci_lo = std::max(0.0, std::min(p, centre - half));
    e.ci_hi = std::min(1.0, std::max(p, centre + half));
    e.successes = successes;
    e.replicas = trials;
    return e;
}

struct ChiSquareResult {
    double statistic = 0;
    int dof = 0;
    double p_value = 1;
    std::size_t cells = 0;
};

inline double chi_square_sf(double stat, int dof) {
    require(dof >= 1, Errc::degenerate_input, "chi-square test without degrees of freedom");
    const boost::math::chi_squared dist(dof);
    return boost::math::cdf(boost::math::complement(dist, stat));
}

/// Goodness of fit of integer observations against a law. Adjacent cells are pooled until each
/// expected count reaches min_expected; mass outside the law's support joins the outer cells.
inline ChiSquareResult chi_square_gof(const std::map<std::int64_t, std::uint64_t>& observed, const FloatPMF& law,
                                      double min_expected = 5.0) {
    std::uint64_t total = 0;
    for (const auto& [x, c] : observed) total += c;
    require(total > 0, Errc::degenerate_input, "no observations");
    for (const auto& [x, c] : observed)
        require(law.at(x) > 0, Errc::hypothesis_violation, "observation " + std::to_string(x) + " has zero probability");

    const double n = static_cast<double>(total);
    std::vector<double> exp_cells;
    std::vector<double> obs_cells;
    double e_acc = 0;
    double o_acc = 0;
    for (std::int64_t x = law.min_support(); x <= law.max_support(); ++x) {
        e_acc += n * law.at(x);
        const auto it = observed.find(x);
        if (it != observed.end()) o_acc += static_cast<double>(it->second);
        if (e_acc >= min_expected) {
            exp_cells.push_back(e_acc);
            obs_cells.push_back(o_acc);
            e_acc = 0;
            o_acc = 0;
        }
    }
    if (e_acc > 0 || o_acc > 0) {
        if (exp_cells.empty()) {
            exp_cells.push_back(e_acc);
            obs_cells.push_back(o_acc);
        } else {
            exp_cells.back() += e_acc;
            obs_cells.back() += o_acc;
        }
    }
    ChiSquareResult r;
    r.cells = exp_cells.size();
    if (r.cells < 2) {
        r.p_value = 1.0;  // a single cell carries no information
        return r;
    }
    for (std::size_t i = 0; i < exp_cells.size(); ++i) {
        const double d = obs_cells[i] - exp_cells[i];
        r.statistic += d * d / exp_cells[i];
    }
    r.dof = static_cast<int>(r.cells) - 1;
    r.p_value = chi_square_sf(r.statistic, r.dof);
    return r;
}

/// Independence test on a contingency table; rows and columns with zero totals are dropped.
inline ChiSquareResult chi_square_independence(const std::vector<std::vector<std::uint64_t>>& table) {
    require(!table.empty(), Errc::degenerate_input, "empty contingency table");
    const std::size_t cols = table.front().size();
    for (const auto& row : table) require(row.size() == cols, Errc::dimension_mismatch, "ragged contingency table");
    std::vector<double> rsum(table.size(), 0.0);
    std::vector<double> csum(cols, 0.0);
    double total = 0;
    for (std::size_t i = 0; i < table.size(); ++i)
        for (std::size_t j = 0; j < cols; ++j) {
            const auto v = static_cast<double>(table[i][j]);
            rsum[i] += v;
            csum[j] += v;
            total += v;
        }
    require(total > 0, Errc::degenerate_input, "contingency table without counts");
    ChiSquareResult r;
    std::size_t used_rows = 0;
    std::size_t used_cols = 0;
    for (double v : rsum) used_rows += v > 0;
    for (double v : csum) used_cols += v > 0;
    if (used_rows < 2 || used_cols < 2) return r;
    for (std::size_t i = 0; i < table.size(); ++i) {
        if (rsum[i] == 0) continue;
        for (std::size_t j = 0; j < cols; ++j) {
            if (csum[j] == 0) continue;
            const double e = rsum[i] * csum[j] / total;
            const double d = static_cast<double>(table[i][j]) - e;
            r.statistic += d * d / e;
        }
    }
    r.cells = used_rows * used_cols;
    r.dof = static_cast<int>((used_rows - 1) * (used_cols - 1));
    r.p_value = chi_square_sf(r.statistic, r.dof);
    return r;
}

/// Pools a value into bins: values with |v| >= edge share the outer bins.
inline std::size_t clamp_bin(std::int64_t v, std::int64_t edge) {
    const std::int64_t c = std::clamp<std::int64_t>(v, -edge, edge);
    return static_cast<std::size_t>(c + edge);
}

struct FitPoint {
    double n = 0;
    double p = 0;
    double ci_lo = 0;  // equal to p for exact points
    double ci_hi = 0;
};

struct ExponentFit {
    double slope = 0;
    double intercept = 0;
    double slope_lo = 0;
    double slope_hi = 0;
    double slope_se = 0;
    std::size_t used = 0;
    std::vector<double> excluded_n;  // points dropped for p = 0
};

/// Weighted least squares of log p on log n. Weights come from the CI width on the log scale
/// (delta method); exact points get unit weights and a residual-based standard error.
inline ExponentFit fit_exponent(std::span<const FitPoint> samples, double confidence = kDefaultConfidence) {
    const double z = normal_quantile(confidence);
    std::vector<double> xs, ys, ws;
    ExponentFit fit;
    bool weighted = true;
    for (const auto& s : samples) {
        require(s.n > 0, Errc::precondition_violation, "fit needs positive n");
        if (!(s.p > 0)) {
            fit.excluded_n.push_back(s.n);
            continue;
        }
        xs.push_back(std::log(s.n));
        ys.push_back(std::log(s.p));
        double se = 0;
        if (s.ci_lo > 0 && s.ci_hi > s.ci_lo) {
            se = (std::log(s.ci_hi) - std::log(s.ci_lo)) / (2.0 * z);
        } else if (s.ci_hi > s.ci_lo) {
            se = (s.ci_hi - s.ci_lo) / (2.0 * z * s.p);
        }
        if (!(se > 0)) weighted = false;
        ws.push_back(se > 0 ? 1.0 / (se * se) : 1.0);
    }
    require(xs.size() >= 4, Errc::precondition_violation, "exponent fit needs at least 4 usable points");
    if (!weighted) std::fill(ws.begin(), ws.end(), 1.0);

    double sw = 0, sx = 0, sy = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sw += ws[i];
        sx += ws[i] * xs[i];
        sy += ws[i] * ys[i];
    }
    const double mx = sx / sw;
    const double my = sy / sw;
    double sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sxx += ws[i] * (xs[i] - mx) * (xs[i] - mx);
        sxy += ws[i] * (xs[i] - mx) * (ys[i] - my);
    }
    require(sxx > 0, Errc::degenerate_input, "exponent fit needs distinct n");
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    fit.used = xs.size();
    if (weighted) {
        fit.slope_se = std::sqrt(1.0 / sxx);
    } else {
        double rss = 0;
        for (std::size_t i = 0; i < xs.size(); ++i) {
            const double r = ys[i] - fit.intercept - fit.slope * xs[i];
            rss += r * r;
        }
        fit.slope_se = std::sqrt(rss / static_cast<double>(xs.size() - 2) / sxx);
    }
    fit.slope_lo = fit.slope - z * fit.slope_se;
    fit.slope_hi = fit.slope + z * fit.slope_se;
    return fit;
}

}  // namespace polywalk
