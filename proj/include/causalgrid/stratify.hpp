#pragma once

#include <algorithm>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "causalgrid/common.hpp"
#include "causalgrid/linalg.hpp"
#include "causalgrid/timeseries.hpp"

namespace causalgrid {

struct Line {
    double slope = 0.0;
    double intercept = 0.0;
};

// Least-squares line y = slope * x + intercept.
inline Line ols_line(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.size() < 2)
        throw InvalidArgument("ols_line: need equal lengths >= 2");
    double mx = mean(x), my = mean(y);
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
    }
    if (!(sxx > 0.0)) throw DegenerateError("ols_line: x is constant");
    double slope = sxy / sxx;
    return {slope, my - slope * mx};
}

struct Stratum {
    double confounder_lo = 0.0;
    double confounder_hi = 0.0;
    double slope = 0.0;
    double intercept = 0.0;
    std::size_t n = 0;
};

struct StratifiedFit {
    std::string x;
    std::string y;
    std::string confounder;
    Line aggregate;
    std::vector<Stratum> strata;
    std::size_t k = 0;
    std::vector<std::size_t> assignment;  // stratum index per frame row
};

// Confounder-stratified regression: k quantile (equal-count) bins of the
// confounder, a per-bin OLS line, and the pooled aggregate line. Ties at
// bin boundaries are resolved by stable timestamp order.
inline StratifiedFit stratified_slopes(const FeatureFrame& frame, const std::string& x,
                                       const std::string& y, const std::string& confounder,
                                       std::size_t k = 4) {
    if (k < 2) throw InvalidArgument("stratified_slopes: k must be >= 2");
    auto xs = frame.values(x);
    auto ys = frame.values(y);
    auto cs = frame.values(confounder);
    const std::size_t n = frame.n_rows();
    if (n < 2 * k) throw InvalidArgument("stratified_slopes: too few rows for k strata");

    StratifiedFit fit;
    fit.x = x;
    fit.y = y;
    fit.confounder = confounder;
    fit.k = k;
    fit.aggregate = ols_line(xs, ys);

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return cs[a] < cs[b]; });

    fit.assignment.assign(n, 0);
    for (std::size_t b = 0; b < k; ++b) {
        std::size_t lo = b * n / k, hi = (b + 1) * n / k;
        if (hi - lo < 2)
            throw DegenerateError("stratified_slopes: stratum " + std::to_string(b) +
                                  " has fewer than 2 points");
        std::vector<double> bx, by;
        bx.reserve(hi - lo);
        by.reserve(hi - lo);
        double clo = cs[order[lo]], chi = cs[order[hi - 1]];
        for (std::size_t i = lo; i < hi; ++i) {
            bx.push_back(xs[order[i]]);
            by.push_back(ys[order[i]]);
            fit.assignment[order[i]] = b;
        }
        Line line = ols_line(bx, by);
        fit.strata.push_back({clo, chi, line.slope, line.intercept, hi - lo});
    }
    return fit;
}

}  // namespace causalgrid
