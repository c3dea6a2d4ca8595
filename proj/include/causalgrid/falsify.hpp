#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "causalgrid/graph.hpp"
#include "causalgrid/linalg.hpp"
#include "causalgrid/rng.hpp"
#include "causalgrid/timeseries.hpp"

namespace causalgrid {

struct CiResult {
    std::string x;
    std::string y;
    std::vector<std::string> z;
    double partial_correlation = 0.0;
    double p_value = 1.0;
    bool independent = true;  // p_value > alpha
};

struct FalsificationReport {
    std::size_t violations = 0;
    std::size_t total_tests = 0;
    double p_lmc = 1.0;  // fraction of permuted graphs with <= violations
    double p_mec = 0.0;  // fraction of permuted graphs Markov-equivalent to the original
    std::size_t n_permutations = 0;
    double alpha = 0.05;
    std::uint64_t seed = 0;
    bool falsifiable = false;   // p_mec <= 0.05
    bool not_falsified = false; // p_lmc <= 0.05
    std::vector<std::size_t> permutation_violations;
    std::vector<bool> permutation_mec;
    std::vector<CiResult> tests;  // per-test table for the original graph
};

namespace detail {
// Two-sided Gaussian tail.
inline double gaussian_two_sided_p(double z) { return std::erfc(std::fabs(z) / std::sqrt(2.0)); }

// Residuals of y on Z with an intercept. Works on centered data; when Z is
// collinear a tiny ridge penalty is added so derived (exactly dependent)
// columns degrade the test gracefully instead of aborting it.
inline std::vector<double> residuals_on(const std::vector<std::span<const double>>& zcols,
                                        std::span<const double> y) {
    const std::size_t n = y.size();
    const std::size_t p = zcols.size();
    std::vector<double> zmean(p, 0.0);
    double ymean = mean(y);
    for (std::size_t j = 0; j < p; ++j) zmean[j] = mean(zcols[j]);

    SquareMatrix gram(p);
    std::vector<double> rhs(p, 0.0);
    for (std::size_t j = 0; j < p; ++j) {
        for (std::size_t k = j; k < p; ++k) {
            double s = 0.0;
            for (std::size_t i = 0; i < n; ++i)
                s += (zcols[j][i] - zmean[j]) * (zcols[k][i] - zmean[k]);
            gram.at(j, k) = s;
            gram.at(k, j) = s;
        }
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += (zcols[j][i] - zmean[j]) * (y[i] - ymean);
        rhs[j] = s;
    }
    double max_diag = 0.0;
    for (std::size_t j = 0; j < p; ++j) max_diag = std::max(max_diag, gram.at(j, j));
    std::vector<double> beta(p, 0.0);
    if (max_diag > 0.0) {
        double lambda = 0.0;
        for (int attempt = 0; attempt < 12; ++attempt) {
            SquareMatrix m = gram;
            for (std::size_t j = 0; j < p; ++j) m.at(j, j) += lambda;
            if (cholesky(m)) {
                beta = cholesky_solve(m, rhs);
                break;
            }
            lambda = lambda == 0.0 ? max_diag * 1e-10 : lambda * 100.0;
        }
    }
    std::vector<double> res(n);
    for (std::size_t i = 0; i < n; ++i) {
        double fit = 0.0;
        for (std::size_t j = 0; j < p; ++j) fit += beta[j] * (zcols[j][i] - zmean[j]);
        res[i] = (y[i] - ymean) - fit;
    }
    return res;
}
}  // namespace detail

// Fisher-z conditional independence test via partial correlation of the
// regression residuals of X and Y on Z.
inline CiResult fisher_z_ci(const FeatureFrame& frame, const std::string& x, const std::string& y,
                            const std::vector<std::string>& z, double alpha = 0.05) {
    std::span<const double> xs = frame.values(x);
    std::span<const double> ys = frame.values(y);
    const std::size_t n = frame.n_rows();
    if (!(alpha > 0.0) || !(alpha < 1.0))
        throw InvalidArgument("fisher_z_ci: alpha must be in (0, 1)");
    if (n < z.size() + 4)
        throw InvalidArgument("fisher_z_ci: need n > |Z| + 3 rows (n=" + std::to_string(n) + ")");

    CiResult res;
    res.x = x;
    res.y = y;
    res.z = z;

    double rho;
    bool degenerate = false;
    if (z.empty()) {
        try {
            rho = pearson(xs, ys);
        } catch (const DegenerateError&) {
            rho = 0.0;  // a constant variable is independent of everything
            degenerate = true;
        }
    } else {
        std::vector<std::span<const double>> zcols;
        zcols.reserve(z.size());
        for (const auto& name : z) zcols.push_back(frame.values(name));
        std::vector<double> rx = detail::residuals_on(zcols, xs);
        std::vector<double> ry = detail::residuals_on(zcols, ys);
        // a residual that is numerically zero relative to the variable means
        // the variable is an exact function of Z
        double sx = stddev_pop(xs), sy = stddev_pop(ys);
        if (stddev_pop(rx) <= 1e-7 * sx || stddev_pop(ry) <= 1e-7 * sy) {
            rho = 0.0;
            degenerate = true;
        } else try {
            rho = pearson(rx, ry);
        } catch (const DegenerateError&) {
            // A variable that is an exact function of Z carries no signal
            // beyond Z, so the conditional independence holds trivially.
            rho = 0.0;
            degenerate = true;
        }
    }
    if (degenerate) {
        res.partial_correlation = 0.0;
        res.p_value = 1.0;
        res.independent = true;
        return res;
    }
    rho = std::clamp(rho, -1.0 + 1e-15, 1.0 - 1e-15);
    double zstat = std::atanh(rho) * std::sqrt(static_cast<double>(n - z.size()) - 3.0);
    res.partial_correlation = rho;
    res.p_value = detail::gaussian_two_sided_p(zstat);
    res.independent = res.p_value > alpha;
    return res;
}

// Runs one Fisher-z test per local Markov triple of g; a violation is a
// rejected independence. Also returns the per-test table when requested.
inline std::pair<std::size_t, std::size_t> count_lmc_violations(
    const CausalGraph& g, const FeatureFrame& frame, double alpha = 0.05,
    std::vector<CiResult>* table = nullptr) {
    auto triples = local_markov_pairs(g);
    std::size_t violations = 0;
    for (const auto& t : triples) {
        std::vector<std::string> z;
        z.reserve(t.z.size());
        for (std::size_t p : t.z) z.push_back(g.name(p));
        CiResult r = fisher_z_ci(frame, g.name(t.x), g.name(t.y), z, alpha);
        if (!r.independent) ++violations;
        if (table) table->push_back(std::move(r));
    }
    return {violations, triples.size()};
}

// Permutation baseline: p_lmc is the probability that a random relabeling of
// the graph violates as few or fewer LMCs than the original, p_mec the
// probability that it lies in the original's Markov equivalence class.
// Identity permutations are excluded and redrawn.
inline FalsificationReport permutation_test(const CausalGraph& g, const FeatureFrame& frame,
                                            std::size_t n_perm = 50, double alpha = 0.05,
                                            std::uint64_t seed = 0) {
    if (n_perm < 1) throw InvalidArgument("permutation_test: n_perm must be >= 1");
    FalsificationReport rep;
    rep.alpha = alpha;
    rep.seed = seed;
    rep.n_permutations = n_perm;
    auto [viol, total] = count_lmc_violations(g, frame, alpha, &rep.tests);
    rep.violations = viol;
    rep.total_tests = total;

    std::size_t n_leq = 0, n_mec = 0;
    for (std::size_t k = 0; k < n_perm; ++k) {
        std::vector<std::size_t> perm;
        CausalGraph pg = g;
        for (std::uint64_t attempt = 0;; ++attempt) {
            pg = permute_nodes(g, derive_seed(seed, "falsify/perm", k * 1009 + attempt), &perm);
            bool identity = true;
            for (std::size_t i = 0; i < perm.size(); ++i) identity &= perm[i] == i;
            if (!identity || attempt > 64 || g.size() < 2) break;
        }
        auto [pv, pt] = count_lmc_violations(pg, frame, alpha);
        (void)pt;
        bool mec = markov_equivalent(g, pg);
        rep.permutation_violations.push_back(pv);
        rep.permutation_mec.push_back(mec);
        if (pv <= viol) ++n_leq;
        if (mec) ++n_mec;
    }
    rep.p_lmc = static_cast<double>(n_leq) / static_cast<double>(n_perm);
    rep.p_mec = static_cast<double>(n_mec) / static_cast<double>(n_perm);
    rep.falsifiable = rep.p_mec <= 0.05;
    rep.not_falsified = rep.p_lmc <= 0.05;
    return rep;
}

}  // namespace causalgrid
