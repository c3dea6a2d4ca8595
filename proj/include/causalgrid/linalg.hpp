#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "causalgrid/common.hpp"

namespace causalgrid {

inline double mean(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

// Population standard deviation (divides by n, matching the normalization
// convention: a normalized column has sum of squares exactly n).
inline double stddev_pop(std::span<const double> v) {
    double m = mean(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return v.empty() ? 0.0 : std::sqrt(s / static_cast<double>(v.size()));
}

inline double pearson(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.size() < 2) throw InvalidArgument("pearson: need equal lengths >= 2");
    double mx = mean(x), my = mean(y);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        double dx = x[i] - mx, dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx <= 0.0 || syy <= 0.0) throw DegenerateError("pearson: constant input");
    return sxy / std::sqrt(sxx * syy);
}

// Row-major square matrix.
struct SquareMatrix {
    std::size_t n = 0;
    std::vector<double> a;

    explicit SquareMatrix(std::size_t dim) : n(dim), a(dim * dim, 0.0) {}
    double& at(std::size_t i, std::size_t j) { return a[i * n + j]; }
    double at(std::size_t i, std::size_t j) const { return a[i * n + j]; }
};

// In-place Cholesky of an SPD matrix; returns false on a non-positive pivot.
inline bool cholesky(SquareMatrix& m) {
    const std::size_t n = m.n;
    for (std::size_t j = 0; j < n; ++j) {
        double d = m.at(j, j);
        for (std::size_t k = 0; k < j; ++k) d -= m.at(j, k) * m.at(j, k);
        if (!(d > 0.0)) return false;
        double ljj = std::sqrt(d);
        m.at(j, j) = ljj;
        for (std::size_t i = j + 1; i < n; ++i) {
            double s = m.at(i, j);
            for (std::size_t k = 0; k < j; ++k) s -= m.at(i, k) * m.at(j, k);
            m.at(i, j) = s / ljj;
        }
    }
    return true;
}

// Solves L L^T x = b given the Cholesky factor in the lower triangle.
inline std::vector<double> cholesky_solve(const SquareMatrix& l, std::vector<double> b) {
    const std::size_t n = l.n;
    for (std::size_t i = 0; i < n; ++i) {
        double s = b[i];
        for (std::size_t k = 0; k < i; ++k) s -= l.at(i, k) * b[k];
        b[i] = s / l.at(i, i);
    }
    for (std::size_t ii = n; ii > 0; --ii) {
        std::size_t i = ii - 1;
        double s = b[i];
        for (std::size_t k = i + 1; k < n; ++k) s -= l.at(k, i) * b[k];
        b[i] = s / l.at(i, i);
    }
    return b;
}

// Eigenvalues of a symmetric matrix by cyclic Jacobi; fine for the small
// normal-equation matrices used here.
inline std::vector<double> symmetric_eigenvalues(SquareMatrix m) {
    const std::size_t n = m.n;
    for (int sweep = 0; sweep < 64; ++sweep) {
        double off = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) off += m.at(i, j) * m.at(i, j);
        if (off < 1e-30) break;
        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                double apq = m.at(p, q);
                if (std::fabs(apq) < 1e-300) continue;
                double theta = (m.at(q, q) - m.at(p, p)) / (2.0 * apq);
                double t = (theta >= 0 ? 1.0 : -1.0) /
                           (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
                double c = 1.0 / std::sqrt(t * t + 1.0);
                double s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    double akp = m.at(k, p), akq = m.at(k, q);
                    m.at(k, p) = c * akp - s * akq;
                    m.at(k, q) = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    double apk = m.at(p, k), aqk = m.at(q, k);
                    m.at(p, k) = c * apk - s * aqk;
                    m.at(q, k) = s * apk + c * aqk;
                }
            }
        }
    }
    std::vector<double> ev(n);
    for (std::size_t i = 0; i < n; ++i) ev[i] = m.at(i, i);
    return ev;
}

struct OlsResult {
    std::vector<double> coeffs;   // one per column of x (plus intercept last, if requested)
    std::vector<double> residuals;
    double residual_std = 0.0;    // population std of residuals
    double condition = 1.0;       // condition number of the normal-equation matrix
};

// Ordinary least squares via normal equations + Cholesky.
// `columns` are the predictor columns, all of length n.
inline OlsResult ols(const std::vector<std::span<const double>>& columns,
                     std::span<const double> y, bool intercept) {
    const std::size_t n = y.size();
    const std::size_t d = columns.size() + (intercept ? 1 : 0);
    if (d == 0) throw InvalidArgument("ols: no predictors");
    for (const auto& c : columns)
        if (c.size() != n) throw InvalidArgument("ols: column length mismatch");
    if (n < d) throw DegenerateError("ols: fewer rows than predictors");

    auto colval = [&](std::size_t j, std::size_t i) {
        return j < columns.size() ? columns[j][i] : 1.0;
    };
    SquareMatrix xtx(d);
    std::vector<double> xty(d, 0.0);
    for (std::size_t j = 0; j < d; ++j) {
        for (std::size_t k = j; k < d; ++k) {
            double s = 0.0;
            for (std::size_t i = 0; i < n; ++i) s += colval(j, i) * colval(k, i);
            xtx.at(j, k) = xtx.at(k, j) = s;
        }
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += colval(j, i) * y[i];
        xty[j] = s;
    }

    auto ev = symmetric_eigenvalues(xtx);
    double emax = 0.0, emin = 1e308;
    for (double e : ev) {
        emax = std::max(emax, e);
        emin = std::min(emin, e);
    }
    SquareMatrix l = xtx;
    if (emin <= 0.0 || !cholesky(l) || emin < emax * 1e-13)
        throw DegenerateError("ols: rank-deficient predictor matrix");

    OlsResult r;
    r.coeffs = cholesky_solve(l, xty);
    r.condition = emax / emin;
    r.residuals.resize(n);
    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double p = 0.0;
        for (std::size_t j = 0; j < d; ++j) p += r.coeffs[j] * colval(j, i);
        r.residuals[i] = y[i] - p;
        ss += r.residuals[i] * r.residuals[i];
    }
    r.residual_std = std::sqrt(ss / static_cast<double>(n));
    return r;
}

}  // namespace causalgrid
