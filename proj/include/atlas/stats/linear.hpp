#pragma once

// Least squares, two-way fixed-effects regression with country-clustered
// errors, two-way variance decomposition, and dominance-analysis Shapley R².

#include <algorithm>
#include <bit>
#include <cmath>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "atlas/core.hpp"
#include "atlas/parallel.hpp"

namespace atlas::stats {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct OlsFit {
    VectorXd coef;
    std::optional<double> r2;  // undefined when y is constant
    VectorXd residuals;
    VectorXd fitted;
};

namespace detail {

inline double centered_ss(const VectorXd& y) {
    const double m = y.mean();
    CompensatedSum s;
    for (Eigen::Index i = 0; i < y.size(); ++i) s.add((y[i] - m) * (y[i] - m));
    return s.value();
}

inline double squared_norm(const VectorXd& v) {
    CompensatedSum s;
    for (Eigen::Index i = 0; i < v.size(); ++i) s.add(v[i] * v[i]);
    return s.value();
}

}  // namespace detail

/// Least squares by column-pivoted Householder QR. R² = 1 - SSR/SST with SST
/// taken around the mean of y. Throws on rank deficiency.
inline OlsFit ols(const MatrixXd& X, const VectorXd& y) {
    if (X.rows() != y.size()) throw InputError("ols: design and response lengths differ");
    if (X.rows() < X.cols()) throw InputError("ols: fewer rows than columns");
    Eigen::ColPivHouseholderQR<MatrixXd> qr(X);
    if (qr.rank() < X.cols()) throw InputError("ols: design is rank deficient");
    OlsFit f;
    f.coef = qr.solve(y);
    f.fitted = X * f.coef;
    f.residuals = y - f.fitted;
    const double sst = detail::centered_ss(y);
    if (sst > 0) f.r2 = 1.0 - detail::squared_norm(f.residuals) / sst;
    return f;
}

/// R² of the least-squares projection of y onto [1, X_S]; redundant columns
/// are dropped by the pivoted QR. Returns (R², rank deficient?).
inline std::pair<double, bool> subset_r2(const MatrixXd& X, const VectorXd& y, const std::vector<Eigen::Index>& cols) {
    MatrixXd D(X.rows(), static_cast<Eigen::Index>(cols.size()) + 1);
    D.col(0).setOnes();
    for (std::size_t j = 0; j < cols.size(); ++j) D.col(static_cast<Eigen::Index>(j) + 1) = X.col(cols[j]);
    Eigen::ColPivHouseholderQR<MatrixXd> qr(D);
    const VectorXd res = y - D * qr.solve(y);
    const double sst = detail::centered_ss(y);
    if (!(sst > 0)) throw InputError("R² undefined for a constant response");
    return {1.0 - detail::squared_norm(res) / sst, qr.rank() < D.cols()};
}

// ---------------------------------------------------------------------------
// Two-way fixed effects
// ---------------------------------------------------------------------------

struct FeParams {
    double tolerance = 1e-10;
    std::size_t max_sweeps = 1000;
};

struct FeResult {
    VectorXd beta;
    VectorXd se;  // cluster-robust
    std::size_t n = 0;
    std::size_t n_row_groups = 0;
    std::size_t n_col_groups = 0;
    std::size_t n_clusters = 0;
    std::size_t n_parameters = 0;  // regressors + identified fixed effects
    std::size_t sweeps = 0;
};

namespace detail {

inline std::vector<std::size_t> encode(const std::vector<std::string>& ids, std::size_t& n_levels) {
    std::map<std::string, std::size_t> codes;
    for (const auto& s : ids) codes.emplace(s, 0);
    std::size_t k = 0;
    for (auto& [_, c] : codes) c = k++;
    n_levels = k;
    std::vector<std::size_t> out;
    out.reserve(ids.size());
    for (const auto& s : ids) out.push_back(codes.at(s));
    return out;
}

/// Connected components of the bipartite row-group / column-group graph.
inline std::size_t fe_components(const std::vector<std::size_t>& r, std::size_t nr, const std::vector<std::size_t>& c,
                                 std::size_t nc) {
    std::vector<std::size_t> parent(nr + nc);
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](std::size_t a) {
        while (parent[a] != a) a = parent[a] = parent[parent[a]];
        return a;
    };
    for (std::size_t i = 0; i < r.size(); ++i) parent[find(r[i])] = find(nr + c[i]);
    std::size_t comps = 0;
    for (std::size_t i = 0; i < parent.size(); ++i) comps += find(i) == i;
    return comps;
}

inline void demean_by(VectorXd& v, const std::vector<std::size_t>& g, std::size_t levels) {
    std::vector<CompensatedSum> sums(levels);
    std::vector<double> counts(levels, 0.0);
    for (std::size_t i = 0; i < g.size(); ++i) {
        sums[g[i]].add(v[static_cast<Eigen::Index>(i)]);
        counts[g[i]] += 1;
    }
    for (std::size_t i = 0; i < g.size(); ++i) v[static_cast<Eigen::Index>(i)] -= sums[g[i]].value() / counts[g[i]];
}

}  // namespace detail

/// OLS of y on x after sweeping out row and column fixed effects by alternating
/// demeaning; standard errors clustered on `cluster` with the
/// G/(G-1) * (n-1)/(n-K) correction, K = regressors + identified fixed effects.
inline FeResult fe_regression(const VectorXd& y, const MatrixXd& x, const std::vector<std::string>& row_fe,
                              const std::vector<std::string>& col_fe, const std::vector<std::string>& cluster,
                              const FeParams& params = {}) {
    const auto n = static_cast<std::size_t>(y.size());
    if (static_cast<std::size_t>(x.rows()) != n || row_fe.size() != n || col_fe.size() != n || cluster.size() != n)
        throw InputError("fe_regression: input lengths differ");
    FeResult res;
    res.n = n;
    const auto r = detail::encode(row_fe, res.n_row_groups);
    const auto c = detail::encode(col_fe, res.n_col_groups);
    const auto g = detail::encode(cluster, res.n_clusters);
    if (res.n_clusters < 2) throw InputError("fe_regression: clustered errors need at least two clusters");

    MatrixXd data(static_cast<Eigen::Index>(n), x.cols() + 1);
    data.col(0) = y;
    data.rightCols(x.cols()) = x;
    std::size_t sweeps = 0;
    for (Eigen::Index j = 0; j < data.cols(); ++j) {
        VectorXd v = data.col(j);
        std::size_t s = 0;
        for (;; ++s) {
            if (s >= params.max_sweeps) throw InputError("fe_regression: demeaning did not converge");
            const VectorXd before = v;
            detail::demean_by(v, r, res.n_row_groups);
            detail::demean_by(v, c, res.n_col_groups);
            if ((v - before).cwiseAbs().maxCoeff() < params.tolerance) break;
        }
        sweeps = std::max(sweeps, s + 1);
        data.col(j) = v;
    }
    res.sweeps = sweeps;
    const VectorXd yt = data.col(0);
    const MatrixXd xt = data.rightCols(x.cols());

    Eigen::ColPivHouseholderQR<MatrixXd> qr(xt);
    if (qr.rank() < xt.cols()) throw InputError("fe_regression: regressors are collinear with the fixed effects");
    res.beta = qr.solve(yt);
    const VectorXd e = yt - xt * res.beta;

    const std::size_t fe_rank =
        res.n_row_groups + res.n_col_groups - detail::fe_components(r, res.n_row_groups, c, res.n_col_groups);
    res.n_parameters = static_cast<std::size_t>(x.cols()) + fe_rank;
    if (res.n_parameters >= n) throw InputError("fe_regression: no residual degrees of freedom");

    const MatrixXd bread = (xt.transpose() * xt).inverse();
    MatrixXd meat = MatrixXd::Zero(x.cols(), x.cols());
    std::vector<VectorXd> scores(res.n_clusters, VectorXd::Zero(x.cols()));
    for (std::size_t i = 0; i < n; ++i)
        scores[g[i]] += xt.row(static_cast<Eigen::Index>(i)).transpose() * e[static_cast<Eigen::Index>(i)];
    for (const auto& s : scores) meat += s * s.transpose();
    const double G = static_cast<double>(res.n_clusters);
    const double adj = G / (G - 1.0) * (static_cast<double>(n) - 1.0) / static_cast<double>(n - res.n_parameters);
    const MatrixXd V = adj * bread * meat * bread;
    res.se = V.diagonal().cwiseSqrt();
    return res;
}

// ---------------------------------------------------------------------------
// Two-way variance decomposition
// ---------------------------------------------------------------------------

struct VarianceShares {
    std::optional<double> rows, cols, interaction;  // unset when total variation is zero
    double ss_total = 0;
    bool balanced = true;
    bool degenerate = false;
};

/// Shares of total sum of squares around the grand mean attributable to row
/// effects, column effects, and the remainder. `m[i][j]` may be missing; with
/// missing cells the additive fit is least squares and the additive sum of
/// squares is split between rows and columns in proportion to their effect sums
/// of squares.
inline VarianceShares variance_decomposition(const std::vector<std::vector<std::optional<double>>>& m) {
    const std::size_t R = m.size();
    const std::size_t C = R ? m[0].size() : 0;
    for (const auto& row : m)
        if (row.size() != C) throw InputError("variance decomposition: ragged matrix");
    std::vector<std::size_t> ri, ci;
    std::vector<double> v;
    std::vector<bool> row_seen(R, false), col_seen(C, false);
    for (std::size_t i = 0; i < R; ++i)
        for (std::size_t j = 0; j < C; ++j)
            if (m[i][j]) {
                if (!std::isfinite(*m[i][j])) throw InputError("variance decomposition: non-finite cell");
                ri.push_back(i);
                ci.push_back(j);
                v.push_back(*m[i][j]);
                row_seen[i] = col_seen[j] = true;
            }
    const auto n_rows = static_cast<std::size_t>(std::count(row_seen.begin(), row_seen.end(), true));
    const auto n_cols = static_cast<std::size_t>(std::count(col_seen.begin(), col_seen.end(), true));
    if (n_rows < 2 || n_cols < 2) throw InputError("variance decomposition needs at least 2 rows and 2 columns");

    VarianceShares out;
    out.balanced = v.size() == R * C;
    const double grand = ordered_mean(v);
    CompensatedSum sst;
    for (double x : v) sst.add((x - grand) * (x - grand));
    out.ss_total = sst.value();
    if (!(out.ss_total > 0)) {
        out.degenerate = true;
        return out;
    }

    // Additive fit: alternating projections on row and column means.
    std::vector<double> a(R, 0.0), b(C, 0.0);
    for (std::size_t sweep = 0; sweep < 10000; ++sweep) {
        double change = 0;
        std::vector<CompensatedSum> rs(R), cs(C);
        std::vector<double> rn(R, 0), cn(C, 0);
        for (std::size_t k = 0; k < v.size(); ++k) {
            rs[ri[k]].add(v[k] - grand - b[ci[k]]);
            rn[ri[k]] += 1;
        }
        for (std::size_t i = 0; i < R; ++i)
            if (rn[i] > 0) {
                const double na = rs[i].value() / rn[i];
                change = std::max(change, std::abs(na - a[i]));
                a[i] = na;
            }
        for (std::size_t k = 0; k < v.size(); ++k) {
            cs[ci[k]].add(v[k] - grand - a[ri[k]]);
            cn[ci[k]] += 1;
        }
        for (std::size_t j = 0; j < C; ++j)
            if (cn[j] > 0) {
                const double nb = cs[j].value() / cn[j];
                change = std::max(change, std::abs(nb - b[j]));
                b[j] = nb;
            }
        if (out.balanced || change < 1e-13 * std::sqrt(out.ss_total)) break;
    }
    CompensatedSum ssr, ssc, ssi;
    for (std::size_t k = 0; k < v.size(); ++k) {
        ssr.add(a[ri[k]] * a[ri[k]]);
        ssc.add(b[ci[k]] * b[ci[k]]);
        const double e = v[k] - grand - a[ri[k]] - b[ci[k]];
        ssi.add(e * e);
    }
    if (out.balanced) {
        // Orthogonal design: components are exact and sum to the total.
        const double tot = ssr.value() + ssc.value() + ssi.value();
        out.rows = ssr.value() / tot;
        out.cols = ssc.value() / tot;
        out.interaction = ssi.value() / tot;
    } else {
        const double interaction = std::clamp(ssi.value() / out.ss_total, 0.0, 1.0);
        const double additive = 1.0 - interaction;
        const double denom = ssr.value() + ssc.value();
        out.rows = denom > 0 ? additive * ssr.value() / denom : 0.0;
        out.cols = denom > 0 ? additive * ssc.value() / denom : 0.0;
        out.interaction = interaction;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Shapley R² (dominance analysis)
// ---------------------------------------------------------------------------

struct ShapleyR2 {
    std::vector<double> contributions;
    double full_r2 = 0;
    std::size_t rank_deficient_subsets = 0;
};

inline constexpr std::size_t kMaxShapleyPredictors = 20;

/// Exact Shapley decomposition of the full-model R² over 2^p subset regressions.
inline ShapleyR2 shapley_r2(const MatrixXd& X, const VectorXd& y) {
    const auto p = static_cast<std::size_t>(X.cols());
    if (p == 0) throw InputError("shapley_r2 needs at least one predictor");
    if (p > kMaxShapleyPredictors) throw InputError("shapley_r2 supports at most 20 predictors");
    if (X.rows() != y.size()) throw InputError("shapley_r2: design and response lengths differ");
    const std::size_t n_sub = std::size_t{1} << p;
    std::vector<double> r2(n_sub, 0.0);
    std::vector<char> deficient(n_sub, 0);
    parallel_for(n_sub, [&](std::size_t mask) {
        if (mask == 0) return;
        std::vector<Eigen::Index> cols;
        for (std::size_t j = 0; j < p; ++j)
            if (mask >> j & 1) cols.push_back(static_cast<Eigen::Index>(j));
        const auto [v, def] = subset_r2(X, y, cols);
        r2[mask] = v;
        deficient[mask] = def;
    });
    // weight(|S|) = |S|! (p - |S| - 1)! / p!
    std::vector<double> weight(p);
    for (std::size_t s = 0; s < p; ++s) {
        double binom = 1;
        for (std::size_t k = 1; k <= s; ++k) binom = binom * static_cast<double>(p - 1 - s + k) / static_cast<double>(k);
        weight[s] = 1.0 / (static_cast<double>(p) * binom);
    }
    ShapleyR2 out;
    out.contributions.resize(p);
    for (std::size_t j = 0; j < p; ++j) {
        CompensatedSum acc;
        const std::size_t bit = std::size_t{1} << j;
        for (std::size_t mask = 0; mask < n_sub; ++mask) {
            if (mask & bit) continue;
            acc.add(weight[static_cast<std::size_t>(std::popcount(mask))] * (r2[mask | bit] - r2[mask]));
        }
        out.contributions[j] = acc.value();
    }
    out.full_r2 = r2[n_sub - 1];
    out.rank_deficient_subsets = static_cast<std::size_t>(std::count(deficient.begin(), deficient.end(), 1));
    return out;
}

}  // namespace atlas::stats
