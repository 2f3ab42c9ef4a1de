#pragma once

// Keyed series, Pearson/Spearman/partial correlation, leave-one-out ranges.

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "atlas/core.hpp"
#include "atlas/parallel.hpp"

namespace atlas::stats {

struct Series {
    std::vector<std::string> keys;
    std::vector<double> values;
    std::optional<std::vector<std::string>> groups;

    Series() = default;
    Series(std::vector<std::string> k, std::vector<double> v) : keys(std::move(k)), values(std::move(v)) { validate(); }

    static Series from_map(const std::map<std::string, double>& m) {
        Series s;
        for (const auto& [k, v] : m) {
            s.keys.push_back(k);
            s.values.push_back(v);
        }
        s.validate();
        return s;
    }

    void validate() const {
        if (keys.size() != values.size()) throw InputError("series: key and value counts differ");
        if (groups && groups->size() != keys.size()) throw InputError("series: group labels do not match keys");
        std::set<std::string> seen;
        for (std::size_t i = 0; i < keys.size(); ++i) {
            if (!seen.insert(keys[i]).second) throw InputError("series: duplicate key '" + keys[i] + "'");
            if (!std::isfinite(values[i])) throw InputError("series: non-finite value for '" + keys[i] + "'");
        }
    }

    std::map<std::string, double> as_map() const {
        std::map<std::string, double> m;
        for (std::size_t i = 0; i < keys.size(); ++i) m[keys[i]] = values[i];
        return m;
    }
};

/// Values of several series on their common keys, in key order.
struct Aligned {
    std::vector<std::string> keys;
    std::vector<std::vector<double>> columns;
};

inline Aligned align(const std::vector<const Series*>& series) {
    std::vector<std::map<std::string, double>> maps;
    for (const auto* s : series) maps.push_back(s->as_map());
    Aligned out;
    out.columns.resize(series.size());
    if (maps.empty()) return out;
    for (const auto& [k, _] : maps[0]) {
        bool all = true;
        for (std::size_t i = 1; i < maps.size() && all; ++i) all = maps[i].count(k) > 0;
        if (!all) continue;
        out.keys.push_back(k);
        for (std::size_t i = 0; i < maps.size(); ++i) out.columns[i].push_back(maps[i].at(k));
    }
    return out;
}

struct Correlation {
    double r = 0;
    std::size_t n = 0;
};

namespace detail {

inline double pearson_raw(const std::vector<double>& x, const std::vector<double>& y) {
    const double mx = ordered_mean(x), my = ordered_mean(y);
    CompensatedSum sxy, sxx, syy;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx, dy = y[i] - my;
        sxy.add(dx * dy);
        sxx.add(dx * dx);
        syy.add(dy * dy);
    }
    if (!(sxx.value() > 0) || !(syy.value() > 0)) throw InputError("correlation: zero variance");
    return std::clamp(sxy.value() / std::sqrt(sxx.value() * syy.value()), -1.0, 1.0);
}

/// 1-based ranks with ties sharing their average rank.
inline std::vector<double> average_ranks(const std::vector<double>& v) {
    std::vector<std::size_t> order(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> ranks(v.size());
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
        const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
        i = j + 1;
    }
    return ranks;
}

inline void require_pairs(std::size_t n, std::size_t min = 3) {
    if (n < min) throw InputError("correlation needs at least " + std::to_string(min) + " paired observations, got " + std::to_string(n));
}

}  // namespace detail

inline Correlation pearson(const Series& x, const Series& y) {
    auto a = align({&x, &y});
    detail::require_pairs(a.keys.size());
    return {detail::pearson_raw(a.columns[0], a.columns[1]), a.keys.size()};
}

inline Correlation spearman(const Series& x, const Series& y) {
    auto a = align({&x, &y});
    detail::require_pairs(a.keys.size());
    return {detail::pearson_raw(detail::average_ranks(a.columns[0]), detail::average_ranks(a.columns[1])), a.keys.size()};
}

namespace detail {

/// Residuals of v on [1, controls]; throws on rank deficiency.
inline Eigen::VectorXd residualize(const Eigen::VectorXd& v, const Eigen::MatrixXd& design) {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
    if (qr.rank() < design.cols()) throw InputError("partial correlation: controls are rank deficient");
    return v - design * qr.solve(v);
}

// Residual norms below this fraction of the centered norm are treated as exact absorption.
inline constexpr double kAbsorbed = 1e-10;

}  // namespace detail

struct PartialCorrelation {
    double r = 0;
    std::size_t n = 0;
    bool absorbed = false;  // a variable is an exact linear function of the controls
};

/// Pearson correlation of the residuals of x and y on controls plus intercept.
/// When either residual vanishes the partial correlation is reported as 0.
inline PartialCorrelation partial_correlation(const Series& x, const Series& y, const std::vector<Series>& controls) {
    std::vector<const Series*> all{&x, &y};
    for (const auto& c : controls) all.push_back(&c);
    auto a = align(all);
    const std::size_t n = a.keys.size();
    detail::require_pairs(n, controls.size() + 3);
    Eigen::MatrixXd design(n, controls.size() + 1);
    design.col(0).setOnes();
    for (std::size_t c = 0; c < controls.size(); ++c)
        design.col(static_cast<Eigen::Index>(c + 1)) = Eigen::Map<const Eigen::VectorXd>(a.columns[c + 2].data(), n);
    const Eigen::VectorXd xv = Eigen::Map<const Eigen::VectorXd>(a.columns[0].data(), n);
    const Eigen::VectorXd yv = Eigen::Map<const Eigen::VectorXd>(a.columns[1].data(), n);
    const Eigen::VectorXd rx = detail::residualize(xv, design), ry = detail::residualize(yv, design);
    auto centered_norm = [](const Eigen::VectorXd& v) { return (v.array() - v.mean()).matrix().norm(); };
    PartialCorrelation out;
    out.n = n;
    if (rx.norm() <= detail::kAbsorbed * centered_norm(xv) || ry.norm() <= detail::kAbsorbed * centered_norm(yv)) {
        out.absorbed = true;
        return out;
    }
    out.r = detail::pearson_raw(std::vector<double>(rx.data(), rx.data() + n), std::vector<double>(ry.data(), ry.data() + n));
    return out;
}

struct LeaveOneOut {
    double min = 0;
    double max = 0;
    double sd = 0;  // sample standard deviation over deletions
    std::vector<std::pair<std::string, double>> values;  // deleted key -> statistic
};

using CorrelationOp = std::function<Correlation(const Series&, const Series&)>;

/// Recomputes `stat` once with each common unit deleted.
inline LeaveOneOut leave_one_out(const Series& x, const Series& y, const CorrelationOp& stat = pearson) {
    auto a = align({&x, &y});
    const std::size_t n = a.keys.size();
    if (n < 4) throw InputError("leave-one-out needs at least 4 paired observations");
    std::vector<double> vals(n);
    parallel_for(n, [&](std::size_t d) {
        std::vector<std::string> k;
        std::vector<double> vx, vy;
        for (std::size_t i = 0; i < n; ++i)
            if (i != d) {
                k.push_back(a.keys[i]);
                vx.push_back(a.columns[0][i]);
                vy.push_back(a.columns[1][i]);
            }
        vals[d] = stat(Series(k, vx), Series(k, vy)).r;
    });
    LeaveOneOut out;
    out.min = *std::min_element(vals.begin(), vals.end());
    out.max = *std::max_element(vals.begin(), vals.end());
    const double mean = ordered_mean(vals);
    CompensatedSum ss;
    for (double v : vals) ss.add((v - mean) * (v - mean));
    out.sd = std::sqrt(ss.value() / static_cast<double>(n - 1));
    for (std::size_t i = 0; i < n; ++i) out.values.emplace_back(a.keys[i], vals[i]);
    return out;
}

}  // namespace atlas::stats
