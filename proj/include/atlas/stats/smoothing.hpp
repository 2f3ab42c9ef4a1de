#pragma once

// Local-linear LOESS and percentile bootstrap bands.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "atlas/core.hpp"
#include "atlas/parallel.hpp"

namespace atlas::stats {

struct LoessParams {
    double span = 0.75;
    int degree = 1;
};

struct LoessFit {
    std::vector<double> grid;
    std::vector<double> fitted;
    std::vector<bool> fallback;  // local design degenerate; weighted local mean used
};

inline double tricube(double u) {
    if (u >= 1.0) return 0.0;
    const double t = 1.0 - u * u * u;
    return t * t * t;
}

namespace detail {

/// Tricube weights over the q nearest points to x0 (ties broken by index); others 0.
/// When every window point sits at the window radius the window gets equal weights.
inline std::vector<double> loess_weights(const std::vector<double>& x, double x0, std::size_t q) {
    const std::size_t n = x.size();
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    auto dist = [&](std::size_t i) { return std::abs(x[i] - x0); };
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return dist(a) < dist(b); });
    const double h = dist(idx[q - 1]);
    std::vector<double> w(n, 0.0);
    bool any = false;
    for (std::size_t k = 0; k < q; ++k) {
        const std::size_t i = idx[k];
        w[i] = h > 0 ? tricube(dist(i) / h) : 1.0;
        any = any || w[i] > 0;
    }
    if (!any)
        for (std::size_t k = 0; k < q; ++k) w[idx[k]] = 1.0;
    return w;
}

}  // namespace detail

inline std::size_t loess_window(std::size_t n, double span) {
    return std::clamp<std::size_t>(static_cast<std::size_t>(std::floor(span * static_cast<double>(n) + 1e-9)), 2, n);
}

/// Degree-1 LOESS evaluated at each grid point.
inline LoessFit loess(const std::vector<double>& x, const std::vector<double>& y, const std::vector<double>& grid,
                      const LoessParams& params = {}) {
    if (params.degree != 1) throw InputError("loess: only local degree 1 is supported");
    if (!(params.span > 0 && params.span <= 1)) throw InputError("loess: span must be in (0, 1]");
    if (x.size() != y.size()) throw InputError("loess: x and y lengths differ");
    if (x.size() < static_cast<std::size_t>(params.degree) + 2) throw InputError("loess: too few points");
    const std::size_t q = loess_window(x.size(), params.span);

    LoessFit fit;
    fit.grid = grid;
    fit.fitted.resize(grid.size());
    fit.fallback.assign(grid.size(), false);
    for (std::size_t g = 0; g < grid.size(); ++g) {
        const auto w = detail::loess_weights(x, grid[g], q);
        CompensatedSum sw, swx, swy;
        for (std::size_t i = 0; i < x.size(); ++i) {
            sw.add(w[i]);
            swx.add(w[i] * x[i]);
            swy.add(w[i] * y[i]);
        }
        const double W = sw.value();
        const double xb = swx.value() / W, yb = swy.value() / W;
        CompensatedSum sxx, sxy;
        for (std::size_t i = 0; i < x.size(); ++i) {
            if (w[i] == 0) continue;
            sxx.add(w[i] * (x[i] - xb) * (x[i] - xb));
            sxy.add(w[i] * (x[i] - xb) * (y[i] - yb));
        }
        if (!(sxx.value() > 1e-14 * W * std::max(1.0, xb * xb))) {
            fit.fallback[g] = true;
            fit.fitted[g] = yb;
            continue;
        }
        fit.fitted[g] = yb + sxy.value() / sxx.value() * (grid[g] - xb);
    }
    return fit;
}

/// Type-7 (linear interpolation) sample quantile of an unsorted vector.
inline double quantile(std::vector<double> v, double p) {
    if (v.empty()) throw InputError("quantile of an empty sample");
    std::sort(v.begin(), v.end());
    const double h = (static_cast<double>(v.size()) - 1.0) * p;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

struct Band {
    std::vector<double> lower;
    std::vector<double> upper;
    std::size_t resamples = 0;
    double level = 0.95;
    std::uint64_t seed = 0;
};

/// Units drawn with replacement for bootstrap replicate r.
inline std::vector<std::size_t> bootstrap_draw(std::size_t n_units, std::uint64_t seed, std::size_t r) {
    auto rng = stream_rng(seed, 0x424f4f54ull, r);
    std::vector<std::size_t> idx(n_units);
    for (auto& i : idx) i = uniform_index(rng, n_units);
    return idx;
}

/// Percentile band of a statistic refit on unit resamples. `fit(indices)` returns
/// one value per grid point and must be safe to call concurrently.
template <class Fit>
Band bootstrap_band(std::size_t n_units, Fit&& fit, std::size_t resamples = 200, double level = 0.95,
                    std::uint64_t seed = 0) {
    if (resamples < 2) throw InputError("bootstrap needs at least 2 resamples");
    if (n_units == 0) throw InputError("bootstrap needs at least one unit");
    std::vector<std::vector<double>> reps(resamples);
    parallel_for(resamples, [&](std::size_t r) { reps[r] = fit(bootstrap_draw(n_units, seed, r)); });
    const std::size_t m = reps[0].size();
    for (const auto& r : reps)
        if (r.size() != m) throw InvariantError("bootstrap: replicate lengths differ");
    Band b;
    b.resamples = resamples;
    b.level = level;
    b.seed = seed;
    const double alpha = (1.0 - level) / 2.0;
    for (std::size_t g = 0; g < m; ++g) {
        std::vector<double> col(resamples);
        for (std::size_t r = 0; r < resamples; ++r) col[r] = reps[r][g];
        b.lower.push_back(quantile(col, alpha));
        b.upper.push_back(quantile(col, 1.0 - alpha));
    }
    return b;
}

/// Band for LOESS refit on resampled (x, y) units, evaluated on a fixed grid.
inline Band loess_band(const std::vector<double>& x, const std::vector<double>& y, const std::vector<double>& grid,
                       const LoessParams& params = {}, std::size_t resamples = 200, double level = 0.95,
                       std::uint64_t seed = 0) {
    return bootstrap_band(
        x.size(),
        [&](const std::vector<std::size_t>& idx) {
            std::vector<double> bx, by;
            for (auto i : idx) {
                bx.push_back(x[i]);
                by.push_back(y[i]);
            }
            return loess(bx, by, grid, params).fitted;
        },
        resamples, level, seed);
}

}  // namespace atlas::stats
