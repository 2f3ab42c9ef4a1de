#pragma once

// Regression forests, path-dependent TreeSHAP, permutation importance and 1-D ALE.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "atlas/core.hpp"
#include "atlas/parallel.hpp"
#include "atlas/stats/smoothing.hpp"

namespace atlas::stats {

struct TreeNode {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0;
    int left = -1;   // x[feature] <= threshold
    int right = -1;
    double value = 0;  // mean response of the training rows reaching the node
    double cover = 0;  // bootstrap rows reaching the node, with multiplicity

    bool leaf() const { return feature < 0; }
};

struct RegressionTree {
    std::vector<TreeNode> nodes;  // nodes[0] is the root
    std::uint64_t seed = 0;

    double predict(const Eigen::VectorXd& x) const {
        int i = 0;
        while (!nodes[static_cast<std::size_t>(i)].leaf()) {
            const auto& n = nodes[static_cast<std::size_t>(i)];
            i = x[n.feature] <= n.threshold ? n.left : n.right;
        }
        return nodes[static_cast<std::size_t>(i)].value;
    }

    std::size_t depth() const {
        std::vector<std::size_t> d(nodes.size(), 0);
        std::size_t best = 0;
        for (std::size_t i = 0; i < nodes.size(); ++i) {
            best = std::max(best, d[i]);
            if (!nodes[i].leaf()) {
                d[static_cast<std::size_t>(nodes[i].left)] = d[i] + 1;
                d[static_cast<std::size_t>(nodes[i].right)] = d[i] + 1;
            }
        }
        return best;
    }
};

struct ForestParams {
    std::size_t n_trees = 500;
    std::size_t mtry = 0;       // 0 means ceil(p / 3)
    std::size_t min_leaf = 2;
    std::size_t max_depth = 0;  // 0 means unlimited
};

struct Forest {
    std::vector<RegressionTree> trees;
    std::size_t n_features = 0;
    std::size_t mtry = 0;
    ForestParams params;
    std::uint64_t seed = 0;
    bool constant_response = false;

    void check_dimension(const Eigen::VectorXd& x) const {
        if (static_cast<std::size_t>(x.size()) != n_features)
            throw InputError("feature vector has " + std::to_string(x.size()) + " entries, forest expects " +
                             std::to_string(n_features));
    }

    double predict(const Eigen::VectorXd& x) const {
        check_dimension(x);
        CompensatedSum s;
        for (const auto& t : trees) s.add(t.predict(x));
        return s.value() / static_cast<double>(trees.size());
    }

    Eigen::VectorXd predict(const Eigen::MatrixXd& X) const {
        Eigen::VectorXd out(X.rows());
        parallel_for(static_cast<std::size_t>(X.rows()), [&](std::size_t i) {
            out[static_cast<Eigen::Index>(i)] = predict(Eigen::VectorXd(X.row(static_cast<Eigen::Index>(i)).transpose()));
        });
        return out;
    }
};

namespace detail {

inline constexpr std::uint64_t kTreeStream = 0x54524545;

struct SplitChoice {
    int feature = -1;
    double threshold = 0;
    double gain = 0;
};

inline bool constant_values(const std::vector<double>& y, const std::vector<std::size_t>& rows) {
    for (auto r : rows)
        if (y[r] != y[rows.front()]) return false;
    return true;
}

/// Best SSE-reducing split over `features`; both children need >= min_leaf rows.
inline SplitChoice best_split(const std::vector<std::vector<double>>& cols, const std::vector<double>& y,
                              const std::vector<std::size_t>& rows, const std::vector<std::size_t>& features,
                              std::size_t min_leaf) {
    SplitChoice best;
    const double n = static_cast<double>(rows.size());
    double total = 0;
    for (auto r : rows) total += y[r];
    std::vector<std::size_t> order(rows.size());
    for (auto f : features) {
        const auto& x = cols[f];
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[rows[a]] < x[rows[b]]; });
        double left = 0;
        for (std::size_t k = 0; k + 1 < order.size(); ++k) {
            left += y[rows[order[k]]];
            const double lo = x[rows[order[k]]], hi = x[rows[order[k + 1]]];
            const std::size_t nl = k + 1, nr = order.size() - nl;
            if (lo == hi || nl < min_leaf || nr < min_leaf) continue;
            const double right = total - left;
            const double gain = left * left / static_cast<double>(nl) + right * right / static_cast<double>(nr) -
                                total * total / n;
            if (gain > best.gain) {
                double mid = lo + (hi - lo) / 2.0;
                if (!(mid < hi)) mid = lo;
                best = {static_cast<int>(f), mid, gain};
            }
        }
    }
    return best;
}

inline RegressionTree grow_tree(const std::vector<std::vector<double>>& cols, const std::vector<double>& y,
                                const ForestParams& params, std::size_t mtry, std::uint64_t seed, std::size_t index) {
    const std::size_t n = y.size(), p = cols.size();
    auto rng = stream_rng(seed, kTreeStream, index);
    RegressionTree tree;
    tree.seed = seed;
    std::vector<std::size_t> boot(n);
    for (auto& b : boot) b = uniform_index(rng, n);

    struct Pending {
        std::size_t node;
        std::vector<std::size_t> rows;
        std::size_t depth;
    };
    std::vector<Pending> stack;
    tree.nodes.emplace_back();
    stack.push_back({0, std::move(boot), 0});
    std::vector<std::size_t> features(p);
    while (!stack.empty()) {
        Pending cur = std::move(stack.back());
        stack.pop_back();
        CompensatedSum s;
        for (auto r : cur.rows) s.add(y[r]);
        auto& node = tree.nodes[cur.node];
        node.cover = static_cast<double>(cur.rows.size());
        node.value = s.value() / node.cover;
        const bool depth_capped = params.max_depth > 0 && cur.depth >= params.max_depth;
        if (cur.rows.size() < 2 * params.min_leaf || depth_capped || constant_values(y, cur.rows)) continue;

        // mtry distinct features by a partial Fisher-Yates draw.
        std::iota(features.begin(), features.end(), 0);
        for (std::size_t k = 0; k < mtry; ++k) std::swap(features[k], features[k + uniform_index(rng, p - k)]);
        const std::vector<std::size_t> drawn(features.begin(), features.begin() + static_cast<std::ptrdiff_t>(mtry));
        const auto split = best_split(cols, y, cur.rows, drawn, params.min_leaf);
        if (split.feature < 0) continue;

        std::vector<std::size_t> lrows, rrows;
        for (auto r : cur.rows) (cols[static_cast<std::size_t>(split.feature)][r] <= split.threshold ? lrows : rrows).push_back(r);
        const auto li = tree.nodes.size();
        tree.nodes.emplace_back();
        tree.nodes.emplace_back();
        auto& parent = tree.nodes[cur.node];
        parent.feature = split.feature;
        parent.threshold = split.threshold;
        parent.left = static_cast<int>(li);
        parent.right = static_cast<int>(li + 1);
        stack.push_back({li + 1, std::move(rrows), cur.depth + 1});
        stack.push_back({li, std::move(lrows), cur.depth + 1});
    }
    return tree;
}

}  // namespace detail

/// Bootstrap regression forest; tree t draws from stream (seed, t), so the
/// result does not depend on the worker count.
inline Forest fit_forest(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const ForestParams& params = {},
                         std::uint64_t seed = 0) {
    const auto n = static_cast<std::size_t>(X.rows()), p = static_cast<std::size_t>(X.cols());
    if (static_cast<std::size_t>(y.size()) != n) throw InputError("fit_forest: X and y lengths differ");
    if (p == 0) throw InputError("fit_forest: no features");
    if (params.n_trees == 0) throw InputError("fit_forest: n_trees must be positive");
    if (params.min_leaf == 0) throw InputError("fit_forest: min_leaf must be positive");
    if (n < 2 * params.min_leaf) throw InputError("fit_forest: need at least 2 * min_leaf rows");
    if (!X.allFinite() || !y.allFinite()) throw InputError("fit_forest: non-finite input");
    Forest f;
    f.n_features = p;
    f.params = params;
    f.seed = seed;
    f.mtry = params.mtry ? params.mtry : (p + 2) / 3;
    if (f.mtry > p) throw InputError("fit_forest: mtry exceeds the number of features");
    std::vector<std::vector<double>> cols(p, std::vector<double>(n));
    for (std::size_t j = 0; j < p; ++j)
        for (std::size_t i = 0; i < n; ++i) cols[j][i] = X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    const std::vector<double> yv(y.data(), y.data() + n);
    f.constant_response = std::all_of(yv.begin(), yv.end(), [&](double v) { return v == yv.front(); });
    f.trees.resize(params.n_trees);
    parallel_for(params.n_trees, [&](std::size_t t) { f.trees[t] = detail::grow_tree(cols, yv, params, f.mtry, seed, t); });
    return f;
}

// ---------------------------------------------------------------------------
// TreeSHAP
// ---------------------------------------------------------------------------

struct Attribution {
    std::vector<double> values;
    double base_value = 0;
    double prediction = 0;
};

namespace detail {

struct PathElement {
    int feature;
    double zero;  // fraction of cover flowing this way when the feature is unknown
    double one;   // 1 when x follows this way, else 0
    double weight;
};

inline void extend_path(std::vector<PathElement>& path, double zero, double one, int feature) {
    const std::size_t d = path.size();
    path.push_back({feature, zero, one, d == 0 ? 1.0 : 0.0});
    const double dd = static_cast<double>(d);
    for (std::size_t i = d; i-- > 0;) {
        path[i + 1].weight += one * path[i].weight * static_cast<double>(i + 1) / (dd + 1);
        path[i].weight = zero * path[i].weight * (dd - static_cast<double>(i)) / (dd + 1);
    }
}

inline void unwind_path(std::vector<PathElement>& path, std::size_t index) {
    const std::size_t d = path.size() - 1;
    const double dd = static_cast<double>(d);
    const double one = path[index].one, zero = path[index].zero;
    double next = path[d].weight;
    for (std::size_t i = d; i-- > 0;) {
        if (one != 0) {
            const double tmp = path[i].weight;
            path[i].weight = next * (dd + 1) / (static_cast<double>(i + 1) * one);
            next = tmp - path[i].weight * zero * (dd - static_cast<double>(i)) / (dd + 1);
        } else {
            path[i].weight = path[i].weight * (dd + 1) / (zero * (dd - static_cast<double>(i)));
        }
    }
    for (std::size_t i = index; i < d; ++i) {
        path[i].feature = path[i + 1].feature;
        path[i].zero = path[i + 1].zero;
        path[i].one = path[i + 1].one;
    }
    path.pop_back();
}

inline double unwound_path_sum(const std::vector<PathElement>& path, std::size_t index) {
    const std::size_t d = path.size() - 1;
    const double dd = static_cast<double>(d);
    const double one = path[index].one, zero = path[index].zero;
    double next = path[d].weight, total = 0;
    for (std::size_t i = d; i-- > 0;) {
        if (one != 0) {
            const double tmp = next * (dd + 1) / (static_cast<double>(i + 1) * one);
            total += tmp;
            next = path[i].weight - tmp * zero * (dd - static_cast<double>(i)) / (dd + 1);
        } else if (zero != 0) {
            total += path[i].weight / zero / ((dd - static_cast<double>(i)) / (dd + 1));
        }
    }
    return total;
}

inline void tree_shap_recurse(const RegressionTree& tree, const Eigen::VectorXd& x, std::vector<double>& phi,
                              std::size_t node, std::vector<PathElement> path, double zero, double one, int feature) {
    extend_path(path, zero, one, feature);
    const auto& n = tree.nodes[node];
    if (n.leaf()) {
        for (std::size_t i = 1; i < path.size(); ++i) {
            const double w = unwound_path_sum(path, i);
            phi[static_cast<std::size_t>(path[i].feature)] += w * (path[i].one - path[i].zero) * n.value;
        }
        return;
    }
    const auto hot = static_cast<std::size_t>(x[n.feature] <= n.threshold ? n.left : n.right);
    const auto cold = static_cast<std::size_t>(x[n.feature] <= n.threshold ? n.right : n.left);
    double in_zero = 1, in_one = 1;
    for (std::size_t k = 1; k < path.size(); ++k)
        if (path[k].feature == n.feature) {
            in_zero = path[k].zero;
            in_one = path[k].one;
            unwind_path(path, k);
            break;
        }
    tree_shap_recurse(tree, x, phi, hot, path, tree.nodes[hot].cover / n.cover * in_zero, in_one, n.feature);
    tree_shap_recurse(tree, x, phi, cold, path, tree.nodes[cold].cover / n.cover * in_zero, 0.0, n.feature);
}

/// Cover-weighted mean leaf value.
inline double expected_value(const RegressionTree& tree, std::size_t node = 0) {
    const auto& n = tree.nodes[node];
    if (n.leaf()) return n.value;
    const auto& l = tree.nodes[static_cast<std::size_t>(n.left)];
    const auto& r = tree.nodes[static_cast<std::size_t>(n.right)];
    return (l.cover * expected_value(tree, static_cast<std::size_t>(n.left)) +
            r.cover * expected_value(tree, static_cast<std::size_t>(n.right))) /
           (l.cover + r.cover);
}

}  // namespace detail

/// Exact path-dependent Shapley values of one tree, conditioning absent
/// features on training coverage.
inline Attribution tree_shap(const RegressionTree& tree, const Eigen::VectorXd& x) {
    Attribution a;
    a.values.assign(static_cast<std::size_t>(x.size()), 0.0);
    detail::tree_shap_recurse(tree, x, a.values, 0, {}, 1.0, 1.0, -1);
    a.base_value = detail::expected_value(tree);
    a.prediction = tree.predict(x);
    return a;
}

/// Forest attributions: the average of per-tree attributions.
inline Attribution tree_shap(const Forest& forest, const Eigen::VectorXd& x) {
    forest.check_dimension(x);
    const std::size_t p = forest.n_features;
    std::vector<CompensatedSum> phi(p);
    CompensatedSum base;
    for (const auto& t : forest.trees) {
        const auto a = tree_shap(t, x);
        for (std::size_t j = 0; j < p; ++j) phi[j].add(a.values[j]);
        base.add(a.base_value);
    }
    const double T = static_cast<double>(forest.trees.size());
    Attribution out;
    for (auto& s : phi) out.values.push_back(s.value() / T);
    out.base_value = base.value() / T;
    out.prediction = forest.predict(x);
    return out;
}

struct ShapRanking {
    std::vector<double> values;        // mean |SHAP| x 100 per feature
    std::vector<std::size_t> ranking;  // feature indices, largest first; ties by index
    std::vector<std::uint64_t> seeds;
};

/// Mean absolute TreeSHAP over rows and forest seeds, in outcome units x 100.
inline ShapRanking mean_abs_shap(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const ForestParams& params,
                                 const std::vector<std::uint64_t>& seeds) {
    if (seeds.empty()) throw InputError("mean_abs_shap needs at least one seed");
    const auto n = static_cast<std::size_t>(X.rows()), p = static_cast<std::size_t>(X.cols());
    std::vector<std::vector<double>> per_seed(seeds.size(), std::vector<double>(p));
    for (std::size_t s = 0; s < seeds.size(); ++s) {
        const auto forest = fit_forest(X, y, params, seeds[s]);
        std::vector<std::vector<double>> rows(n);
        parallel_for(n, [&](std::size_t i) {
            rows[i] = tree_shap(forest, Eigen::VectorXd(X.row(static_cast<Eigen::Index>(i)).transpose())).values;
        });
        for (std::size_t j = 0; j < p; ++j) {
            CompensatedSum acc;
            for (std::size_t i = 0; i < n; ++i) acc.add(std::abs(rows[i][j]));
            per_seed[s][j] = acc.value() / static_cast<double>(n);
        }
    }
    ShapRanking out;
    out.seeds = seeds;
    for (std::size_t j = 0; j < p; ++j) {
        CompensatedSum acc;
        for (const auto& v : per_seed) acc.add(v[j]);
        out.values.push_back(100.0 * acc.value() / static_cast<double>(seeds.size()));
    }
    out.ranking.resize(p);
    std::iota(out.ranking.begin(), out.ranking.end(), 0);
    std::stable_sort(out.ranking.begin(), out.ranking.end(),
                     [&](std::size_t a, std::size_t b) { return out.values[a] > out.values[b]; });
    return out;
}

// ---------------------------------------------------------------------------
// Permutation importance
// ---------------------------------------------------------------------------

inline constexpr std::uint64_t kPermutationStream = 0x5045524d;

/// Mean increase in squared error on (X, y) when column j is permuted, averaged
/// over `repeats` permutations drawn from stream (seed, j, r).
inline std::vector<double> permutation_importance(const Forest& forest, const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                                  std::uint64_t seed, std::size_t repeats = 5) {
    if (repeats == 0) throw InputError("permutation importance needs at least one repeat");
    if (static_cast<std::size_t>(X.cols()) != forest.n_features) throw InputError("evaluation set dimension mismatch");
    if (X.rows() != y.size() || X.rows() == 0) throw InputError("evaluation set is empty or misaligned");
    const auto n = static_cast<std::size_t>(X.rows()), p = forest.n_features;
    auto mse = [&](const Eigen::MatrixXd& M) {
        const Eigen::VectorXd pred = forest.predict(M);
        CompensatedSum s;
        for (std::size_t i = 0; i < n; ++i) {
            const double e = pred[static_cast<Eigen::Index>(i)] - y[static_cast<Eigen::Index>(i)];
            s.add(e * e);
        }
        return s.value() / static_cast<double>(n);
    };
    const double base = mse(X);
    std::vector<double> increase(p * repeats);
    for (std::size_t k = 0; k < p * repeats; ++k) {
        const std::size_t j = k / repeats, r = k % repeats;
        auto rng = stream_rng(seed, kPermutationStream ^ j, r);
        std::vector<std::size_t> perm(n);
        std::iota(perm.begin(), perm.end(), 0);
        portable_shuffle(perm, rng);
        Eigen::MatrixXd M = X;
        for (std::size_t i = 0; i < n; ++i)
            M(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                X(static_cast<Eigen::Index>(perm[i]), static_cast<Eigen::Index>(j));
        increase[k] = mse(M) - base;
    }
    std::vector<double> out(p);
    for (std::size_t j = 0; j < p; ++j)
        out[j] = ordered_mean(std::span<const double>(increase.data() + j * repeats, repeats));
    return out;
}

// ---------------------------------------------------------------------------
// Accumulated local effects
// ---------------------------------------------------------------------------

struct AleResult {
    std::vector<double> grid;    // bin edges
    std::vector<double> values;  // centered ALE at each edge
    std::vector<std::size_t> counts;  // rows per bin (grid.size() - 1 entries)
    int direction = 0;
    bool merged_bins = false;  // duplicate quantile edges or empty bins were merged
};

using Predictor = std::function<double(const Eigen::VectorXd&)>;

/// First-order ALE of `model` in `feature` over quantile bins. Bin 1 is
/// [e0, e1], later bins are (e_{k-1}, e_k].
inline AleResult ale_1d(const Predictor& model, const Eigen::MatrixXd& X, std::size_t feature, std::size_t n_bins = 10) {
    if (feature >= static_cast<std::size_t>(X.cols())) throw InputError("ale: feature index out of range");
    if (n_bins == 0) throw InputError("ale: n_bins must be positive");
    const auto n = static_cast<std::size_t>(X.rows());
    const auto fj = static_cast<Eigen::Index>(feature);
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = X(static_cast<Eigen::Index>(i), fj);
    AleResult out;
    std::vector<double> edges;
    for (std::size_t k = 0; k <= n_bins; ++k) edges.push_back(quantile(v, static_cast<double>(k) / static_cast<double>(n_bins)));
    const auto uniq = std::unique(edges.begin(), edges.end());
    out.merged_bins = uniq != edges.end();
    edges.erase(uniq, edges.end());
    if (edges.size() < 2) throw InputError("ale: feature needs at least 2 distinct values");

    auto bin_of = [&](double x) {
        const auto k = static_cast<std::size_t>(std::lower_bound(edges.begin(), edges.end(), x) - edges.begin());
        return k == 0 ? std::size_t{0} : k - 1;
    };
    for (;;) {
        std::vector<std::size_t> counts(edges.size() - 1, 0);
        for (double x : v) ++counts[bin_of(x)];
        const auto empty = std::find(counts.begin(), counts.end(), 0u);
        if (empty == counts.end()) {
            out.counts = counts;
            break;
        }
        // Merge an empty bin into its upper neighbour, or the lower one at the top.
        const auto k = static_cast<std::size_t>(empty - counts.begin());
        edges.erase(edges.begin() + static_cast<std::ptrdiff_t>(k + 1 < counts.size() ? k + 1 : k));
        out.merged_bins = true;
    }

    const std::size_t K = edges.size() - 1;
    std::vector<double> diff(n);
    std::vector<std::size_t> bin(n);
    parallel_for(n, [&](std::size_t i) {
        bin[i] = bin_of(v[i]);
        Eigen::VectorXd x = X.row(static_cast<Eigen::Index>(i)).transpose();
        x[fj] = edges[bin[i] + 1];
        const double hi = model(x);
        x[fj] = edges[bin[i]];
        diff[i] = hi - model(x);
    });
    std::vector<CompensatedSum> sums(K);
    for (std::size_t i = 0; i < n; ++i) sums[bin[i]].add(diff[i]);
    std::vector<double> acc(K + 1, 0.0);
    for (std::size_t k = 0; k < K; ++k) acc[k + 1] = acc[k] + sums[k].value() / static_cast<double>(out.counts[k]);
    CompensatedSum centre;
    for (std::size_t k = 0; k < K; ++k) centre.add(static_cast<double>(out.counts[k]) * (acc[k] + acc[k + 1]) / 2.0);
    const double c = centre.value() / static_cast<double>(n);
    out.grid = edges;
    for (double a : acc) out.values.push_back(a - c);
    const double span = acc[K] - acc[0];
    out.direction = (span > 0) - (span < 0);
    return out;
}

inline AleResult ale_1d(const Forest& forest, const Eigen::MatrixXd& X, std::size_t feature, std::size_t n_bins = 10) {
    return ale_1d([&](const Eigen::VectorXd& x) { return forest.predict(x); }, X, feature, n_bins);
}

}  // namespace atlas::stats
