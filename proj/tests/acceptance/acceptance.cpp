// Acceptance runner: one PASS/FAIL line per criterion, nonzero exit on any FAIL.
//
// Every criterion has a reference-data arm and a synthetic arm. Only the
// synthetic arm is implemented here; lines are tagged [fallback].

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "atlas/aggregate.hpp"
#include "atlas/cli.hpp"
#include "atlas/digest.hpp"
#include "atlas/linkage.hpp"
#include "atlas/stats.hpp"
#include "atlas/validate.hpp"
#include "generators.hpp"
#include "stats_oracles.hpp"

namespace fs = std::filesystem;
using namespace atlas;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

struct Outcome {
    bool ok = true;
    std::string detail;
};

/// Tracks the largest deviation seen and whether any comparison failed.
struct Tally {
    double worst = 0;
    std::size_t checks = 0;
    std::string first_failure;

    void near(double got, double want, double tol, const std::string& what) {
        const double d = std::abs(got - want);
        ++checks;
        worst = std::max(worst, std::isnan(d) ? INFINITY : d);
        if (!(d <= tol) && first_failure.empty()) {
            std::ostringstream s;
            s.precision(17);
            s << what << ": got " << got << ", want " << want;
            first_failure = s.str();
        }
    }
    void truth(bool v, const std::string& what) {
        ++checks;
        if (!v && first_failure.empty()) first_failure = what;
    }
    Outcome outcome(double tol) const {
        std::ostringstream s;
        s.precision(3);
        s << checks << " checks, max deviation " << worst << " (tol " << tol << ")";
        if (!first_failure.empty()) s << "; " << first_failure;
        return {first_failure.empty(), s.str()};
    }
};

std::vector<double> normals(std::mt19937_64& rng, std::size_t n) {
    std::normal_distribution<double> d;
    std::vector<double> v(n);
    for (auto& x : v) x = d(rng);
    return v;
}

stats::Series series(std::vector<double> v) {
    std::vector<std::string> k;
    for (std::size_t i = 0; i < v.size(); ++i) k.push_back("u" + std::to_string(1000 + i));
    return {k, std::move(v)};
}

CountryRegistry income_registry(std::size_t countries) {
    CountryRegistry reg;
    for (std::size_t i = 0; i < countries; ++i) {
        auto iso = gen::country_name(i);
        reg.countries[iso] = {iso, iso, static_cast<IncomeGroup>(i % 4), Region::south_asia, std::nullopt};
    }
    return reg;
}

// 1: distribution tables against per-record counting, exact equality.
Outcome distribution_matches_counting() {
    std::mt19937_64 rng(101);
    Tally t;
    for (int rep = 0; rep < 20; ++rep) {
        const auto ds = gen::random_dataset(rng, 10, 100);
        t.truth(ds.records.size() == 1000, "fixture size");
        const auto reg = income_registry(10);
        std::map<std::string, std::vector<const TaskLabelRecord*>> groups;
        for (const auto& [k, r] : ds.records) {
            groups["all"];
            groups[group_label(*reg.find(r.country), Grouping::income_group)].push_back(&r);
        }
        auto compare = [&](const DistributionTable& tab, const std::vector<const TaskLabelRecord*>& recs) {
            std::array<double, 4> lv{}, mg{};
            std::array<double, 6> ch{};
            std::array<double, 2> ai{};
            for (const auto* r : recs) {
                lv[static_cast<std::size_t>(r->exposure.value())] += 1;
                ch[index_of(r->channel)] += 1;
                mg[index_of(r->margin)] += 1;
                ai[r->ai_material ? 1 : 0] += 1;
            }
            const double n = static_cast<double>(recs.size());
            t.truth(tab.n == recs.size(), "count for " + tab.group);
            for (std::size_t i = 0; i < 4; ++i) t.truth(tab.level[i] == lv[i] / n, "level share " + tab.group);
            for (std::size_t i = 0; i < 6; ++i) t.truth(tab.channel[i] == ch[i] / n, "channel share " + tab.group);
            for (std::size_t i = 0; i < 4; ++i) t.truth(tab.margin[i] == mg[i] / n, "margin share " + tab.group);
            for (std::size_t i = 0; i < 2; ++i) t.truth(tab.ai_material[i] == ai[i] / n, "ai share " + tab.group);
        };
        std::vector<const TaskLabelRecord*> all;
        for (const auto& [k, r] : ds.records) all.push_back(&r);
        const auto whole = distribution_check(ds);
        t.truth(whole.size() == 1, "single table");
        compare(whole.at(0), all);
        for (const auto& tab : distribution_check(ds, Grouping::income_group, &reg)) compare(tab, groups.at(tab.group));
    }
    return t.outcome(0);
}

// 2: margin_all = (defined-margin share) x within on 50 fixtures, and the
// exposed_share form on fixtures without exposed-unclear records.
Outcome denominator_identities() {
    std::mt19937_64 rng(202);
    Tally t;
    for (int rep = 0; rep < 50; ++rep) {
        auto ds = gen::random_dataset(rng, 4, 150);
        for (const auto& s : all_country_summaries(ds)) {
            if (!s.margin_shares_within) continue;
            const double defined = static_cast<double>(s.n_margin_defined()) / static_cast<double>(s.n_tasks);
            for (std::size_t m = 0; m < 3; ++m)
                t.near(s.margin_shares_all[m], defined * (*s.margin_shares_within)[m], 1e-9, "general identity " + s.iso3);
        }
        for (auto& [k, r] : ds.records)
            if (is_exposed(r.exposure) && r.margin == Margin::unclear) {
                r.margin = r.margin_raw = Margin::both;
                r.substitution_path = r.augmentation_path = true;
            }
        for (const auto& s : all_country_summaries(ds)) {
            if (!s.margin_shares_within) continue;
            for (std::size_t m = 0; m < 3; ++m)
                t.near(s.margin_shares_all[m], s.exposed_share * (*s.margin_shares_within)[m], 1e-9,
                       "exposed_share identity " + s.iso3);
        }
    }
    return t.outcome(1e-9);
}

// 3: polarisation plus within-both equals one for every country.
Outcome polarisation_identity() {
    std::mt19937_64 rng(303);
    Tally t;
    for (int rep = 0; rep < 50; ++rep)
        for (const auto& s : all_country_summaries(gen::random_dataset(rng, 8, 40))) {
            if (!s.margin_shares_within) continue;
            t.near(polarisation(s).polarisation + (*s.margin_shares_within)[2], 1.0, 1e-12, s.iso3);
        }
    return t.outcome(1e-12);
}

// 4: self-agreement is perfect on every metric.
Outcome self_agreement() {
    std::mt19937_64 rng(404);
    Tally t;
    for (int rep = 0; rep < 20; ++rep) {
        const auto ds = gen::random_dataset(rng, 5, 60);
        const auto r = agreement_suite(ds, ds);
        t.truth(r.exact_level == 1.0, "exact");
        t.truth(r.within_one_level == 1.0, "within-one");
        t.truth(r.binary_exposed == 1.0, "binary");
        for (const auto& [f, v] : r.per_field) t.truth(!v || *v == 1.0, "field " + f);
        for (std::size_t i = 0; i < 4; ++i)
            for (std::size_t j = 0; j < 4; ++j)
                if (i != j) t.truth(r.confusion[i][j] == 0, "off-diagonal confusion");
    }
    return t.outcome(0);
}

// 5: identical paraphrase variants give a joint share of one.
Outcome paraphrase_identical() {
    std::mt19937_64 rng(505);
    Tally t;
    for (int rep = 0; rep < 20; ++rep) {
        const auto ds = gen::random_dataset(rng, 3, 50);
        const auto r = paraphrase_stability(ds, {ds, ds, ds});
        t.truth(r.joint_within_one == 1.0, "joint within-one");
        for (const auto& v : r.per_variant) t.truth(v.binary_exposed == 1.0 && v.exact_level == 1.0, "per-variant");
    }
    return t.outcome(0);
}

// 6: two-way FE with clustered SEs against explicit dummy-variable OLS.
Outcome fe_matches_dummy_ols() {
    std::mt19937_64 rng(606);
    std::bernoulli_distribution keep(0.75);
    Tally t;
    for (int rep = 0; rep < 100; ++rep) {
        const auto p = oracle::random_panel(rng, keep, 50);
        const auto fe = stats::fe_regression(p.y, p.x, p.row, p.col, p.row);
        const auto dv = oracle::dummy_ols(p.y, p.x, p.row, p.col, p.row);
        t.truth(fe.n_parameters == dv.n_params, "parameter count");
        for (Eigen::Index k = 0; k < p.x.cols(); ++k) {
            t.near(fe.beta[k], dv.beta[k], 1e-8, "beta");
            t.near(fe.se[k], dv.se[k], 1e-8, "clustered se");
        }
    }
    return t.outcome(1e-8);
}

// 7: forest TreeSHAP against subset enumeration, plus local accuracy.
Outcome tree_shap_exact() {
    const auto start = std::chrono::steady_clock::now();
    std::mt19937_64 rng(707);
    Tally t;
    for (int rep = 0; rep < 100; ++rep) {
        const int p = 1 + rep % 4, n = 50;
        MatrixXd X(n, p);
        VectorXd y(n);
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < p; ++j) X(i, j) = std::round(4 * normals(rng, 1)[0]) / 4;
            y[i] = X(i, 0) - (p > 2 ? X(i, 1) * X(i, 2) : 0.0) + 0.3 * normals(rng, 1)[0];
        }
        const stats::ForestParams params{8, static_cast<std::size_t>(std::max(1, (p + 1) / 2)), 1, 3};
        const auto f = stats::fit_forest(X, y, params, 5000 + static_cast<std::uint64_t>(rep));
        for (const auto& tree : f.trees) {
            // max_depth is honoured
            std::function<int(int)> depth = [&](int node) {
                const auto& nd = tree.nodes[static_cast<std::size_t>(node)];
                return nd.leaf() ? 0 : 1 + std::max(depth(nd.left), depth(nd.right));
            };
            t.truth(depth(0) <= 3, "tree depth");
        }
        for (int i = 0; i < n; ++i) {
            const VectorXd x = X.row(i).transpose();
            const auto a = stats::tree_shap(f, x);
            const auto o = oracle::forest_shapley(f, x);
            double sum = a.base_value;
            for (int j = 0; j < p; ++j) {
                t.near(a.values[static_cast<std::size_t>(j)], o[static_cast<std::size_t>(j)], 1e-9, "shapley value");
                sum += a.values[static_cast<std::size_t>(j)];
            }
            t.near(sum, f.predict(x), 1e-9, "local accuracy");
        }
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    t.truth(secs < 60.0, "runtime over one minute");
    auto o = t.outcome(1e-9);
    std::ostringstream s;
    s.precision(3);
    s << o.detail << ", " << secs << " s";
    o.detail = s.str();
    return o;
}

// 8: Shapley R² efficiency, ordering oracle for p <= 4, duplicated predictors.
Outcome shapley_r2_dominance() {
    std::mt19937_64 rng(808);
    Tally t;
    for (int rep = 0; rep < 60; ++rep) {
        const int p = 1 + rep % 4, n = 30;
        MatrixXd X(n, p);
        VectorXd y(n);
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < p; ++j) X(i, j) = normals(rng, 1)[0] + (j > 0 ? 0.6 * X(i, j - 1) : 0.0);
            y[i] = X.row(i).sum() + normals(rng, 1)[0];
        }
        const auto s = stats::shapley_r2(X, y);
        const auto o = oracle::shapley_orderings(X, y);
        double sum = 0;
        for (int j = 0; j < p; ++j) {
            t.near(s.contributions[static_cast<std::size_t>(j)], o[static_cast<std::size_t>(j)], 1e-9, "ordering oracle");
            sum += s.contributions[static_cast<std::size_t>(j)];
        }
        t.near(sum, oracle::r2(X, y, oracle::all_columns(p)), 1e-9, "efficiency");
    }
    for (int rep = 0; rep < 20; ++rep) {
        const int n = 30;
        MatrixXd X(n, 3);
        VectorXd y(n);
        for (int i = 0; i < n; ++i) {
            X(i, 0) = normals(rng, 1)[0];
            X(i, 1) = normals(rng, 1)[0];
            X(i, 2) = X(i, 0);
            y[i] = 1.5 * X(i, 0) - X(i, 1) + normals(rng, 1)[0];
        }
        const auto s = stats::shapley_r2(X, y);
        t.near(s.contributions[0], s.contributions[2], 1e-9, "duplicated predictors");
        t.near(s.contributions[0] + s.contributions[1] + s.contributions[2], s.full_r2, 1e-9, "efficiency with duplicate");
    }
    return t.outcome(1e-9);
}

// 9: variance shares sum to one, balanced and with missing cells.
Outcome variance_shares_sum() {
    std::mt19937_64 rng(909);
    std::bernoulli_distribution miss(0.25);
    Tally t;
    for (int rep = 0; rep < 100; ++rep) {
        const std::size_t R = 3 + static_cast<std::size_t>(rep) % 7, C = 3 + static_cast<std::size_t>(rep) % 5;
        const bool holes = rep % 2 == 1;
        std::vector<std::vector<std::optional<double>>> m(R, std::vector<std::optional<double>>(C));
        for (std::size_t i = 0; i < R; ++i)
            for (std::size_t j = 0; j < C; ++j)
                if (!holes || i == j % R || !miss(rng)) m[i][j] = normals(rng, 1)[0] + 0.4 * static_cast<double>(i);
        const auto s = stats::variance_decomposition(m);
        if (!s.rows) {
            t.truth(false, "shares undefined on a non-constant matrix");
            continue;
        }
        t.near(*s.rows + *s.cols + *s.interaction, 1.0, 1e-9, holes ? "unbalanced" : "balanced");
    }
    return t.outcome(1e-9);
}

// 10: majority retention and agreement against enumeration of all vote patterns.
class TableVoter final : public EdgeVoter {
public:
    explicit TableVoter(std::map<std::string, std::array<bool, 3>> t) : table_(std::move(t)) {}
    bool vote(const std::string& task, const std::string&, std::size_t r) const override { return table_.at(task).at(r); }

private:
    std::map<std::string, std::array<bool, 3>> table_;
};

Outcome majority_retention() {
    // Enumerate the eight patterns once: retained iff at least two valid votes.
    std::array<bool, 8> keep{};
    std::array<double, 8> agree{};
    for (unsigned pat = 0; pat < 8; ++pat) {
        const int yes = __builtin_popcount(pat);
        keep[pat] = yes >= 2;
        agree[pat] = std::max(yes, 3 - yes) / 3.0;
    }
    std::mt19937_64 rng(1010);
    std::bernoulli_distribution coin(0.6);
    std::map<std::string, std::array<bool, 3>> table;
    std::vector<CandidateEdge> cands;
    TextMap tasks, acts{{"0111", "growing of cereals"}};
    std::map<std::string, unsigned> pattern;
    for (std::size_t i = 0; i < 1000; ++i) {
        const auto id = gen::task_name(i);
        std::array<bool, 3> v{coin(rng), coin(rng), coin(rng)};
        table[id] = v;
        tasks[id] = id;
        pattern[id] = (v[0] ? 1u : 0u) | (v[1] ? 2u : 0u) | (v[2] ? 4u : 0u);
        cands.push_back({id, "0111", 0.5});
    }
    const auto g = prune_edges(cands, tasks, acts, TableVoter(table));
    Tally t;
    t.truth(g.edges.size() == 1000, "edge count");
    std::size_t kept = 0;
    double agreement = 0;
    for (const auto& e : g.edges) {
        const unsigned pat = pattern.at(e.task_id);
        t.truth(e.retained() == keep[pat], "retention of " + e.task_id);
        t.near(e.agreement(), agree[pat], 1e-15, "agreement of " + e.task_id);
        kept += keep[pat];
        agreement += agree[pat];
    }
    t.truth(g.retained().size() == kept, "retained count");
    t.near(*g.mean_agreement(), agreement / 1000.0, 1e-12, "mean agreement");
    return t.outcome(1e-12);
}

// 11: a control that explains y fully absorbs the partial correlation; a
// control orthogonal to x and y leaves the Pearson correlation unchanged.
Outcome partial_correlation_properties() {
    std::mt19937_64 rng(1111);
    Tally t;
    for (int rep = 0; rep < 50; ++rep) {
        const std::size_t n = 20 + static_cast<std::size_t>(rep);
        const auto xv = normals(rng, n), yv = normals(rng, n), zv = normals(rng, n);
        const auto c = oracle::orthogonal_to(zv, {xv, yv});
        const auto irrelevant = stats::partial_correlation(series(xv), series(yv), {series(c)});
        t.truth(!irrelevant.absorbed, "irrelevant control flagged as absorbing");
        t.near(irrelevant.r, stats::pearson(series(xv), series(yv)).r, 1e-9, "irrelevant control");

        std::vector<double> absorbed_y;
        for (double v : zv) absorbed_y.push_back(2.5 * v - 0.75);
        const auto full = stats::partial_correlation(series(xv), series(absorbed_y), {series(zv)});
        t.truth(full.absorbed, "absorption not detected");
        t.near(full.r, 0.0, 1e-9, "absorbed partial r");
    }
    return t.outcome(1e-9);
}

// 12: full report byte-identical across two runs and across 1 vs 8 workers.
std::map<std::string, std::string> tree_digest(const fs::path& root) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(root))
        if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = file_digest(e.path().string());
    return out;
}

Outcome pipeline_determinism() {
    const fs::path base = fs::temp_directory_path() / "atlas_acceptance";
    fs::remove_all(base);
    const std::string config = std::string(ATLAS_FIXTURE_DIR) + "/report.json";
    std::vector<std::map<std::string, std::string>> trees;
    for (const auto& [name, jobs] : std::vector<std::pair<std::string, std::string>>{{"a", "1"}, {"b", "1"}, {"c", "8"}}) {
        std::ostringstream out, err;
        const int rc = cli::run({"report", "--config", config, "--out", (base / name).string(), "--jobs", jobs}, out, err);
        if (rc != 0) return {false, "report run " + name + " exited " + std::to_string(rc) + ": " + err.str()};
        trees.push_back(tree_digest(base / name));
    }
    Tally t;
    t.truth(!trees[0].empty(), "no output files");
    t.truth(trees[0] == trees[1], "two single-worker runs differ");
    t.truth(trees[0] == trees[2], "1 vs 8 workers differ");
    auto o = t.outcome(0);
    o.detail = std::to_string(trees[0].size()) + " files compared; " + o.detail;
    fs::remove_all(base);
    return o;
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"01 distribution_check equals counting oracle", distribution_matches_counting},
        {"02 denominator identities", denominator_identities},
        {"03 polarisation identity", polarisation_identity},
        {"04 self-agreement", self_agreement},
        {"05 paraphrase identical variants", paraphrase_identical},
        {"06 fe_regression vs dummy OLS", fe_matches_dummy_ols},
        {"07 tree_shap exactness", tree_shap_exact},
        {"08 shapley_r2 dominance", shapley_r2_dominance},
        {"09 variance decomposition shares", variance_shares_sum},
        {"10 majority retention", majority_retention},
        {"11 partial correlation properties", partial_correlation_properties},
        {"12 pipeline determinism", pipeline_determinism},
    };
    if (std::getenv("ATLAS_REPLICATION_DIR"))
        std::cout << "note: ATLAS_REPLICATION_DIR is set but reference-data checks are not implemented; "
                     "running synthetic checks only\n";
    int failures = 0;
    for (const auto& [name, fn] : criteria) {
        Outcome o;
        try {
            o = fn();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failures += !o.ok;
        std::cout << (o.ok ? "PASS" : "FAIL") << " [fallback] " << name << ": " << o.detail << std::endl;
    }
    return failures == 0 ? 0 : 1;
}
