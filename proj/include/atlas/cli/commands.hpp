#pragma once

// Subcommand implementations. Each command declares its options, then reads
// inputs, calls the library, and writes provenance-stamped tables.

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <set>

#include "atlas/aggregate.hpp"
#include "atlas/cli/session.hpp"
#include "atlas/ingest.hpp"
#include "atlas/linkage.hpp"
#include "atlas/reweight.hpp"
#include "atlas/stats.hpp"
#include "atlas/validate.hpp"

namespace atlas::cli {

struct Env {
    std::uint64_t seed = 0;
    OutputDir& out;
    std::ostream& log;
    std::string config_path;
    std::function<int(const std::vector<std::string>&)> rerun;
};

class Command {
public:
    virtual ~Command() = default;
    virtual void define(Options& o) = 0;
    virtual void execute(Env& env) = 0;
};

// ---------------------------------------------------------------------------
// Shared loaders
// ---------------------------------------------------------------------------

inline Format label_format(const std::string& path, const std::string& format) {
    if (!format.empty()) return parse_format(format);
    return fs::path(path).extension() == ".csv" ? Format::csv : Format::jsonl;
}

inline LabelDataset load_dataset(const std::string& path, std::ostream& log, const std::string& format = {}) {
    auto in = open_input(path);
    auto loaded = load_labels(in, label_format(path, format));
    if (loaded.report.rows_rejected > 0)
        log << "warning: " << fs::path(path).filename().string() << ": " << loaded.report.rows_rejected
            << " rows rejected\n";
    return deduplicate(loaded.records);
}

inline CountryRegistry load_registry(const std::string& path) {
    auto in = open_input(path);
    return load_country_registry(in);
}

inline TextMap read_text_map(const std::string& path, std::string_view id_column) {
    auto in = open_input(path);
    const auto t = csv::read_table(in);
    const auto c_id = t.require_column(id_column), c_text = t.require_column("text");
    TextMap out;
    for (const auto& r : t.rows)
        if (!out.emplace(r.cells[c_id], r.cells[c_text]).second)
            throw InputError(path + " line " + std::to_string(r.line) + ": duplicate id '" + r.cells[c_id] + "'");
    return out;
}

using MetricList = std::vector<std::pair<std::string, std::optional<double>>>;

inline void append_names(std::vector<std::string>& cols, const MetricList& m) {
    for (const auto& [k, _] : m) cols.push_back(k);
}

inline void append_values(std::vector<std::string>& cells, const MetricList& m) {
    for (const auto& [_, v] : m) cells.push_back(fmt(v));
}

inline std::string join(const std::vector<std::string>& v, std::string_view sep = ";") {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? std::string(sep) : std::string()) + v[i];
    return out;
}

// ---------------------------------------------------------------------------
// ingest
// ---------------------------------------------------------------------------

class IngestCommand final : public Command {
public:
    void define(Options& o) override {
        o.add("labels", labels_, "Label files (JSONL or CSV)", true, PathKind::input);
        o.add("format", format_, "Force input format: jsonl or csv");
        o.flag("strict", strict_, "Exit with an input error when any row is rejected");
    }

    void execute(Env& env) override {
        std::vector<TaskLabelRecord> all;
        ordered_json files = ordered_json::array();
        std::size_t read = 0, accepted = 0, rejected = 0, normalized = 0;
        for (const auto& path : labels_) {
            auto in = open_input(path);
            auto loaded = load_labels(in, label_format(path, format_));
            const auto& rep = loaded.report;
            ordered_json violations = ordered_json::array();
            for (const auto& v : rep.violations)
                violations.push_back({{"line", v.line}, {"code", v.code}, {"message", v.message}});
            files.push_back({{"name", fs::path(path).filename().string()},
                             {"sha256", file_digest(path)},
                             {"rows_read", rep.rows_read},
                             {"rows_accepted", rep.rows_accepted},
                             {"rows_rejected", rep.rows_rejected},
                             {"normalized", loaded.normalized},
                             {"violations", violations}});
            read += rep.rows_read;
            accepted += rep.rows_accepted;
            rejected += rep.rows_rejected;
            normalized += loaded.normalized;
            all.insert(all.end(), loaded.records.begin(), loaded.records.end());
        }
        const auto ds = deduplicate(all);
        std::ostringstream body;
        write_jsonl(body, ds.values());
        env.out.lines("labels.jsonl", body.str());
        env.out.json_doc("ingest_report.json", {{"files", files},
                                                {"rows_read", read},
                                                {"rows_accepted", accepted},
                                                {"rows_rejected", rejected},
                                                {"normalized", normalized},
                                                {"records", ds.records.size()},
                                                {"duplicates_collapsed", all.size() - ds.records.size()}});
        env.log << "ingest: " << accepted << " accepted, " << rejected << " rejected, " << ds.records.size()
                << " records\n";
        if (strict_ && rejected > 0) throw InputError("strict mode: " + std::to_string(rejected) + " rows rejected");
    }

private:
    std::vector<std::string> labels_;
    std::string format_;
    bool strict_ = false;
};

// ---------------------------------------------------------------------------
// summarize
// ---------------------------------------------------------------------------

class SummarizeCommand final : public Command {
public:
    void define(Options& o) override {
        o.add("labels", labels_, "Deduplicated labels", true, PathKind::input);
        o.add("registry", registry_, "Country registry CSV", true, PathKind::input);
        o.add("grouping", grouping_, "income_group or region");
        o.add("benchmark", benchmark_, "Benchmark-ladder labels", false, PathKind::input);
        o.add("covariates", covariates_, "Long-format covariates CSV", false, PathKind::input);
    }

    void execute(Env& env) override {
        const auto ds = load_dataset(labels_, env.log);
        const auto reg = load_registry(registry_);
        const auto grouping = parse_grouping(grouping_);
        const auto sums = all_country_summaries(ds);

        std::vector<std::pair<std::string, MetricList>> metric_rows;
        std::vector<std::vector<std::string>> rows;
        std::vector<std::string> cols{"iso3", "income_group", "region", "n_tasks", "n_exposed", "n_high", "n_exposed_unclear"};
        for (const auto& s : sums) {
            auto m = extended_metrics(s);
            if (rows.empty()) append_names(cols, m);
            const auto* ctx = reg.find(s.iso3);
            std::vector<std::string> r{s.iso3, ctx ? std::string(to_string(ctx->income_group)) : "",
                                       ctx ? std::string(to_string(ctx->region)) : "", std::to_string(s.n_tasks),
                                       std::to_string(s.n_exposed), std::to_string(s.n_high),
                                       std::to_string(s.n_exposed_unclear)};
            append_values(r, m);
            rows.push_back(std::move(r));
            metric_rows.emplace_back(s.iso3, std::move(m));
        }
        env.out.csv("country_summary.csv", cols, rows);

        const auto groups = group_means(metric_rows, reg, grouping);
        std::vector<std::string> gcols{"group", "n_countries"};
        std::vector<std::vector<std::string>> grows;
        for (const auto& g : groups) {
            if (grows.empty()) gcols.insert(gcols.end(), g.metric_names.begin(), g.metric_names.end());
            std::vector<std::string> r{g.group, std::to_string(g.n_countries)};
            for (const auto& v : g.means) r.push_back(fmt(v));
            grows.push_back(std::move(r));
        }
        env.out.csv("group_summary.csv", gcols, grows);

        write_transitions(env, ds, reg);

        if (!benchmark_.empty()) {
            const auto bench = load_dataset(benchmark_, env.log);
            std::vector<std::vector<std::string>> brows;
            for (const auto& d : benchmark_deviation(ds, bench, reg))
                brows.push_back({d.iso3, std::string(to_string(d.income_group)), fmt(d.mean_deviation),
                                 std::to_string(d.n_tasks)});
            env.out.csv("benchmark_deviation.csv", {"iso3", "income_group", "mean_deviation", "n_tasks"}, brows);
        }

        if (!covariates_.empty()) write_covariate_table(env, sums, reg);
    }

private:
    static MetricList extended_metrics(const CountrySummary& s) {
        auto m = s.metrics();
        std::optional<double> pol, tilt;
        if (s.margin_shares_within) {
            const auto p = polarisation(s);
            pol = p.polarisation;
            tilt = p.tilt;
        }
        m.emplace_back("polarisation", pol);
        m.emplace_back("tilt", tilt);
        return m;
    }

    /// Modal-pathway transitions between adjacent income groups, plus low to high.
    static void write_transitions(Env& env, const LabelDataset& ds, const CountryRegistry& reg) {
        std::map<IncomeGroup, std::vector<std::string>> members;
        for (const auto& iso : ds.countries())
            if (const auto* c = reg.find(iso); c && c->income_group != IncomeGroup::unclassified)
                members[c->income_group].push_back(iso);
        std::vector<IncomeGroup> present;
        for (auto g : all_values<IncomeGroup>())
            if (members.count(g)) present.push_back(g);
        std::vector<std::pair<IncomeGroup, IncomeGroup>> pairs;
        for (std::size_t i = 0; i + 1 < present.size(); ++i) pairs.emplace_back(present[i], present[i + 1]);
        if (present.size() > 2) pairs.emplace_back(present.front(), present.back());

        std::vector<std::vector<std::string>> rows;
        for (const auto& [ga, gb] : pairs) {
            auto a = modal_pathways(ds, members[ga]);
            auto b = modal_pathways(ds, members[gb]);
            std::erase_if(a, [&](const auto& kv) { return !b.count(kv.first); });
            std::erase_if(b, [&](const auto& kv) { return !a.count(kv.first); });
            const auto t = transition_matrix(a, b);
            for (auto from : all_values<PathwayState>())
                for (auto to : all_values<PathwayState>()) {
                    const auto i = index_of(from), j = index_of(to);
                    rows.push_back({std::string(to_string(ga)), std::string(to_string(gb)), std::string(to_string(from)),
                                    std::string(to_string(to)), std::to_string(t.counts[i][j]),
                                    t.shares[i] ? fmt((*t.shares[i])[j]) : std::string(), std::to_string(t.n_tasks),
                                    std::to_string(t.n_excluded_anomalies)});
                }
        }
        env.out.csv("pathway_transitions.csv",
                    {"from_group", "to_group", "from_state", "to_state", "count", "share", "n_tasks", "n_excluded"}, rows);
    }

    /// Wide country table of outcome metrics and complete-case covariates.
    void write_covariate_table(Env& env, const std::vector<CountrySummary>& sums, const CountryRegistry& reg) const {
        auto in = open_input(covariates_);
        const auto cov = load_covariates(in);
        std::vector<std::string> cols{"iso3", "income_group"};
        std::vector<std::vector<std::string>> rows;
        std::vector<std::string> excluded;
        for (const auto& s : sums) {
            auto it = cov.find(s.iso3);
            if (it == cov.end() || !complete_case(it->second)) {
                excluded.push_back(s.iso3);
                continue;
            }
            const auto m = extended_metrics(s);
            if (rows.empty()) {
                append_names(cols, m);
                for (const auto& rule : covariate_rules()) cols.emplace_back(rule.name);
            }
            const auto* ctx = reg.find(s.iso3);
            std::vector<std::string> r{s.iso3, ctx ? std::string(to_string(ctx->income_group)) : ""};
            append_values(r, m);
            for (const auto& rule : covariate_rules()) r.push_back(fmt(it->second.*(rule.member)));
            rows.push_back(std::move(r));
        }
        env.out.csv("country_covariates.csv", cols, rows);
        if (!excluded.empty()) env.log << "summarize: no complete covariates for " << join(excluded, ", ") << "\n";
    }

    std::string labels_, registry_, grouping_ = "income_group", benchmark_, covariates_;
};

// ---------------------------------------------------------------------------
// link
// ---------------------------------------------------------------------------

inline ReplayMode parse_replay_mode(const std::string& s) {
    if (s == "replay") return ReplayMode::replay;
    if (s == "record") return ReplayMode::record;
    throw InputError("unknown replay mode '" + s + "'");
}

class LinkCandidatesCommand final : public Command {
public:
    void define(Options& o) override {
        o.add("tasks", tasks_, "Task statements CSV (task_id,text)", true, PathKind::input);
        o.add("activities", activities_, "Activity descriptions CSV (isic4,text)", true, PathKind::input);
        o.add("top-k", cfg_.top_k, "Candidates kept per activity");
        o.add("floor", cfg_.floor, "Minimum cosine similarity");
        o.add("retries", cfg_.retries, "Provider retries per call");
        o.add("embeddings", embeddings_, "Replay fixture directory", false, PathKind::store_dir);
        o.add("embed-mode", mode_, "replay or record");
        o.add("dim", dim_, "Hash embedding dimension");
    }

    void execute(Env& env) override {
        const auto tasks = read_text_map(tasks_, "task_id");
        const auto acts = read_text_map(activities_, "isic4");
        if (dim_ == 0) throw InputError("--dim must be positive");
        const HashEmbedding hash(dim_);
        std::unique_ptr<EmbeddingProvider> replay;
        if (!embeddings_.empty()) {
            const auto mode = parse_replay_mode(mode_);
            replay = std::make_unique<ReplayEmbedding>(embeddings_, mode, mode == ReplayMode::record ? &hash : nullptr);
        }
        const auto cands = build_candidates(tasks, acts, replay ? *replay : static_cast<const EmbeddingProvider&>(hash), cfg_);
        std::vector<std::vector<std::string>> rows;
        for (const auto& c : cands) rows.push_back({c.isic4, c.task_id, fmt(c.similarity)});
        env.out.csv("candidates.csv", {"isic4", "task_id", "similarity"}, rows);
        env.log << "link candidates: " << cands.size() << " edges\n";
    }

private:
    std::string tasks_, activities_, embeddings_, mode_ = "replay";
    std::size_t dim_ = 64;
    CandidateConfig cfg_;
};

class LinkPruneCommand final : public Command {
public:
    void define(Options& o) override {
        o.add("candidates", candidates_, "candidates.csv from link candidates", true, PathKind::input);
        o.add("tasks", tasks_, "Task statements CSV", true, PathKind::input);
        o.add("activities", activities_, "Activity descriptions CSV", true, PathKind::input);
        o.add("votes-per-edge", cfg_.votes_per_edge, "Odd number of votes per edge");
        o.add("retries", cfg_.retries, "Provider retries per call");
        o.add("votes", votes_, "Replay fixture directory", false, PathKind::store_dir);
        o.add("vote-mode", mode_, "replay or record");
        o.add("p-valid", p_valid_, "Hash voter validity probability");
    }

    void execute(Env& env) override {
        const auto tasks = read_text_map(tasks_, "task_id");
        const auto acts = read_text_map(activities_, "isic4");
        auto in = open_input(candidates_);
        const auto t = csv::read_table(in);
        const auto c_act = t.require_column("isic4"), c_task = t.require_column("task_id"),
                   c_sim = t.require_column("similarity");
        std::vector<CandidateEdge> cands;
        for (const auto& r : t.rows)
            cands.push_back({r.cells[c_task], r.cells[c_act], csv::parse_double(r.cells[c_sim], r.line, "similarity")});

        const HashVoter hash(p_valid_);
        std::unique_ptr<EdgeVoter> replay;
        if (!votes_.empty()) {
            const auto mode = parse_replay_mode(mode_);
            replay = std::make_unique<ReplayVoter>(votes_, mode, mode == ReplayMode::record ? &hash : nullptr);
        }
        const auto g = prune_edges(cands, tasks, acts, replay ? *replay : static_cast<const EdgeVoter&>(hash), cfg_);
        std::ostringstream body;
        save_graph(body, g);
        env.out.lines("graph.jsonl", body.str());

        const auto kept = g.retained();
        std::map<std::string, std::size_t> by_division;
        std::set<std::string> classes;
        for (const auto* e : kept) {
            ++by_division[isic_division(e->isic4)];
            classes.insert(e->isic4);
        }
        env.out.json_doc("graph_summary.json", {{"n_candidates", g.edges.size()},
                                                {"n_retained", kept.size()},
                                                {"n_classes_retained", classes.size()},
                                                {"votes_cast", g.votes_cast()},
                                                {"mean_agreement", opt_json(g.mean_agreement())},
                                                {"retained_by_division", by_division}});
        env.log << "link prune: " << kept.size() << " of " << g.edges.size() << " edges retained\n";
    }

private:
    std::string candidates_, tasks_, activities_, votes_, mode_ = "replay";
    double p_valid_ = 0.65;
    PruneConfig cfg_;
};

inline BridgeShares read_bridge(const std::string& path, const std::string& variant) {
    auto v = parse_enum<BridgeVariant>(variant);
    if (!v) throw InputError("unknown bridge variant '" + variant + "'");
    auto in = open_input(path);
    return load_bridge(in, *v);
}

inline TaskWeightMap read_task_weights(const std::string& path) {
    auto in = open_input(path);
    return load_task_weights(in);
}

class LinkApplyCommand final : public Command {
public:
    void define(Options& o) override {
        o.add("labels", labels_, "Deduplicated labels", true, PathKind::input);
        o.add("task-weights", weights_, "Task weights CSV (soc,task_id,weight)", true, PathKind::input);
        o.add("bridge", bridge_, "SOC to ISCO bridge CSV", true, PathKind::input);
        o.add("variant", variant_, "Bridge variant: weighted or modal");
        o.add("graph", graph_, "graph.jsonl from link prune", false, PathKind::input);
        o.add("registry", registry_, "Country registry CSV", true, PathKind::input);
        o.add("pockets", pockets_, "Units listed per margin pocket table");
    }

    void execute(Env& env) override {
        const auto ds = load_dataset(labels_, env.log);
        const auto tw = read_task_weights(weights_);
        const auto bridge = read_bridge(bridge_, variant_);
        const auto reg = load_registry(registry_);
        std::optional<IndustryGraph> graph;
        if (!graph_.empty()) {
            auto in = open_input(graph_);
            graph = load_graph(in);
        }

        std::map<std::string, ProfileMap> soc, isco, industry;
        ordered_json dropped = ordered_json::object();
        for (const auto& iso : ds.countries()) {
            auto s = soc_summary(ds, iso, tw);
            isco[iso] = isco_summary(s.values, bridge);
            if (!s.report.dropped_mass.empty() || !s.report.missing_tasks.empty())
                dropped[iso] = {{"dropped_mass", s.report.dropped_mass}, {"missing_tasks", s.report.missing_tasks}};
            soc[iso] = std::move(s.values);
            if (graph) industry[iso] = industry_summary(ds, iso, *graph);
        }

        write_profiles(env, "soc_profiles.csv", "soc", soc);
        write_profiles(env, "isco_profiles.csv", "isco", isco);
        if (graph) write_profiles(env, "industry_profiles.csv", "division", industry);

        std::vector<std::string> cols{"level", "income_group", "unit"};
        append_names(cols, ExposureProfile{}.metrics());
        std::vector<std::vector<std::string>> rows, pocket_rows;
        std::vector<std::pair<std::string, const std::map<std::string, ProfileMap>*>> levels{{"isco", &isco}};
        if (graph) levels.emplace_back("industry", &industry);
        for (const auto& [level, per_country] : levels) {
            for (const auto& [group, units] : income_rollup(*per_country, reg)) {
                for (const auto& [unit, p] : units) {
                    std::vector<std::string> r{level, group, unit};
                    append_values(r, p.metrics());
                    rows.push_back(std::move(r));
                }
                for (auto m : kDefinedMargins) {
                    const auto top = margin_pockets(pocket_units(units, m), pockets_);
                    for (std::size_t k = 0; k < top.size(); ++k)
                        pocket_rows.push_back({level, group, std::string(to_string(m)), std::to_string(k + 1), top[k].id,
                                               fmt(top[k].exposed_share), fmt(top[k].margin_share), fmt(top[k].score())});
                }
            }
        }
        env.out.csv("income_rollup.csv", cols, rows);
        env.out.csv("margin_pockets.csv",
                    {"level", "income_group", "margin", "rank", "unit", "exposed_share", "margin_share", "score"},
                    pocket_rows);
        env.out.json_doc("linkage_report.json", {{"bridge_variant", variant_},
                                                 {"countries", ds.countries()},
                                                 {"dropped_task_weight", dropped}});
    }

private:
    static void write_profiles(Env& env, const std::string& name, const std::string& unit,
                               const std::map<std::string, ProfileMap>& per_country) {
        std::vector<std::string> cols{"iso3", unit};
        append_names(cols, ExposureProfile{}.metrics());
        std::vector<std::vector<std::string>> rows;
        for (const auto& [iso, units] : per_country)
            for (const auto& [id, p] : units) {
                std::vector<std::string> r{iso, id};
                append_values(r, p.metrics());
                rows.push_back(std::move(r));
            }
        env.out.csv(name, cols, rows);
    }

    std::string labels_, weights_, bridge_, variant_ = "weighted", graph_, registry_;
    std::size_t pockets_ = 5;
};

// ---------------------------------------------------------------------------
// reweight
// ---------------------------------------------------------------------------

class ReweightCommand final : public Command {
public:
    void define(Options& o) override {
        o.add("labels", labels_, "Deduplicated labels", true, PathKind::input);
        o.add("task-weights", weights_, "Task weights CSV", true, PathKind::input);
        o.add("bridge", bridge_, "SOC to ISCO bridge CSV", true, PathKind::input);
        o.add("variant", variant_, "Bridge variant: weighted or modal");
        o.add("employment", employment_, "Employment counts CSV", true, PathKind::input);
        o.add("first-year", rule_.first_year, "First year of the coverage window");
        o.add("last-year", rule_.last_year, "Last year of the coverage window");
        o.add("min-groups", rule_.min_groups, "Minimum positive cells in a qualifying year");
    }

    void execute(Env& env) override {
        const auto ds = load_dataset(labels_, env.log);
        const auto tw = read_task_weights(weights_);
        const auto bridge = read_bridge(bridge_, variant_);
        auto ein = open_input(employment_);
        const auto cov = coverage_filter(load_employment(ein), rule_);

        std::vector<std::vector<std::string>> wrows;
        ordered_json kept = ordered_json::array(), excluded = ordered_json::array();
        for (const auto& [key, w] : cov.weights) {
            for (const auto& [cell, share] : w.cells)
                wrows.push_back({w.iso3, std::string(to_string(w.sex)), std::to_string(w.year), cell, fmt(share)});
            kept.push_back({{"iso3", w.iso3}, {"sex", to_string(w.sex)}, {"year", w.year}, {"n_cells", w.cells.size()}});
        }
        for (const auto& [iso, sex] : cov.excluded) excluded.push_back({{"iso3", iso}, {"sex", to_string(sex)}});
        env.out.csv("weights.csv", {"iso3", "sex", "year", "cell_id", "share"}, wrows);
        env.out.json_doc("coverage.json", {{"rule",
                                            {{"first_year", rule_.first_year},
                                             {"last_year", rule_.last_year},
                                             {"min_groups", rule_.min_groups}}},
                                           {"kept", kept},
                                           {"excluded", excluded}});

        std::map<std::string, ProfileMap> cells;
        std::map<std::string, std::map<std::string, MarginShares>> margins;
        for (const auto& iso : ds.countries()) {
            cells[iso] = isco_summary(soc_summary(ds, iso, tw).values, bridge);
            margins[iso] = cell_margin_values(cells[iso]);
        }

        std::vector<std::vector<std::string>> xrows;
        for (const auto& [key, w] : cov.weights) {
            auto it = cells.find(w.iso3);
            if (it == cells.end()) continue;
            std::map<std::string, double> values;
            for (const auto& [cell, p] : it->second) values[cell] = p.exposed;
            CompensatedSum base;
            std::size_t n_base = 0;
            for (const auto& [cell, _] : w.cells)
                if (auto v = values.find(cell); v != values.end()) {
                    base.add(v->second);
                    ++n_base;
                }
            if (n_base == 0) {
                env.log << "reweight: no exposure values for " << w.iso3 << "/" << to_string(w.sex) << "\n";
                continue;
            }
            const double baseline = base.value() / static_cast<double>(n_base);
            const auto e = employment_weighted_exposure(values, w, baseline);
            xrows.push_back({w.iso3, std::string(to_string(w.sex)), std::to_string(w.year), fmt(e.value), fmt(baseline),
                             fmt(e.adjustment), fmt(e.dropped_mass), join(e.dropped_cells)});
        }
        env.out.csv("weighted_exposure.csv",
                    {"iso3", "sex", "year", "exposed_share", "baseline", "adjustment", "dropped_mass", "dropped_cells"},
                    xrows);

        std::vector<std::vector<std::string>> grows;
        for (const auto& [iso, m] : margins) {
            auto f = cov.weights.find({iso, Sex::female});
            auto mm = cov.weights.find({iso, Sex::male});
            if (f == cov.weights.end() || mm == cov.weights.end()) continue;
            const auto gap = gender_gap(m, f->second, mm->second);
            grows.push_back({iso, std::to_string(f->second.year), fmt(gap[0]), fmt(gap[1]), fmt(gap[2])});
        }
        env.out.csv("gender_gaps.csv", {"iso3", "year", "gap_substitute", "gap_augment", "gap_both"}, grows);

        std::vector<std::vector<std::string>> prows;
        for (const auto& r : gender_fe_panel(margins, cov.weights))
            prows.push_back({r.iso3, r.cell_id, fmt(r.y), fmt(r.x[0]), fmt(r.x[1]), fmt(r.x[2])});
        env.out.csv("gender_panel.csv", {"iso3", "cell_id", "y", "x_substitute", "x_augment", "x_both"}, prows);
    }

private:
    std::string labels_, weights_, bridge_, variant_ = "weighted", employment_;
    CoverageRule rule_;
};

// ---------------------------------------------------------------------------
// validate
// ---------------------------------------------------------------------------

inline ordered_json agreement_json(const AgreementReport& r) {
    ordered_json per_field = ordered_json::object(), baselines = ordered_json::object();
    for (const auto& [k, v] : r.per_field) per_field[k] = opt_json(v);
    for (const auto& [k, v] : r.baselines) baselines[k] = opt_json(v);
    return {{"n", r.n},
            {"exact_level", r.exact_level},
            {"within_one_level", r.within_one_level},
            {"binary_exposed", r.binary_exposed},
            {"per_field", per_field},
            {"baselines", baselines},
            {"n_margin_pairs", r.n_margin_pairs},
            {"confusion", r.confusion}};
}

class ValidateAgreementCommand final : public Command {
public:
    void define(Options& o) override {
        o.add("a", a_, "First labelling run", true, PathKind::input);
        o.add("b", b_, "Second labelling run", true, PathKind::input);
    }
    void execute(Env& env) override {
        const auto r = agreement_suite(load_dataset(a_, env.log), load_dataset(b_, env.log));
        env.out.json_doc("agreement.json", agreement_json(r));
    }

private:
    std::string a_, b_;
};

class ValidateParaphraseCommand final : public Command {
public:
    void define(Options& o) override {
        o.add("original", original_, "Labels for the original task wording", true, PathKind::input);
        o.add("variants", variants_, "Labels for two or more paraphrased wordings", true, PathKind::input);
    }
    void execute(Env& env) override {
        std::vector<LabelDataset> vs;
        for (const auto& v : variants_) vs.push_back(load_dataset(v, env.log));
        const auto r = paraphrase_stability(load_dataset(original_, env.log), vs);
        ordered_json per = ordered_json::array();
        for (const auto& a : r.per_variant) per.push_back(agreement_json(a));
        env.out.json_doc("paraphrase.json", {{"n_common", r.n_common},
                                             {"joint_within_one", r.joint_within_one},
                                             {"pairwise_within_one", r.pairwise_within_one},
                                             {"per_variant", per}});
    }

private:
    std::string original_;
    std::vector<std::string> variants_;
};

class ValidateScreenCommand final : public Command {
public:
    void define(Options& o) override {
        o.add("labels", labels_, "Labels to screen", true, PathKind::input);
        o.add("lexicon", lexicon_, "Consistency lexicon JSON", true, PathKind::input);
    }
    void execute(Env& env) override {
        const auto ds = load_dataset(labels_, env.log);
        json lj;
        try {
            lj = json::parse(read_file(lexicon_));
        } catch (const json::exception& e) {
            throw InputError("lexicon: " + std::string(e.what()));
        }
        const auto lex = Lexicon::from_json(lj);
        const auto rep = consistency_screen(ds, lex);
        ordered_json rules = ordered_json::object();
        for (const auto& [rule, st] : rep.per_rule)
            rules[std::string(to_string(rule))] = {{"eligible", st.eligible}, {"flagged", st.flagged}, {"share", opt_json(st.share)}};
        env.out.json_doc("screen.json", {{"lexicon_digest", lex.digest()},
                                         {"n_records", rep.n_records},
                                         {"union_flagged", rep.union_flagged},
                                         {"union_share", rep.union_share},
                                         {"per_rule", rules}});
        std::vector<std::vector<std::string>> rows;
        for (const auto& f : rep.flags)
            rows.push_back({f.key.first, f.key.second, std::string(to_string(f.rule)), f.phrase, f.sentence});
        env.out.csv("screen_flags.csv", {"country", "task_id", "rule", "phrase", "sentence"}, rows);
    }

private:
    std::string labels_, lexicon_;
};

class ValidateDivergenceCommand final : public Command {
public:
    void define(Options& o) override {
        o.add("pairs", pairs_, "Rationale pairs CSV (id,text_a,country_a,text_b,country_b)", true, PathKind::input);
        o.add("stopwords", stopwords_, "Stopword list", true, PathKind::input);
        o.add("registry", registry_, "Maps ISO3 codes to country names for mention flags", false, PathKind::input);
        o.add("embedder", embedder_, "none, hash, or replay");
        o.add("embeddings", embeddings_, "Replay fixture directory for --embedder replay", false, PathKind::input_dir);
        o.add("jaccard-threshold", th_.jaccard, "High-lexical cutoff");
        o.add("cosine-threshold", th_.cosine, "High-semantic cutoff");
    }
    void execute(Env& env) override {
        std::optional<CountryRegistry> reg;
        if (!registry_.empty()) reg = load_registry(registry_);
        auto name_of = [&](const std::string& c) {
            if (reg)
                if (const auto* ctx = reg->find(c)) return ctx->name;
            return c;
        };
        auto in = open_input(pairs_);
        const auto t = csv::read_table(in);
        const auto c_id = t.require_column("id"), c_ta = t.require_column("text_a"), c_ca = t.require_column("country_a"),
                   c_tb = t.require_column("text_b"), c_cb = t.require_column("country_b");
        std::vector<DivergencePair> pairs;
        for (const auto& r : t.rows)
            pairs.push_back({r.cells[c_id], r.cells[c_ta], name_of(r.cells[c_ca]), r.cells[c_tb], name_of(r.cells[c_cb])});
        auto sin = open_input(stopwords_);
        const auto stop = load_stopwords(sin);

        const HashEmbedding hash;
        std::unique_ptr<EmbeddingProvider> replay;
        const EmbeddingProvider* embedder = nullptr;
        if (embedder_ == "hash") {
            embedder = &hash;
        } else if (embedder_ == "replay") {
            if (embeddings_.empty()) throw UsageError("--embedder replay needs --embeddings");
            replay = std::make_unique<ReplayEmbedding>(embeddings_);
            embedder = replay.get();
        } else if (embedder_ != "none") {
            throw InputError("unknown embedder '" + embedder_ + "'");
        }
        const auto rep = rationale_divergence(pairs, stop, embedder, th_);
        std::vector<std::vector<std::string>> rows;
        for (const auto& r : rep.rows)
            rows.push_back({r.id, fmt(r.jaccard), fmt(r.cosine), r.mention_a ? "1" : "0", r.mention_b ? "1" : "0"});
        env.out.csv("divergence.csv", {"id", "jaccard", "cosine", "mention_a", "mention_b"}, rows);
        env.out.json_doc("divergence.json", {{"n", rep.rows.size()},
                                             {"skipped", rep.skipped},
                                             {"thresholds", {{"jaccard", rep.thresholds.jaccard}, {"cosine", rep.thresholds.cosine}}},
                                             {"quadrant_shares", rep.quadrant_shares},
                                             {"stopwords_digest", rep.stopwords_digest}});
    }

private:
    std::string pairs_, stopwords_, registry_, embedder_ = "none", embeddings_;
    DivergenceThresholds th_;
};

class ValidateDistributionCommand final : public Command {
public:
    void define(Options& o) override {
        o.add("labels", labels_, "Labels", true, PathKind::input);
        o.add("grouping", grouping_, "Optional grouping: income_group or region");
        o.add("registry", registry_, "Country registry, needed with --grouping", false, PathKind::input);
    }
    void execute(Env& env) override {
        const auto ds = load_dataset(labels_, env.log);
        std::optional<Grouping> grouping;
        std::optional<CountryRegistry> reg;
        if (!grouping_.empty()) {
            if (registry_.empty()) throw UsageError("--grouping needs --registry");
            grouping = parse_grouping(grouping_);
            reg = load_registry(registry_);
        }
        std::vector<std::string> cols{"group", "n"};
        for (int l = 0; l < 4; ++l) cols.push_back("level_" + std::to_string(l));
        for (auto c : all_values<Channel>()) cols.push_back("channel_" + std::string(to_string(c)));
        for (auto m : all_values<Margin>()) cols.push_back("margin_" + std::string(to_string(m)));
        cols.insert(cols.end(), {"ai_material_false", "ai_material_true"});
        std::vector<std::vector<std::string>> rows;
        for (const auto& t : distribution_check(ds, grouping, reg ? &*reg : nullptr)) {
            std::vector<std::string> r{t.group, std::to_string(t.n)};
            for (double v : t.level) r.push_back(fmt(v));
            for (double v : t.channel) r.push_back(fmt(v));
            for (double v : t.margin) r.push_back(fmt(v));
            for (double v : t.ai_material) r.push_back(fmt(v));
            rows.push_back(std::move(r));
        }
        env.out.csv("distribution.csv", cols, rows);
    }

private:
    std::string labels_, grouping_, registry_;
};

// ---------------------------------------------------------------------------
// stats
// ---------------------------------------------------------------------------

/// Numeric columns of a CSV table restricted to rows where all are present.
struct Frame {
    std::vector<std::string> keys;
    std::vector<std::vector<double>> cols;
    std::vector<std::vector<std::string>> labels;
    std::vector<std::string> dropped;

    std::size_t rows() const { return keys.size(); }

    Eigen::VectorXd vec(std::size_t c) const {
        return Eigen::Map<const Eigen::VectorXd>(cols[c].data(), static_cast<Eigen::Index>(cols[c].size()));
    }

    Eigen::MatrixXd mat(std::size_t first, std::size_t count) const {
        Eigen::MatrixXd X(static_cast<Eigen::Index>(rows()), static_cast<Eigen::Index>(count));
        for (std::size_t j = 0; j < count; ++j) X.col(static_cast<Eigen::Index>(j)) = vec(first + j);
        return X;
    }
};

inline bool missing_cell(const std::string& s) { return s.empty() || s == "NA" || s == "nan"; }

inline Frame load_frame(const std::string& path, const std::string& key, const std::vector<std::string>& numeric,
                        const std::vector<std::string>& label_cols = {}) {
    auto in = open_input(path);
    const auto t = csv::read_table(in);
    const auto c_key = t.require_column(key);
    std::vector<std::size_t> nc, lc;
    for (const auto& c : numeric) nc.push_back(t.require_column(c));
    for (const auto& c : label_cols) lc.push_back(t.require_column(c));
    Frame f;
    f.cols.resize(nc.size());
    f.labels.resize(lc.size());
    for (const auto& r : t.rows) {
        if (std::any_of(nc.begin(), nc.end(), [&](std::size_t c) { return missing_cell(r.cells[c]); })) {
            f.dropped.push_back(r.cells[c_key]);
            continue;
        }
        f.keys.push_back(r.cells[c_key]);
        for (std::size_t j = 0; j < nc.size(); ++j) {
            const double v = csv::parse_double(r.cells[nc[j]], r.line, numeric[j]);
            if (!std::isfinite(v)) throw InputError(path + " line " + std::to_string(r.line) + ": non-finite " + numeric[j]);
            f.cols[j].push_back(v);
        }
        for (std::size_t j = 0; j < lc.size(); ++j) f.labels[j].push_back(r.cells[lc[j]]);
    }
    return f;
}

/// Options shared by the table-driven stats commands.
struct TableArgs {
    std::string table, key = "iso3", y;
    std::vector<std::string> x;

    void define(Options& o, bool with_x = true) {
        o.add("table", table, "Input CSV table", true, PathKind::input);
        o.add("key", key, "Row identifier column");
        o.add("y", y, "Outcome column", true);
        if (with_x) o.add("x", x, "Predictor columns", true);
    }

    /// y first, then x.
    Frame load(const std::vector<std::string>& labels = {}) const {
        std::vector<std::string> cols{y};
        cols.insert(cols.end(), x.begin(), x.end());
        return load_frame(table, key, cols, labels);
    }
};

struct ForestArgs {
    stats::ForestParams params;
    void define(Options& o) {
        o.add("trees", params.n_trees, "Trees per forest");
        o.add("mtry", params.mtry, "Features tried per split (0: ceil(p/3))");
        o.add("min-leaf", params.min_leaf, "Minimum leaf size");
        o.add("max-depth", params.max_depth, "Depth cap (0: unlimited)");
    }
    ordered_json to_json(const stats::Forest& f) const {
        return {{"n_trees", params.n_trees}, {"mtry", f.mtry}, {"min_leaf", params.min_leaf}, {"max_depth", params.max_depth}};
    }
};

class StatsCorrCommand final : public Command {
public:
    void define(Options& o) override {
        o.add("table", table_, "Input CSV table", true, PathKind::input);
        o.add("key", key_, "Row identifier column");
        o.add("x", x_, "First variable", true);
        o.add("y", y_, "Second variable", true);
        o.add("controls", controls_, "Partial-correlation controls");
        o.add("method", method_, "pearson or spearman");
        o.flag("loo", loo_, "Add leave-one-out sensitivity");
    }
    void execute(Env& env) override {
        stats::CorrelationOp op;
        if (method_ == "pearson") op = stats::pearson;
        else if (method_ == "spearman") op = stats::spearman;
        else throw InputError("unknown correlation method '" + method_ + "'");

        const auto f = load_frame(table_, key_, {x_, y_});
        const stats::Series sx(f.keys, f.cols[0]), sy(f.keys, f.cols[1]);
        const auto c = op(sx, sy);
        ordered_json body{{"method", method_}, {"x", x_}, {"y", y_}, {"n", c.n}, {"r", c.r}, {"dropped", f.dropped}};
        if (loo_) {
            const auto l = stats::leave_one_out(sx, sy, op);
            ordered_json vals = ordered_json::array();
            for (const auto& [k, v] : l.values) vals.push_back({{"key", k}, {"r", v}});
            body["leave_one_out"] = {{"min", l.min}, {"max", l.max}, {"sd", l.sd}, {"values", vals}};
        }
        if (!controls_.empty()) {
            std::vector<std::string> cols{x_, y_};
            cols.insert(cols.end(), controls_.begin(), controls_.end());
            const auto g = load_frame(table_, key_, cols);
            std::vector<stats::Series> ctrl;
            for (std::size_t j = 0; j < controls_.size(); ++j) ctrl.emplace_back(g.keys, g.cols[j + 2]);
            const auto p = stats::partial_correlation(stats::Series(g.keys, g.cols[0]), stats::Series(g.keys, g.cols[1]), ctrl);
            body["partial"] = {{"controls", controls_}, {"r", p.r}, {"n", p.n}, {"absorbed", p.absorbed}, {"dropped", g.dropped}};
        }
        env.out.json_doc("corr.json", body);
    }

private:
    std::string table_, key_ = "iso3", x_, y_, method_ = "pearson";
    std::vector<std::string> controls_;
    bool loo_ = false;
};

class StatsLoessCommand final : public Command {
public:
    void define(Options& o) override {
        o.add("table", table_, "Input CSV table", true, PathKind::input);
        o.add("key", key_, "Row identifier column");
        o.add("x", x_, "Predictor column", true);
        o.add("y", y_, "Outcome column", true);
        o.add("span", params_.span, "LOESS span in (0, 1]");
        o.add("grid-points", grid_points_, "Evaluation points across the x range");
        o.add("resamples", resamples_, "Bootstrap resamples for the band");
        o.add("level", level_, "Band coverage");
    }
    void execute(Env& env) override {
        const auto f = load_frame(table_, key_, {x_, y_});
        if (f.rows() == 0) throw InputError("loess: no complete rows");
        if (grid_points_ < 2) throw InputError("loess: need at least 2 grid points");
        const auto [lo, hi] = std::minmax_element(f.cols[0].begin(), f.cols[0].end());
        std::vector<double> grid(grid_points_);
        for (std::size_t g = 0; g < grid_points_; ++g)
            grid[g] = *lo + (*hi - *lo) * static_cast<double>(g) / static_cast<double>(grid_points_ - 1);
        const auto fit = stats::loess(f.cols[0], f.cols[1], grid, params_);
        const auto band = stats::loess_band(f.cols[0], f.cols[1], grid, params_, resamples_, level_, env.seed);
        std::vector<std::vector<std::string>> rows;
        for (std::size_t g = 0; g < grid.size(); ++g)
            rows.push_back({fmt(grid[g]), fmt(fit.fitted[g]), fmt(band.lower[g]), fmt(band.upper[g]), fit.fallback[g] ? "1" : "0"});
        env.out.csv("loess.csv", {"x", "fitted", "lower", "upper", "fallback"}, rows);
        env.out.json_doc("loess.json", {{"n", f.rows()},
                                        {"span", params_.span},
                                        {"resamples", band.resamples},
                                        {"level", band.level},
                                        {"sample", f.keys},
                                        {"dropped", f.dropped}});
    }

private:
    std::string table_, key_ = "iso3", x_, y_;
    stats::LoessParams params_;
    std::size_t grid_points_ = 25, resamples_ = 200;
    double level_ = 0.95;
};

class StatsVardecompCommand final : public Command {
public:
    void define(Options& o) override {
        o.add("table", table_, "Long CSV table", true, PathKind::input);
        o.add("row", row_, "Row factor column", true);
        o.add("col", col_, "Column factor column", true);
        o.add("value", value_, "Value column", true);
    }
    void execute(Env& env) override {
        const auto f = load_frame(table_, row_, {value_}, {col_});
        std::set<std::string> rs(f.keys.begin(), f.keys.end()), cs(f.labels[0].begin(), f.labels[0].end());
        const std::vector<std::string> rv(rs.begin(), rs.end()), cv(cs.begin(), cs.end());
        std::vector<std::vector<std::optional<double>>> m(rv.size(), std::vector<std::optional<double>>(cv.size()));
        for (std::size_t i = 0; i < f.rows(); ++i) {
            const auto r = static_cast<std::size_t>(std::lower_bound(rv.begin(), rv.end(), f.keys[i]) - rv.begin());
            const auto c = static_cast<std::size_t>(std::lower_bound(cv.begin(), cv.end(), f.labels[0][i]) - cv.begin());
            if (m[r][c]) throw InputError("vardecomp: duplicate cell " + f.keys[i] + "/" + f.labels[0][i]);
            m[r][c] = f.cols[0][i];
        }
        const auto v = stats::variance_decomposition(m);
        env.out.json_doc("vardecomp.json", {{"n_rows", rv.size()},
                                            {"n_cols", cv.size()},
                                            {"n_cells", f.rows()},
                                            {"balanced", v.balanced},
                                            {"degenerate", v.degenerate},
                                            {"ss_total", v.ss_total},
                                            {"rows", opt_json(v.rows)},
                                            {"cols", opt_json(v.cols)},
                                            {"interaction", opt_json(v.interaction)}});
    }

private:
    std::string table_, row_, col_, value_;
};

class StatsFeCommand final : public Command {
public:
    void define(Options& o) override {
        args_.define(o);
        o.add("row-fe", row_fe_, "Row fixed-effect column", true);
        o.add("col-fe", col_fe_, "Column fixed-effect column", true);
        o.add("cluster", cluster_, "Cluster column (default: row fixed effect)");
        o.flag("joint", joint_, "One regression on all x instead of one per x");
        o.add("tolerance", params_.tolerance, "Demeaning convergence tolerance");
    }
    void execute(Env& env) override {
        const std::string cl = cluster_.empty() ? row_fe_ : cluster_;
        std::vector<std::vector<std::string>> rows;
        ordered_json models = ordered_json::array();
        const auto run = [&](const std::vector<std::string>& xs) {
            TableArgs a = args_;
            a.x = xs;
            const auto f = a.load({row_fe_, col_fe_, cl});
            const auto r = stats::fe_regression(f.vec(0), f.mat(1, xs.size()), f.labels[0], f.labels[1], f.labels[2], params_);
            ordered_json terms = ordered_json::array();
            for (std::size_t k = 0; k < xs.size(); ++k) {
                const auto K = static_cast<Eigen::Index>(k);
                rows.push_back({join(xs, "+"), xs[k], fmt(r.beta[K]), fmt(r.se[K]), fmt(r.beta[K] / r.se[K]),
                                std::to_string(r.n), std::to_string(r.n_row_groups), std::to_string(r.n_col_groups),
                                std::to_string(r.n_clusters), std::to_string(r.n_parameters)});
                terms.push_back({{"term", xs[k]}, {"beta", r.beta[K]}, {"se", r.se[K]}});
            }
            models.push_back({{"regressors", xs}, {"terms", terms}, {"n", r.n}, {"n_row_groups", r.n_row_groups},
                              {"n_col_groups", r.n_col_groups}, {"n_clusters", r.n_clusters},
                              {"n_parameters", r.n_parameters}, {"sweeps", r.sweeps}, {"dropped", f.dropped}});
        };
        if (joint_) run(args_.x);
        else
            for (const auto& x : args_.x) run({x});
        env.out.csv("fe.csv", {"model", "term", "beta", "se", "t", "n", "n_row_groups", "n_col_groups", "n_clusters", "n_parameters"},
                    rows);
        env.out.json_doc("fe.json", {{"y", args_.y}, {"row_fe", row_fe_}, {"col_fe", col_fe_}, {"cluster", cl}, {"models", models}});
    }

private:
    TableArgs args_;
    std::string row_fe_, col_fe_, cluster_;
    bool joint_ = false;
    stats::FeParams params_;
};

class StatsForestCommand final : public Command {
public:
    void define(Options& o) override {
        args_.define(o);
        forest_.define(o);
        o.add("repeats", repeats_, "Permutations per feature");
    }
    void execute(Env& env) override {
        const auto f = args_.load();
        const auto X = f.mat(1, args_.x.size());
        const Eigen::VectorXd y = f.vec(0);
        const auto forest = stats::fit_forest(X, y, forest_.params, env.seed);
        const Eigen::VectorXd pred = forest.predict(X);
        const Eigen::VectorXd resid = y - pred;
        const double sst = (y.array() - y.mean()).matrix().squaredNorm();
        const auto imp = stats::permutation_importance(forest, X, y, env.seed, repeats_);
        std::vector<std::vector<std::string>> rows;
        for (std::size_t j = 0; j < args_.x.size(); ++j) rows.push_back({args_.x[j], fmt(imp[j])});
        env.out.csv("forest_importance.csv", {"feature", "permutation_importance"}, rows);
        std::vector<std::vector<std::string>> rrows;
        for (std::size_t i = 0; i < f.rows(); ++i) {
            const auto I = static_cast<Eigen::Index>(i);
            rrows.push_back({f.keys[i], fmt(y[I]), fmt(pred[I]), fmt(resid[I])});
        }
        env.out.csv("forest_fit.csv", {args_.key, "observed", "fitted", "residual"}, rrows);
        env.out.json_doc("forest.json", {{"n", f.rows()},
                                         {"params", forest_.to_json(forest)},
                                         {"seed", env.seed},
                                         {"in_sample_r2", sst > 0 ? json(1.0 - resid.squaredNorm() / sst) : json(nullptr)},
                                         {"rmse", std::sqrt(resid.squaredNorm() / static_cast<double>(f.rows()))},
                                         {"repeats", repeats_},
                                         {"dropped", f.dropped}});
    }

private:
    TableArgs args_;
    ForestArgs forest_;
    std::size_t repeats_ = 5;
};

/// Forest seeds derived from the master seed.
inline std::vector<std::uint64_t> forest_seeds(std::uint64_t master, std::size_t n) {
    std::vector<std::uint64_t> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back(splitmix64(master + i));
    return out;
}

class StatsShapCommand final : public Command {
public:
    void define(Options& o) override {
        args_.define(o);
        forest_.define(o);
        o.add("forest-seeds", n_seeds_, "Forests averaged");
    }
    void execute(Env& env) override {
        const auto f = args_.load();
        const auto r = stats::mean_abs_shap(f.mat(1, args_.x.size()), f.vec(0), forest_.params, forest_seeds(env.seed, n_seeds_));
        std::vector<std::vector<std::string>> rows;
        for (std::size_t k = 0; k < r.ranking.size(); ++k) {
            const auto j = r.ranking[k];
            rows.push_back({std::to_string(k + 1), args_.x[j], fmt(r.values[j])});
        }
        env.out.csv("shap.csv", {"rank", "feature", "mean_abs_shap_x100"}, rows);
        env.out.json_doc("shap.json", {{"n", f.rows()}, {"forest_seeds", r.seeds}, {"sample", f.keys}, {"dropped", f.dropped}});
    }

private:
    TableArgs args_;
    ForestArgs forest_;
    std::size_t n_seeds_ = 5;
};

class StatsAleCommand final : public Command {
public:
    void define(Options& o) override {
        args_.define(o);
        forest_.define(o);
        o.add("feature", feature_, "Feature to profile (one of --x)", true);
        o.add("bins", bins_, "Quantile bins");
    }
    void execute(Env& env) override {
        const auto it = std::find(args_.x.begin(), args_.x.end(), feature_);
        if (it == args_.x.end()) throw InputError("ale: --feature must be one of --x");
        const auto f = args_.load();
        const auto X = f.mat(1, args_.x.size());
        const auto forest = stats::fit_forest(X, f.vec(0), forest_.params, env.seed);
        const auto a = stats::ale_1d(forest, X, static_cast<std::size_t>(it - args_.x.begin()), bins_);
        std::vector<std::vector<std::string>> rows;
        for (std::size_t k = 0; k < a.grid.size(); ++k)
            rows.push_back({fmt(a.grid[k]), fmt(a.values[k]), k == 0 ? std::string() : std::to_string(a.counts[k - 1])});
        env.out.csv("ale.csv", {"edge", "ale", "bin_count"}, rows);
        env.out.json_doc("ale.json", {{"feature", feature_},
                                      {"n", f.rows()},
                                      {"bins", bins_},
                                      {"direction", a.direction},
                                      {"merged_bins", a.merged_bins},
                                      {"params", forest_.to_json(forest)},
                                      {"dropped", f.dropped}});
    }

private:
    TableArgs args_;
    ForestArgs forest_;
    std::string feature_;
    std::size_t bins_ = 10;
};

class StatsDominanceCommand final : public Command {
public:
    void define(Options& o) override { args_.define(o); }
    void execute(Env& env) override {
        const auto f = args_.load();
        const auto r = stats::shapley_r2(f.mat(1, args_.x.size()), f.vec(0));
        std::vector<std::vector<std::string>> rows;
        for (std::size_t j = 0; j < args_.x.size(); ++j)
            rows.push_back({args_.x[j], fmt(r.contributions[j]), r.full_r2 != 0 ? fmt(r.contributions[j] / r.full_r2) : ""});
        env.out.csv("dominance.csv", {"predictor", "r2_contribution", "share_of_r2"}, rows);
        env.out.json_doc("dominance.json", {{"n", f.rows()},
                                            {"full_r2", r.full_r2},
                                            {"rank_deficient_subsets", r.rank_deficient_subsets},
                                            {"dropped", f.dropped}});
    }

private:
    TableArgs args_;
};

}  // namespace atlas::cli
