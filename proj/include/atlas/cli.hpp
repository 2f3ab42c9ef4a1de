#pragma once

// Command-line front end. Exit codes: 0 success, 1 usage, 2 input error,
// 3 internal invariant violation.

#include <charconv>
#include <iostream>

#include "atlas/cli/commands.hpp"
#include "atlas/parallel.hpp"

namespace atlas::cli {

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Runs every pipeline step into <out>/<step>/ and writes report.json with the
/// digest of each produced file.
class ReportCommand final : public Command {
public:
    void define(Options& o) override {
        const auto in = [&](const char* key, std::string& target, const char* help) {
            o.add(key, target, help, true, PathKind::input);
        };
        in("labels", labels_, "Country labels");
        in("benchmark", benchmark_, "Benchmark-ladder labels");
        in("run-b", run_b_, "Independent second labelling run");
        o.add("variants", variants_, "Paraphrase-variant labels", true, PathKind::input);
        in("registry", registry_, "Country registry");
        in("tasks", tasks_, "Task statements");
        in("activities", activities_, "Activity descriptions");
        in("task-weights", weights_, "Task weights");
        in("bridge", bridge_, "SOC to ISCO bridge");
        in("employment", employment_, "Employment counts");
        in("covariates", covariates_, "Country covariates");
        in("pairs", pairs_, "Rationale pairs");
        in("lexicon", lexicon_, "Consistency lexicon");
        in("stopwords", stopwords_, "Stopword list");
        o.add("outcome", outcome_, "Outcome column for country-level statistics");
    }

    void execute(Env& env) override {
        const fs::path root = env.out.path();
        std::vector<std::pair<std::string, std::vector<std::string>>> steps;
        const auto dir = [&](const std::string& step) { return (root / step).string(); };
        const auto file = [&](const std::string& step, const std::string& name) { return (root / step / name).string(); };
        const std::string labels = file("ingest", "labels.jsonl");
        const std::string table = file("summarize", "country_covariates.csv");
        std::vector<std::string> covs;
        for (const auto& r : covariate_rules()) covs.emplace_back(r.name);

        steps.push_back({"ingest", {"ingest", "--labels", labels_}});
        steps.push_back({"summarize", {"summarize", "--labels", labels, "--registry", registry_, "--benchmark", benchmark_,
                                       "--covariates", covariates_}});
        steps.push_back({"link_candidates", {"link", "candidates", "--tasks", tasks_, "--activities", activities_}});
        steps.push_back({"link_prune", {"link", "prune", "--candidates", file("link_candidates", "candidates.csv"), "--tasks",
                                        tasks_, "--activities", activities_}});
        steps.push_back({"link_apply", {"link", "apply", "--labels", labels, "--task-weights", weights_, "--bridge", bridge_,
                                        "--graph", file("link_prune", "graph.jsonl"), "--registry", registry_}});
        steps.push_back({"reweight", {"reweight", "--labels", labels, "--task-weights", weights_, "--bridge", bridge_,
                                      "--employment", employment_}});
        steps.push_back({"validate_agreement", {"validate", "agreement", "--a", labels, "--b", run_b_}});
        std::vector<std::string> para{"validate", "paraphrase", "--original", benchmark_, "--variants"};
        para.insert(para.end(), variants_.begin(), variants_.end());
        steps.push_back({"validate_paraphrase", para});
        steps.push_back({"validate_screen", {"validate", "screen", "--labels", labels, "--lexicon", lexicon_}});
        steps.push_back({"validate_divergence", {"validate", "divergence", "--pairs", pairs_, "--stopwords", stopwords_,
                                                 "--registry", registry_, "--embedder", "hash"}});
        steps.push_back({"validate_distribution", {"validate", "distribution", "--labels", labels, "--grouping",
                                                   "income_group", "--registry", registry_}});
        steps.push_back({"stats_corr", {"stats", "corr", "--table", table, "--x", "log_gdp_pc", "--y", outcome_,
                                        "--controls", "human_capital", "--loo"}});
        steps.push_back({"stats_loess", {"stats", "loess", "--table", table, "--x", "log_gdp_pc", "--y", outcome_}});
        steps.push_back({"stats_vardecomp", {"stats", "vardecomp", "--table", file("link_apply", "isco_profiles.csv"),
                                             "--row", "iso3", "--col", "isco", "--value", "exposed_share"}});
        steps.push_back({"stats_fe", {"stats", "fe", "--table", file("reweight", "gender_panel.csv"), "--y", "y", "--x",
                                      "x_substitute", "x_augment", "x_both", "--row-fe", "iso3", "--col-fe", "cell_id"}});
        const auto country_model = [&](std::vector<std::string> head) {
            head.insert(head.end(), {"--table", table, "--y", outcome_, "--x"});
            head.insert(head.end(), covs.begin(), covs.end());
            return head;
        };
        steps.push_back({"stats_forest", country_model({"stats", "forest"})});
        steps.push_back({"stats_shap", country_model({"stats", "shap"})});
        auto ale = country_model({"stats", "ale"});
        ale.insert(ale.end(), {"--feature", "log_gdp_pc"});
        steps.push_back({"stats_ale", ale});
        steps.push_back({"stats_dominance", country_model({"stats", "dominance"})});

        ordered_json done = ordered_json::array();
        for (auto& [step, args] : steps) {
            args.insert(args.end(), {"--out", dir(step), "--seed", std::to_string(env.seed)});
            if (!env.config_path.empty()) args.insert(args.end(), {"--config", env.config_path});
            env.log << "report: " << step << "\n";
            if (const int rc = env.rerun(args); rc != 0)
                throw StepFailed(step, rc);
            std::vector<std::string> names;
            for (const auto& e : fs::directory_iterator(root / step))
                if (e.is_regular_file()) names.push_back(e.path().filename().string());
            std::sort(names.begin(), names.end());
            ordered_json files = ordered_json::object();
            for (const auto& n : names) files[n] = file_digest(file(step, n));
            done.push_back({{"step", step}, {"files", files}});
        }
        env.out.json_doc("report.json", {{"steps", done}});
    }

    /// A pipeline step exited non-zero; the report exits with the same code.
    struct StepFailed : std::runtime_error {
        StepFailed(const std::string& step, int code)
            : std::runtime_error("report: step " + step + " failed with exit code " + std::to_string(code)), code(code) {}
        int code;
    };

private:
    std::string labels_, benchmark_, run_b_, registry_, tasks_, activities_, weights_, bridge_, employment_, covariates_,
        pairs_, lexicon_, stopwords_, outcome_ = "exposed_share";
    std::vector<std::string> variants_;
};

namespace detail {

struct Registered {
    std::string name;
    CLI::App* app;
    std::unique_ptr<Command> command;
    std::unique_ptr<Options> options;
};

/// Restores the worker count on scope exit so nested runs do not leak settings.
class JobsGuard {
public:
    JobsGuard() : saved_(default_jobs()) {}
    ~JobsGuard() { set_default_jobs(saved_); }
    JobsGuard(const JobsGuard&) = delete;
    JobsGuard& operator=(const JobsGuard&) = delete;

private:
    std::size_t saved_;
};

inline std::uint64_t parse_seed(std::string_view s, std::string_view origin) {
    std::uint64_t v = 0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size())
        throw InputError(std::string(origin) + ": invalid seed '" + std::string(s) + "'");
    return v;
}

}  // namespace detail

inline int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Country-conditioned task exposure pipeline", std::string(kToolName)};
    app.set_version_flag("--version", std::string(kToolName) + " " + ATLAS_VERSION);
    app.require_subcommand(1);
    app.fallthrough();
    app.failure_message(CLI::FailureMessage::help);

    std::string config_path, out_dir = "out";
    std::uint64_t seed_flag = 0;
    std::size_t jobs = 0;
    app.add_option("--config", config_path, "JSON config; command-line flags take precedence");
    auto* seed_opt = app.add_option("--seed", seed_flag, "Master seed (overrides ATLAS_SEED and config)");
    app.add_option("--out", out_dir, "Output directory");
    app.add_option("--jobs", jobs, "Worker threads (results do not depend on this)");

    std::vector<detail::Registered> reg;
    const auto add = [&](CLI::App* parent, const std::string& name, const std::string& desc,
                         std::vector<std::string> scope, std::unique_ptr<Command> cmd) {
        auto* sub = parent->add_subcommand(name, desc);
        auto opts = std::make_unique<Options>(sub, scope);
        cmd->define(*opts);
        std::string full;
        for (const auto& s : scope) full += (full.empty() ? "" : " ") + s;
        reg.push_back({full, sub, std::move(cmd), std::move(opts)});
    };
    add(&app, "ingest", "Validate, normalize, and deduplicate label files", {"ingest"}, std::make_unique<IngestCommand>());
    add(&app, "summarize", "Country and group summaries, pathways, benchmark deviation", {"summarize"},
        std::make_unique<SummarizeCommand>());
    auto* link = app.add_subcommand("link", "Occupation and industry linkage");
    link->require_subcommand(1);
    add(link, "candidates", "Embedding candidates per activity", {"link", "candidates"},
        std::make_unique<LinkCandidatesCommand>());
    add(link, "prune", "Majority-vote pruning of candidate edges", {"link", "prune"}, std::make_unique<LinkPruneCommand>());
    add(link, "apply", "Occupation, industry, and income-group profiles", {"link", "apply"},
        std::make_unique<LinkApplyCommand>());
    add(&app, "reweight", "Employment reweighting and gender gaps", {"reweight"}, std::make_unique<ReweightCommand>());
    auto* validate = app.add_subcommand("validate", "Label validation suite");
    validate->require_subcommand(1);
    add(validate, "agreement", "Agreement between two runs", {"validate", "agreement"},
        std::make_unique<ValidateAgreementCommand>());
    add(validate, "paraphrase", "Stability across paraphrased task wordings", {"validate", "paraphrase"},
        std::make_unique<ValidateParaphraseCommand>());
    add(validate, "screen", "Rationale consistency screen", {"validate", "screen"}, std::make_unique<ValidateScreenCommand>());
    add(validate, "divergence", "Cross-country rationale divergence", {"validate", "divergence"},
        std::make_unique<ValidateDivergenceCommand>());
    add(validate, "distribution", "Marginal label distributions", {"validate", "distribution"},
        std::make_unique<ValidateDistributionCommand>());
    auto* st = app.add_subcommand("stats", "Country-level statistics");
    st->require_subcommand(1);
    add(st, "corr", "Pearson/Spearman, partial correlation, leave-one-out", {"stats", "corr"},
        std::make_unique<StatsCorrCommand>());
    add(st, "loess", "LOESS curve with bootstrap band", {"stats", "loess"}, std::make_unique<StatsLoessCommand>());
    add(st, "vardecomp", "Two-way variance decomposition", {"stats", "vardecomp"}, std::make_unique<StatsVardecompCommand>());
    add(st, "fe", "Two-way fixed-effects regression", {"stats", "fe"}, std::make_unique<StatsFeCommand>());
    add(st, "forest", "Random forest fit and permutation importance", {"stats", "forest"},
        std::make_unique<StatsForestCommand>());
    add(st, "shap", "Mean absolute TreeSHAP ranking", {"stats", "shap"}, std::make_unique<StatsShapCommand>());
    add(st, "ale", "Accumulated local effects", {"stats", "ale"}, std::make_unique<StatsAleCommand>());
    add(st, "dominance", "Shapley decomposition of R²", {"stats", "dominance"}, std::make_unique<StatsDominanceCommand>());
    add(&app, "report", "Run the full pipeline", {"report"}, std::make_unique<ReportCommand>());

    try {
        std::vector<std::string> rev(args.rbegin(), args.rend());
        app.parse(std::move(rev));
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err) == 0 ? 0 : 1;
    }

    detail::Registered* chosen = nullptr;
    for (auto& r : reg)
        if (r.app->parsed()) chosen = &r;
    if (!chosen) {
        err << app.help();
        return 1;
    }

    detail::JobsGuard guard;
    try {
        json config = json::object();
        fs::path config_dir = fs::current_path();
        if (!config_path.empty()) {
            if (!fs::exists(config_path)) throw InputError("--config: no such file " + config_path);
            try {
                config = json::parse(read_file(config_path));
            } catch (const json::exception& e) {
                throw InputError("config: " + std::string(e.what()));
            }
            if (!config.is_object()) throw InputError("config: top level must be an object");
            config_dir = fs::absolute(config_path).parent_path();
        }
        chosen->options->resolve(config, config_dir);

        std::uint64_t seed = 0;
        if (seed_opt->count() > 0) {
            seed = seed_flag;
        } else if (const char* env_seed = std::getenv("ATLAS_SEED"); env_seed && *env_seed) {
            seed = detail::parse_seed(env_seed, "ATLAS_SEED");
        } else if (const json* s = chosen->options->lookup(config, "seed")) {
            if (!s->is_number_unsigned()) throw InputError("config: seed must be a non-negative integer");
            seed = s->get<std::uint64_t>();
        }
        if (jobs > 0) set_default_jobs(jobs);

        OutputDir od(out_dir, Header::make(chosen->name, seed, chosen->options->canonical()));
        Env env{seed, od, err, config_path.empty() ? std::string() : fs::absolute(config_path).string(),
                [&](const std::vector<std::string>& sub) { return run(sub, out, err); }};
        chosen->command->execute(env);
        return 0;
    } catch (const ReportCommand::StepFailed& e) {
        err << "error: " << e.what() << "\n";
        return e.code;
    } catch (const UsageError& e) {
        err << "error: " << e.what() << "\n\n" << chosen->app->help();
        return 1;
    } catch (const InvariantError& e) {
        err << "internal error: " << e.what() << "\n";
        return 3;
    } catch (const InputError& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    } catch (const fs::filesystem_error& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        err << "internal error: " << e.what() << "\n";
        return 3;
    }
}

}  // namespace atlas::cli
