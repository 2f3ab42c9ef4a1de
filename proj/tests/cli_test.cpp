#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "atlas/cli.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const fs::path kFixtures = ATLAS_FIXTURE_DIR;

struct Result {
    int code;
    std::string out, err;
};

Result invoke(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = atlas::cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

fs::path scratch() {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    auto dir = fs::temp_directory_path() / "atlas_cli_test" / (std::string(info->test_suite_name()) + "_" + info->name());
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string fixture(const std::string& name) { return (kFixtures / name).string(); }

/// Header comment lines of a CSV/JSONL file as key -> value.
std::map<std::string, std::string> comment_header(const fs::path& p) {
    std::ifstream in(p);
    std::map<std::string, std::string> out;
    std::string line;
    while (std::getline(in, line) && line.rfind("# ", 0) == 0) {
        const auto colon = line.find(": ");
        out[line.substr(2, colon - 2)] = line.substr(colon + 2);
    }
    return out;
}

atlas::csv::Table table(const fs::path& p) {
    std::ifstream in(p);
    return atlas::csv::read_table(in);
}

std::map<std::string, std::string> tree_digest(const fs::path& root) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(root))
        if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = atlas::file_digest(e.path().string());
    return out;
}

}  // namespace

TEST(CliUsage, UnknownStatsSubcommandPrintsUsage) {
    const auto r = invoke({"stats", "nonsense"});
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("Usage"), std::string::npos);
}

TEST(CliUsage, NoSubcommandIsUsageError) { EXPECT_EQ(invoke({}).code, 1); }

TEST(CliUsage, HelpExitsZero) {
    const auto r = invoke({"--help"});
    EXPECT_EQ(r.code, 0);
    EXPECT_NE(r.out.find("summarize"), std::string::npos);
}

TEST(CliUsage, MissingRequiredOptionExitsOne) {
    const auto dir = scratch();
    const auto r = invoke({"summarize", "--labels", fixture("labels.jsonl"), "--out", dir.string()});
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("--registry"), std::string::npos);
}

TEST(CliInput, MissingInputFileExitsTwo) {
    const auto dir = scratch();
    const auto r = invoke({"ingest", "--labels", (dir / "absent.jsonl").string(), "--out", dir.string()});
    EXPECT_EQ(r.code, 2);
}

TEST(CliInput, MalformedConfigExitsTwo) {
    const auto dir = scratch();
    std::ofstream(dir / "bad.json") << "{not json";
    const auto r = invoke({"ingest", "--config", (dir / "bad.json").string(), "--labels", fixture("labels.jsonl"),
                           "--out", dir.string()});
    EXPECT_EQ(r.code, 2);
}

TEST(CliInput, InvalidSeedEnvironmentExitsTwo) {
    const auto dir = scratch();
    ::setenv("ATLAS_SEED", "twelve", 1);
    const auto r = invoke({"ingest", "--labels", fixture("labels.jsonl"), "--out", dir.string()});
    ::unsetenv("ATLAS_SEED");
    EXPECT_EQ(r.code, 2);
}

TEST(CliIngest, MalformedLineIsCountedNotFatal) {
    const auto dir = scratch();
    const auto r = invoke({"ingest", "--labels", fixture("labels.jsonl"), "--out", dir.string()});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto rep = json::parse(slurp(dir / "ingest_report.json"));
    EXPECT_EQ(rep["rows_rejected"], 2);
    EXPECT_EQ(rep["duplicates_collapsed"], 1);
    EXPECT_EQ(rep["records"], 960);
}

TEST(CliIngest, StrictModeExitsTwoOnRejections) {
    const auto dir = scratch();
    EXPECT_EQ(invoke({"ingest", "--strict", "--labels", fixture("labels.jsonl"), "--out", dir.string()}).code, 2);
    EXPECT_EQ(invoke({"ingest", "--strict", "--labels", fixture("run_b.jsonl"), "--out", dir.string()}).code, 0);
}

TEST(CliIngest, OutputReingestsToSameRecords) {
    const auto dir = scratch();
    ASSERT_EQ(invoke({"ingest", "--labels", fixture("labels.jsonl"), "--out", (dir / "a").string()}).code, 0);
    ASSERT_EQ(invoke({"ingest", "--strict", "--labels", (dir / "a" / "labels.jsonl").string(), "--out", (dir / "b").string()}).code, 0);
    auto body = [](const fs::path& p) {
        auto s = slurp(p);
        return s.substr(s.find("\n{") + 1);
    };
    EXPECT_EQ(body(dir / "a" / "labels.jsonl"), body(dir / "b" / "labels.jsonl"));
}

TEST(CliConfig, ConfigFillsUnsetOptionsAndFlagsWin) {
    const auto dir = scratch();
    std::ofstream(dir / "cfg.json") << R"({"seed": 11, "link": {"candidates": {"top-k": 3, "floor": 0.1,
        "tasks": ")" << fixture("tasks.csv") << R"(", "activities": ")" << fixture("activities.csv") << R"("}}})";
    const auto cfg = (dir / "cfg.json").string();
    ASSERT_EQ(invoke({"link", "candidates", "--config", cfg, "--out", (dir / "a").string()}).code, 0);
    ASSERT_EQ(invoke({"link", "candidates", "--config", cfg, "--top-k", "5", "--out", (dir / "b").string()}).code, 0);
    const auto pa = json::parse(comment_header(dir / "a" / "candidates.csv")["params"]);
    const auto pb = json::parse(comment_header(dir / "b" / "candidates.csv")["params"]);
    EXPECT_EQ(pa["top-k"], 3);
    EXPECT_EQ(pb["top-k"], 5);
    EXPECT_DOUBLE_EQ(pb["floor"].get<double>(), 0.1);
    std::map<std::string, int> per_activity;
    for (const auto& r : table(dir / "a" / "candidates.csv").rows) ++per_activity[r.cells[0]];
    for (const auto& [a, n] : per_activity) EXPECT_LE(n, 3) << a;
}

TEST(CliConfig, RelativeConfigPathsResolveAgainstConfigDirectory) {
    const auto dir = scratch();
    fs::copy_file(kFixtures / "labels.jsonl", dir / "in.jsonl");
    fs::create_directories(dir / "elsewhere");
    std::ofstream(dir / "cfg.json") << R"({"labels": ["in.jsonl"]})";
    const auto r = invoke({"ingest", "--config", (dir / "cfg.json").string(), "--out", (dir / "elsewhere").string()});
    EXPECT_EQ(r.code, 0) << r.err;
}

TEST(CliConfig, SeedPrecedenceFlagThenEnvironmentThenConfig) {
    const auto dir = scratch();
    std::ofstream(dir / "cfg.json") << R"({"seed": 5})";
    const std::vector<std::string> base{"validate", "distribution", "--config", (dir / "cfg.json").string(), "--labels",
                                        fixture("run_b.jsonl"), "--out", dir.string()};
    auto seed_of = [&] { return comment_header(dir / "distribution.csv")["seed"]; };

    ASSERT_EQ(invoke(base).code, 0);
    EXPECT_EQ(seed_of(), "5");
    ::setenv("ATLAS_SEED", "6", 1);
    ASSERT_EQ(invoke(base).code, 0);
    EXPECT_EQ(seed_of(), "6");
    auto with_flag = base;
    with_flag.insert(with_flag.end(), {"--seed", "7"});
    ASSERT_EQ(invoke(with_flag).code, 0);
    ::unsetenv("ATLAS_SEED");
    EXPECT_EQ(seed_of(), "7");
}

TEST(CliConfig, DigestIgnoresOutputDirectoryAndJobs) {
    const auto dir = scratch();
    const std::vector<std::string> base{"validate", "distribution", "--labels", fixture("run_b.jsonl")};
    auto a = base, b = base;
    a.insert(a.end(), {"--out", (dir / "a").string()});
    b.insert(b.end(), {"--out", (dir / "b").string(), "--jobs", "4"});
    ASSERT_EQ(invoke(a).code, 0);
    ASSERT_EQ(invoke(b).code, 0);
    EXPECT_EQ(slurp(dir / "a" / "distribution.csv"), slurp(dir / "b" / "distribution.csv"));
    auto c = base;
    c.insert(c.end(), {"--out", (dir / "c").string(), "--grouping", "region", "--registry", fixture("registry.csv")});
    ASSERT_EQ(invoke(c).code, 0);
    EXPECT_NE(comment_header(dir / "a" / "distribution.csv")["config_digest"],
              comment_header(dir / "c" / "distribution.csv")["config_digest"]);
}

TEST(CliSummarize, ExposedSharesMatchCountingOracle) {
    const auto dir = scratch();
    ASSERT_EQ(invoke({"summarize", "--labels", fixture("labels.jsonl"), "--registry", fixture("registry.csv"), "--out",
                      dir.string()}).code,
              0);
    // Oracle: first well-formed occurrence per (country, task); the fixture's
    // duplicate differs only in rationale and the rejected row has level 7.
    std::map<std::string, std::pair<int, int>> counts;
    std::set<std::pair<std::string, std::string>> seen;
    std::ifstream in(fixture("labels.jsonl"));
    std::string line;
    while (std::getline(in, line)) {
        auto j = json::parse(line, nullptr, false);
        if (j.is_discarded()) continue;
        const int level = j["exposure_level"];
        if (level < 0 || level > 3) continue;
        const std::string iso = j["country"], task = j["task_id"];
        if (!seen.emplace(iso, task).second) continue;
        auto& [n, exposed] = counts[iso];
        ++n;
        exposed += level >= 2;
    }
    const auto t = table(dir / "country_summary.csv");
    const auto c_iso = t.require_column("iso3"), c_share = t.require_column("exposed_share");
    ASSERT_EQ(t.rows.size(), counts.size());
    for (const auto& r : t.rows) {
        const auto [n, exposed] = counts.at(r.cells[c_iso]);
        EXPECT_EQ(std::stod(r.cells[c_share]), static_cast<double>(exposed) / n) << r.cells[c_iso];
    }
}

TEST(CliSummarize, PolarisationAndTiltColumnsAreConsistent) {
    const auto dir = scratch();
    ASSERT_EQ(invoke({"summarize", "--labels", fixture("labels.jsonl"), "--registry", fixture("registry.csv"), "--out",
                      dir.string()}).code,
              0);
    const auto t = table(dir / "country_summary.csv");
    const auto cp = t.require_column("polarisation"), cb = t.require_column("margin_within_both"),
               ct = t.require_column("tilt"), cs = t.require_column("margin_within_substitute");
    for (const auto& r : t.rows) {
        EXPECT_NEAR(std::stod(r.cells[cp]) + std::stod(r.cells[cb]), 1.0, 1e-12);
        EXPECT_NEAR(std::stod(r.cells[ct]) * std::stod(r.cells[cp]), std::stod(r.cells[cs]), 1e-12);
    }
}

TEST(CliStats, CorrOnSyntheticTableMatchesKnownValue) {
    const auto dir = scratch();
    std::ofstream(dir / "t.csv") << "iso3,a,b\nA,1,2\nB,2,4\nC,3,6\nD,4,8.5\nE,,3\n";
    ASSERT_EQ(invoke({"stats", "corr", "--table", (dir / "t.csv").string(), "--x", "a", "--y", "b", "--out", dir.string()}).code, 0);
    const auto j = json::parse(slurp(dir / "corr.json"));
    EXPECT_EQ(j["n"], 4);
    EXPECT_EQ(j["dropped"], json::array({"E"}));
    EXPECT_NEAR(j["r"].get<double>(), 0.9983814394570298, 1e-12);
    EXPECT_EQ(j["header"]["command"], "stats corr");
}

TEST(CliStats, FeRejectsSingleCluster) {
    const auto dir = scratch();
    std::ofstream(dir / "p.csv") << "iso3,cell,y,x\nA,1,1,0.5\nA,2,2,0.1\nA,3,0,0.9\nA,4,5,0.3\n";
    const auto r = invoke({"stats", "fe", "--table", (dir / "p.csv").string(), "--y", "y", "--x", "x", "--row-fe", "iso3",
                           "--col-fe", "cell", "--out", dir.string()});
    EXPECT_EQ(r.code, 2);
}

class CliReport : public ::testing::Test {
protected:
    static fs::path run_report(const fs::path& out, const std::string& jobs) {
        const auto r = invoke({"report", "--config", fixture("report.json"), "--out", out.string(), "--jobs", jobs});
        EXPECT_EQ(r.code, 0) << r.err;
        return out;
    }
};

TEST_F(CliReport, EveryOutputCarriesProvenance) {
    const auto dir = run_report(scratch(), "2");
    std::size_t files = 0;
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
        if (!e.is_regular_file()) continue;
        ++files;
        const auto ext = e.path().extension();
        if (ext == ".json") {
            const auto j = json::parse(slurp(e.path()));
            EXPECT_EQ(j["header"]["seed"], 20260101u) << e.path();
            EXPECT_EQ(j["header"]["config_digest"].get<std::string>().size(), 64u) << e.path();
            EXPECT_EQ(j["header"]["version"], ATLAS_VERSION);
        } else {
            const auto h = comment_header(e.path());
            EXPECT_EQ(h.at("seed"), "20260101") << e.path();
            EXPECT_EQ(h.at("config_digest").size(), 64u) << e.path();
            EXPECT_EQ(h.at("tool"), std::string("atlas ") + ATLAS_VERSION);
        }
    }
    EXPECT_GT(files, 30u);
}

TEST_F(CliReport, ByteIdenticalAcrossRunsAndWorkerCounts) {
    const auto dir = scratch();
    const auto a = tree_digest(run_report(dir / "a", "1"));
    const auto b = tree_digest(run_report(dir / "b", "1"));
    const auto c = tree_digest(run_report(dir / "c", "8"));
    EXPECT_FALSE(a.empty());
    EXPECT_EQ(a, b);
    EXPECT_EQ(a, c);
}

TEST_F(CliReport, ReportListsDigestOfEveryStepFile) {
    const auto dir = run_report(scratch(), "4");
    const auto rep = json::parse(slurp(dir / "report.json"));
    std::size_t listed = 0;
    for (const auto& s : rep["steps"])
        for (const auto& [name, digest] : s["files"].items()) {
            ++listed;
            EXPECT_EQ(digest, atlas::file_digest((dir / s["step"].get<std::string>() / name).string()));
        }
    EXPECT_EQ(listed, tree_digest(dir).size() - 1);
}

TEST_F(CliReport, FailingStepPropagatesExitCode) {
    const auto dir = scratch();
    std::ofstream(dir / "cfg.json") << slurp(kFixtures / "report.json");
    std::ofstream(dir / "broken.csv") << "iso3,name,income_group,region\nUSA,United States,high,Nowhere\n";
    const auto r = invoke({"report", "--config", fixture("report.json"), "--registry", (dir / "broken.csv").string(),
                           "--out", (dir / "out").string()});
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("step summarize"), std::string::npos);
}
