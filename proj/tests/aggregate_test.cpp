#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <sstream>

#include "atlas/aggregate.hpp"
#include "generators.hpp"

using namespace atlas;

namespace {

TaskLabelRecord rec(std::string country, std::string task, int level, Margin m = Margin::unclear,
                    Channel ch = Channel::none) {
    TaskLabelRecord r;
    r.country = std::move(country);
    r.task_id = std::move(task);
    r.exposure = ExposureLevel(level);
    r.margin_raw = m;
    r.margin = level >= 2 ? m : Margin::unclear;
    r.substitution_path = m == Margin::substitute || m == Margin::both;
    r.augmentation_path = m == Margin::augment || m == Margin::both;
    r.channel = ch;
    return r;
}

/// Ten tasks: four exposed, split 2 substitute / 1 both / 1 augment.
LabelDataset ten_task_fixture() {
    std::vector<TaskLabelRecord> rows{
        rec("AAA", "T0", 2, Margin::substitute, Channel::rule_based_workflow),
        rec("AAA", "T1", 3, Margin::substitute, Channel::physical_execution),
        rec("AAA", "T2", 2, Margin::both, Channel::inference_scoring),
        rec("AAA", "T3", 3, Margin::augment, Channel::informational_transformation),
        rec("AAA", "T4", 1), rec("AAA", "T5", 1), rec("AAA", "T6", 0),
        rec("AAA", "T7", 0), rec("AAA", "T8", 0), rec("AAA", "T9", 1, Margin::substitute),
    };
    return deduplicate(rows);
}

CountryRegistry registry_of(std::initializer_list<std::tuple<std::string, IncomeGroup, Region>> rows) {
    CountryRegistry reg;
    for (const auto& [iso, g, r] : rows) reg.countries[iso] = CountryContext{iso, iso, g, r, std::nullopt};
    return reg;
}

/// Independent counting oracle: every field recomputed from a single pass
/// over the raw records with no shared helpers.
void expect_matches_oracle(const CountrySummary& s, const std::vector<const TaskLabelRecord*>& recs) {
    double n = 0, exposed = 0, high = 0, sub = 0, aug = 0, both = 0, ai = 0;
    std::array<double, 6> ch{};
    std::array<double, 5> fn{};
    for (const auto* r : recs) {
        n += 1;
        const int lvl = r->exposure.value();
        if (lvl < 2) continue;
        exposed += 1;
        if (lvl == 3) high += 1;
        if (r->margin == Margin::substitute) sub += 1;
        if (r->margin == Margin::augment) aug += 1;
        if (r->margin == Margin::both) both += 1;
        ch[static_cast<int>(r->channel)] += 1;
        if (r->ai_material) {
            ai += 1;
            fn[static_cast<int>(r->ai_function)] += 1;
        }
    }
    EXPECT_EQ(s.n_tasks, n);
    EXPECT_EQ(s.exposed_share, exposed / n);
    EXPECT_EQ(s.high_share, high / n);
    EXPECT_EQ(s.margin_shares_all[0], sub / n);
    EXPECT_EQ(s.margin_shares_all[1], aug / n);
    EXPECT_EQ(s.margin_shares_all[2], both / n);
    const double defined = sub + aug + both;
    if (defined > 0) {
        ASSERT_TRUE(s.margin_shares_within);
        EXPECT_EQ((*s.margin_shares_within)[0], sub / defined);
        EXPECT_EQ((*s.margin_shares_within)[1], aug / defined);
        EXPECT_EQ((*s.margin_shares_within)[2], both / defined);
    } else {
        EXPECT_FALSE(s.margin_shares_within);
    }
    if (exposed > 0) {
        ASSERT_TRUE(s.channel_shares_exposed);
        for (int c = 0; c < 5; ++c) EXPECT_EQ((*s.channel_shares_exposed)[c], ch[c] / exposed);
        EXPECT_EQ(s.n_exposed_channel_none, ch[5]);
        EXPECT_EQ(*s.ai_material_share_exposed, ai / exposed);
    }
    const double with_fn = ai - fn[0];
    if (with_fn > 0) {
        ASSERT_TRUE(s.ai_function_mix);
        for (int f = 0; f < 4; ++f) EXPECT_EQ((*s.ai_function_mix)[f], fn[f + 1] / with_fn);
    }
}

}  // namespace

TEST(CountrySummary, HandCountedFixture) {
    auto s = country_summary(ten_task_fixture(), "AAA");
    EXPECT_EQ(s.n_tasks, 10u);
    EXPECT_DOUBLE_EQ(s.exposed_share, 0.4);
    EXPECT_DOUBLE_EQ(s.high_share, 0.2);
    ASSERT_TRUE(s.margin_shares_within);
    EXPECT_DOUBLE_EQ((*s.margin_shares_within)[0], 0.5);
    EXPECT_DOUBLE_EQ((*s.margin_shares_within)[1], 0.25);
    EXPECT_DOUBLE_EQ((*s.margin_shares_within)[2], 0.25);
    EXPECT_DOUBLE_EQ(s.margin_shares_all[0], 0.2);
    EXPECT_LE(s.high_share, s.exposed_share);
}

TEST(CountrySummary, NothingExposed) {
    auto ds = deduplicate({rec("ZZZ", "T0", 0), rec("ZZZ", "T1", 0)});
    auto s = country_summary(ds, "ZZZ");
    EXPECT_EQ(s.exposed_share, 0.0);
    EXPECT_FALSE(s.margin_shares_within);
    EXPECT_FALSE(s.channel_shares_exposed);
    EXPECT_THROW(polarisation(s), InputError);
}

TEST(CountrySummary, UnknownCountry) { EXPECT_THROW(country_summary(ten_task_fixture(), "QQQ"), InputError); }

TEST(CountrySummary, ExposedUnclearIsCountedButExcludedFromWithinShares) {
    auto ds = deduplicate({rec("AAA", "T0", 2, Margin::substitute), rec("AAA", "T1", 3, Margin::unclear),
                           rec("AAA", "T2", 0)});
    auto s = country_summary(ds, "AAA");
    EXPECT_DOUBLE_EQ(s.exposed_share, 2.0 / 3.0);
    EXPECT_EQ(s.n_exposed_unclear, 1u);
    EXPECT_DOUBLE_EQ((*s.margin_shares_within)[0], 1.0);
}

TEST(CountrySummary, MatchesCountingOracleOnSmallDatasets) {
    std::mt19937_64 rng(2024);
    std::uniform_int_distribution<std::size_t> size(1, 100);
    for (int trial = 0; trial < 200; ++trial) {
        auto ds = gen::random_dataset(rng, 1, size(rng));
        auto recs = ds.country("CAA");
        expect_matches_oracle(country_summary(ds, "CAA"), recs);
    }
}

TEST(CountrySummary, DenominatorIdentities) {
    std::mt19937_64 rng(31);
    for (int trial = 0; trial < 50; ++trial) {
        auto ds = gen::random_dataset(rng, 3, 120);
        for (const auto& s : all_country_summaries(ds)) {
            if (!s.margin_shares_within) continue;
            const double defined_share = static_cast<double>(s.n_margin_defined()) / static_cast<double>(s.n_tasks);
            double within_sum = 0;
            for (int m = 0; m < 3; ++m) {
                EXPECT_NEAR(s.margin_shares_all[m], defined_share * (*s.margin_shares_within)[m], 1e-9);
                within_sum += (*s.margin_shares_within)[m];
            }
            EXPECT_NEAR(within_sum, 1.0, 1e-9);
            double ch = 0;
            for (double v : *s.channel_shares_exposed) ch += v;
            EXPECT_LE(ch, 1.0 + 1e-9);
            if (s.ai_function_mix) {
                double f = 0;
                for (double v : *s.ai_function_mix) f += v;
                EXPECT_NEAR(f, 1.0, 1e-9);
            }
        }
    }
}

TEST(GroupSummary, ArithmeticMeanAndSingleton) {
    std::vector<TaskLabelRecord> rows;
    for (int t = 0; t < 10; ++t) {
        rows.push_back(rec("AAA", gen::task_name(t), t < 2 ? 2 : 0, Margin::substitute));
        rows.push_back(rec("BBB", gen::task_name(t), t < 4 ? 3 : 0, Margin::both));
        rows.push_back(rec("CCC", gen::task_name(t), t < 7 ? 2 : 1, Margin::augment));
    }
    auto ds = deduplicate(rows);
    auto reg = registry_of({{"AAA", IncomeGroup::high, Region::north_america},
                            {"BBB", IncomeGroup::high, Region::north_america},
                            {"CCC", IncomeGroup::low, Region::south_asia}});
    auto groups = group_summary(all_country_summaries(ds), reg, Grouping::income_group);
    ASSERT_EQ(groups.size(), 2u);
    EXPECT_EQ(groups[0].group, "high");
    EXPECT_EQ(groups[0].n_countries, 2u);
    EXPECT_DOUBLE_EQ(*groups[0].mean("exposed_share"), 0.3);
    EXPECT_DOUBLE_EQ(*groups[0].mean("margin_within_substitute"), 0.5);
    EXPECT_EQ(groups[1].group, "low");
    EXPECT_DOUBLE_EQ(*groups[1].mean("exposed_share"), 0.7);
    EXPECT_DOUBLE_EQ(*groups[1].mean("margin_within_augment"), 1.0);
}

TEST(GroupSummary, OrderInvariant) {
    std::mt19937_64 rng(8);
    auto ds = gen::random_dataset(rng, 12, 80);
    CountryRegistry reg;
    for (std::size_t i = 0; i < 12; ++i) {
        auto iso = gen::country_name(i);
        reg.countries[iso] = {iso, iso, static_cast<IncomeGroup>(i % 4), static_cast<Region>(i % 7), std::nullopt};
    }
    auto summaries = all_country_summaries(ds);
    auto ref = group_summary(summaries, reg, Grouping::region);
    for (int t = 0; t < 5; ++t) {
        std::shuffle(summaries.begin(), summaries.end(), rng);
        auto again = group_summary(summaries, reg, Grouping::region);
        ASSERT_EQ(again.size(), ref.size());
        for (std::size_t g = 0; g < ref.size(); ++g) EXPECT_EQ(again[g].means, ref[g].means);
    }
}

TEST(Pathway, States) {
    EXPECT_EQ(pathway_state(rec("A", "t", 1, Margin::both)), PathwayState::not_exposed);
    EXPECT_EQ(pathway_state(rec("A", "t", 3, Margin::both)), PathwayState::both);
    EXPECT_EQ(pathway_state(rec("A", "t", 2, Margin::unclear)), std::nullopt);
}

TEST(Pathway, TransitionIdentityAndHandFixture) {
    PathwayMap a{{"A", PathwayState::not_exposed}, {"B", PathwayState::substitute},
                 {"C", PathwayState::substitute}, {"D", PathwayState::both}};
    auto id = transition_matrix(a, a);
    for (int i = 0; i < 4; ++i) {
        if (!id.shares[i]) continue;
        for (int j = 0; j < 4; ++j) EXPECT_EQ((*id.shares[i])[j], i == j ? 1.0 : 0.0);
    }
    EXPECT_FALSE(id.shares[index_of(PathwayState::augment)]);

    PathwayMap b = a;
    b["C"] = PathwayState::both;
    auto t = transition_matrix(a, b);
    const auto sub = index_of(PathwayState::substitute);
    EXPECT_DOUBLE_EQ((*t.shares[sub])[sub], 0.5);
    EXPECT_DOUBLE_EQ((*t.shares[sub])[index_of(PathwayState::both)], 0.5);
    EXPECT_DOUBLE_EQ((*t.shares[index_of(PathwayState::both)])[index_of(PathwayState::both)], 1.0);
}

TEST(Pathway, TransitionOrderInvarianceAndErrors) {
    std::vector<std::pair<std::string, std::optional<PathwayState>>> items{
        {"A", PathwayState::augment}, {"B", PathwayState::both}, {"C", std::nullopt}, {"D", PathwayState::substitute}};
    PathwayMap a(items.begin(), items.end());
    std::reverse(items.begin(), items.end());
    PathwayMap b(items.begin(), items.end());
    b["A"] = PathwayState::both;
    auto t1 = transition_matrix(a, b);
    EXPECT_EQ(t1.n_excluded_anomalies, 1u);
    std::mt19937_64 rng(1);
    std::shuffle(items.begin(), items.end(), rng);
    PathwayMap a2(items.begin(), items.end());
    a2["A"] = PathwayState::augment;
    a2["B"] = PathwayState::both;
    EXPECT_EQ(transition_matrix(a2, b).counts, t1.counts);
    PathwayMap c = a;
    c.erase("A");
    c["Z"] = PathwayState::both;
    EXPECT_THROW(transition_matrix(a, c), InputError);
}

TEST(Pathway, ModalTieBreak) {
    auto ds = deduplicate({rec("AAA", "T0", 2, Margin::substitute), rec("BBB", "T0", 2, Margin::augment),
                           rec("AAA", "T1", 2, Margin::unclear), rec("BBB", "T1", 0)});
    auto modal = modal_pathways(ds, {"AAA", "BBB"});
    EXPECT_EQ(modal["T0"], PathwayState::augment);  // "augment" < "substitute"
    EXPECT_EQ(modal["T1"], PathwayState::not_exposed);
}

TEST(Polarisation, Formula) {
    auto p = polarisation(MarginShares{0.3, 0.2, 0.5});
    EXPECT_DOUBLE_EQ(p.polarisation, 0.5);
    EXPECT_DOUBLE_EQ(*p.tilt, 0.6);
    auto q = polarisation(MarginShares{0.0, 0.0, 1.0});
    EXPECT_EQ(q.polarisation, 0.0);
    EXPECT_FALSE(q.tilt);
}

TEST(Polarisation, IdentityHoldsForEveryCountry) {
    std::mt19937_64 rng(77);
    for (int trial = 0; trial < 20; ++trial)
        for (const auto& s : all_country_summaries(gen::random_dataset(rng, 6, 60))) {
            if (!s.margin_shares_within) continue;
            auto p = polarisation(s);
            EXPECT_NEAR(p.polarisation + (*s.margin_shares_within)[2], 1.0, 1e-12);
        }
}

TEST(BenchmarkDeviation, Fixtures) {
    auto reg = registry_of({{"AAA", IncomeGroup::low, Region::south_asia},
                            {"BBB", IncomeGroup::high, Region::north_america},
                            {"CCC", IncomeGroup::unclassified, Region::south_asia}});
    const std::string low = "income_group:low", high = "income_group:high";
    auto bench = deduplicate({rec(low, "T0", 1), rec(low, "T1", 2, Margin::both), rec(low, "T2", 3, Margin::both),
                              rec(high, "T0", 1), rec(high, "T1", 1), rec(high, "T2", 2, Margin::both)});
    // AAA: differences {+1, 0, -1}; BBB: {+1, +1, 0}
    auto labels = deduplicate({rec("AAA", "T0", 2, Margin::both), rec("AAA", "T1", 2, Margin::both),
                               rec("AAA", "T2", 2, Margin::both), rec("BBB", "T0", 2, Margin::both),
                               rec("BBB", "T1", 2, Margin::both), rec("BBB", "T2", 2, Margin::both),
                               rec("BBB", "T9", 2, Margin::both)});
    auto dev = benchmark_deviation(labels, bench, reg);
    ASSERT_EQ(dev.size(), 2u);
    EXPECT_DOUBLE_EQ(dev[0].mean_deviation, 0.0);
    EXPECT_NEAR(dev[1].mean_deviation, 2.0 / 3.0, 1e-15);
    EXPECT_EQ(dev[1].n_tasks, 3u);

    LabelDataset self;
    for (const auto& [k, r] : bench.records)
        if (k.first == low) {
            auto c = r;
            c.country = "AAA";
            self.records[key_of(c)] = c;
        }
    EXPECT_EQ(benchmark_deviation(self, bench, reg)[0].mean_deviation, 0.0);

    auto unclassified = deduplicate({rec("CCC", "T0", 1)});
    EXPECT_THROW(benchmark_deviation(unclassified, bench, reg), InputError);
    auto disjoint = deduplicate({rec("AAA", "T7", 1)});
    EXPECT_THROW(benchmark_deviation(disjoint, bench, reg), InputError);
}
