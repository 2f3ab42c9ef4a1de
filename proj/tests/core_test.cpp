#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "atlas/core.hpp"
#include "atlas/ingest.hpp"
#include "generators.hpp"

using namespace atlas;

namespace {

RawRow consistent_row() {
    RawRow row;
    row.fields = {
        {"task_id", "T1"},
        {"country", "KEN"},
        {"exposure_level", "3"},
        {"dominant_channel", "rule_based_workflow"},
        {"substitution_path", "true"},
        {"augmentation_path", "false"},
        {"margin", "substitute"},
        {"ai_materiality", "false"},
        {"dominant_ai_function", "none"},
        {"short_rationale", "Invoice matching is handled by standard software."},
        {"substitution_summary", "ERP matching replaces manual checks."},
        {"augmentation_summary", ""},
    };
    return row;
}

bool has_code(const ValidationResult& v, std::string_view code) {
    for (const auto& x : v.violations)
        if (x.code == code) return true;
    return false;
}

}  // namespace

TEST(ExposureLevel, ExposedThreshold) {
    EXPECT_TRUE(is_exposed(ExposureLevel(2)));
    EXPECT_FALSE(is_exposed(ExposureLevel(0)));
    EXPECT_FALSE(is_exposed(ExposureLevel(1)));
    EXPECT_TRUE(is_exposed(ExposureLevel(3)));
}

TEST(ExposureLevel, BoundedAndOrdered) {
    EXPECT_THROW(ExposureLevel(4), std::out_of_range);
    EXPECT_THROW(ExposureLevel(-1), std::out_of_range);
    for (int a = 0; a < 4; ++a)
        for (int b = 0; b < 4; ++b) EXPECT_EQ(ExposureLevel(a) < ExposureLevel(b), a < b);
}

TEST(ExposureLevel, ExposedCountEqualsLevelTwoPlusThree) {
    std::mt19937_64 rng(7);
    auto ds = gen::random_dataset(rng, 5, 200);
    std::size_t exposed = 0, by_level[4] = {};
    for (const auto& [k, r] : ds.records) {
        exposed += is_exposed(r.exposure);
        ++by_level[r.exposure.value()];
    }
    EXPECT_EQ(exposed, by_level[2] + by_level[3]);
}

TEST(ValidateRecord, ConsistentRecordIsAccepted) {
    auto v = validate_record(consistent_row());
    ASSERT_TRUE(v.ok());
    EXPECT_TRUE(v.violations.empty());
    EXPECT_EQ(v.record->margin, Margin::substitute);
    EXPECT_EQ(v.record->exposure.value(), 3);
}

TEST(ValidateRecord, MarginPathContradiction) {
    auto row = consistent_row();
    row.fields["margin"] = "augment";
    row.fields["augmentation_path"] = "false";
    auto v = validate_record(row);
    EXPECT_FALSE(v.ok());
    EXPECT_TRUE(has_code(v, violation::margin_path_contradiction));
}

TEST(ValidateRecord, BothMarginNeedsBothPaths) {
    auto row = consistent_row();
    row.fields["margin"] = "both";
    EXPECT_TRUE(has_code(validate_record(row), violation::margin_path_contradiction));
    row.fields["augmentation_path"] = "true";
    EXPECT_TRUE(validate_record(row).ok());
}

TEST(ValidateRecord, NonExposedMarginIsNormalized) {
    auto row = consistent_row();
    row.fields["exposure_level"] = "1";
    auto v = validate_record(row);
    ASSERT_TRUE(v.ok());
    EXPECT_EQ(v.record->margin, Margin::unclear);
    EXPECT_EQ(v.record->margin_raw, Margin::substitute);
    ASSERT_EQ(v.notes.size(), 1u);
    EXPECT_NE(v.notes[0].find("normalized"), std::string::npos);
}

TEST(ValidateRecord, EachFailureIsADistinctViolation) {
    auto row = consistent_row();
    row.fields.erase("country");
    row.fields["dominant_channel"] = "Physical Execution";  // not coerced
    row.fields["short_rationale"] = std::string(241, 'x');
    row.fields["dominant_ai_function"] = "state_inference";
    auto v = validate_record(row);
    EXPECT_FALSE(v.ok());
    EXPECT_TRUE(has_code(v, violation::missing_field));
    EXPECT_TRUE(has_code(v, violation::invalid_value));
    EXPECT_TRUE(has_code(v, violation::rationale_too_long));
    EXPECT_TRUE(has_code(v, violation::ai_function_without_materiality));
}

TEST(ValidateRecord, RationaleLimitCountsCharactersNotBytes) {
    auto row = consistent_row();
    std::string s;
    for (int i = 0; i < 240; ++i) s += "\xC3\xA9";  // 240 x U+00E9
    row.fields["short_rationale"] = s;
    EXPECT_TRUE(validate_record(row).ok());
    row.fields["short_rationale"] = s + "e";
    EXPECT_TRUE(has_code(validate_record(row), violation::rationale_too_long));
}

TEST(ValidateRecord, BadLevelAndBooleanSpellingsRejected) {
    for (const char* lvl : {"4", "-1", "2.0", "two", ""}) {
        auto row = consistent_row();
        row.fields["exposure_level"] = lvl;
        EXPECT_TRUE(has_code(validate_record(row), violation::invalid_value)) << lvl;
    }
    auto row = consistent_row();
    row.fields["ai_materiality"] = "1";
    EXPECT_TRUE(has_code(validate_record(row), violation::invalid_value));
}

TEST(ValidateRecord, TaskIdDerivedFromStatement) {
    auto row = consistent_row();
    row.fields.erase("task_id");
    row.fields["task_statement"] = "  Review   invoices for errors ";
    auto v = validate_record(row);
    ASSERT_TRUE(v.ok());
    EXPECT_EQ(v.record->task_id, derive_task_id("review invoices FOR errors"));
    EXPECT_EQ(v.record->task_id.size(), 17u);
}

TEST(ValidateRecord, IdempotentOnNormalizedRecords) {
    std::mt19937_64 rng(11);
    for (int i = 0; i < 500; ++i) {
        auto rec = gen::random_record(rng, "KEN", gen::task_name(i));
        auto first = validate_record(to_raw_row(rec));
        ASSERT_TRUE(first.ok());
        EXPECT_EQ(*first.record, rec);
        auto second = validate_record(to_raw_row(*first.record));
        ASSERT_TRUE(second.ok());
        EXPECT_TRUE(second.violations.empty());
        EXPECT_EQ(*second.record, *first.record);
    }
}

TEST(ValidateRecord, JsonlRoundTripIsBitIdentical) {
    std::mt19937_64 rng(12);
    std::vector<TaskLabelRecord> recs;
    for (int i = 0; i < 200; ++i) recs.push_back(gen::random_record(rng, "PER", gen::task_name(i)));
    recs[0].short_rationale = "quote \" comma , newline \n tab \t unicode \xC3\xA9";
    std::stringstream s1;
    write_jsonl(s1, recs);
    auto loaded = load_labels(s1, Format::jsonl);
    ASSERT_EQ(loaded.records, recs);
    std::stringstream s2;
    write_jsonl(s2, loaded.records);
    EXPECT_EQ(s1.str(), s2.str());
}

TEST(BenchmarkContext, TagsRoundTrip) {
    auto a = BenchmarkContext::context_free();
    auto b = BenchmarkContext::income_group(IncomeGroup::lower_middle);
    auto c = BenchmarkContext::country("NGA");
    for (const auto& ctx : {a, b, c}) EXPECT_EQ(BenchmarkContext::from_tag(ctx.tag()), ctx);
    EXPECT_EQ(b.tag(), "income_group:lower_middle");
    EXPECT_THROW(BenchmarkContext::income_group(IncomeGroup::unclassified), InputError);
    EXPECT_THROW(BenchmarkContext::country("NG"), InputError);
    EXPECT_FALSE(BenchmarkContext::from_tag("income_group:middle"));
}

TEST(Enums, UnknownStringsAreRejected) {
    EXPECT_EQ(parse_enum<Margin>("both"), Margin::both);
    EXPECT_FALSE(parse_enum<Margin>("balanced_both"));
    EXPECT_FALSE(parse_enum<Channel>("physical execution"));
    EXPECT_EQ(parse_income_group("Lower middle income"), IncomeGroup::lower_middle);
    EXPECT_EQ(parse_income_group(""), IncomeGroup::unclassified);
    EXPECT_FALSE(parse_income_group("middle"));
}
