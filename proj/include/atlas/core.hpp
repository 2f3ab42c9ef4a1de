#pragma once

// Domain types shared by every pipeline stage: the five label dimensions, the
// per-(country, task) label record and its validation rules, and the country
// context types.

#include <algorithm>
#include <array>
#include <cctype>
#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "atlas/digest.hpp"

namespace atlas {

/// Malformed or inconsistent input. Maps to CLI exit code 2.
struct InputError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// An internal invariant did not hold. Maps to CLI exit code 3.
struct InvariantError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Enumerations
// ---------------------------------------------------------------------------

enum class Channel : std::uint8_t {
    physical_execution,
    rule_based_workflow,
    planning_control,
    inference_scoring,
    informational_transformation,
    none,
};

enum class Margin : std::uint8_t { substitute, augment, both, unclear };

enum class AiFunction : std::uint8_t {
    none,
    state_inference,
    content_transformation,
    recommendation_decision_support,
    adaptive_control,
};

enum class IncomeGroup : std::uint8_t { low, lower_middle, upper_middle, high, unclassified };

enum class Region : std::uint8_t {
    east_asia_pacific,
    europe_central_asia,
    latin_america_caribbean,
    middle_east_north_africa,
    north_america,
    south_asia,
    sub_saharan_africa,
};

template <class E>
struct EnumNames;

template <>
struct EnumNames<Channel> {
    static constexpr std::array<std::string_view, 6> names{
        "physical_execution", "rule_based_workflow",          "planning_control",
        "inference_scoring",  "informational_transformation", "none"};
};
template <>
struct EnumNames<Margin> {
    static constexpr std::array<std::string_view, 4> names{"substitute", "augment", "both", "unclear"};
};
template <>
struct EnumNames<AiFunction> {
    static constexpr std::array<std::string_view, 5> names{
        "none", "state_inference", "content_transformation", "recommendation_decision_support",
        "adaptive_control"};
};
template <>
struct EnumNames<IncomeGroup> {
    static constexpr std::array<std::string_view, 5> names{"low", "lower_middle", "upper_middle", "high",
                                                           "unclassified"};
};
template <>
struct EnumNames<Region> {
    static constexpr std::array<std::string_view, 7> names{
        "East Asia & Pacific",        "Europe & Central Asia", "Latin America & Caribbean",
        "Middle East & North Africa", "North America",         "South Asia",
        "Sub-Saharan Africa"};
};

template <class E>
constexpr std::size_t enum_count = EnumNames<E>::names.size();

template <class E>
constexpr std::string_view to_string(E e) {
    return EnumNames<E>::names[static_cast<std::size_t>(e)];
}

template <class E>
constexpr std::size_t index_of(E e) {
    return static_cast<std::size_t>(e);
}

/// Exact canonical-name lookup. Unknown strings yield nullopt, never a guess.
template <class E>
std::optional<E> parse_enum(std::string_view s) {
    const auto& names = EnumNames<E>::names;
    for (std::size_t i = 0; i < names.size(); ++i)
        if (names[i] == s) return static_cast<E>(i);
    return std::nullopt;
}

template <class E>
constexpr std::array<E, enum_count<E>> all_values() {
    std::array<E, enum_count<E>> out{};
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<E>(i);
    return out;
}

/// Accepts canonical names and the World Bank long labels ("Lower middle income").
inline std::optional<IncomeGroup> parse_income_group(std::string_view s) {
    if (s.empty()) return IncomeGroup::unclassified;
    if (auto g = parse_enum<IncomeGroup>(s)) return g;
    static constexpr std::array<std::pair<std::string_view, IncomeGroup>, 4> wb{{
        {"Low income", IncomeGroup::low},
        {"Lower middle income", IncomeGroup::lower_middle},
        {"Upper middle income", IncomeGroup::upper_middle},
        {"High income", IncomeGroup::high},
    }};
    for (auto [label, g] : wb)
        if (label == s) return g;
    return std::nullopt;
}

// ---------------------------------------------------------------------------
// Exposure scale
// ---------------------------------------------------------------------------

class ExposureLevel {
public:
    constexpr ExposureLevel() = default;
    constexpr explicit ExposureLevel(int v) : value_(static_cast<std::uint8_t>(v)) {
        if (v < 0 || v > 3) throw std::out_of_range("exposure level outside [0,3]");
    }
    constexpr int value() const { return value_; }
    constexpr auto operator<=>(const ExposureLevel&) const = default;

private:
    std::uint8_t value_ = 0;
};

/// Economically exposed: level 2 or 3.
constexpr bool is_exposed(ExposureLevel level) { return level.value() >= 2; }
constexpr bool is_high(ExposureLevel level) { return level.value() == 3; }

// ---------------------------------------------------------------------------
// Label record
// ---------------------------------------------------------------------------

inline constexpr std::size_t kMaxRationaleChars = 240;

struct TaskLabelRecord {
    std::string task_id;
    std::string country;  // ISO3 or a benchmark-context tag
    ExposureLevel exposure;
    Channel channel = Channel::none;
    bool substitution_path = false;
    bool augmentation_path = false;
    Margin margin = Margin::unclear;      // normalized: unclear whenever exposure < 2
    Margin margin_raw = Margin::unclear;  // as emitted by the classifier
    bool ai_material = false;
    AiFunction ai_function = AiFunction::none;
    std::string short_rationale;
    std::string substitution_summary;
    std::string augmentation_summary;

    bool operator==(const TaskLabelRecord&) const = default;
};

using RecordKey = std::pair<std::string, std::string>;  // (country, task_id)

inline RecordKey key_of(const TaskLabelRecord& r) { return {r.country, r.task_id}; }

/// One parsed input row before schema validation. Values are textual; JSON
/// booleans and integers arrive as their literal spelling.
struct RawRow {
    std::size_t line = 0;
    std::map<std::string, std::string> fields;
};

namespace field {
inline constexpr std::string_view task_id = "task_id";
inline constexpr std::string_view country = "country";
inline constexpr std::string_view exposure_level = "exposure_level";
inline constexpr std::string_view dominant_channel = "dominant_channel";
inline constexpr std::string_view substitution_path = "substitution_path";
inline constexpr std::string_view augmentation_path = "augmentation_path";
inline constexpr std::string_view margin = "margin";
inline constexpr std::string_view margin_raw = "margin_raw";
inline constexpr std::string_view ai_materiality = "ai_materiality";
inline constexpr std::string_view dominant_ai_function = "dominant_ai_function";
inline constexpr std::string_view short_rationale = "short_rationale";
inline constexpr std::string_view substitution_summary = "substitution_summary";
inline constexpr std::string_view augmentation_summary = "augmentation_summary";
inline constexpr std::string_view task_statement = "task_statement";
}  // namespace field

/// Column order used by every record serializer.
inline constexpr std::array<std::string_view, 12> kRecordColumns{
    field::task_id,        field::country,           field::exposure_level,
    field::dominant_channel, field::substitution_path, field::augmentation_path,
    field::margin,         field::ai_materiality,    field::dominant_ai_function,
    field::short_rationale, field::substitution_summary, field::augmentation_summary};

namespace violation {
inline constexpr std::string_view missing_field = "missing_field";
inline constexpr std::string_view invalid_value = "invalid_value";
inline constexpr std::string_view rationale_too_long = "rationale_too_long";
inline constexpr std::string_view margin_path_contradiction = "margin_path_contradiction";
inline constexpr std::string_view ai_function_without_materiality = "ai_function_without_materiality";
inline constexpr std::string_view malformed_row = "malformed_row";
}  // namespace violation

struct Violation {
    std::string code;
    std::string message;
    bool operator==(const Violation&) const = default;
};

struct ValidationResult {
    std::optional<TaskLabelRecord> record;
    std::vector<Violation> violations;
    std::vector<std::string> notes;

    bool ok() const { return record.has_value(); }
};

/// Number of Unicode code points in a UTF-8 string.
inline std::size_t utf8_length(std::string_view s) {
    std::size_t n = 0;
    for (unsigned char c : s)
        if ((c & 0xC0) != 0x80) ++n;
    return n;
}

/// Lower-cased, whitespace-collapsed form of a task statement.
inline std::string normalize_statement(std::string_view text) {
    std::string out;
    bool pending_space = false;
    for (unsigned char c : text) {
        if (std::isspace(c)) {
            pending_space = !out.empty();
            continue;
        }
        if (pending_space) out.push_back(' ');
        pending_space = false;
        out.push_back(static_cast<char>(std::tolower(c)));
    }
    return out;
}

/// Stable id for a task that arrives without one.
inline std::string derive_task_id(std::string_view statement) {
    return "t" + sha256_hex(normalize_statement(statement)).substr(0, 16);
}

namespace detail {

inline std::optional<bool> parse_bool(std::string_view s) {
    if (s == "true") return true;
    if (s == "false") return false;
    return std::nullopt;
}

inline std::optional<int> parse_level(std::string_view s) {
    if (s.size() != 1 || s[0] < '0' || s[0] > '3') return std::nullopt;
    return s[0] - '0';
}

inline bool margin_requires_substitution(Margin m) { return m == Margin::substitute || m == Margin::both; }
inline bool margin_requires_augmentation(Margin m) { return m == Margin::augment || m == Margin::both; }

}  // namespace detail

/// Checks one raw row against the classifier schema and normalizes it.
///
/// Each failed rule produces its own violation. On success the margin of a
/// non-exposed record is normalized to unclear; the emitted value stays in
/// margin_raw. Feeding a serialized normalized record back in reproduces it.
inline ValidationResult validate_record(const RawRow& raw) {
    ValidationResult result;
    auto& v = result.violations;
    const auto get = [&](std::string_view name) -> const std::string* {
        auto it = raw.fields.find(std::string(name));
        return it == raw.fields.end() ? nullptr : &it->second;
    };
    const auto require = [&](std::string_view name) -> const std::string* {
        const std::string* s = get(name);
        if (!s) v.push_back({std::string(violation::missing_field), "missing field '" + std::string(name) + "'"});
        return s;
    };
    const auto bad = [&](std::string_view name, const std::string& value) {
        v.push_back({std::string(violation::invalid_value),
                     "field '" + std::string(name) + "' has invalid value '" + value + "'"});
    };

    TaskLabelRecord rec;

    if (const auto* id = get(field::task_id); id && !id->empty()) {
        rec.task_id = *id;
    } else if (const auto* stmt = get(field::task_statement); stmt && !stmt->empty()) {
        rec.task_id = derive_task_id(*stmt);
        result.notes.push_back("task_id derived from task_statement");
    } else {
        v.push_back({std::string(violation::missing_field), "missing field 'task_id'"});
    }

    if (const auto* c = require(field::country)) {
        if (c->empty()) bad(field::country, *c);
        rec.country = *c;
    }

    if (const auto* s = require(field::exposure_level)) {
        if (auto lvl = detail::parse_level(*s))
            rec.exposure = ExposureLevel(*lvl);
        else
            bad(field::exposure_level, *s);
    }

    const auto parse_into = [&]<class E>(std::string_view name, E& out) {
        if (const auto* s = require(name)) {
            if (auto e = parse_enum<E>(*s))
                out = *e;
            else
                bad(name, *s);
        }
    };
    const auto parse_flag = [&](std::string_view name, bool& out) {
        if (const auto* s = require(name)) {
            if (auto b = detail::parse_bool(*s))
                out = *b;
            else
                bad(name, *s);
        }
    };

    parse_into(field::dominant_channel, rec.channel);
    parse_flag(field::substitution_path, rec.substitution_path);
    parse_flag(field::augmentation_path, rec.augmentation_path);
    parse_into(field::margin, rec.margin);
    parse_flag(field::ai_materiality, rec.ai_material);
    parse_into(field::dominant_ai_function, rec.ai_function);

    rec.margin_raw = rec.margin;
    if (const auto* s = get(field::margin_raw)) {
        if (auto m = parse_enum<Margin>(*s))
            rec.margin_raw = *m;
        else
            bad(field::margin_raw, *s);
    }

    const auto text = [&](std::string_view name, std::string& out) {
        if (const auto* s = require(name)) {
            if (utf8_length(*s) > kMaxRationaleChars)
                v.push_back({std::string(violation::rationale_too_long),
                             "field '" + std::string(name) + "' exceeds 240 characters"});
            out = *s;
        }
    };
    text(field::short_rationale, rec.short_rationale);
    text(field::substitution_summary, rec.substitution_summary);
    text(field::augmentation_summary, rec.augmentation_summary);

    // Path flags are checked against the margin the classifier actually emitted.
    if ((detail::margin_requires_substitution(rec.margin_raw) && !rec.substitution_path) ||
        (detail::margin_requires_augmentation(rec.margin_raw) && !rec.augmentation_path)) {
        v.push_back({std::string(violation::margin_path_contradiction),
                     "margin '" + std::string(to_string(rec.margin_raw)) + "' contradicts path flags"});
    }
    if (!rec.ai_material && rec.ai_function != AiFunction::none) {
        v.push_back({std::string(violation::ai_function_without_materiality),
                     "dominant_ai_function set while ai_materiality is false"});
    }

    if (!v.empty()) return result;

    if (!is_exposed(rec.exposure) && rec.margin != Margin::unclear) {
        result.notes.push_back("margin '" + std::string(to_string(rec.margin)) +
                               "' normalized to unclear (exposure below 2)");
        rec.margin = Margin::unclear;
    }
    result.record = std::move(rec);
    return result;
}

/// Field map that validate_record turns back into the same record.
inline RawRow to_raw_row(const TaskLabelRecord& r) {
    RawRow row;
    auto& f = row.fields;
    f[std::string(field::task_id)] = r.task_id;
    f[std::string(field::country)] = r.country;
    f[std::string(field::exposure_level)] = std::to_string(r.exposure.value());
    f[std::string(field::dominant_channel)] = std::string(to_string(r.channel));
    f[std::string(field::substitution_path)] = r.substitution_path ? "true" : "false";
    f[std::string(field::augmentation_path)] = r.augmentation_path ? "true" : "false";
    f[std::string(field::margin)] = std::string(to_string(r.margin));
    if (r.margin_raw != r.margin) f[std::string(field::margin_raw)] = std::string(to_string(r.margin_raw));
    f[std::string(field::ai_materiality)] = r.ai_material ? "true" : "false";
    f[std::string(field::dominant_ai_function)] = std::string(to_string(r.ai_function));
    f[std::string(field::short_rationale)] = r.short_rationale;
    f[std::string(field::substitution_summary)] = r.substitution_summary;
    f[std::string(field::augmentation_summary)] = r.augmentation_summary;
    return row;
}

// ---------------------------------------------------------------------------
// Country context
// ---------------------------------------------------------------------------

struct CountryContext {
    std::string iso3;
    std::string name;
    IncomeGroup income_group = IncomeGroup::unclassified;
    Region region = Region::east_asia_pacific;
    std::optional<double> gdp_per_capita;

    bool operator==(const CountryContext&) const = default;
};

/// The three conditioning levels of the benchmark ladder.
class BenchmarkContext {
public:
    struct ContextFree {
        bool operator==(const ContextFree&) const = default;
    };
    struct Country {
        std::string iso3;
        bool operator==(const Country&) const = default;
    };
    using Kind = std::variant<ContextFree, IncomeGroup, Country>;

    static BenchmarkContext context_free() { return BenchmarkContext(ContextFree{}); }
    static BenchmarkContext income_group(IncomeGroup g) {
        if (g == IncomeGroup::unclassified) throw InputError("benchmark income group must be classified");
        return BenchmarkContext(g);
    }
    static BenchmarkContext country(std::string iso3) {
        if (iso3.size() != 3) throw InputError("benchmark country must be an ISO3 code: '" + iso3 + "'");
        return BenchmarkContext(Country{std::move(iso3)});
    }

    const Kind& kind() const { return kind_; }

    /// Value stored in TaskLabelRecord::country for benchmark runs.
    std::string tag() const {
        if (std::holds_alternative<ContextFree>(kind_)) return "context_free";
        if (const auto* g = std::get_if<IncomeGroup>(&kind_)) return "income_group:" + std::string(to_string(*g));
        return std::get<Country>(kind_).iso3;
    }

    static std::optional<BenchmarkContext> from_tag(std::string_view tag) {
        if (tag == "context_free") return context_free();
        constexpr std::string_view prefix = "income_group:";
        if (tag.starts_with(prefix)) {
            auto g = parse_enum<IncomeGroup>(tag.substr(prefix.size()));
            if (!g || *g == IncomeGroup::unclassified) return std::nullopt;
            return income_group(*g);
        }
        if (tag.size() == 3) return country(std::string(tag));
        return std::nullopt;
    }

    bool operator==(const BenchmarkContext&) const = default;

private:
    explicit BenchmarkContext(Kind k) : kind_(std::move(k)) {}
    Kind kind_;
};

struct CovariateRow {
    std::string iso3;
    std::optional<double> log_gdp_pc;
    std::optional<double> human_capital;
    std::optional<double> years_schooling;
    std::optional<double> capital_intensity;
    std::optional<double> investment_gdp;
    std::optional<double> gov_effectiveness;
    std::optional<double> regulatory_quality;
    std::optional<double> internet_users;
    std::optional<double> goods_trade_gdp;

    bool operator==(const CovariateRow&) const = default;
};

}  // namespace atlas
