#pragma once

// File ingestion: label rows (JSONL or CSV), the country registry, long-format
// covariates and sex-by-cell employment counts. Also the (country, task)
// deduplication that produces the canonical label dataset.

#include <algorithm>
#include <array>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include <json.hpp>

#include "atlas/core.hpp"
#include "atlas/csv.hpp"

namespace atlas {

enum class Format { jsonl, csv };

inline Format parse_format(std::string_view s) {
    if (s == "jsonl") return Format::jsonl;
    if (s == "csv") return Format::csv;
    throw InputError("unknown format tag '" + std::string(s) + "'");
}

struct RowViolation {
    std::size_t line = 0;
    std::string code;
    std::string message;
};

struct ParseReport {
    std::size_t rows_read = 0;
    std::size_t rows_accepted = 0;
    std::size_t rows_rejected = 0;
    std::vector<RowViolation> violations;

    void reject(std::size_t line, std::string code, std::string message) {
        --rows_accepted;
        ++rows_rejected;
        violations.push_back({line, std::move(code), std::move(message)});
    }
};

struct ParsedRows {
    std::vector<RawRow> rows;
    ParseReport report;
};

inline bool valid_utf8(std::string_view s) {
    std::size_t i = 0;
    while (i < s.size()) {
        const auto c = static_cast<unsigned char>(s[i]);
        std::size_t extra;
        if (c < 0x80) extra = 0;
        else if ((c & 0xE0) == 0xC0 && c >= 0xC2) extra = 1;
        else if ((c & 0xF0) == 0xE0) extra = 2;
        else if ((c & 0xF8) == 0xF0 && c <= 0xF4) extra = 3;
        else return false;
        if (i + extra >= s.size() && extra > 0) return false;
        for (std::size_t k = 1; k <= extra; ++k)
            if ((static_cast<unsigned char>(s[i + k]) & 0xC0) != 0x80) return false;
        i += extra + 1;
    }
    return true;
}

namespace detail {

inline std::optional<std::string> json_scalar_text(const nlohmann::json& v) {
    if (v.is_null()) return std::nullopt;
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    return v.dump();
}

inline void parse_jsonl(std::istream& in, ParsedRows& out) {
    std::string line;
    std::size_t lineno = 0;
    bool preamble = true;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (preamble && line.starts_with('#')) continue;  // provenance block
        preamble = false;
        auto& rep = out.report;
        ++rep.rows_read;
        ++rep.rows_accepted;
        if (!valid_utf8(line)) {
            rep.reject(lineno, "invalid_utf8", "line is not valid UTF-8");
            continue;
        }
        auto doc = nlohmann::json::parse(line, nullptr, /*allow_exceptions=*/false);
        if (doc.is_discarded() || !doc.is_object()) {
            rep.reject(lineno, std::string(violation::malformed_row), "line is not a JSON object");
            continue;
        }
        RawRow row;
        row.line = lineno;
        for (auto it = doc.begin(); it != doc.end(); ++it)
            if (auto text = json_scalar_text(it.value())) row.fields.emplace(it.key(), std::move(*text));
        out.rows.push_back(std::move(row));
    }
}

inline void parse_csv_rows(std::istream& in, ParsedRows& out) {
    std::size_t skipped = 0;
    for (std::string discard; in.peek() == '#'; ++skipped) std::getline(in, discard);
    csv::Reader reader(in, skipped + 1);
    auto header = reader.next();
    if (!header) return;
    const auto& cols = header->cells;
    auto& rep = out.report;
    for (;;) {
        std::optional<csv::Record> rec;
        std::size_t start = reader.line();
        try {
            rec = reader.next();
        } catch (const InputError& e) {
            ++rep.rows_read;
            ++rep.rows_accepted;
            rep.reject(start, std::string(violation::malformed_row), e.what());
            break;
        }
        if (!rec) break;
        if (csv::is_blank(*rec)) continue;
        ++rep.rows_read;
        ++rep.rows_accepted;
        if (rec->cells.size() != cols.size()) {
            rep.reject(rec->line, std::string(violation::malformed_row),
                       "expected " + std::to_string(cols.size()) + " cells, got " + std::to_string(rec->cells.size()));
            continue;
        }
        bool utf8_ok = true;
        RawRow row;
        row.line = rec->line;
        for (std::size_t i = 0; i < cols.size(); ++i) {
            utf8_ok = utf8_ok && valid_utf8(rec->cells[i]);
            // Optional columns left empty are absent, not empty strings.
            if (rec->cells[i].empty() && (cols[i] == field::margin_raw || cols[i] == field::task_statement)) continue;
            row.fields.emplace(cols[i], std::move(rec->cells[i]));
        }
        if (!utf8_ok) {
            rep.reject(rec->line, "invalid_utf8", "row is not valid UTF-8");
            continue;
        }
        out.rows.push_back(std::move(row));
    }
}

}  // namespace detail

/// Syntactic parse. Malformed rows are reported by line and never abort.
inline ParsedRows parse_labels(std::istream& in, Format format) {
    if (!in) throw InputError("label stream is not readable");
    ParsedRows out;
    if (format == Format::jsonl)
        detail::parse_jsonl(in, out);
    else
        detail::parse_csv_rows(in, out);
    if (in.bad()) throw InputError("read error on label stream");
    return out;
}

struct LoadedLabels {
    std::vector<TaskLabelRecord> records;
    ParseReport report;
    std::size_t normalized = 0;
};

/// parse_labels followed by schema validation of each row.
inline LoadedLabels load_labels(std::istream& in, Format format) {
    auto parsed = parse_labels(in, format);
    LoadedLabels out;
    out.report = std::move(parsed.report);
    for (const auto& row : parsed.rows) {
        auto v = validate_record(row);
        if (!v.ok()) {
            for (const auto& viol : v.violations) {
                out.report.violations.push_back({row.line, viol.code, viol.message});
            }
            --out.report.rows_accepted;
            ++out.report.rows_rejected;
            continue;
        }
        if (v.record->margin != v.record->margin_raw) ++out.normalized;
        out.records.push_back(std::move(*v.record));
    }
    std::stable_sort(out.report.violations.begin(), out.report.violations.end(),
                     [](const RowViolation& a, const RowViolation& b) { return a.line < b.line; });
    return out;
}

// ---------------------------------------------------------------------------
// Record serialization
// ---------------------------------------------------------------------------

inline nlohmann::ordered_json to_json(const TaskLabelRecord& r) {
    nlohmann::ordered_json j;
    j[field::task_id] = r.task_id;
    j[field::country] = r.country;
    j[field::exposure_level] = r.exposure.value();
    j[field::dominant_channel] = to_string(r.channel);
    j[field::substitution_path] = r.substitution_path;
    j[field::augmentation_path] = r.augmentation_path;
    j[field::margin] = to_string(r.margin);
    if (r.margin_raw != r.margin) j[field::margin_raw] = to_string(r.margin_raw);
    j[field::ai_materiality] = r.ai_material;
    j[field::dominant_ai_function] = to_string(r.ai_function);
    j[field::short_rationale] = r.short_rationale;
    j[field::substitution_summary] = r.substitution_summary;
    j[field::augmentation_summary] = r.augmentation_summary;
    return j;
}

template <class Range>
void write_jsonl(std::ostream& out, const Range& records) {
    for (const TaskLabelRecord& r : records) out << to_json(r).dump() << '\n';
}

template <class Range>
void write_labels_csv(std::ostream& out, const Range& records) {
    std::vector<std::string> header(kRecordColumns.begin(), kRecordColumns.end());
    header.emplace_back(field::margin_raw);
    csv::write_row(out, header);
    for (const TaskLabelRecord& r : records) {
        auto raw = to_raw_row(r);
        std::vector<std::string> cells;
        for (const auto& h : header) cells.push_back(raw.fields[h]);
        csv::write_row(out, cells);
    }
}

// ---------------------------------------------------------------------------
// Deduplication
// ---------------------------------------------------------------------------

/// One record per (country, task_id), ordered by key.
struct LabelDataset {
    std::map<RecordKey, TaskLabelRecord> records;
    std::vector<std::string> provenance;  // source digests

    std::size_t size() const { return records.size(); }
    bool empty() const { return records.empty(); }

    /// Records for one country, in task_id order.
    std::vector<const TaskLabelRecord*> country(const std::string& iso3) const {
        std::vector<const TaskLabelRecord*> out;
        for (auto it = records.lower_bound({iso3, std::string()}); it != records.end() && it->first.first == iso3; ++it)
            out.push_back(&it->second);
        return out;
    }

    std::vector<std::string> countries() const {
        std::vector<std::string> out;
        for (const auto& [k, r] : records)
            if (out.empty() || out.back() != k.first) out.push_back(k.first);
        return out;
    }

    const TaskLabelRecord* find(const std::string& iso3, const std::string& task_id) const {
        auto it = records.find({iso3, task_id});
        return it == records.end() ? nullptr : &it->second;
    }

    std::vector<TaskLabelRecord> values() const {
        std::vector<TaskLabelRecord> out;
        out.reserve(records.size());
        for (const auto& [k, r] : records) out.push_back(r);
        return out;
    }
};

/// Per-key field counts. merge() is associative and commutative, so any
/// partition of the input rows reduces to the same record.
class RecordAccumulator {
public:
    void add(const TaskLabelRecord& r) {
        key_ = key_of(r);
        ++exposure_[r.exposure.value()];
        ++channel_[std::string(to_string(r.channel))];
        ++margin_raw_[std::string(to_string(r.margin_raw))];
        ++sub_[r.substitution_path ? "true" : "false"];
        ++aug_[r.augmentation_path ? "true" : "false"];
        ++ai_[r.ai_material ? "true" : "false"];
        ++ai_fn_[std::string(to_string(r.ai_function))];
        ++rationale_[r.short_rationale];
        ++sub_summary_[r.substitution_summary];
        ++aug_summary_[r.augmentation_summary];
    }

    void merge(const RecordAccumulator& o) {
        key_ = o.key_;
        const auto add_all = [](auto& dst, const auto& src) {
            for (const auto& [k, n] : src) dst[k] += n;
        };
        add_all(exposure_, o.exposure_);
        add_all(channel_, o.channel_);
        add_all(margin_raw_, o.margin_raw_);
        add_all(sub_, o.sub_);
        add_all(aug_, o.aug_);
        add_all(ai_, o.ai_);
        add_all(ai_fn_, o.ai_fn_);
        add_all(rationale_, o.rationale_);
        add_all(sub_summary_, o.sub_summary_);
        add_all(aug_summary_, o.aug_summary_);
    }

    /// Field-wise mode. Ties: lowest exposure level; otherwise the
    /// lexicographically smallest canonical spelling. The modal record is then
    /// made consistent: path flags implied by the modal margin are set, and a
    /// non-material record carries no AI function.
    TaskLabelRecord resolve() const {
        TaskLabelRecord r;
        r.country = key_.first;
        r.task_id = key_.second;
        r.exposure = ExposureLevel(mode(exposure_));
        r.channel = *parse_enum<Channel>(mode(channel_));
        r.margin_raw = *parse_enum<Margin>(mode(margin_raw_));
        r.margin = is_exposed(r.exposure) ? r.margin_raw : Margin::unclear;
        r.substitution_path = mode(sub_) == "true" || detail::margin_requires_substitution(r.margin_raw);
        r.augmentation_path = mode(aug_) == "true" || detail::margin_requires_augmentation(r.margin_raw);
        r.ai_material = mode(ai_) == "true";
        r.ai_function = r.ai_material ? *parse_enum<AiFunction>(mode(ai_fn_)) : AiFunction::none;
        r.short_rationale = mode(rationale_);
        r.substitution_summary = mode(sub_summary_);
        r.augmentation_summary = mode(aug_summary_);
        return r;
    }

private:
    // std::map iterates in ascending key order and only a strictly larger
    // count replaces the incumbent, which implements the smallest-key tie rule.
    template <class K>
    static K mode(const std::map<K, std::size_t>& counts) {
        const K* best = nullptr;
        std::size_t best_n = 0;
        for (const auto& [k, n] : counts)
            if (n > best_n) {
                best = &k;
                best_n = n;
            }
        return *best;
    }

    RecordKey key_;
    std::map<int, std::size_t> exposure_;
    std::map<std::string, std::size_t> channel_, margin_raw_, sub_, aug_, ai_, ai_fn_;
    std::map<std::string, std::size_t> rationale_, sub_summary_, aug_summary_;
};

inline LabelDataset deduplicate(const std::vector<TaskLabelRecord>& rows) {
    std::map<RecordKey, RecordAccumulator> acc;
    for (const auto& r : rows) acc[key_of(r)].add(r);
    LabelDataset out;
    for (const auto& [k, a] : acc) out.records.emplace(k, a.resolve());
    return out;
}

// ---------------------------------------------------------------------------
// Country registry
// ---------------------------------------------------------------------------

struct CountryRegistry {
    std::map<std::string, CountryContext> countries;

    std::size_t size() const { return countries.size(); }
    const CountryContext* find(const std::string& iso3) const {
        auto it = countries.find(iso3);
        return it == countries.end() ? nullptr : &it->second;
    }
    const CountryContext& at(const std::string& iso3) const {
        if (const auto* c = find(iso3)) return *c;
        throw InputError("country '" + iso3 + "' is not in the registry");
    }
    std::size_t classified() const {
        return static_cast<std::size_t>(std::count_if(countries.begin(), countries.end(), [](const auto& kv) {
            return kv.second.income_group != IncomeGroup::unclassified;
        }));
    }
};

/// Columns: iso3, name, income_group, region, optional gdp_per_capita.
inline CountryRegistry load_country_registry(std::istream& in) {
    const auto t = csv::read_table(in);
    CountryRegistry reg;
    if (t.header.empty()) return reg;
    const auto c_iso = t.require_column("iso3");
    const auto c_name = t.require_column("name");
    const auto c_inc = t.require_column("income_group");
    const auto c_reg = t.require_column("region");
    const auto c_gdp = t.column("gdp_per_capita");
    for (const auto& row : t.rows) {
        CountryContext c;
        c.iso3 = row.cells[c_iso];
        if (c.iso3.size() != 3) throw InputError("registry line " + std::to_string(row.line) + ": bad iso3 '" + c.iso3 + "'");
        c.name = row.cells[c_name];
        auto g = parse_income_group(row.cells[c_inc]);
        if (!g) throw InputError("registry line " + std::to_string(row.line) + ": unknown income group '" + row.cells[c_inc] + "'");
        c.income_group = *g;
        auto r = parse_enum<Region>(row.cells[c_reg]);
        if (!r) throw InputError("registry line " + std::to_string(row.line) + ": unknown region '" + row.cells[c_reg] + "'");
        c.region = *r;
        if (c_gdp && !row.cells[*c_gdp].empty()) c.gdp_per_capita = csv::parse_double(row.cells[*c_gdp], row.line, "gdp_per_capita");
        if (!reg.countries.emplace(c.iso3, c).second) throw InputError("registry: duplicate iso3 '" + c.iso3 + "'");
    }
    return reg;
}

// ---------------------------------------------------------------------------
// Covariates
// ---------------------------------------------------------------------------

struct YearWindow {
    int first = 2018;
    int last = 2024;
};

struct CovariateRule {
    std::string_view name;
    std::optional<double> CovariateRow::*member;
    std::optional<int> fixed_year;  // nullopt: latest non-missing inside the window
    double lo;
    double hi;
};

inline constexpr double kUnbounded = 1e300;

inline const std::array<CovariateRule, 9>& covariate_rules() {
    static const std::array<CovariateRule, 9> rules{{
        {"log_gdp_pc", &CovariateRow::log_gdp_pc, 2024, -kUnbounded, kUnbounded},
        {"human_capital", &CovariateRow::human_capital, 2019, 0.0, kUnbounded},
        {"years_schooling", &CovariateRow::years_schooling, 2015, 0.0, kUnbounded},
        {"capital_intensity", &CovariateRow::capital_intensity, 2019, -kUnbounded, kUnbounded},
        {"investment_gdp", &CovariateRow::investment_gdp, std::nullopt, 0.0, 100.0},
        {"gov_effectiveness", &CovariateRow::gov_effectiveness, 2024, 0.0, 100.0},
        {"regulatory_quality", &CovariateRow::regulatory_quality, 2024, 0.0, 100.0},
        {"internet_users", &CovariateRow::internet_users, std::nullopt, 0.0, 100.0},
        // Merchandise trade can exceed GDP, so only the lower bound applies.
        {"goods_trade_gdp", &CovariateRow::goods_trade_gdp, 2023, 0.0, kUnbounded},
    }};
    return rules;
}

using CovariateTable = std::map<std::string, CovariateRow>;

/// Long format (iso3, variable, year, value). Fixed-year variables take exactly
/// that year; the others take the latest non-missing year inside `window`.
inline CovariateTable load_covariates(std::istream& in, YearWindow window = {}) {
    const auto t = csv::read_table(in);
    CovariateTable out;
    if (t.header.empty()) return out;
    const auto c_iso = t.require_column("iso3");
    const auto c_var = t.require_column("variable");
    const auto c_year = t.require_column("year");
    const auto c_val = t.require_column("value");
    // (iso3, rule index) -> (year, value) best so far
    std::map<std::pair<std::string, std::size_t>, std::pair<int, double>> best;
    const auto& rules = covariate_rules();
    for (const auto& row : t.rows) {
        const auto& iso = row.cells[c_iso];
        out[iso].iso3 = iso;
        const auto& var = row.cells[c_var];
        auto rit = std::find_if(rules.begin(), rules.end(), [&](const CovariateRule& r) { return r.name == var; });
        if (rit == rules.end()) throw InputError("covariates line " + std::to_string(row.line) + ": unknown variable '" + var + "'");
        if (row.cells[c_val].empty()) continue;
        const int year = static_cast<int>(csv::parse_double(row.cells[c_year], row.line, "year"));
        const double value = csv::parse_double(row.cells[c_val], row.line, "value");
        if (value < rit->lo || value > rit->hi)
            throw InputError("covariates line " + std::to_string(row.line) + ": " + var + " value out of bounds");
        const bool eligible = rit->fixed_year ? year == *rit->fixed_year : (year >= window.first && year <= window.last);
        if (!eligible) continue;
        const auto key = std::make_pair(iso, static_cast<std::size_t>(rit - rules.begin()));
        auto [it, inserted] = best.emplace(key, std::make_pair(year, value));
        if (!inserted && year > it->second.first) it->second = {year, value};
    }
    for (const auto& [key, yv] : best) out[key.first].*(rules[key.second].member) = yv.second;
    return out;
}

inline bool complete_case(const CovariateRow& row) {
    for (const auto& rule : covariate_rules())
        if (!(row.*(rule.member))) return false;
    return true;
}

// ---------------------------------------------------------------------------
// Employment counts
// ---------------------------------------------------------------------------

enum class Sex : std::uint8_t { total, female, male };

template <>
struct EnumNames<Sex> {
    static constexpr std::array<std::string_view, 3> names{"total", "female", "male"};
};

struct EmploymentRow {
    std::string iso3;
    int year = 0;
    Sex sex = Sex::total;
    std::string cell_id;
    double count = 0.0;
};

/// Raw counts keyed by (iso3, year, sex, cell).
struct EmploymentTable {
    using Key = std::tuple<std::string, int, Sex, std::string>;
    std::map<Key, double> counts;

    void add(const EmploymentRow& r) {
        if (!(r.count >= 0.0)) throw InputError("employment: negative count for " + r.iso3 + "/" + r.cell_id);
        if (!counts.emplace(Key{r.iso3, r.year, r.sex, r.cell_id}, r.count).second)
            throw InputError("employment: duplicate row " + r.iso3 + " " + std::to_string(r.year) + " " +
                             std::string(to_string(r.sex)) + " " + r.cell_id);
    }
    std::size_t size() const { return counts.size(); }
};

/// Columns: iso3, year, sex, cell_id, count.
inline EmploymentTable load_employment(std::istream& in) {
    const auto t = csv::read_table(in);
    EmploymentTable out;
    if (t.header.empty()) return out;
    const auto c_iso = t.require_column("iso3");
    const auto c_year = t.require_column("year");
    const auto c_sex = t.require_column("sex");
    const auto c_cell = t.require_column("cell_id");
    const auto c_count = t.require_column("count");
    for (const auto& row : t.rows) {
        EmploymentRow r;
        r.iso3 = row.cells[c_iso];
        r.year = static_cast<int>(csv::parse_double(row.cells[c_year], row.line, "year"));
        auto sex = parse_enum<Sex>(row.cells[c_sex]);
        if (!sex) throw InputError("employment line " + std::to_string(row.line) + ": unknown sex '" + row.cells[c_sex] + "'");
        r.sex = *sex;
        r.cell_id = row.cells[c_cell];
        r.count = csv::parse_double(row.cells[c_count], row.line, "count");
        try {
            out.add(r);
        } catch (const InputError& e) {
            throw InputError("employment line " + std::to_string(row.line) + ": " + e.what());
        }
    }
    return out;
}

}  // namespace atlas
