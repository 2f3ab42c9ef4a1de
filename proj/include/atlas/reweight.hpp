#pragma once

// Employment-composition reweighting: coverage filtering of employment
// counts, employment-weighted exposure, and sex-specific gap decompositions.
// Internal values are fractions; percentage points appear only in outputs
// documented as such.

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "atlas/aggregate.hpp"
#include "atlas/core.hpp"
#include "atlas/ingest.hpp"
#include "atlas/linkage.hpp"
#include "atlas/parallel.hpp"

namespace atlas {

struct CoverageRule {
    int first_year = 2015;
    int last_year = 2025;
    std::size_t min_groups = 8;
};

struct WeightVector {
    std::string iso3;
    Sex sex = Sex::total;
    int year = 0;
    std::vector<std::pair<std::string, double>> cells;  // sorted by cell id

    void validate() const {
        CompensatedSum s;
        for (const auto& [cell, share] : cells) {
            if (!(share >= 0)) throw InvariantError("weights: negative share for " + iso3 + "/" + cell);
            s.add(share);
        }
        if (std::abs(s.value() - 1.0) > kShareTolerance)
            throw InvariantError("weights: shares for " + iso3 + " sum to " + csv::format_double(s.value()));
    }

    std::set<std::string> scheme() const {
        std::set<std::string> out;
        for (const auto& [c, _] : cells) out.insert(c);
        return out;
    }
};

using WeightKey = std::pair<std::string, Sex>;

struct CoverageResult {
    std::map<WeightKey, WeightVector> weights;
    std::vector<WeightKey> excluded;  // (iso3, sex) pairs failing the rule
};

namespace detail {

/// Positive-count cells per year, for one (iso3, sex).
using YearCells = std::map<int, std::map<std::string, double>>;

inline WeightVector shares_of(const std::string& iso3, Sex sex, int year, const std::map<std::string, double>& cells) {
    CompensatedSum total;
    for (const auto& [_, n] : cells) total.add(n);
    WeightVector w{iso3, sex, year, {}};
    for (const auto& [cell, n] : cells) w.cells.emplace_back(cell, n / total.value());
    return w;
}

inline std::set<int> qualifying_years(const YearCells& yc, const CoverageRule& rule) {
    std::set<int> out;
    for (const auto& [year, cells] : yc)
        if (year >= rule.first_year && year <= rule.last_year && cells.size() >= rule.min_groups) out.insert(year);
    return out;
}

}  // namespace detail

/// Latest in-window year with at least min_groups positive cells, per
/// (iso3, sex); female and male share the latest year on which both qualify.
inline CoverageResult coverage_filter(const EmploymentTable& table, const CoverageRule& rule = {}) {
    std::map<std::string, std::array<detail::YearCells, 3>> by_country;
    for (const auto& [key, count] : table.counts) {
        const auto& [iso3, year, sex, cell] = key;
        if (count > 0) by_country[iso3][index_of(sex)][year][cell] = count;
    }
    std::vector<std::string> countries;
    for (const auto& [iso3, _] : by_country) countries.push_back(iso3);

    struct Slot {
        std::vector<WeightVector> kept;
        std::vector<WeightKey> excluded;
    };
    std::vector<Slot> slots(countries.size());
    parallel_for(countries.size(), [&](std::size_t i) {
        const auto& iso3 = countries[i];
        const auto& data = by_country.at(iso3);
        auto& slot = slots[i];

        const auto total_years = detail::qualifying_years(data[index_of(Sex::total)], rule);
        if (total_years.empty())
            slot.excluded.emplace_back(iso3, Sex::total);
        else
            slot.kept.push_back(detail::shares_of(iso3, Sex::total, *total_years.rbegin(),
                                                  data[index_of(Sex::total)].at(*total_years.rbegin())));

        const auto fy = detail::qualifying_years(data[index_of(Sex::female)], rule);
        const auto my = detail::qualifying_years(data[index_of(Sex::male)], rule);
        std::optional<int> common;
        for (int y : fy)
            if (my.count(y)) common = y;
        if (!common) {
            slot.excluded.emplace_back(iso3, Sex::female);
            slot.excluded.emplace_back(iso3, Sex::male);
            return;
        }
        for (Sex s : {Sex::female, Sex::male})
            slot.kept.push_back(detail::shares_of(iso3, s, *common, data[index_of(s)].at(*common)));
    });

    CoverageResult out;
    for (auto& slot : slots) {
        for (auto& w : slot.kept) {
            w.validate();
            out.weights.emplace(WeightKey{w.iso3, w.sex}, std::move(w));
        }
        out.excluded.insert(out.excluded.end(), slot.excluded.begin(), slot.excluded.end());
    }
    // Countries with no positive counts at all never reach the loop above.
    for (const auto& [key, _] : table.counts) {
        const auto& iso3 = std::get<0>(key);
        if (by_country.count(iso3)) continue;
        for (Sex s : {Sex::total, Sex::female, Sex::male})
            if (std::find(out.excluded.begin(), out.excluded.end(), WeightKey{iso3, s}) == out.excluded.end())
                out.excluded.emplace_back(iso3, s);
    }
    std::sort(out.excluded.begin(), out.excluded.end());
    return out;
}

struct WeightedExposure {
    double value = 0;
    std::optional<double> adjustment;      // value - baseline
    std::vector<std::string> dropped_cells;  // weighted cells with no exposure value
    double dropped_mass = 0;
};

/// Share-weighted mean of cell values; cells without a value are dropped and the
/// remaining shares renormalized.
inline WeightedExposure employment_weighted_exposure(const std::map<std::string, double>& cell_values,
                                                     const WeightVector& weights,
                                                     std::optional<double> baseline = std::nullopt) {
    WeightedExposure out;
    CompensatedSum num, mass;
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto& [cell, share] : weights.cells) {
        auto it = cell_values.find(cell);
        if (it == cell_values.end()) {
            out.dropped_cells.push_back(cell);
            out.dropped_mass += share;
            continue;
        }
        if (share <= 0) continue;
        num.add(share * it->second);
        mass.add(share);
        lo = std::min(lo, it->second);
        hi = std::max(hi, it->second);
    }
    if (!(mass.value() > 0)) throw InputError("no usable employment weight for " + weights.iso3);
    out.value = std::clamp(num.value() / mass.value(), lo, hi);
    if (baseline) out.adjustment = out.value - *baseline;
    return out;
}

namespace detail {

inline void check_same_scheme(const WeightVector& f, const WeightVector& m) {
    if (f.iso3 != m.iso3) throw InputError("sex weights belong to different countries: " + f.iso3 + ", " + m.iso3);
    if (f.year != m.year)
        throw InputError("sex weights for " + f.iso3 + " come from different years");
    if (f.scheme() != m.scheme()) throw InputError("cell scheme differs between sexes for " + f.iso3);
}

inline MarginShares weighted_margins(const std::map<std::string, MarginShares>& values, const WeightVector& w) {
    std::array<CompensatedSum, 3> acc;
    CompensatedSum mass;
    for (const auto& [cell, share] : w.cells) {
        auto it = values.find(cell);
        if (it == values.end()) continue;
        mass.add(share);
        for (std::size_t m = 0; m < 3; ++m) acc[m].add(share * it->second[m]);
    }
    if (!(mass.value() > 0)) throw InputError("no usable employment weight for " + w.iso3);
    MarginShares out{};
    for (std::size_t m = 0; m < 3; ++m) out[m] = acc[m].value() / mass.value();
    return out;
}

}  // namespace detail

/// Per-margin female minus male employment-weighted exposure, in percentage points.
inline MarginShares gender_gap(const std::map<std::string, MarginShares>& cell_margin_values, const WeightVector& female,
                               const WeightVector& male) {
    detail::check_same_scheme(female, male);
    const auto f = detail::weighted_margins(cell_margin_values, female);
    const auto m = detail::weighted_margins(cell_margin_values, male);
    MarginShares gap{};
    for (std::size_t i = 0; i < 3; ++i) gap[i] = (f[i] - m[i]) * 100.0;
    return gap;
}

/// Cell-level margin exposure x_jm: the share of the cell's tasks that are exposed with margin m.
inline std::map<std::string, MarginShares> cell_margin_values(const ProfileMap& profiles) {
    std::map<std::string, MarginShares> out;
    for (const auto& [cell, p] : profiles) out[cell] = p.margin;
    return out;
}

struct PanelRow {
    std::string iso3;
    std::string cell_id;
    double y = 0;      // female share - male share, percentage points
    MarginShares x{};  // margin exposure x 10, so a unit step is 10 percentage points
};

/// One row per country and cell with a margin value; countries need both sex vectors.
inline std::vector<PanelRow> gender_fe_panel(const std::map<std::string, std::map<std::string, MarginShares>>& values,
                                             const std::map<WeightKey, WeightVector>& weights) {
    std::vector<PanelRow> rows;
    for (const auto& [iso3, cells] : values) {
        auto f = weights.find({iso3, Sex::female});
        auto m = weights.find({iso3, Sex::male});
        if (f == weights.end() || m == weights.end()) continue;
        detail::check_same_scheme(f->second, m->second);
        std::map<std::string, double> fs(f->second.cells.begin(), f->second.cells.end());
        for (const auto& [cell, ms] : m->second.cells) {
            auto v = cells.find(cell);
            if (v == cells.end()) continue;
            PanelRow r{iso3, cell, (fs.at(cell) - ms) * 100.0, {}};
            for (std::size_t k = 0; k < 3; ++k) r.x[k] = v->second[k] * 10.0;
            rows.push_back(std::move(r));
        }
    }
    return rows;
}

}  // namespace atlas
