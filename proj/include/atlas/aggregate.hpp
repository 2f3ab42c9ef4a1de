#pragma once

// Country and group summaries, pathway states and transition matrices, margin
// polarisation, and benchmark-ladder deviations.
//
// Denominators:
//   exposed_share, high_share, margin_shares_all  -> all tasks of the country
//   margin_shares_within                          -> exposed tasks with a defined margin
//   channel_shares_exposed, ai_material_share     -> exposed tasks
//   ai_function_mix                               -> AI-material exposed tasks naming a function

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "atlas/core.hpp"
#include "atlas/ingest.hpp"
#include "atlas/parallel.hpp"

namespace atlas {

/// (substitute, augment, both)
using MarginShares = std::array<double, 3>;

inline constexpr std::array<Margin, 3> kDefinedMargins{Margin::substitute, Margin::augment, Margin::both};
inline constexpr std::array<Channel, 5> kActiveChannels{Channel::physical_execution, Channel::rule_based_workflow,
                                                        Channel::planning_control, Channel::inference_scoring,
                                                        Channel::informational_transformation};
inline constexpr std::array<AiFunction, 4> kActiveAiFunctions{
    AiFunction::state_inference, AiFunction::content_transformation, AiFunction::recommendation_decision_support,
    AiFunction::adaptive_control};

struct CountrySummary {
    std::string iso3;

    std::size_t n_tasks = 0;
    std::size_t n_exposed = 0;
    std::size_t n_high = 0;
    std::array<std::size_t, 3> n_margin{};  // exposed, per defined margin
    std::size_t n_exposed_unclear = 0;      // excluded from within shares
    std::size_t n_exposed_channel_none = 0;
    std::size_t n_ai_material = 0;           // among exposed
    std::size_t n_ai_material_no_function = 0;
    std::array<std::size_t, 5> n_channel{};  // exposed, per active channel
    std::array<std::size_t, 4> n_ai_function{};

    double exposed_share = 0.0;
    double high_share = 0.0;
    MarginShares margin_shares_all{};
    std::optional<MarginShares> margin_shares_within;
    std::optional<std::array<double, 5>> channel_shares_exposed;
    std::optional<double> ai_material_share_exposed;
    std::optional<std::array<double, 4>> ai_function_mix;

    std::size_t n_margin_defined() const { return n_margin[0] + n_margin[1] + n_margin[2]; }

    /// Flat (column name, value) view in a fixed order; used for tables and group means.
    std::vector<std::pair<std::string, std::optional<double>>> metrics() const {
        std::vector<std::pair<std::string, std::optional<double>>> m;
        m.emplace_back("exposed_share", exposed_share);
        m.emplace_back("high_share", high_share);
        for (std::size_t i = 0; i < 3; ++i)
            m.emplace_back("margin_all_" + std::string(to_string(kDefinedMargins[i])), margin_shares_all[i]);
        for (std::size_t i = 0; i < 3; ++i)
            m.emplace_back("margin_within_" + std::string(to_string(kDefinedMargins[i])),
                           margin_shares_within ? std::optional((*margin_shares_within)[i]) : std::nullopt);
        for (std::size_t i = 0; i < 5; ++i)
            m.emplace_back("channel_exposed_" + std::string(to_string(kActiveChannels[i])),
                           channel_shares_exposed ? std::optional((*channel_shares_exposed)[i]) : std::nullopt);
        m.emplace_back("ai_material_share_exposed", ai_material_share_exposed);
        for (std::size_t i = 0; i < 4; ++i)
            m.emplace_back("ai_function_" + std::string(to_string(kActiveAiFunctions[i])),
                           ai_function_mix ? std::optional((*ai_function_mix)[i]) : std::nullopt);
        return m;
    }
};

namespace detail {

template <std::size_t N>
std::array<double, N> ratios(const std::array<std::size_t, N>& counts, std::size_t denom) {
    std::array<double, N> out{};
    for (std::size_t i = 0; i < N; ++i) out[i] = static_cast<double>(counts[i]) / static_cast<double>(denom);
    return out;
}

template <class E, std::size_t N>
std::optional<std::size_t> position(const std::array<E, N>& values, E v) {
    for (std::size_t i = 0; i < N; ++i)
        if (values[i] == v) return i;
    return std::nullopt;
}

}  // namespace detail

/// Summary of one set of records, all sharing a country tag.
inline CountrySummary summarize_records(const std::string& iso3, const std::vector<const TaskLabelRecord*>& recs) {
    CountrySummary s;
    s.iso3 = iso3;
    s.n_tasks = recs.size();
    for (const auto* r : recs) {
        if (!is_exposed(r->exposure)) continue;
        ++s.n_exposed;
        if (is_high(r->exposure)) ++s.n_high;
        if (auto m = detail::position(kDefinedMargins, r->margin))
            ++s.n_margin[*m];
        else
            ++s.n_exposed_unclear;
        if (auto c = detail::position(kActiveChannels, r->channel))
            ++s.n_channel[*c];
        else
            ++s.n_exposed_channel_none;
        if (r->ai_material) {
            ++s.n_ai_material;
            if (auto f = detail::position(kActiveAiFunctions, r->ai_function))
                ++s.n_ai_function[*f];
            else
                ++s.n_ai_material_no_function;
        }
    }
    if (s.n_tasks == 0) return s;
    const double n = static_cast<double>(s.n_tasks);
    s.exposed_share = static_cast<double>(s.n_exposed) / n;
    s.high_share = static_cast<double>(s.n_high) / n;
    s.margin_shares_all = detail::ratios(s.n_margin, s.n_tasks);
    if (s.n_margin_defined() > 0) s.margin_shares_within = detail::ratios(s.n_margin, s.n_margin_defined());
    if (s.n_exposed > 0) {
        s.channel_shares_exposed = detail::ratios(s.n_channel, s.n_exposed);
        s.ai_material_share_exposed = static_cast<double>(s.n_ai_material) / static_cast<double>(s.n_exposed);
    }
    const std::size_t n_fn = s.n_ai_material - s.n_ai_material_no_function;
    if (n_fn > 0) s.ai_function_mix = detail::ratios(s.n_ai_function, n_fn);
    return s;
}

inline CountrySummary country_summary(const LabelDataset& ds, const std::string& iso3) {
    auto recs = ds.country(iso3);
    if (recs.empty()) throw InputError("no records for country '" + iso3 + "'");
    return summarize_records(iso3, recs);
}

/// Summaries for every country tag in the dataset, computed in parallel.
inline std::vector<CountrySummary> all_country_summaries(const LabelDataset& ds) {
    const auto countries = ds.countries();
    std::vector<CountrySummary> out(countries.size());
    parallel_for(countries.size(), [&](std::size_t i) { out[i] = country_summary(ds, countries[i]); });
    return out;
}

// ---------------------------------------------------------------------------
// Group means
// ---------------------------------------------------------------------------

enum class Grouping { income_group, region };

inline Grouping parse_grouping(std::string_view s) {
    if (s == "income_group") return Grouping::income_group;
    if (s == "region") return Grouping::region;
    throw InputError("unknown grouping '" + std::string(s) + "'");
}

inline std::string group_label(const CountryContext& c, Grouping g) {
    return g == Grouping::income_group ? std::string(to_string(c.income_group)) : std::string(to_string(c.region));
}

struct GroupSummary {
    std::string group;
    std::size_t n_countries = 0;
    std::vector<std::string> metric_names;
    std::vector<std::optional<double>> means;  // over countries where the metric is defined
    std::vector<std::size_t> n_defined;

    std::optional<double> mean(std::string_view metric) const {
        for (std::size_t i = 0; i < metric_names.size(); ++i)
            if (metric_names[i] == metric) return means[i];
        throw InputError("unknown metric '" + std::string(metric) + "'");
    }
};

/// Unweighted means of per-country metrics within each group. Countries are
/// visited in ISO3 order with compensated summation, so the result does not
/// depend on input order.
inline std::vector<GroupSummary> group_means(
    const std::vector<std::pair<std::string, std::vector<std::pair<std::string, std::optional<double>>>>>& per_country,
    const CountryRegistry& registry, Grouping grouping) {
    std::map<std::string, std::vector<std::size_t>> members;
    std::vector<std::size_t> order(per_country.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return per_country[a].first < per_country[b].first; });
    for (auto i : order) members[group_label(registry.at(per_country[i].first), grouping)].push_back(i);

    std::vector<GroupSummary> out;
    for (const auto& [label, idx] : members) {
        GroupSummary g;
        g.group = label;
        g.n_countries = idx.size();
        const auto& first = per_country[idx.front()].second;
        for (std::size_t m = 0; m < first.size(); ++m) {
            CompensatedSum sum;
            std::size_t n = 0;
            for (auto i : idx) {
                const auto& v = per_country[i].second.at(m).second;
                if (v) {
                    sum.add(*v);
                    ++n;
                }
            }
            g.metric_names.push_back(first[m].first);
            g.means.push_back(n ? std::optional(sum.value() / static_cast<double>(n)) : std::nullopt);
            g.n_defined.push_back(n);
        }
        out.push_back(std::move(g));
    }
    return out;
}

inline std::vector<GroupSummary> group_summary(const std::vector<CountrySummary>& summaries,
                                               const CountryRegistry& registry, Grouping grouping) {
    std::vector<std::pair<std::string, std::vector<std::pair<std::string, std::optional<double>>>>> rows;
    rows.reserve(summaries.size());
    for (const auto& s : summaries) rows.emplace_back(s.iso3, s.metrics());
    return group_means(rows, registry, grouping);
}

// ---------------------------------------------------------------------------
// Pathways
// ---------------------------------------------------------------------------

enum class PathwayState : std::uint8_t { not_exposed, substitute, augment, both };

template <>
struct EnumNames<PathwayState> {
    static constexpr std::array<std::string_view, 4> names{"not_exposed", "substitute", "augment", "both"};
};

/// nullopt is the anomaly bucket: an exposed record whose margin is unclear.
inline std::optional<PathwayState> pathway_state(const TaskLabelRecord& r) {
    if (!is_exposed(r.exposure)) return PathwayState::not_exposed;
    switch (r.margin) {
        case Margin::substitute: return PathwayState::substitute;
        case Margin::augment: return PathwayState::augment;
        case Margin::both: return PathwayState::both;
        case Margin::unclear: return std::nullopt;
    }
    return std::nullopt;
}

using PathwayMap = std::map<std::string, std::optional<PathwayState>>;  // task_id -> state

inline PathwayMap pathway_states(const LabelDataset& ds, const std::string& iso3) {
    PathwayMap out;
    for (const auto* r : ds.country(iso3)) out[r->task_id] = pathway_state(*r);
    return out;
}

/// Modal pathway per task across a group of country tags. Anomalies do not
/// vote; ties go to the smallest canonical state name (same rule as ingest).
inline PathwayMap modal_pathways(const LabelDataset& ds, const std::vector<std::string>& countries) {
    std::map<std::string, std::map<std::string, std::size_t>> votes;
    std::map<std::string, bool> seen;
    for (const auto& iso : countries)
        for (const auto* r : ds.country(iso)) {
            seen[r->task_id] = true;
            if (auto s = pathway_state(*r)) ++votes[r->task_id][std::string(to_string(*s))];
        }
    PathwayMap out;
    for (const auto& [task, _] : seen) {
        auto it = votes.find(task);
        if (it == votes.end()) {
            out[task] = std::nullopt;
            continue;
        }
        const std::string* best = nullptr;
        std::size_t best_n = 0;
        for (const auto& [name, n] : it->second)
            if (n > best_n) {
                best = &name;
                best_n = n;
            }
        out[task] = parse_enum<PathwayState>(*best);
    }
    return out;
}

struct TransitionMatrix {
    std::array<std::array<std::size_t, 4>, 4> counts{};
    std::array<std::optional<std::array<double, 4>>, 4> shares;  // row-stochastic; nullopt for empty source rows
    std::size_t n_tasks = 0;
    std::size_t n_excluded_anomalies = 0;
};

inline TransitionMatrix transition_matrix(const PathwayMap& a, const PathwayMap& b) {
    if (a.size() != b.size()) throw InputError("transition_matrix: task sets differ in size");
    TransitionMatrix t;
    auto ib = b.begin();
    for (auto ia = a.begin(); ia != a.end(); ++ia, ++ib) {
        if (ia->first != ib->first) throw InputError("transition_matrix: task sets differ at '" + ia->first + "'");
        ++t.n_tasks;
        if (!ia->second || !ib->second) {
            ++t.n_excluded_anomalies;
            continue;
        }
        ++t.counts[index_of(*ia->second)][index_of(*ib->second)];
    }
    for (std::size_t i = 0; i < 4; ++i) {
        std::size_t row = 0;
        for (auto c : t.counts[i]) row += c;
        if (row == 0) continue;
        std::array<double, 4> r{};
        for (std::size_t j = 0; j < 4; ++j) r[j] = static_cast<double>(t.counts[i][j]) / static_cast<double>(row);
        t.shares[i] = r;
    }
    return t;
}

// ---------------------------------------------------------------------------
// Polarisation and tilt
// ---------------------------------------------------------------------------

struct Polarisation {
    double polarisation = 0.0;   // substitute + augment share within exposed
    std::optional<double> tilt;  // substitute / (substitute + augment); nullopt when P = 0
};

inline Polarisation polarisation(const MarginShares& within) {
    Polarisation p;
    p.polarisation = within[0] + within[1];
    if (std::abs(p.polarisation - (1.0 - within[2])) > 1e-12)
        throw InvariantError("polarisation: within-exposed margin shares do not sum to one");
    if (p.polarisation > 0.0) p.tilt = within[0] / p.polarisation;
    return p;
}

inline Polarisation polarisation(const CountrySummary& s) {
    if (!s.margin_shares_within) throw InputError("polarisation: country '" + s.iso3 + "' has no exposed tasks");
    return polarisation(*s.margin_shares_within);
}

// ---------------------------------------------------------------------------
// Benchmark ladder
// ---------------------------------------------------------------------------

struct BenchmarkDeviation {
    std::string iso3;
    IncomeGroup income_group = IncomeGroup::unclassified;
    double mean_deviation = 0.0;  // level units, country minus benchmark
    std::size_t n_tasks = 0;
};

/// Task-by-task exposure difference between each country's labels and the
/// income-group benchmark matching that country, averaged within country.
inline std::vector<BenchmarkDeviation> benchmark_deviation(const LabelDataset& country_labels,
                                                           const LabelDataset& benchmark_labels,
                                                           const CountryRegistry& registry) {
    std::vector<BenchmarkDeviation> out;
    for (const auto& iso : country_labels.countries()) {
        const auto& ctx = registry.at(iso);
        if (ctx.income_group == IncomeGroup::unclassified)
            throw InputError("benchmark_deviation: country '" + iso + "' has no income group");
        const auto tag = BenchmarkContext::income_group(ctx.income_group).tag();
        BenchmarkDeviation d;
        d.iso3 = iso;
        d.income_group = ctx.income_group;
        CompensatedSum sum;
        for (const auto* r : country_labels.country(iso)) {
            const auto* b = benchmark_labels.find(tag, r->task_id);
            if (!b) continue;
            sum.add(static_cast<double>(r->exposure.value() - b->exposure.value()));
            ++d.n_tasks;
        }
        if (d.n_tasks == 0) throw InputError("benchmark_deviation: no task overlap for '" + iso + "'");
        d.mean_deviation = sum.value() / static_cast<double>(d.n_tasks);
        out.push_back(d);
    }
    return out;
}

}  // namespace atlas
