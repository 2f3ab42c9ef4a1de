#pragma once

// Occupation bridge (task -> SOC -> ISCO) and industry graph (task -> ISIC4
// class -> two-digit division), plus the provider interfaces used to build
// the graph.

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <json.hpp>

#include "atlas/aggregate.hpp"
#include "atlas/core.hpp"
#include "atlas/csv.hpp"
#include "atlas/digest.hpp"
#include "atlas/ingest.hpp"
#include "atlas/parallel.hpp"

namespace atlas {

/// Raised when an embedding or voting backend fails.
struct ProviderError : InputError {
    using InputError::InputError;
};

// ---------------------------------------------------------------------------
// Exposure profiles: linear masses that combine under convex weights
// ---------------------------------------------------------------------------

struct ExposureProfile {
    double level = 0;                  // mean exposure level
    double exposed = 0;                // exposed indicator
    double high = 0;                   // level-3 indicator
    std::array<double, 3> margin{};    // exposed with a defined margin
    std::array<double, 5> channel{};   // exposed with an active channel
    double ai_material = 0;            // exposed and AI-material

    static ExposureProfile of(const TaskLabelRecord& r) {
        ExposureProfile p;
        p.level = r.exposure.value();
        if (!is_exposed(r.exposure)) return p;
        p.exposed = 1;
        p.high = is_high(r.exposure) ? 1 : 0;
        if (auto m = detail::position(kDefinedMargins, r.margin)) p.margin[*m] = 1;
        if (auto c = detail::position(kActiveChannels, r.channel)) p.channel[*c] = 1;
        p.ai_material = r.ai_material ? 1 : 0;
        return p;
    }

    /// this += a * x
    void axpy(double a, const ExposureProfile& x) {
        level += a * x.level;
        exposed += a * x.exposed;
        high += a * x.high;
        for (std::size_t i = 0; i < 3; ++i) margin[i] += a * x.margin[i];
        for (std::size_t i = 0; i < 5; ++i) channel[i] += a * x.channel[i];
        ai_material += a * x.ai_material;
    }

    ExposureProfile scaled(double a) const {
        ExposureProfile p;
        p.axpy(a, *this);
        return p;
    }

    std::optional<MarginShares> margin_within() const {
        const double d = margin[0] + margin[1] + margin[2];
        if (d <= 0) return std::nullopt;
        return MarginShares{margin[0] / d, margin[1] / d, margin[2] / d};
    }

    std::vector<std::pair<std::string, std::optional<double>>> metrics() const {
        std::vector<std::pair<std::string, std::optional<double>>> m;
        m.emplace_back("exposure_level", level);
        m.emplace_back("exposed_share", exposed);
        m.emplace_back("high_share", high);
        for (std::size_t i = 0; i < 3; ++i)
            m.emplace_back("margin_all_" + std::string(to_string(kDefinedMargins[i])), margin[i]);
        const auto within = margin_within();
        for (std::size_t i = 0; i < 3; ++i)
            m.emplace_back("margin_within_" + std::string(to_string(kDefinedMargins[i])),
                           within ? std::optional((*within)[i]) : std::nullopt);
        for (std::size_t i = 0; i < 5; ++i)
            m.emplace_back("channel_exposed_" + std::string(to_string(kActiveChannels[i])),
                           exposed > 0 ? std::optional(channel[i] / exposed) : std::nullopt);
        m.emplace_back("ai_material_share_exposed", exposed > 0 ? std::optional(ai_material / exposed) : std::nullopt);
        return m;
    }
};

/// Compensated convex combination: sum_i w_i p_i / sum_i w_i, in input order.
inline ExposureProfile weighted_mean(const std::vector<std::pair<double, const ExposureProfile*>>& terms) {
    constexpr std::size_t K = 12;
    std::array<CompensatedSum, K> acc;
    std::array<double, K> lo, hi;
    lo.fill(std::numeric_limits<double>::infinity());
    hi.fill(-std::numeric_limits<double>::infinity());
    CompensatedSum mass;
    for (const auto& [w, p] : terms) {
        mass.add(w);
        const std::array<double, K> v{p->level,     p->exposed,    p->high,       p->margin[0],  p->margin[1], p->margin[2],
                                      p->channel[0], p->channel[1], p->channel[2], p->channel[3], p->channel[4], p->ai_material};
        for (std::size_t i = 0; i < K; ++i) {
            acc[i].add(w * v[i]);
            lo[i] = std::min(lo[i], v[i]);
            hi[i] = std::max(hi[i], v[i]);
        }
    }
    const double m = mass.value();
    // Rounding can push a convex combination one ulp past its inputs.
    auto at = [&](std::size_t i) { return std::clamp(acc[i].value() / m, lo[i], hi[i]); };
    ExposureProfile out;
    out.level = at(0);
    out.exposed = at(1);
    out.high = at(2);
    for (std::size_t i = 0; i < 3; ++i) out.margin[i] = at(3 + i);
    for (std::size_t i = 0; i < 5; ++i) out.channel[i] = at(6 + i);
    out.ai_material = at(11);
    return out;
}

using ProfileMap = std::map<std::string, ExposureProfile>;

// ---------------------------------------------------------------------------
// Occupation bridge
// ---------------------------------------------------------------------------

inline constexpr double kShareTolerance = 1e-9;

struct TaskWeightMap {
    std::map<std::string, std::vector<std::pair<std::string, double>>> occupations;

    void validate() const {
        for (const auto& [soc, tasks] : occupations) {
            CompensatedSum s;
            std::set<std::string> seen;
            for (const auto& [task, w] : tasks) {
                if (!(w >= 0)) throw InputError("task weights: negative weight for " + soc + "/" + task);
                if (!seen.insert(task).second) throw InputError("task weights: duplicate task " + soc + "/" + task);
                s.add(w);
            }
            if (std::abs(s.value() - 1.0) > kShareTolerance)
                throw InputError("task weights: occupation " + soc + " sums to " + csv::format_double(s.value()));
        }
    }
};

enum class BridgeVariant { weighted, modal };

template <>
struct EnumNames<BridgeVariant> {
    static constexpr std::array<std::string_view, 2> names{"weighted", "modal"};
};

struct BridgeShares {
    BridgeVariant variant = BridgeVariant::weighted;
    std::map<std::string, std::vector<std::pair<std::string, double>>> rows;  // SOC -> (ISCO, share)

    void validate() const {
        for (const auto& [soc, shares] : rows) {
            CompensatedSum s;
            std::set<std::string> seen;
            for (const auto& [isco, m] : shares) {
                if (!(m >= 0)) throw InputError("bridge: negative share for " + soc + "/" + isco);
                if (!seen.insert(isco).second) throw InputError("bridge: duplicate group " + soc + "/" + isco);
                s.add(m);
            }
            if (std::abs(s.value() - 1.0) > kShareTolerance)
                throw InputError("bridge: occupation " + soc + " sums to " + csv::format_double(s.value()));
            if (variant == BridgeVariant::modal && (shares.size() != 1 || shares[0].second != 1.0))
                throw InputError("bridge: modal occupation " + soc + " must have a single share of 1");
        }
    }
};

/// Each SOC assigned wholly to its largest-share ISCO group; ties go to the smallest group id.
inline BridgeShares modal_bridge(const BridgeShares& b) {
    BridgeShares out;
    out.variant = BridgeVariant::modal;
    for (const auto& [soc, shares] : b.rows) {
        if (shares.empty()) continue;
        const auto* best = &shares.front();
        for (const auto& s : shares)
            if (s.second > best->second || (s.second == best->second && s.first < best->first)) best = &s;
        out.rows[soc] = {{best->first, 1.0}};
    }
    return out;
}

struct SocSummaryReport {
    std::map<std::string, double> dropped_mass;           // occupations that lost weight
    std::map<std::string, std::vector<std::string>> missing_tasks;
};

struct SocSummary {
    ProfileMap values;
    SocSummaryReport report;
};

/// Weighted task profiles per SOC occupation. Tasks absent for the country are
/// dropped and the remaining weights renormalized.
inline SocSummary soc_summary(const LabelDataset& ds, const std::string& iso3, const TaskWeightMap& weights) {
    SocSummary out;
    for (const auto& [soc, tasks] : weights.occupations) {
        std::vector<ExposureProfile> profiles;
        std::vector<double> w;
        double dropped = 0;
        for (const auto& [task, wt] : tasks) {
            if (const auto* r = ds.find(iso3, task)) {
                profiles.push_back(ExposureProfile::of(*r));
                w.push_back(wt);
            } else {
                dropped += wt;
                out.report.missing_tasks[soc].push_back(task);
            }
        }
        std::vector<std::pair<double, const ExposureProfile*>> terms;
        double mass = 0;
        for (std::size_t i = 0; i < profiles.size(); ++i) {
            terms.emplace_back(w[i], &profiles[i]);
            mass += w[i];
        }
        if (!(mass > 0)) throw InputError("occupation " + soc + " has no usable task weight for " + iso3);
        if (dropped > 0) out.report.dropped_mass[soc] = dropped;
        out.values[soc] = weighted_mean(terms);
    }
    return out;
}

/// ISCO value = sum_o m_ok E_o / sum_o m_ok over SOCs with a value.
inline ProfileMap isco_summary(const ProfileMap& soc_values, const BridgeShares& bridge) {
    std::map<std::string, std::vector<std::pair<double, const ExposureProfile*>>> terms;
    for (const auto& [soc, profile] : soc_values) {
        auto it = bridge.rows.find(soc);
        if (it == bridge.rows.end()) throw InputError("bridge has no row for occupation " + soc);
        for (const auto& [isco, m] : it->second)
            if (m > 0) terms[isco].emplace_back(m, &profile);
    }
    ProfileMap out;
    for (const auto& [isco, t] : terms) out[isco] = weighted_mean(t);
    return out;
}

inline TaskWeightMap load_task_weights(std::istream& in) {
    const auto t = csv::read_table(in);
    TaskWeightMap out;
    if (t.header.empty()) return out;
    const auto c_soc = t.require_column("soc");
    const auto c_task = t.require_column("task_id");
    const auto c_w = t.require_column("weight");
    for (const auto& row : t.rows)
        out.occupations[row.cells[c_soc]].emplace_back(row.cells[c_task], csv::parse_double(row.cells[c_w], row.line, "weight"));
    out.validate();
    return out;
}

inline BridgeShares load_bridge(std::istream& in, BridgeVariant variant = BridgeVariant::weighted) {
    const auto t = csv::read_table(in);
    BridgeShares out;
    if (t.header.empty()) return out;
    const auto c_soc = t.require_column("soc");
    const auto c_isco = t.require_column("isco");
    const auto c_m = t.require_column("share");
    for (const auto& row : t.rows)
        out.rows[row.cells[c_soc]].emplace_back(row.cells[c_isco], csv::parse_double(row.cells[c_m], row.line, "share"));
    out.validate();
    return variant == BridgeVariant::modal ? modal_bridge(out) : out;
}

// ---------------------------------------------------------------------------
// Providers
// ---------------------------------------------------------------------------

/// Implementations must be safe to call concurrently.
class EmbeddingProvider {
public:
    virtual ~EmbeddingProvider() = default;
    virtual std::vector<double> embed(const std::string& text) const = 0;
};

/// `replicate` distinguishes repeated votes on the same pair.
class EdgeVoter {
public:
    virtual ~EdgeVoter() = default;
    virtual bool vote(const std::string& task_text, const std::string& activity_text, std::size_t replicate) const = 0;
};

namespace detail {

inline std::vector<std::string> word_tokens(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    for (unsigned char c : text) {
        if (std::isalnum(c)) {
            cur += static_cast<char>(std::tolower(c));
        } else if (!cur.empty()) {
            out.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

}  // namespace detail

/// Signed feature hashing of lower-cased word tokens.
class HashEmbedding final : public EmbeddingProvider {
public:
    explicit HashEmbedding(std::size_t dim = 64) : dim_(dim) {}

    std::vector<double> embed(const std::string& text) const override {
        std::vector<double> v(dim_, 0.0);
        for (const auto& tok : detail::word_tokens(text)) {
            const std::uint64_t h = sha256_u64(tok);
            v[h % dim_] += (h >> 63) ? -1.0 : 1.0;
        }
        return v;
    }

private:
    std::size_t dim_;
};

/// Pseudo-random votes, valid with probability `p_valid`, keyed by the pair and replicate.
class HashVoter final : public EdgeVoter {
public:
    explicit HashVoter(double p_valid = 0.65) : p_valid_(p_valid) {}

    bool vote(const std::string& task_text, const std::string& activity_text, std::size_t replicate) const override {
        const std::uint64_t h = sha256_u64(task_text + '\x1f' + activity_text + '\x1f' + std::to_string(replicate));
        return static_cast<double>(h >> 11) * 0x1.0p-53 < p_valid_;
    }

private:
    double p_valid_;
};

enum class ReplayMode { replay, record };

namespace detail {

inline void write_atomically(const std::filesystem::path& path, const std::string& content) {
    auto tmp = path;
    tmp += ".tmp" + std::to_string(std::hash<std::thread::id>{}(std::this_thread::get_id()));
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw ProviderError("replay: cannot write " + tmp.string());
        out << content;
    }
    std::filesystem::rename(tmp, path);
}

inline std::optional<nlohmann::json> read_fixture(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return std::nullopt;
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ProviderError("replay: corrupt fixture " + path.string() + ": " + e.what());
    }
}

}  // namespace detail

/// Content-addressed replay: `<dir>/<sha256(text)>.json` holds {"input", "embedding"}.
/// In record mode misses are forwarded to `inner` and persisted.
class ReplayEmbedding final : public EmbeddingProvider {
public:
    ReplayEmbedding(std::filesystem::path dir, ReplayMode mode = ReplayMode::replay,
                    const EmbeddingProvider* inner = nullptr)
        : dir_(std::move(dir)), mode_(mode), inner_(inner) {}

    std::vector<double> embed(const std::string& text) const override {
        const auto path = dir_ / (sha256_hex(text) + ".json");
        if (auto j = detail::read_fixture(path)) return (*j).at("embedding").get<std::vector<double>>();
        if (mode_ == ReplayMode::replay || !inner_) throw ProviderError("replay: no embedding fixture " + path.string());
        auto v = inner_->embed(text);
        nlohmann::ordered_json j{{"input", text}, {"embedding", v}};
        std::filesystem::create_directories(dir_);
        detail::write_atomically(path, j.dump() + "\n");
        return v;
    }

private:
    std::filesystem::path dir_;
    ReplayMode mode_;
    const EmbeddingProvider* inner_;
};

/// Content-addressed replay of votes keyed by sha256(task \x1f activity \x1f replicate).
class ReplayVoter final : public EdgeVoter {
public:
    ReplayVoter(std::filesystem::path dir, ReplayMode mode = ReplayMode::replay, const EdgeVoter* inner = nullptr)
        : dir_(std::move(dir)), mode_(mode), inner_(inner) {}

    bool vote(const std::string& task_text, const std::string& activity_text, std::size_t replicate) const override {
        const std::string key = task_text + '\x1f' + activity_text + '\x1f' + std::to_string(replicate);
        const auto path = dir_ / (sha256_hex(key) + ".json");
        if (auto j = detail::read_fixture(path)) return (*j).at("is_valid").get<bool>();
        if (mode_ == ReplayMode::replay || !inner_) throw ProviderError("replay: no vote fixture " + path.string());
        const bool v = inner_->vote(task_text, activity_text, replicate);
        nlohmann::ordered_json j{{"task", task_text}, {"activity", activity_text}, {"replicate", replicate}, {"is_valid", v}};
        std::filesystem::create_directories(dir_);
        detail::write_atomically(path, j.dump() + "\n");
        return v;
    }

private:
    std::filesystem::path dir_;
    ReplayMode mode_;
    const EdgeVoter* inner_;
};

namespace detail {

template <class F>
auto with_retries(std::size_t retries, F&& f) -> decltype(f()) {
    for (std::size_t attempt = 0;; ++attempt) {
        try {
            return f();
        } catch (const ProviderError&) {
            if (attempt >= retries) throw;
        }
    }
}

inline double cosine(const std::vector<double>& a, const std::vector<double>& b, double na, double nb) {
    CompensatedSum dot;
    for (std::size_t i = 0; i < a.size(); ++i) dot.add(a[i] * b[i]);
    return dot.value() / (na * nb);
}

inline double norm(const std::vector<double>& v) {
    CompensatedSum s;
    for (double x : v) s.add(x * x);
    return std::sqrt(s.value());
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Industry graph
// ---------------------------------------------------------------------------

using TextMap = std::map<std::string, std::string>;  // id -> text

struct CandidateEdge {
    std::string task_id;
    std::string isic4;
    double similarity = 0;

    bool operator==(const CandidateEdge&) const = default;
};

struct CandidateConfig {
    std::size_t top_k = 60;
    double floor = 0.30;
    std::size_t retries = 2;
};

/// Per activity, the top_k tasks by cosine similarity at or above the floor.
/// Ties are broken by task id; output is ordered by (activity, rank).
inline std::vector<CandidateEdge> build_candidates(const TextMap& tasks, const TextMap& activities,
                                                   const EmbeddingProvider& provider, const CandidateConfig& cfg = {}) {
    if (cfg.top_k == 0) throw InputError("top_k must be at least 1");
    std::vector<std::pair<std::string, std::string>> items;
    for (const auto& [id, text] : tasks) items.emplace_back("t:" + id, text);
    for (const auto& [id, text] : activities) items.emplace_back("a:" + id, text);
    std::vector<std::vector<double>> emb(items.size());
    std::vector<double> norms(items.size());
    parallel_for(items.size(), [&](std::size_t i) {
        emb[i] = detail::with_retries(cfg.retries, [&] { return provider.embed(items[i].second); });
        norms[i] = detail::norm(emb[i]);
        if (!(norms[i] > 0)) throw InputError("zero-norm embedding for " + items[i].first.substr(2));
    });
    const std::size_t n_tasks = tasks.size();
    for (std::size_t i = 1; i < emb.size(); ++i)
        if (emb[i].size() != emb[0].size()) throw ProviderError("embedding dimensions differ");

    std::vector<std::string> task_ids, act_ids;
    for (const auto& [id, _] : tasks) task_ids.push_back(id);
    for (const auto& [id, _] : activities) act_ids.push_back(id);

    std::vector<std::vector<CandidateEdge>> per_activity(act_ids.size());
    parallel_for(act_ids.size(), [&](std::size_t a) {
        const std::size_t ai = n_tasks + a;
        std::vector<CandidateEdge> cands;
        for (std::size_t t = 0; t < n_tasks; ++t) {
            const double s = detail::cosine(emb[t], emb[ai], norms[t], norms[ai]);
            if (s >= cfg.floor) cands.push_back({task_ids[t], act_ids[a], s});
        }
        std::sort(cands.begin(), cands.end(), [](const auto& x, const auto& y) {
            return x.similarity != y.similarity ? x.similarity > y.similarity : x.task_id < y.task_id;
        });
        if (cands.size() > cfg.top_k) cands.resize(cfg.top_k);
        per_activity[a] = std::move(cands);
    });
    std::vector<CandidateEdge> out;
    for (auto& v : per_activity) out.insert(out.end(), v.begin(), v.end());
    return out;
}

struct GraphEdge {
    std::string task_id;
    std::string isic4;
    double similarity = 0;
    std::vector<bool> votes;

    std::size_t valid_votes() const { return static_cast<std::size_t>(std::count(votes.begin(), votes.end(), true)); }
    bool retained() const { return 2 * valid_votes() > votes.size(); }
    double agreement() const {
        const auto v = valid_votes();
        return static_cast<double>(std::max(v, votes.size() - v)) / static_cast<double>(votes.size());
    }
    bool operator==(const GraphEdge&) const = default;
};

inline std::string isic_division(const std::string& isic4) {
    if (isic4.size() != 4 || !std::all_of(isic4.begin(), isic4.end(), [](unsigned char c) { return std::isdigit(c); }))
        throw InputError("invalid ISIC4 class '" + isic4 + "'");
    return isic4.substr(0, 2);
}

/// Every voted candidate edge; retention is derived from its votes.
struct IndustryGraph {
    std::vector<GraphEdge> edges;  // sorted by (isic4, task_id), unique

    std::vector<const GraphEdge*> retained() const {
        std::vector<const GraphEdge*> out;
        for (const auto& e : edges)
            if (e.retained()) out.push_back(&e);
        return out;
    }
    std::optional<double> mean_agreement() const {
        if (edges.empty()) return std::nullopt;
        CompensatedSum s;
        for (const auto& e : edges) s.add(e.agreement());
        return s.value() / static_cast<double>(edges.size());
    }
    std::size_t votes_cast() const {
        std::size_t n = 0;
        for (const auto& e : edges) n += e.votes.size();
        return n;
    }

    /// Sorts and checks uniqueness and class codes.
    void normalize() {
        std::sort(edges.begin(), edges.end(), [](const auto& a, const auto& b) {
            return std::tie(a.isic4, a.task_id) < std::tie(b.isic4, b.task_id);
        });
        for (std::size_t i = 0; i < edges.size(); ++i) {
            isic_division(edges[i].isic4);
            if (edges[i].votes.empty()) throw InputError("graph edge " + edges[i].task_id + "/" + edges[i].isic4 + " has no votes");
            if (i && edges[i].isic4 == edges[i - 1].isic4 && edges[i].task_id == edges[i - 1].task_id)
                throw InputError("duplicate graph edge " + edges[i].task_id + "/" + edges[i].isic4);
        }
    }
};

struct PruneConfig {
    std::size_t votes_per_edge = 3;
    std::size_t retries = 2;
};

/// Collects votes_per_edge votes per candidate; an edge is retained on a strict valid majority.
inline IndustryGraph prune_edges(const std::vector<CandidateEdge>& candidates, const TextMap& tasks,
                                 const TextMap& activities, const EdgeVoter& voter, const PruneConfig& cfg = {}) {
    if (cfg.votes_per_edge == 0 || cfg.votes_per_edge % 2 == 0)
        throw InputError("votes_per_edge must be odd and at least 1");
    IndustryGraph g;
    g.edges.resize(candidates.size());
    parallel_for(candidates.size(), [&](std::size_t i) {
        const auto& c = candidates[i];
        auto t = tasks.find(c.task_id);
        auto a = activities.find(c.isic4);
        if (t == tasks.end() || a == activities.end())
            throw InputError("candidate " + c.task_id + "/" + c.isic4 + " has no text");
        GraphEdge e{c.task_id, c.isic4, c.similarity, {}};
        for (std::size_t r = 0; r < cfg.votes_per_edge; ++r)
            e.votes.push_back(detail::with_retries(cfg.retries, [&] { return voter.vote(t->second, a->second, r); }));
        g.edges[i] = std::move(e);
    });
    g.normalize();
    return g;
}

inline void save_graph(std::ostream& out, const IndustryGraph& g) {
    for (const auto& e : g.edges) {
        nlohmann::ordered_json j{{"task_id", e.task_id}, {"isic4", e.isic4}, {"similarity", e.similarity}};
        j["votes"] = nlohmann::json::array();
        for (bool v : e.votes) j["votes"].push_back(v);
        out << j.dump() << '\n';
    }
}

inline IndustryGraph load_graph(std::istream& in) {
    IndustryGraph g;
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (line.empty() || line[0] == '#') continue;
        try {
            const auto j = nlohmann::json::parse(line);
            GraphEdge e{j.at("task_id").get<std::string>(), j.at("isic4").get<std::string>(),
                        j.at("similarity").get<double>(), {}};
            for (const auto& v : j.at("votes")) e.votes.push_back(v.get<bool>());
            g.edges.push_back(std::move(e));
        } catch (const nlohmann::json::exception& ex) {
            throw InputError("graph line " + std::to_string(n) + ": " + ex.what());
        }
    }
    g.normalize();
    return g;
}

/// Division profile = equal-weight mean over retained classes; class profile =
/// equal-weight mean over linked tasks present for the country. When `divisions`
/// is non-empty each listed division must resolve.
inline ProfileMap industry_summary(const LabelDataset& ds, const std::string& iso3, const IndustryGraph& g,
                                   const std::vector<std::string>& divisions = {}) {
    std::map<std::string, std::vector<ExposureProfile>> by_class;
    for (const auto* e : g.retained())
        if (const auto* r = ds.find(iso3, e->task_id)) by_class[e->isic4].push_back(ExposureProfile::of(*r));

    std::map<std::string, std::vector<ExposureProfile>> by_division;
    for (const auto& [cls, profiles] : by_class) {
        std::vector<std::pair<double, const ExposureProfile*>> terms;
        for (const auto& p : profiles) terms.emplace_back(1.0, &p);
        by_division[isic_division(cls)].push_back(weighted_mean(terms));
    }
    ProfileMap out;
    for (const auto& [div, classes] : by_division) {
        std::vector<std::pair<double, const ExposureProfile*>> terms;
        for (const auto& p : classes) terms.emplace_back(1.0, &p);
        out[div] = weighted_mean(terms);
    }
    for (const auto& d : divisions)
        if (!out.count(d)) throw InputError("division " + d + " has no retained classes for " + iso3);
    return out;
}

/// Equal-weight mean over countries of each unit's profile, per income group.
/// Countries lacking a unit do not contribute to it.
inline std::map<std::string, ProfileMap> income_rollup(const std::map<std::string, ProfileMap>& per_country,
                                                       const CountryRegistry& registry) {
    std::map<std::string, std::map<std::string, std::vector<std::pair<double, const ExposureProfile*>>>> terms;
    for (const auto& [iso3, units] : per_country) {
        const auto& ctx = registry.at(iso3);
        if (ctx.income_group == IncomeGroup::unclassified) continue;
        const std::string group(to_string(ctx.income_group));
        for (const auto& [unit, p] : units) terms[group][unit].emplace_back(1.0, &p);
    }
    std::map<std::string, ProfileMap> out;
    for (const auto& [group, units] : terms)
        for (const auto& [unit, t] : units) out[group][unit] = weighted_mean(t);
    return out;
}

// ---------------------------------------------------------------------------
// Margin pockets
// ---------------------------------------------------------------------------

struct PocketUnit {
    std::string id;
    double exposed_share = 0;
    double margin_share = 0;  // within exposed
    double score() const { return exposed_share * margin_share; }
};

/// Top-n units by exposed_share * margin_share, descending; ties by id.
inline std::vector<PocketUnit> margin_pockets(std::vector<PocketUnit> units, std::size_t n) {
    std::sort(units.begin(), units.end(), [](const auto& a, const auto& b) {
        const double sa = a.score(), sb = b.score();
        return sa != sb ? sa > sb : a.id < b.id;
    });
    if (units.size() > n) units.resize(n);
    return units;
}

/// Pocket inputs from profiles; units without a defined within-exposed margin are skipped.
inline std::vector<PocketUnit> pocket_units(const ProfileMap& profiles, Margin margin) {
    const auto idx = detail::position(kDefinedMargins, margin);
    if (!idx) throw InputError("margin pockets need a defined margin");
    std::vector<PocketUnit> out;
    for (const auto& [id, p] : profiles)
        if (auto w = p.margin_within()) out.push_back({id, p.exposed, (*w)[*idx]});
    return out;
}

}  // namespace atlas
