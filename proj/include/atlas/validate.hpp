#pragma once

// Internal-validity suite: run agreement, chance baselines, paraphrase
// stability, consistency screens, rationale divergence, the rationale
// predictability harness, and marginal distribution tables.

#include <algorithm>
#include <array>
#include <cctype>
#include <istream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "atlas/aggregate.hpp"
#include "atlas/core.hpp"
#include "atlas/digest.hpp"
#include "atlas/ingest.hpp"
#include "atlas/linkage.hpp"
#include "atlas/parallel.hpp"

namespace atlas {

// ---------------------------------------------------------------------------
// Agreement
// ---------------------------------------------------------------------------

using Marginal = std::map<std::string, double>;

/// Expected agreement of two independent draws: sum_k p_a(k) p_b(k).
inline double chance_baseline(const Marginal& a, const Marginal& b) {
    CompensatedSum s;
    for (const auto& [k, pa] : a)
        if (auto it = b.find(k); it != b.end()) s.add(pa * it->second);
    return std::clamp(s.value(), 0.0, 1.0);
}

inline Marginal marginal_of(const std::vector<std::string>& values) {
    std::map<std::string, std::size_t> counts;
    for (const auto& v : values) ++counts[v];
    Marginal out;
    for (const auto& [k, c] : counts) out[k] = static_cast<double>(c) / static_cast<double>(values.size());
    return out;
}

struct AgreementReport {
    std::size_t n = 0;
    double exact_level = 0;
    double within_one_level = 0;
    double binary_exposed = 0;
    std::map<std::string, std::optional<double>> per_field;  // channel, margin (both exposed), ai_material
    std::array<std::array<std::size_t, 4>, 4> confusion{};    // [level a][level b]
    std::map<std::string, std::optional<double>> baselines;
    std::size_t n_margin_pairs = 0;
};

namespace detail {

struct AgreementCounts {
    std::size_t n = 0, exact = 0, within_one = 0, binary = 0, channel = 0, ai = 0, margin_n = 0, margin = 0;
    std::array<std::array<std::size_t, 4>, 4> confusion{};

    void add(const TaskLabelRecord& a, const TaskLabelRecord& b) {
        const int la = a.exposure.value(), lb = b.exposure.value();
        ++n;
        exact += la == lb;
        within_one += std::abs(la - lb) <= 1;
        binary += is_exposed(a.exposure) == is_exposed(b.exposure);
        channel += a.channel == b.channel;
        ai += a.ai_material == b.ai_material;
        if (is_exposed(a.exposure) && is_exposed(b.exposure)) {
            ++margin_n;
            margin += a.margin == b.margin;
        }
        ++confusion[la][lb];
    }
    void merge(const AgreementCounts& o) {
        n += o.n, exact += o.exact, within_one += o.within_one, binary += o.binary;
        channel += o.channel, ai += o.ai, margin_n += o.margin_n, margin += o.margin;
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 4; ++j) confusion[i][j] += o.confusion[i][j];
    }
};

using RecordPair = std::pair<const TaskLabelRecord*, const TaskLabelRecord*>;

inline constexpr std::size_t kChunk = 4096;

}  // namespace detail

/// Agreement over explicit record pairs (first = run a, second = run b).
inline AgreementReport agreement_of(const std::vector<detail::RecordPair>& pairs) {
    if (pairs.empty()) throw InputError("agreement: no overlapping records");
    const std::size_t chunks = (pairs.size() + detail::kChunk - 1) / detail::kChunk;
    std::vector<detail::AgreementCounts> parts(chunks);
    parallel_for(chunks, [&](std::size_t c) {
        const std::size_t end = std::min(pairs.size(), (c + 1) * detail::kChunk);
        for (std::size_t i = c * detail::kChunk; i < end; ++i) parts[c].add(*pairs[i].first, *pairs[i].second);
    });
    detail::AgreementCounts t;
    for (const auto& p : parts) t.merge(p);

    const double n = static_cast<double>(t.n);
    AgreementReport r;
    r.n = t.n;
    r.exact_level = static_cast<double>(t.exact) / n;
    r.within_one_level = static_cast<double>(t.within_one) / n;
    r.binary_exposed = static_cast<double>(t.binary) / n;
    r.per_field["channel"] = static_cast<double>(t.channel) / n;
    r.per_field["ai_material"] = static_cast<double>(t.ai) / n;
    r.per_field["margin"] = t.margin_n ? std::optional(static_cast<double>(t.margin) / static_cast<double>(t.margin_n))
                                       : std::nullopt;
    r.n_margin_pairs = t.margin_n;
    r.confusion = t.confusion;

    auto baseline = [&](auto field, bool exposed_only) -> std::optional<double> {
        std::vector<std::string> va, vb;
        for (const auto& [a, b] : pairs) {
            if (exposed_only && !(is_exposed(a->exposure) && is_exposed(b->exposure))) continue;
            va.push_back(field(*a));
            vb.push_back(field(*b));
        }
        if (va.empty()) return std::nullopt;
        return chance_baseline(marginal_of(va), marginal_of(vb));
    };
    r.baselines["exposure_level"] = baseline([](const auto& x) { return std::to_string(x.exposure.value()); }, false);
    r.baselines["binary_exposed"] = baseline([](const auto& x) { return std::string(is_exposed(x.exposure) ? "1" : "0"); }, false);
    r.baselines["channel"] = baseline([](const auto& x) { return std::string(to_string(x.channel)); }, false);
    r.baselines["ai_material"] = baseline([](const auto& x) { return std::string(x.ai_material ? "1" : "0"); }, false);
    r.baselines["margin"] = baseline([](const auto& x) { return std::string(to_string(x.margin)); }, true);
    return r;
}

/// Agreement between two runs over their shared (country, task) keys.
inline AgreementReport agreement_suite(const LabelDataset& a, const LabelDataset& b) {
    std::vector<detail::RecordPair> pairs;
    for (const auto& [k, ra] : a.records)
        if (auto it = b.records.find(k); it != b.records.end()) pairs.emplace_back(&ra, &it->second);
    if (pairs.empty()) throw InputError("agreement: runs share no (country, task) keys");
    return agreement_of(pairs);
}

// ---------------------------------------------------------------------------
// Paraphrase stability
// ---------------------------------------------------------------------------

struct ParaphraseReport {
    std::size_t n_common = 0;
    std::vector<AgreementReport> per_variant;           // variant vs original
    std::vector<std::vector<double>> pairwise_within_one;  // variant x variant
    double joint_within_one = 0;                         // max - min level across variants <= 1
};

inline ParaphraseReport paraphrase_stability(const LabelDataset& original, const std::vector<LabelDataset>& variants) {
    if (variants.size() < 2) throw InputError("paraphrase stability needs at least two variants");
    std::vector<RecordKey> keys;
    for (const auto& [k, _] : original.records) {
        bool all = true;
        for (const auto& v : variants) all = all && v.records.count(k);
        if (all) keys.push_back(k);
    }
    if (keys.empty()) throw InputError("paraphrase stability: no task keys common to all runs");

    ParaphraseReport r;
    r.n_common = keys.size();
    for (const auto& v : variants) {
        std::vector<detail::RecordPair> pairs;
        for (const auto& k : keys) pairs.emplace_back(&v.records.at(k), &original.records.at(k));
        r.per_variant.push_back(agreement_of(pairs));
    }
    const std::size_t m = variants.size();
    r.pairwise_within_one.assign(m, std::vector<double>(m, 1.0));
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = i + 1; j < m; ++j) {
            std::size_t ok = 0;
            for (const auto& k : keys)
                ok += std::abs(variants[i].records.at(k).exposure.value() - variants[j].records.at(k).exposure.value()) <= 1;
            r.pairwise_within_one[i][j] = r.pairwise_within_one[j][i] =
                static_cast<double>(ok) / static_cast<double>(keys.size());
        }
    std::size_t joint = 0;
    for (const auto& k : keys) {
        int lo = 3, hi = 0;
        for (const auto& v : variants) {
            const int l = v.records.at(k).exposure.value();
            lo = std::min(lo, l);
            hi = std::max(hi, l);
        }
        joint += hi - lo <= 1;
    }
    r.joint_within_one = static_cast<double>(joint) / static_cast<double>(keys.size());
    return r;
}

// ---------------------------------------------------------------------------
// Consistency screen
// ---------------------------------------------------------------------------

enum class ConsistencyRule : std::uint8_t {
    r1_level3_denies,
    r2_level0_describes,
    r3_augment_replaces,
    r4_substitute_assistive,
    r5_notai_invokes_ai,
};

template <>
struct EnumNames<ConsistencyRule> {
    static constexpr std::array<std::string_view, 5> names{"r1_level3_denies", "r2_level0_describes",
                                                           "r3_augment_replaces", "r4_substitute_assistive",
                                                           "r5_notai_invokes_ai"};
};

inline bool rule_eligible(ConsistencyRule rule, const TaskLabelRecord& r) {
    switch (rule) {
        case ConsistencyRule::r1_level3_denies: return r.exposure.value() == 3;
        case ConsistencyRule::r2_level0_describes: return r.exposure.value() == 0;
        case ConsistencyRule::r3_augment_replaces: return r.margin == Margin::augment;
        case ConsistencyRule::r4_substitute_assistive: return r.margin == Margin::substitute;
        case ConsistencyRule::r5_notai_invokes_ai: return !r.ai_material;
    }
    return false;
}

inline const std::vector<std::string>& default_negators() {
    static const std::vector<std::string> v{"not", "no", "cannot", "lacks", "without", "rather than", "wrong to say", "never"};
    return v;
}

struct Lexicon {
    std::map<ConsistencyRule, std::vector<std::string>> phrases;
    std::vector<std::string> negators = default_negators();

    /// JSON: {"rules": {"<rule>": [phrases...]}, "negators": [...]}; negators optional.
    static Lexicon from_json(const nlohmann::json& j) {
        Lexicon lex;
        try {
            for (const auto& [name, list] : j.at("rules").items()) {
                auto rule = parse_enum<ConsistencyRule>(name);
                if (!rule) throw InputError("lexicon: unknown rule '" + name + "'");
                lex.phrases[*rule] = list.get<std::vector<std::string>>();
            }
            if (j.contains("negators")) lex.negators = j.at("negators").get<std::vector<std::string>>();
        } catch (const nlohmann::json::exception& e) {
            throw InputError(std::string("lexicon: ") + e.what());
        }
        return lex;
    }

    std::string digest() const {
        nlohmann::ordered_json j;
        for (const auto& [rule, list] : phrases) j["rules"][std::string(to_string(rule))] = list;
        j["negators"] = negators;
        return sha256_hex(j.dump());
    }
};

struct ConsistencyFlag {
    RecordKey key;
    ConsistencyRule rule;
    std::string sentence;
    std::string phrase;
};

struct RuleStats {
    std::size_t eligible = 0;
    std::size_t flagged = 0;
    std::optional<double> share;  // flagged / eligible
};

struct ScreenReport {
    std::vector<ConsistencyFlag> flags;  // ordered by key, then rule
    std::map<ConsistencyRule, RuleStats> per_rule;
    std::size_t n_records = 0;
    std::size_t union_flagged = 0;
    double union_share = 0;  // over the full dataset
};

namespace detail {

inline std::string lower(std::string_view s) {
    std::string out(s);
    for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

/// Split after '.', '!', '?', ';' when followed by whitespace or end of text.
inline std::vector<std::string> split_sentences(std::string_view text) {
    std::vector<std::string> out;
    std::size_t start = 0;
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (c != '.' && c != '!' && c != '?' && c != ';') continue;
        if (i + 1 < text.size() && !std::isspace(static_cast<unsigned char>(text[i + 1]))) continue;
        out.emplace_back(text.substr(start, i + 1 - start));
        start = i + 1;
    }
    if (start < text.size()) out.emplace_back(text.substr(start));
    std::erase_if(out, [](const std::string& s) {
        return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c) || std::ispunct(c); });
    });
    return out;
}

/// Start indices of `phrase` as a whole-word token sequence in `tokens`.
inline std::vector<std::size_t> find_phrase(const std::vector<std::string>& tokens, const std::vector<std::string>& phrase) {
    std::vector<std::size_t> out;
    if (phrase.empty() || phrase.size() > tokens.size()) return out;
    for (std::size_t i = 0; i + phrase.size() <= tokens.size(); ++i)
        if (std::equal(phrase.begin(), phrase.end(), tokens.begin() + static_cast<std::ptrdiff_t>(i))) out.push_back(i);
    return out;
}

/// True when a phrase occurrence has no negator wholly outside its span.
inline bool unnegated_match(const std::vector<std::string>& tokens, const std::vector<std::string>& phrase,
                            const std::vector<std::vector<std::string>>& negators) {
    for (std::size_t start : find_phrase(tokens, phrase)) {
        const std::size_t end = start + phrase.size();
        bool negated = false;
        for (const auto& neg : negators) {
            for (std::size_t n : find_phrase(tokens, neg))
                if (n + neg.size() <= start || n >= end) {
                    negated = true;
                    break;
                }
            if (negated) break;
        }
        if (!negated) return true;
    }
    return false;
}

inline std::vector<std::string> rationale_texts(const TaskLabelRecord& r) {
    return {r.short_rationale, r.substitution_summary, r.augmentation_summary};
}

}  // namespace detail

/// Lower-cased alphanumeric word tokens (apostrophes inside words are dropped).
inline std::vector<std::string> phrase_tokens(std::string_view s) { return detail::word_tokens(std::string(s)); }

/// Flags records meeting a rule's label condition whose rationale has a sentence
/// containing a rule phrase and no negator outside that phrase.
inline ScreenReport consistency_screen(const LabelDataset& ds, const Lexicon& lex) {
    for (ConsistencyRule rule : all_values<ConsistencyRule>()) {
        auto it = lex.phrases.find(rule);
        if (it == lex.phrases.end() || it->second.empty())
            throw InputError("lexicon has no phrases for " + std::string(to_string(rule)));
    }
    std::map<ConsistencyRule, std::vector<std::vector<std::string>>> phrases;
    for (const auto& [rule, list] : lex.phrases)
        for (const auto& p : list) phrases[rule].push_back(phrase_tokens(p));
    std::vector<std::vector<std::string>> negators;
    for (const auto& n : lex.negators) negators.push_back(phrase_tokens(n));

    const auto records = ds.values();
    std::vector<std::vector<ConsistencyFlag>> per_record(records.size());
    parallel_for(records.size(), [&](std::size_t i) {
        const auto& r = records[i];
        std::vector<std::pair<std::string, std::vector<std::string>>> sentences;
        for (const auto& text : detail::rationale_texts(r))
            for (auto& s : detail::split_sentences(text)) {
                auto toks = phrase_tokens(s);
                sentences.emplace_back(std::move(s), std::move(toks));
            }
        for (ConsistencyRule rule : all_values<ConsistencyRule>()) {
            if (!rule_eligible(rule, r)) continue;
            bool done = false;
            for (const auto& [sentence, toks] : sentences) {
                for (std::size_t p = 0; p < phrases[rule].size() && !done; ++p)
                    if (detail::unnegated_match(toks, phrases.at(rule)[p], negators)) {
                        per_record[i].push_back({key_of(r), rule, sentence, lex.phrases.at(rule)[p]});
                        done = true;
                    }
                if (done) break;
            }
        }
    });

    ScreenReport rep;
    rep.n_records = records.size();
    for (ConsistencyRule rule : all_values<ConsistencyRule>()) rep.per_rule[rule];
    for (std::size_t i = 0; i < records.size(); ++i) {
        for (ConsistencyRule rule : all_values<ConsistencyRule>())
            if (rule_eligible(rule, records[i])) ++rep.per_rule[rule].eligible;
        for (auto& f : per_record[i]) {
            ++rep.per_rule[f.rule].flagged;
            rep.flags.push_back(std::move(f));
        }
        rep.union_flagged += !per_record[i].empty();
    }
    for (auto& [rule, s] : rep.per_rule)
        if (s.eligible) s.share = static_cast<double>(s.flagged) / static_cast<double>(s.eligible);
    rep.union_share = rep.n_records ? static_cast<double>(rep.union_flagged) / static_cast<double>(rep.n_records) : 0.0;
    return rep;
}

// ---------------------------------------------------------------------------
// Rationale divergence
// ---------------------------------------------------------------------------

using Stopwords = std::set<std::string>;

inline Stopwords load_stopwords(std::istream& in) {
    Stopwords out;
    std::string line;
    while (std::getline(in, line)) {
        auto w = detail::lower(line);
        std::erase_if(w, [](unsigned char c) { return std::isspace(c); });
        if (!w.empty() && w[0] != '#') out.insert(w);
    }
    return out;
}

inline std::string stopwords_digest(const Stopwords& s) {
    std::string joined;
    for (const auto& w : s) joined += w + '\n';
    return sha256_hex(joined);
}

/// Lower-cased alphabetic tokens of length >= 2, minus stopwords.
inline std::set<std::string> content_tokens(std::string_view text, const Stopwords& stop) {
    std::set<std::string> out;
    std::string cur;
    auto flush = [&] {
        if (cur.size() >= 2 && !stop.count(cur)) out.insert(cur);
        cur.clear();
    };
    for (unsigned char c : text) {
        if (std::isalpha(c))
            cur += static_cast<char>(std::tolower(c));
        else
            flush();
    }
    flush();
    return out;
}

inline double jaccard(const std::set<std::string>& a, const std::set<std::string>& b) {
    if (a.empty() && b.empty()) return 1.0;
    std::size_t inter = 0;
    for (const auto& t : a) inter += b.count(t);
    return static_cast<double>(inter) / static_cast<double>(a.size() + b.size() - inter);
}

inline double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw ProviderError("embedding dimensions differ");
    const double na = detail::norm(a), nb = detail::norm(b);
    if (!(na > 0) || !(nb > 0)) throw InputError("zero-norm embedding");
    return std::clamp(detail::cosine(a, b, na, nb), -1.0, 1.0);
}

/// True when `name` appears in `text` as a whole-word, case-insensitive sequence.
inline bool mentions(std::string_view text, std::string_view name) {
    const auto n = phrase_tokens(name);
    return !n.empty() && !detail::find_phrase(phrase_tokens(text), n).empty();
}

struct DivergencePair {
    std::string id;
    std::string text_a, country_a;
    std::string text_b, country_b;
};

struct DivergenceRow {
    std::string id;
    double jaccard = 0;
    std::optional<double> cosine;
    bool mention_a = false;
    bool mention_b = false;
};

struct DivergenceThresholds {
    double jaccard = 0.40;
    double cosine = 0.55;
};

struct DivergenceReport {
    std::vector<DivergenceRow> rows;
    std::vector<std::string> skipped;  // empty token set after filtering
    DivergenceThresholds thresholds;
    std::map<std::string, double> quadrant_shares;  // only with embeddings
    std::string stopwords_digest;
};

inline constexpr std::array<std::string_view, 4> kQuadrants{"high_lexical_high_semantic", "high_lexical_low_semantic",
                                                            "low_lexical_high_semantic", "low_lexical_low_semantic"};

inline DivergenceReport rationale_divergence(const std::vector<DivergencePair>& pairs, const Stopwords& stop,
                                             const EmbeddingProvider* embedder, DivergenceThresholds th = {}) {
    DivergenceReport rep;
    rep.thresholds = th;
    rep.stopwords_digest = stopwords_digest(stop);
    std::vector<std::optional<DivergenceRow>> rows(pairs.size());
    parallel_for(pairs.size(), [&](std::size_t i) {
        const auto& p = pairs[i];
        const auto ta = content_tokens(p.text_a, stop), tb = content_tokens(p.text_b, stop);
        if (ta.empty() || tb.empty()) return;
        DivergenceRow r{p.id, jaccard(ta, tb), std::nullopt, mentions(p.text_a, p.country_a), mentions(p.text_b, p.country_b)};
        if (embedder) r.cosine = cosine_similarity(embedder->embed(p.text_a), embedder->embed(p.text_b));
        rows[i] = std::move(r);
    });
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        if (rows[i])
            rep.rows.push_back(std::move(*rows[i]));
        else
            rep.skipped.push_back(pairs[i].id);
    }
    if (embedder && !rep.rows.empty()) {
        std::array<std::size_t, 4> counts{};
        for (const auto& r : rep.rows) {
            const bool hl = r.jaccard >= th.jaccard, hs = *r.cosine >= th.cosine;
            ++counts[(hl ? 0 : 2) + (hs ? 0 : 1)];
        }
        for (std::size_t q = 0; q < 4; ++q)
            rep.quadrant_shares[std::string(kQuadrants[q])] =
                static_cast<double>(counts[q]) / static_cast<double>(rep.rows.size());
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Rationale predictability harness
// ---------------------------------------------------------------------------

/// Predicts a full label from the task text and a rationale; the original label is withheld.
class LabelPredictor {
public:
    virtual ~LabelPredictor() = default;
    virtual TaskLabelRecord predict(const std::string& task_text, const std::string& rationale) const = 0;
};

struct HarnessConfig {
    std::size_t per_level = 50;
    std::uint64_t seed = 0;
    std::size_t retries = 2;
};

struct HarnessResult {
    std::vector<RecordKey> sample;
    std::array<std::size_t, 4> per_level_drawn{};
    AgreementReport agreement;  // predicted (a) vs original (b)
};

/// Seeded, equal-count-per-level sample; each stratum is a prefix of a
/// per-level shuffle, so it does not depend on dataset iteration order.
inline std::vector<RecordKey> stratified_sample(const LabelDataset& ds, std::size_t per_level, std::uint64_t seed) {
    std::array<std::vector<RecordKey>, 4> strata;
    for (const auto& [k, r] : ds.records) strata[r.exposure.value()].push_back(k);
    std::vector<RecordKey> out;
    for (std::size_t l = 0; l < 4; ++l) {
        auto rng = stream_rng(seed, 0x5354524154ull, l);
        portable_shuffle(strata[l], rng);
        const std::size_t take = std::min(per_level, strata[l].size());
        out.insert(out.end(), strata[l].begin(), strata[l].begin() + static_cast<std::ptrdiff_t>(take));
    }
    return out;
}

inline HarnessResult rationale_harness(const LabelDataset& ds, const TextMap& task_texts, const LabelPredictor& predictor,
                                       const HarnessConfig& cfg = {}) {
    HarnessResult res;
    res.sample = stratified_sample(ds, cfg.per_level, cfg.seed);
    if (res.sample.empty()) throw InputError("rationale harness: empty sample");
    std::vector<TaskLabelRecord> predicted(res.sample.size());
    parallel_for(res.sample.size(), [&](std::size_t i) {
        const auto& orig = ds.records.at(res.sample[i]);
        auto t = task_texts.find(orig.task_id);
        const std::string text = t == task_texts.end() ? std::string() : t->second;
        predicted[i] = detail::with_retries(cfg.retries, [&] {
            auto p = predictor.predict(text, orig.short_rationale);
            p.country = orig.country;
            p.task_id = orig.task_id;
            auto check = validate_record(to_raw_row(p));
            if (!check.ok()) throw ProviderError("predictor returned an invalid label for " + orig.task_id);
            return *check.record;
        });
    });
    std::vector<detail::RecordPair> pairs;
    for (std::size_t i = 0; i < res.sample.size(); ++i) {
        const auto& orig = ds.records.at(res.sample[i]);
        ++res.per_level_drawn[orig.exposure.value()];
        pairs.emplace_back(&predicted[i], &orig);
    }
    res.agreement = agreement_of(pairs);
    return res;
}

// ---------------------------------------------------------------------------
// Distribution tables
// ---------------------------------------------------------------------------

struct DistributionTable {
    std::string group;
    std::size_t n = 0;
    std::array<double, 4> level{};
    std::array<double, 6> channel{};  // Channel enum order, none last
    std::array<double, 4> margin{};   // Margin enum order, unclear last
    std::array<double, 2> ai_material{};  // false, true
};

namespace detail {

inline DistributionTable distribution_of(std::string group, const std::vector<const TaskLabelRecord*>& recs) {
    std::array<std::size_t, 4> lv{}, mg{};
    std::array<std::size_t, 6> ch{};
    std::array<std::size_t, 2> ai{};
    for (const auto* r : recs) {
        ++lv[r->exposure.value()];
        ++ch[index_of(r->channel)];
        ++mg[index_of(r->margin)];
        ++ai[r->ai_material ? 1 : 0];
    }
    DistributionTable t;
    t.group = std::move(group);
    t.n = recs.size();
    if (t.n == 0) return t;
    const double n = static_cast<double>(t.n);
    for (std::size_t i = 0; i < 4; ++i) t.level[i] = static_cast<double>(lv[i]) / n;
    for (std::size_t i = 0; i < 6; ++i) t.channel[i] = static_cast<double>(ch[i]) / n;
    for (std::size_t i = 0; i < 4; ++i) t.margin[i] = static_cast<double>(mg[i]) / n;
    for (std::size_t i = 0; i < 2; ++i) t.ai_material[i] = static_cast<double>(ai[i]) / n;
    return t;
}

}  // namespace detail

/// Marginal share tables for the whole dataset ("all") or per registry group.
/// Records of countries outside the registry are grouped under "unregistered".
inline std::vector<DistributionTable> distribution_check(const LabelDataset& ds,
                                                         const std::optional<Grouping>& grouping = std::nullopt,
                                                         const CountryRegistry* registry = nullptr) {
    std::map<std::string, std::vector<const TaskLabelRecord*>> groups;
    for (const auto& [k, r] : ds.records) {
        std::string g = "all";
        if (grouping) {
            if (!registry) throw InputError("grouped distribution tables need a country registry");
            const auto* ctx = registry->find(r.country);
            g = ctx ? group_label(*ctx, *grouping) : "unregistered";
        }
        groups[g].push_back(&r);
    }
    std::vector<DistributionTable> out;
    for (const auto& [g, recs] : groups) out.push_back(detail::distribution_of(g, recs));
    return out;
}

}  // namespace atlas
