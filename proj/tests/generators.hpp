#pragma once

// Hand-rolled generators for property tests.

#include <random>
#include <string>
#include <vector>

#include "atlas/core.hpp"
#include "atlas/ingest.hpp"

namespace atlas::gen {

inline std::string pick_text(std::mt19937_64& rng) {
    static const std::vector<std::string> words{
        "records", "ledger", "entries", "machine", "vision",  "robotic", "arm",    "software", "workflow",
        "clerks",  "review", "invoices", "sensors", "control", "models",  "scores", "routine",  "manual"};
    std::uniform_int_distribution<std::size_t> n(3, 12), w(0, words.size() - 1);
    std::string out;
    for (std::size_t i = 0, k = n(rng); i < k; ++i) {
        if (i) out += ' ';
        out += words[w(rng)];
    }
    return out + ".";
}

/// A schema-valid, normalized record.
inline TaskLabelRecord random_record(std::mt19937_64& rng, std::string country, std::string task_id) {
    std::uniform_int_distribution<int> level(0, 3), ch(0, 5), mg(0, 3), fn(1, 4), coin(0, 1);
    TaskLabelRecord r;
    r.country = std::move(country);
    r.task_id = std::move(task_id);
    r.exposure = ExposureLevel(level(rng));
    r.channel = static_cast<Channel>(ch(rng));
    r.margin_raw = static_cast<Margin>(mg(rng));
    r.substitution_path = detail::margin_requires_substitution(r.margin_raw) || coin(rng);
    r.augmentation_path = detail::margin_requires_augmentation(r.margin_raw) || coin(rng);
    r.margin = is_exposed(r.exposure) ? r.margin_raw : Margin::unclear;
    r.ai_material = coin(rng);
    r.ai_function = r.ai_material ? static_cast<AiFunction>(fn(rng)) : AiFunction::none;
    r.short_rationale = pick_text(rng);
    r.substitution_summary = pick_text(rng);
    r.augmentation_summary = pick_text(rng);
    return r;
}

inline std::string task_name(std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "T%04zu", i);
    return buf;
}

inline std::string country_name(std::size_t i) {
    std::string s = "C";
    s += static_cast<char>('A' + i / 26 % 26);
    s += static_cast<char>('A' + i % 26);
    return s;
}

inline LabelDataset random_dataset(std::mt19937_64& rng, std::size_t countries, std::size_t tasks) {
    std::vector<TaskLabelRecord> rows;
    for (std::size_t c = 0; c < countries; ++c)
        for (std::size_t t = 0; t < tasks; ++t) rows.push_back(random_record(rng, country_name(c), task_name(t)));
    return deduplicate(rows);
}

/// Same task universe as `base`, with each exposure level perturbed by at most
/// `max_step` with probability `p`.
inline LabelDataset perturb(const LabelDataset& base, std::mt19937_64& rng, double p, int max_step = 1) {
    LabelDataset out = base;
    std::bernoulli_distribution flip(p);
    std::uniform_int_distribution<int> step(-max_step, max_step);
    for (auto& [k, r] : out.records) {
        if (!flip(rng)) continue;
        int lvl = std::clamp(r.exposure.value() + step(rng), 0, 3);
        r.exposure = ExposureLevel(lvl);
        r.margin = is_exposed(r.exposure) ? r.margin_raw : Margin::unclear;
    }
    return out;
}

}  // namespace atlas::gen
