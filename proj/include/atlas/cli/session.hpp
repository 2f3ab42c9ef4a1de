#pragma once

// Option registry with JSON config fallback, provenance headers, and output writers.

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "atlas/core.hpp"
#include "atlas/csv.hpp"
#include "atlas/digest.hpp"

#ifndef ATLAS_VERSION
#define ATLAS_VERSION "0.0.0"
#endif

namespace atlas::cli {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

inline constexpr std::string_view kToolName = "atlas";

/// Missing or malformed arguments detected after config resolution; exit code 1.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw InputError("cannot open " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline std::ifstream open_input(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw InputError("cannot open " + p.string());
    return in;
}

/// Content digest of a file, or of a directory's sorted (name, digest) listing.
inline std::string path_digest(const fs::path& p) {
    if (!fs::is_directory(p)) return file_digest(p.string());
    std::vector<std::pair<std::string, std::string>> entries;
    for (const auto& e : fs::directory_iterator(p))
        if (e.is_regular_file()) entries.emplace_back(e.path().filename().string(), file_digest(e.path().string()));
    std::sort(entries.begin(), entries.end());
    std::string joined;
    for (const auto& [n, d] : entries) joined += n + '\t' + d + '\n';
    return sha256_hex(joined);
}

enum class PathKind { none, input, input_dir, store_dir };

/// Options of one command. Values not given on the command line are looked up
/// in the config as config[a][b][key], then config[a][key], then config[key]
/// for a command path (a, b). Relative config paths resolve against the config
/// file's directory.
class Options {
public:
    Options(CLI::App* app, std::vector<std::string> scope) : app_(app), scope_(std::move(scope)) {}

    CLI::App* app() const { return app_; }

    template <class T>
    CLI::Option* add(const std::string& key, T& target, const std::string& help, bool required = false,
                     PathKind kind = PathKind::none) {
        auto* opt = app_->add_option("--" + key, target, help);
        Entry e;
        e.key = key;
        e.opt = opt;
        e.required = required;
        e.kind = kind;
        e.from_json = [&target, kind](const json& j, const fs::path& base) {
            if constexpr (std::is_same_v<T, std::string>) {
                target = j.get<std::string>();
                if (kind != PathKind::none && fs::path(target).is_relative()) target = (base / target).string();
            } else if constexpr (std::is_same_v<T, std::vector<std::string>>) {
                target = j.is_array() ? j.get<std::vector<std::string>>() : std::vector<std::string>{j.get<std::string>()};
                if (kind != PathKind::none)
                    for (auto& t : target)
                        if (fs::path(t).is_relative()) t = (base / t).string();
            } else {
                target = j.get<T>();
            }
        };
        e.to_json = [&target]() { return json(target); };
        e.present = [&target]() {
            if constexpr (std::is_same_v<T, std::string> || std::is_same_v<T, std::vector<std::string>>)
                return !target.empty();
            else
                return true;
        };
        if constexpr (std::is_same_v<T, std::string>) {
            e.paths = [&target]() { return target.empty() ? std::vector<std::string>{} : std::vector<std::string>{target}; };
        } else if constexpr (std::is_same_v<T, std::vector<std::string>>) {
            e.paths = [&target]() { return target; };
        } else {
            e.paths = []() { return std::vector<std::string>{}; };
        }
        entries_.push_back(std::move(e));
        return opt;
    }

    CLI::Option* flag(const std::string& key, bool& target, const std::string& help) {
        auto* opt = app_->add_flag("--" + key, target, help);
        Entry e;
        e.key = key;
        e.opt = opt;
        e.from_json = [&target](const json& j, const fs::path&) { target = j.get<bool>(); };
        e.to_json = [&target]() { return json(target); };
        e.present = [] { return true; };
        e.paths = [] { return std::vector<std::string>{}; };
        entries_.push_back(std::move(e));
        return opt;
    }

    const json* lookup(const json& config, const std::string& key) const {
        if (!config.is_object()) return nullptr;
        std::vector<const json*> chain{&config};
        for (const auto& s : scope_) {
            const json* last = chain.back();
            if (!last->is_object() || !last->contains(s)) break;
            chain.push_back(&last->at(s));
        }
        for (auto it = chain.rbegin(); it != chain.rend(); ++it)
            if ((*it)->is_object() && (*it)->contains(key)) return &(*it)->at(key);
        return nullptr;
    }

    void resolve(const json& config, const fs::path& config_dir) {
        for (auto& e : entries_) {
            if (e.opt->count() > 0) continue;
            if (const json* v = lookup(config, e.key)) {
                try {
                    e.from_json(*v, config_dir);
                } catch (const json::exception& ex) {
                    throw InputError("config key '" + e.key + "': " + ex.what());
                }
            }
        }
        for (const auto& e : entries_) {
            if (e.required && !e.present()) throw UsageError("missing required option --" + e.key);
            if (e.kind == PathKind::input || e.kind == PathKind::input_dir)
                for (const auto& p : e.paths())
                    if (!fs::exists(p)) throw InputError("--" + e.key + ": no such path " + p);
        }
    }

    /// Resolved parameters; input paths are replaced by content digests so the
    /// result does not depend on where the files live.
    json canonical() const {
        json out = json::object();
        for (const auto& e : entries_) {
            if (e.kind == PathKind::input || e.kind == PathKind::input_dir) {
                json files = json::array();
                for (const auto& p : e.paths()) files.push_back({{"name", fs::path(p).filename().string()}, {"sha256", path_digest(p)}});
                out[e.key] = files;
            } else if (e.kind == PathKind::store_dir) {
                // Digest taken before the command runs; record mode may add files later.
                json files = json::array();
                for (const auto& p : e.paths())
                    files.push_back({{"name", fs::path(p).filename().string()},
                                     {"sha256", fs::exists(p) ? json(path_digest(p)) : json(nullptr)}});
                out[e.key] = files;
            } else {
                out[e.key] = e.to_json();
            }
        }
        return out;
    }

private:
    struct Entry {
        std::string key;
        CLI::Option* opt = nullptr;
        bool required = false;
        PathKind kind = PathKind::none;
        std::function<void(const json&, const fs::path&)> from_json;
        std::function<json()> to_json;
        std::function<bool()> present;
        std::function<std::vector<std::string>()> paths;
    };
    CLI::App* app_;
    std::vector<std::string> scope_;
    std::vector<Entry> entries_;
};

/// Provenance carried by every emitted file.
struct Header {
    std::string command;
    std::uint64_t seed = 0;
    json params;
    std::string config_digest;

    static Header make(std::string command, std::uint64_t seed, json params) {
        Header h{std::move(command), seed, std::move(params), {}};
        h.config_digest = sha256_hex(json{{"command", h.command}, {"params", h.params}}.dump());
        return h;
    }

    ordered_json to_json() const {
        return ordered_json{{"tool", kToolName}, {"version", ATLAS_VERSION}, {"command", command},
                            {"config_digest", config_digest}, {"seed", seed}, {"params", params}};
    }

    std::string comment_block() const {
        std::string s;
        s += "# tool: " + std::string(kToolName) + " " + ATLAS_VERSION + "\n";
        s += "# command: " + command + "\n";
        s += "# config_digest: " + config_digest + "\n";
        s += "# seed: " + std::to_string(seed) + "\n";
        s += "# params: " + params.dump() + "\n";
        return s;
    }
};

/// Writes provenance-stamped files into one output directory.
class OutputDir {
public:
    OutputDir(fs::path dir, Header header) : dir_(std::move(dir)), header_(std::move(header)) {
        fs::create_directories(dir_);
    }

    const Header& header() const { return header_; }
    const fs::path& path() const { return dir_; }

    void csv(const std::string& name, const std::vector<std::string>& columns,
             const std::vector<std::vector<std::string>>& rows) {
        std::ostringstream ss;
        ss << header_.comment_block();
        csv::write_row(ss, columns);
        for (const auto& r : rows) csv::write_row(ss, r);
        put(name, ss.str());
    }

    /// JSON document with the header under "header" followed by `body`'s members.
    void json_doc(const std::string& name, const ordered_json& body) {
        ordered_json doc{{"header", header_.to_json()}};
        for (auto it = body.begin(); it != body.end(); ++it) doc[it.key()] = it.value();
        put(name, doc.dump(2) + "\n");
    }

    /// Line-oriented file prefixed with the comment block.
    void lines(const std::string& name, const std::string& content) { put(name, header_.comment_block() + content); }

    const std::vector<std::string>& written() const { return written_; }

private:
    void put(const std::string& name, const std::string& content) {
        const auto p = dir_ / name;
        std::ofstream out(p, std::ios::binary | std::ios::trunc);
        if (!out) throw InputError("cannot write " + p.string());
        out << content;
        if (!out) throw InputError("write failed for " + p.string());
        written_.push_back(name);
    }

    fs::path dir_;
    Header header_;
    std::vector<std::string> written_;
};

inline std::string fmt(double v) { return csv::format_double(v); }
inline std::string fmt(const std::optional<double>& v) { return csv::format_optional(v); }

inline json opt_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace atlas::cli
