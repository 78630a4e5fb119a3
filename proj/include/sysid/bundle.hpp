// SPDX-License-Identifier: Apache-2.0
//
// Result emission and config plumbing shared by the experiment pipelines.

#ifndef SYSID_BUNDLE_HPP
#define SYSID_BUNDLE_HPP

#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "sysid/errors.hpp"

namespace sysid {

using nlohmann::json;

inline constexpr const char* kSchemaVersion = "sysid-experiment/1";
inline constexpr const char* kLibraryVersion = "0.1.0";

namespace detail {

inline void check_keys(const json& j, const std::set<std::string>& allowed,
                       const std::string& context) {
    if (!j.is_object()) throw ConfigError(context + ": expected an object");
    for (auto it = j.begin(); it != j.end(); ++it)
        if (allowed.count(it.key()) == 0)
            throw ConfigError(context + ": unknown key '" + it.key() + "'");
}

template <typename T>
T get_or(const json& j, const std::string& key, T fallback) {
    if (!j.contains(key)) return fallback;
    return j.at(key).get<T>();
}

inline std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

}  // namespace detail

/// Column-ordered metrics table; every row carries its trial seed so runs
/// can be replayed individually.
struct MetricsTable {
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;

    void add_row(std::vector<std::string> row) {
        if (row.size() != columns.size())
            throw DimensionError("MetricsTable: row width mismatch");
        rows.push_back(std::move(row));
    }

    void write_csv(std::ostream& out) const {
        for (size_t c = 0; c < columns.size(); ++c)
            out << (c ? "," : "") << columns[c];
        out << "\n";
        for (const auto& row : rows) {
            for (size_t c = 0; c < row.size(); ++c) out << (c ? "," : "") << row[c];
            out << "\n";
        }
    }
};

/// Everything an experiment emits: the per-trial metrics, free-form named
/// artifacts (trajectories, curves, chains), and reproducibility metadata.
struct ResultBundle {
    MetricsTable metrics;
    std::vector<std::pair<std::string, std::string>> artifacts;  // filename -> content
    json metadata;

    void write(const std::string& out_dir) const {
        namespace fs = std::filesystem;
        fs::create_directories(out_dir);
        {
            std::ofstream out(fs::path(out_dir) / "metrics.csv");
            metrics.write_csv(out);
        }
        {
            std::ofstream out(fs::path(out_dir) / "metadata.json");
            out << metadata.dump(2) << "\n";
        }
        for (const auto& [name, content] : artifacts) {
            std::ofstream out(fs::path(out_dir) / name);
            out << content;
        }
    }
};

inline json make_metadata(const json& config, double wall_seconds) {
    json meta;
    meta["config"] = config;
    meta["config_hash"] = detail::fnv1a(config.dump());
    meta["versions"] = {{"sysid", kLibraryVersion}};
    meta["wall_time_seconds"] = wall_seconds;
    return meta;
}

}  // namespace sysid

#endif  // SYSID_BUNDLE_HPP
