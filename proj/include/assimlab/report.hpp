#pragma once

#include "assimlab/csv.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace assimlab::report {

inline constexpr const char* kVersion = "1.0.0";

std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const std::filesystem::path& path);

// Written as run_manifest.json beside a command's outputs. Timestamps live
// only here, so result files themselves are identical across reruns.
struct RunManifest {
    std::string command;
    std::vector<std::string> argv;
    nlohmann::ordered_json config = nlohmann::ordered_json::object();  // every effective setting, defaults included
    std::vector<std::pair<std::string, std::string>> inputs;           // path, sha256
    std::vector<std::string> outputs;
    std::string started_utc, finished_utc;

    void add_input(const std::filesystem::path& path);
    nlohmann::ordered_json to_json() const;
    void write(const std::filesystem::path& dir) const;
};

std::string utc_now();

// Static figures rendered from already-written CSV tables.
std::string sweep_heatmap_svg(const csv::Table& sweep, const std::string& position);
std::string curves_svg(const csv::Table& curves);
std::string rates_svg(const csv::Table& conditions);

}  // namespace assimlab::report
