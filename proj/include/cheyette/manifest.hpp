#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace cheyette::cli {

inline constexpr const char* kToolkitVersion = "0.1.0";

/// Provenance record written next to every command's outputs. On success all
/// files listed in outputs must exist; write() enforces that.
struct RunManifest {
    std::string command;
    std::vector<std::string> config_paths;
    std::vector<std::uint64_t> seeds;
    std::string version = kToolkitVersion;
    double wall_seconds = 0.0;
    std::vector<std::string> outputs;

    nlohmann::ordered_json to_json() const;
    void write(const std::string& path) const;
};

}  // namespace cheyette::cli
