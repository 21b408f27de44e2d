#pragma once

#include <chrono>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

namespace ssa::app {

inline constexpr const char* kToolVersion = "0.1.0";

/// Record of one artifact-producing invocation, written as JSON next to its
/// outputs.
class RunManifest {
public:
    RunManifest(std::string command, const std::vector<std::string>& argv);

    nlohmann::json& config() { return doc_["config"]; }
    nlohmann::json& results() { return doc_["results"]; }
    void set_seed(std::uint64_t seed) { doc_["seed"] = seed; }
    void add_input(const std::filesystem::path& p) { doc_["inputs"].push_back(p.string()); }
    void add_output(const std::filesystem::path& p) { doc_["outputs"].push_back(p.string()); }

    /// Stamps the end time and writes the document.
    void write(const std::filesystem::path& path);

private:
    nlohmann::json doc_;
};

std::string utc_timestamp(std::chrono::system_clock::time_point t);

}  // namespace ssa::app
