#include "app/manifest.hpp"

#include <ctime>
#include <fstream>

#include "ssa/errors.hpp"

namespace ssa::app {

std::string utc_timestamp(std::chrono::system_clock::time_point t) {
    const std::time_t tt = std::chrono::system_clock::to_time_t(t);
    std::tm tm{};
    gmtime_r(&tt, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

RunManifest::RunManifest(std::string command, const std::vector<std::string>& argv) {
    doc_["command"] = std::move(command);
    doc_["argv"] = argv;
    doc_["tool_version"] = kToolVersion;
    doc_["started_at"] = utc_timestamp(std::chrono::system_clock::now());
    doc_["config"] = nlohmann::json::object();
    doc_["inputs"] = nlohmann::json::array();
    doc_["outputs"] = nlohmann::json::array();
}

void RunManifest::write(const std::filesystem::path& path) {
    doc_["finished_at"] = utc_timestamp(std::chrono::system_clock::now());
    std::ofstream out(path);
    if (!out) throw Error("cannot write manifest " + path.string());
    out << doc_.dump(2) << '\n';
}

}  // namespace ssa::app
