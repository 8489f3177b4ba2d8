#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>

#include <json.hpp>

#include "acnn/errors.hpp"

namespace acnn {

#ifndef ACNN_VERSION_STRING
#define ACNN_VERSION_STRING "v0.1.0"
#endif

inline const char* version_string() { return ACNN_VERSION_STRING; }

// Reproducibility sidecar written next to every artifact a command produces.
struct RunRecord {
    std::string command_line;
    std::uint64_t seed = 0;
    std::string config_digest;
    std::string version = version_string();
    std::map<std::string, double> timings_seconds;
};

// FNV-1a, hex; enough to tell configs apart in run records.
inline std::string digest_hex(const std::string& bytes) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

inline void write_run_record(const std::filesystem::path& path, const RunRecord& record) {
    nlohmann::json j;
    j["command_line"] = record.command_line;
    j["seed"] = record.seed;
    j["config_digest"] = record.config_digest;
    j["version"] = record.version;
    j["timings_seconds"] = record.timings_seconds;
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream os(tmp, std::ios::trunc);
        if (!os) throw IoError("cannot write run record: " + path.string());
        os << j.dump(2) << '\n';
    }
    std::filesystem::rename(tmp, path);
}

class StopWatch {
public:
    StopWatch() : start_(std::chrono::steady_clock::now()) {}
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_;
};

}  // namespace acnn
