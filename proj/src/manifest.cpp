#include "tandem/manifest.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <json.hpp>

#include "tandem/error.hpp"

namespace tandem {

using nlohmann::json;

std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

std::string canonical_json(const std::string& json_text) {
    try {
        return json::parse(json_text).dump();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
}

std::string RunManifest::config_hash() const {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(canonical_json(config_json))));
    return buf;
}

std::string RunManifest::to_json() const {
    json j;
    j["command"] = command;
    j["config_hash"] = config_hash();
    j["config"] = json::parse(config_json);
    j["seed"] = seed;
    j["inputs"] = inputs;
    j["outputs"] = outputs;
    j["version"] = kVersion;
    j["started_at"] = started_at;
    j["wall_clock_seconds"] = wall_clock_seconds;
    return j.dump(2);
}

std::string utc_timestamp() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

}  // namespace tandem
