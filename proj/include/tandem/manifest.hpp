#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace tandem {

inline constexpr const char* kVersion = "0.1.0";

std::uint64_t fnv1a64(std::string_view bytes);

/// Compact JSON with object keys sorted; whitespace and key order in the
/// source do not affect the result.
std::string canonical_json(const std::string& json_text);

/// Record of one command invocation, written next to its outputs.
struct RunManifest {
    std::string command;
    std::string config_json = "{}";  // hashed in canonical form
    std::uint64_t seed = 0;
    std::vector<std::string> inputs;
    std::vector<std::string> outputs;
    std::string started_at;  // UTC, ISO 8601
    double wall_clock_seconds = 0.0;

    std::string config_hash() const;  // 16 hex digits
    std::string to_json() const;
};

std::string utc_timestamp();

}  // namespace tandem
