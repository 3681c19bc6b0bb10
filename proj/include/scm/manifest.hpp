#pragma once

// Run manifests: digests of the inputs and outputs of one command, written
// as run.json next to the outputs.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"

namespace scm {

std::string sha256_hex(std::string_view bytes);
// Throws IoError if the file cannot be read.
std::string sha256_file(const std::string& path);

const char* tool_version();

struct RunManifest {
    std::string command;
    std::optional<std::string> config_sha256;  // nullopt when run without a config file
    std::optional<std::string> input_sha256;
    std::uint64_t seed = 0;
    std::string timestamp;  // UTC, ISO 8601; the only field allowed to differ between reruns
    std::vector<std::pair<std::string, std::string>> outputs;  // file name, sha256
    nlohmann::ordered_json summary = nlohmann::ordered_json::object();

    nlohmann::ordered_json to_json() const;
};

std::string utc_timestamp();

}  // namespace scm
