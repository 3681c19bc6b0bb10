#include "scm/manifest.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iterator>
#include <memory>

#include <openssl/evp.h>

#include "scm/error.hpp"

#ifndef SCM_VERSION
#define SCM_VERSION "0.0.0"
#endif

namespace scm {

std::string sha256_hex(std::string_view bytes) {
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
        EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 ||
        EVP_DigestFinal_ex(ctx.get(), digest, &len) != 1)
        throw Error(ErrorCode::IoError, "sha256 digest failed");
    static const char* hex = "0123456789abcdef";
    std::string out;
    out.reserve(2 * len);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[digest[i] >> 4]);
        out.push_back(hex[digest[i] & 0xF]);
    }
    return out;
}

std::string sha256_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot read '" + path + "'");
    const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return sha256_hex(bytes);
}

const char* tool_version() { return SCM_VERSION; }

std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

nlohmann::ordered_json RunManifest::to_json() const {
    nlohmann::ordered_json j;
    j["command"] = command;
    j["tool_version"] = tool_version();
    j["config_sha256"] = config_sha256 ? nlohmann::ordered_json(*config_sha256) : nlohmann::ordered_json(nullptr);
    j["input_sha256"] = input_sha256 ? nlohmann::ordered_json(*input_sha256) : nlohmann::ordered_json(nullptr);
    j["seed"] = seed;
    j["timestamp"] = timestamp;
    auto outs = nlohmann::ordered_json::object();
    for (const auto& [name, digest] : outputs) outs[name] = digest;
    j["outputs"] = outs;
    j["summary"] = summary;
    return j;
}

}  // namespace scm
