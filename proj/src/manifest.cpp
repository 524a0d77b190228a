#include "pathloss/manifest.hpp"

#include <cstdio>
#include <fstream>

#include "pathloss/errors.hpp"

namespace pathloss::manifest {

uint64_t fnv1a64(const void* data, size_t size) {
    const unsigned char* p = static_cast<const unsigned char*>(data);
    uint64_t h = 0xcbf29ce484222325ULL;
    for (size_t i = 0; i < size; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

uint64_t fnv1a64_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot hash missing file " + path.string());
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return fnv1a64(bytes.data(), bytes.size());
}

std::string hex64(uint64_t value) {
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(value));
    return buf;
}

RunManifest::RunManifest(std::string command, nlohmann::json resolved_config) {
    doc_["schema_version"] = 1;
    doc_["tool_version"] = kToolVersion;
    doc_["command"] = std::move(command);
    std::string dumped = resolved_config.dump();
    doc_["config"] = std::move(resolved_config);
    doc_["config_digest"] = hex64(fnv1a64(dumped.data(), dumped.size()));
    doc_["seeds"] = nlohmann::json::array();
    doc_["inputs"] = nlohmann::json::array();
}

void RunManifest::add_seed(uint64_t seed) { doc_["seeds"].push_back(seed); }

void RunManifest::add_input(const std::filesystem::path& path) {
    doc_["inputs"].push_back(path.string());
}

void RunManifest::add_artifact(const std::filesystem::path& path) {
    artifacts_.push_back(path);
}

void RunManifest::write(const std::filesystem::path& path) const {
    nlohmann::json doc = doc_;
    doc["artifacts"] = nlohmann::json::array();
    for (const auto& artifact : artifacts_)
        doc["artifacts"].push_back({{"path", artifact.string()},
                                    {"fnv1a64", hex64(fnv1a64_file(artifact))}});
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("cannot open " + path.string() + " for writing");
    out << doc.dump(2) << "\n";
}

ArtifactGuard::~ArtifactGuard() {
    if (committed_) return;
    std::error_code ec;
    for (const auto& path : tracked_) std::filesystem::remove(path, ec);
}

void ArtifactGuard::track(const std::filesystem::path& path) { tracked_.push_back(path); }

} // namespace pathloss::manifest
