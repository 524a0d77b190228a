#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

namespace pathloss::manifest {

inline constexpr const char* kToolVersion = "pathloss-lab 0.1.0";

uint64_t fnv1a64(const void* data, size_t size);
uint64_t fnv1a64_file(const std::filesystem::path& path);
std::string hex64(uint64_t value);

/// Run record: resolved config digest, seeds, inputs and artifact content
/// hashes. Reruns with identical inputs reproduce identical hashes.
class RunManifest {
public:
    RunManifest(std::string command, nlohmann::json resolved_config);

    void add_seed(uint64_t seed);
    void add_input(const std::filesystem::path& path);
    void add_artifact(const std::filesystem::path& path); // hashed on write()
    void write(const std::filesystem::path& path) const;

private:
    nlohmann::json doc_;
    std::vector<std::filesystem::path> artifacts_;
};

/// Removes every tracked file unless the run commits; keeps failed commands
/// from leaving partial outputs behind.
class ArtifactGuard {
public:
    ~ArtifactGuard();
    void track(const std::filesystem::path& path);
    void commit() { committed_ = true; }

private:
    std::vector<std::filesystem::path> tracked_;
    bool committed_ = false;
};

} // namespace pathloss::manifest
