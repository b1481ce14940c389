#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace ariiha {

// Provenance snapshot written once per output directory. The flag map is
// total (defaults included), so a run is reproducible from the manifest alone.
struct RunManifest {
    std::string command;
    std::string version;
    std::string timestamp_utc;
    std::string backend_identity;
    std::map<std::string, std::string> flags;
    std::map<std::string, std::string> input_digests;  // path -> fnv1a64 hex
    std::vector<std::string> outputs;

    void add_input(const std::filesystem::path& path);
    void write(const std::filesystem::path& directory) const;
};

extern const char* const kVersion;

}  // namespace ariiha
