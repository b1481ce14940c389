#include "ariiha/manifest.hpp"

#include <json.hpp>

#include "ariiha/util.hpp"

namespace ariiha {

const char* const kVersion = "0.1.0";

void RunManifest::add_input(const std::filesystem::path& path) {
    input_digests[path.string()] = fnv1a64_hex(read_text_file(path));
}

void RunManifest::write(const std::filesystem::path& directory) const {
    nlohmann::json doc;
    doc["command"] = command;
    doc["version"] = version.empty() ? kVersion : version;
    doc["timestamp_utc"] = timestamp_utc;
    doc["backend"] = backend_identity;
    doc["flags"] = flags;
    doc["inputs"] = input_digests;
    doc["outputs"] = outputs;
    write_text_file(directory / "manifest.json", doc.dump(2) + "\n");
}

}  // namespace ariiha
