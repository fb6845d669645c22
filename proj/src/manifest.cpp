#include <filesystem>
#include <fstream>

#include "cheyette/errors.hpp"
#include "cheyette/manifest.hpp"

namespace cheyette::cli {

nlohmann::ordered_json RunManifest::to_json() const {
    return {{"command", command},
            {"config_paths", config_paths},
            {"seeds", seeds},
            {"version", version},
            {"wall_seconds", wall_seconds},
            {"outputs", outputs}};
}

void RunManifest::write(const std::string& path) const {
    for (const auto& out : outputs)
        if (!std::filesystem::exists(out))
            throw RuntimeError("manifest lists missing output file " + out);
    std::ofstream file(path);
    if (!file) throw RuntimeError("cannot write manifest " + path);
    file << to_json().dump(2) << "\n";
}

}  // namespace cheyette::cli
