#pragma once

#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "vgen/nn.hpp"

// Weight manifest: a directory of named flat little-endian arrays plus a JSON
// index carrying name, shape, dtype and an FNV-1a checksum per tensor.
// Language-neutral and diffable.

namespace vgen {

std::string manifest_sanitize_name(const std::string& name);
std::string manifest_checksum(const unsigned char* bytes, size_t len);

template <class T>
const char* manifest_dtype() {
    if constexpr (sizeof(T) == 4) return "f32";
    else return "f64";
}

template <class T>
void save_manifest(const std::string& dir, const ParamStore<T>& store) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    nlohmann::json index;
    index["format"] = 1;
    auto tensors = nlohmann::json::array();
    for (const auto& [name, tensor] : store.params) {
        std::string file = manifest_sanitize_name(name) + ".bin";
        const auto& vals = tensor.values();
        std::vector<unsigned char> bytes(vals.size() * sizeof(T));
        std::memcpy(bytes.data(), vals.data(), bytes.size());
        std::ofstream os(fs::path(dir) / file, std::ios::binary);
        if (!os) throw MissingInputError("manifest: cannot write " + file);
        os.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
        tensors.push_back({{"name", name},
                           {"shape", tensor.shape()},
                           {"dtype", manifest_dtype<T>()},
                           {"file", file},
                           {"checksum", manifest_checksum(bytes.data(), bytes.size())}});
    }
    index["tensors"] = tensors;
    std::ofstream os(fs::path(dir) / "index.json");
    os << index.dump(2) << "\n";
}

// Loads manifest values into an already-built store. Names, shapes, dtype and
// checksums must all match.
template <class T>
void load_manifest(const std::string& dir, ParamStore<T>& store) {
    namespace fs = std::filesystem;
    auto index_path = fs::path(dir) / "index.json";
    if (!fs::exists(index_path)) throw MissingInputError("manifest: missing " + index_path.string());
    std::ifstream is(index_path);
    nlohmann::json index;
    try {
        is >> index;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("manifest: bad index.json: ") + e.what());
    }
    size_t seen = 0;
    for (const auto& entry : index.at("tensors")) {
        std::string name = entry.at("name").get<std::string>();
        auto it = store.params.find(name);
        if (it == store.params.end())
            throw ConfigError("manifest: unknown parameter '" + name + "' for this model");
        Shape shape = entry.at("shape").get<Shape>();
        if (shape != it->second.shape())
            throw ConfigError("manifest: shape mismatch for '" + name + "'");
        if (entry.at("dtype").get<std::string>() != manifest_dtype<T>())
            throw ConfigError("manifest: dtype mismatch for '" + name + "'");
        auto file = fs::path(dir) / entry.at("file").get<std::string>();
        std::ifstream bin(file, std::ios::binary);
        if (!bin) throw MissingInputError("manifest: missing tensor file " + file.string());
        std::vector<unsigned char> bytes(size_t(it->second.numel()) * sizeof(T));
        bin.read(reinterpret_cast<char*>(bytes.data()), std::streamsize(bytes.size()));
        if (!bin) throw ConfigError("manifest: truncated tensor file " + file.string());
        if (manifest_checksum(bytes.data(), bytes.size()) != entry.at("checksum").get<std::string>())
            throw ConfigError("manifest: checksum mismatch for '" + name + "'");
        std::memcpy(it->second.node()->data.data(), bytes.data(), bytes.size());
        ++seen;
    }
    if (seen != store.params.size())
        throw ConfigError("manifest: index covers " + std::to_string(seen) + " of " +
                          std::to_string(store.params.size()) + " parameters");
}

}  // namespace vgen
