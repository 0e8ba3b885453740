#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"

namespace rainsar {

/// Binary file layout shared by scans, rasters and checkpoints:
///   64-byte header: magic "RAINSAR\0", u32 version, u32 reserved,
///                   u64 metadata length, u64 payload length, zero padding
///   UTF-8 JSON metadata (carries "kind" and a "blocks" directory)
///   payload of little-endian float32 / float64 blocks
struct Container {
    struct Block {
        std::string name;
        std::variant<std::vector<float>, std::vector<double>> data;
    };

    std::string kind;
    nlohmann::json meta = nlohmann::json::object();
    std::vector<Block> blocks;

    void add(std::string name, std::vector<float> data) { blocks.push_back({std::move(name), std::move(data)}); }
    void add(std::string name, std::vector<double> data) { blocks.push_back({std::move(name), std::move(data)}); }

    const std::vector<float>& f32(const std::string& name) const;
    const std::vector<double>& f64(const std::string& name) const;
    bool has(const std::string& name) const;

    void write(const std::filesystem::path& path) const;
    static Container read(const std::filesystem::path& path);
    /// Reads only the header and metadata.
    static Container read_meta(const std::filesystem::path& path);
};

inline constexpr std::uint32_t kContainerVersion = 1;

}  // namespace rainsar
