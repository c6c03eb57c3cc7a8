#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "mixgen/tensor.hpp"

namespace mixgen {

inline constexpr std::uint32_t kCheckpointVersion = 1;

enum class DType : std::uint8_t { F32 = 0, F64 = 1 };

struct NamedArray {
    std::string name;
    DType dtype = DType::F32;
    Shape shape;
    std::vector<double> values;  // widened copy; narrowed on write for F32
};

struct CheckpointData {
    nlohmann::json config;
    std::vector<NamedArray> arrays;

    const NamedArray* find(const std::string& name) const;
};

// "UGX1" | u32 version | u64 len + JSON config | records | CRC32 of all
// preceding bytes. Written via temp file + rename.
void write_checkpoint(const std::filesystem::path& path, const CheckpointData& data);
// Throws Io, CorruptFile, VersionMismatch.
CheckpointData read_checkpoint(const std::filesystem::path& path);

// Field-by-field comparison of two JSON objects; returns dotted paths of the
// first few differing leaves ("backbone.num_layers: 6 vs 24").
std::vector<std::string> config_differences(const nlohmann::json& a, const nlohmann::json& b);

}  // namespace mixgen
