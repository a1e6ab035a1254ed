#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "scl/tensor.hpp"

namespace scl {

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

// IDX: big-endian u32 magic, big-endian u32 dims, u8 payload.
// Images come back as [N×rows×cols] scaled by 1/255.
Tensor parse_idx_images(const std::string& bytes);
std::vector<std::uint8_t> parse_idx_labels(const std::string& bytes);

Tensor load_idx_images(const std::filesystem::path& path);
std::vector<std::uint8_t> load_idx_labels(const std::filesystem::path& path);

std::string encode_idx_images(std::size_t count, std::size_t rows, std::size_t cols,
                              std::span<const std::uint8_t> pixels);
std::string encode_idx_labels(std::span<const std::uint8_t> labels);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& bytes);

}  // namespace scl
