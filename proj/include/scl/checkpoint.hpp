#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "scl/tensor.hpp"

namespace scl {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

// Flat binary layout, all integers little-endian:
//   "SCL1"
//   repeated until EOF:
//     u32 name_length, name bytes,
//     u32 rank, rank × u32 dims,
//     product(dims) × f64 data
void save_tensors(const std::filesystem::path& path,
                  const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> load_tensors(const std::filesystem::path& path);

std::string encode_tensors(const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> decode_tensors(const std::string& bytes);

}  // namespace scl
