#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "scl/tensor.hpp"

namespace scl {

// 8-bit grayscale PNG, filter type 0 on every row, one zlib IDAT chunk.
std::string encode_png_gray(std::size_t width, std::size_t height,
                            std::span<const std::uint8_t> pixels);

// Renders one sample as a grayscale strip: a [H, W, C] sample becomes the C
// planes side by side (width W·C), a flat [d] sample a single row of d
// pixels. Values are clamped to [0, 1] and scaled by 255 with rounding.
struct GrayImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;
};
GrayImage render_sample(const Shape& sample_shape, std::span<const double> values);

}  // namespace scl
