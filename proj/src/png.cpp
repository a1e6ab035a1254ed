#include "scl/png.hpp"

#include <algorithm>
#include <cmath>

#include <zlib.h>

#include "scl/errors.hpp"

namespace scl {

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  out.push_back(static_cast<char>(v >> 24));
  out.push_back(static_cast<char>(v >> 16));
  out.push_back(static_cast<char>(v >> 8));
  out.push_back(static_cast<char>(v));
}

void put_chunk(std::string& out, const char* type, const std::string& data) {
  put_u32(out, static_cast<std::uint32_t>(data.size()));
  std::string body(type, 4);
  body += data;
  out += body;
  const auto crc = crc32(0L, reinterpret_cast<const Bytef*>(body.data()), static_cast<uInt>(body.size()));
  put_u32(out, static_cast<std::uint32_t>(crc));
}

}  // namespace

std::string encode_png_gray(std::size_t width, std::size_t height,
                            std::span<const std::uint8_t> pixels) {
  if (width == 0 || height == 0) throw ParameterError("PNG dimensions must be positive");
  if (pixels.size() != width * height) throw DimensionError("PNG pixel count does not match width × height");

  std::string raw;
  raw.reserve(height * (width + 1));
  for (std::size_t y = 0; y < height; ++y) {
    raw.push_back('\0');
    raw.append(reinterpret_cast<const char*>(pixels.data() + y * width), width);
  }
  uLongf size = compressBound(static_cast<uLong>(raw.size()));
  std::string compressed(size, '\0');
  if (compress2(reinterpret_cast<Bytef*>(compressed.data()), &size,
                reinterpret_cast<const Bytef*>(raw.data()), static_cast<uLong>(raw.size()),
                Z_BEST_COMPRESSION) != Z_OK) {
    throw FormatError("zlib compression failed");
  }
  compressed.resize(size);

  std::string out("\x89PNG\r\n\x1a\n", 8);
  std::string ihdr;
  put_u32(ihdr, static_cast<std::uint32_t>(width));
  put_u32(ihdr, static_cast<std::uint32_t>(height));
  ihdr += std::string("\x08\x00\x00\x00\x00", 5);  // depth 8, grayscale, deflate, filter 0, no interlace
  put_chunk(out, "IHDR", ihdr);
  put_chunk(out, "IDAT", compressed);
  put_chunk(out, "IEND", "");
  return out;
}

GrayImage render_sample(const Shape& sample_shape, std::span<const double> values) {
  if (shape_size(sample_shape) != values.size()) throw DimensionError("sample does not match its shape");
  auto to_byte = [](double v) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
  };
  GrayImage img;
  if (sample_shape.size() == 3) {
    const auto h = sample_shape[0], w = sample_shape[1], c = sample_shape[2];
    img.width = w * c;
    img.height = h;
    img.pixels.resize(img.width * img.height);
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        for (std::size_t ch = 0; ch < c; ++ch) {
          img.pixels[y * img.width + ch * w + x] = to_byte(values[(y * w + x) * c + ch]);
        }
      }
    }
  } else {
    img.width = values.size();
    img.height = 1;
    for (double v : values) img.pixels.push_back(to_byte(v));
  }
  return img;
}

}  // namespace scl
