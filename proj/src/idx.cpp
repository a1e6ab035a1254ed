#include "scl/idx.hpp"

#include <fstream>
#include <sstream>

#include "scl/errors.hpp"

namespace scl {

namespace {

std::uint32_t read_be32(const std::string& bytes, std::size_t offset) {
  if (bytes.size() < offset + 4) {
    throw FormatError("IDX truncated at byte offset " + std::to_string(offset));
  }
  std::uint32_t v = 0;
  for (std::size_t i = 0; i < 4; ++i) {
    v = (v << 8) | static_cast<unsigned char>(bytes[offset + i]);
  }
  return v;
}

void put_be32(std::string& out, std::uint32_t v) {
  for (int shift = 24; shift >= 0; shift -= 8) {
    out.push_back(static_cast<char>((v >> shift) & 0xFF));
  }
}

void check_magic(const std::string& bytes, std::uint32_t expected) {
  const auto magic = read_be32(bytes, 0);
  if (magic != expected) {
    std::ostringstream os;
    os << "IDX bad magic 0x" << std::hex << magic << " at byte offset 0 (expected 0x"
       << expected << ")";
    throw FormatError(os.str());
  }
}

void check_payload(const std::string& bytes, std::size_t header, std::size_t n) {
  if (bytes.size() < header + n) {
    throw FormatError("IDX payload truncated at byte offset " +
                      std::to_string(bytes.size()) + " (expected " +
                      std::to_string(header + n) + " bytes)");
  }
}

}  // namespace

Tensor parse_idx_images(const std::string& bytes) {
  check_magic(bytes, kIdxImageMagic);
  const std::size_t n = read_be32(bytes, 4), rows = read_be32(bytes, 8),
                    cols = read_be32(bytes, 12);
  const std::size_t total = n * rows * cols;
  check_payload(bytes, 16, total);
  Tensor out({n, rows, cols});
  auto data = out.data();
  for (std::size_t i = 0; i < total; ++i) {
    data[i] = static_cast<unsigned char>(bytes[16 + i]) / 255.0;
  }
  return out;
}

std::vector<std::uint8_t> parse_idx_labels(const std::string& bytes) {
  check_magic(bytes, kIdxLabelMagic);
  const std::size_t n = read_be32(bytes, 4);
  check_payload(bytes, 8, n);
  std::vector<std::uint8_t> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = static_cast<std::uint8_t>(bytes[8 + i]);
  return out;
}

Tensor load_idx_images(const std::filesystem::path& path) {
  return parse_idx_images(read_file(path));
}

std::vector<std::uint8_t> load_idx_labels(const std::filesystem::path& path) {
  return parse_idx_labels(read_file(path));
}

std::string encode_idx_images(std::size_t count, std::size_t rows, std::size_t cols,
                              std::span<const std::uint8_t> pixels) {
  if (pixels.size() != count * rows * cols) {
    throw DimensionError("encode_idx_images: pixel count mismatch");
  }
  std::string out;
  put_be32(out, kIdxImageMagic);
  put_be32(out, static_cast<std::uint32_t>(count));
  put_be32(out, static_cast<std::uint32_t>(rows));
  put_be32(out, static_cast<std::uint32_t>(cols));
  out.append(reinterpret_cast<const char*>(pixels.data()), pixels.size());
  return out;
}

std::string encode_idx_labels(std::span<const std::uint8_t> labels) {
  std::string out;
  put_be32(out, kIdxLabelMagic);
  put_be32(out, static_cast<std::uint32_t>(labels.size()));
  out.append(reinterpret_cast<const char*>(labels.data()), labels.size());
  return out;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw NotFoundError("cannot open " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot write " + path.string());
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw DataError("write failed: " + path.string());
}

}  // namespace scl
