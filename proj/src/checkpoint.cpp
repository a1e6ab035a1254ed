#include "scl/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "scl/errors.hpp"

namespace scl {

namespace {

constexpr char kMagic[4] = {'S', 'C', 'L', '1'};

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_f64(std::string& out, double d) {
  const auto v = std::bit_cast<std::uint64_t>(d);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  bool at_end() const { return pos_ == bytes_.size(); }

  std::uint64_t take(std::size_t width) {
    if (bytes_.size() - pos_ < width) {
      throw FormatError("checkpoint truncated at byte " + std::to_string(pos_));
    }
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < width; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += width;
    return v;
  }

  std::string take_string(std::size_t n) {
    if (bytes_.size() - pos_ < n) {
      throw FormatError("checkpoint truncated at byte " + std::to_string(pos_));
    }
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  std::size_t pos() const { return pos_; }

 private:
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_tensors(const std::vector<NamedTensor>& tensors) {
  std::string out(kMagic, 4);
  for (const auto& [name, t] : tensors) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) put_u32(out, static_cast<std::uint32_t>(d));
    for (double v : t.data()) put_f64(out, v);
  }
  return out;
}

std::vector<NamedTensor> decode_tensors(const std::string& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw FormatError("checkpoint: bad magic at byte 0");
  }
  Reader in(bytes);
  in.take_string(4);
  std::vector<NamedTensor> out;
  while (!in.at_end()) {
    const auto name_len = static_cast<std::size_t>(in.take(4));
    std::string name = in.take_string(name_len);
    const auto rank = static_cast<std::size_t>(in.take(4));
    Shape shape(rank);
    for (auto& d : shape) d = static_cast<std::size_t>(in.take(4));
    const std::size_t n = shape_size(shape);
    if ((bytes.size() - in.pos()) / 8 < n) {
      throw FormatError("checkpoint: tensor '" + name + "' truncated at byte " +
                        std::to_string(in.pos()));
    }
    std::vector<double> data(n);
    for (auto& v : data) v = std::bit_cast<double>(in.take(8));
    out.push_back({std::move(name), Tensor(std::move(shape), std::move(data))});
  }
  return out;
}

void save_tensors(const std::filesystem::path& path,
                  const std::vector<NamedTensor>& tensors) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot write " + path.string());
  const auto bytes = encode_tensors(tensors);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw DataError("write failed: " + path.string());
}

std::vector<NamedTensor> load_tensors(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw NotFoundError("cannot open " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return decode_tensors(ss.str());
}

}  // namespace scl
