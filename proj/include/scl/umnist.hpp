#pragma once

#include <cstdint>
#include <filesystem>
#include <string_view>
#include <span>
#include <vector>

#include "scl/dataset.hpp"
#include "scl/rng.hpp"
#include "scl/tensor.hpp"

namespace scl {

inline constexpr std::size_t kDigitSide = 28;
inline constexpr std::size_t kDigitPixels = kDigitSide * kDigitSide;

// MNIST images with per-digit index lists (the empirical p(x | y)).
class MnistStore {
 public:
  MnistStore(Tensor images, std::vector<std::uint8_t> labels);
  static MnistStore load(const std::filesystem::path& images_idx,
                         const std::filesystem::path& labels_idx);

  std::size_t size() const { return labels_.size(); }
  std::span<const double> image(std::size_t i) const;
  std::uint8_t label(std::size_t i) const { return labels_.at(i); }
  const std::vector<std::size_t>& indices_of(int digit) const;

 private:
  Tensor images_;
  std::vector<std::uint8_t> labels_;
  std::vector<std::vector<std::size_t>> by_digit_;
};

// bit 0 → Unif(0, δ); bit 1 → Unif(1 − δ, 1).
double noise_concept(int bit, double delta, Rng& rng);

// bit 0: (1 − c)·x + c·z;  bit 1: c·x + (1 − c)·z.
std::vector<double> mix_digit(std::span<const double> x, int bit, double c,
                              std::span<const double> z);

// How concept values are derived from the hard bits.
//   uniform:   noise_concept, c ∈ [0, δ] ∪ [1 − δ, 1]
//   fourvalue: each bit is reported "uncertain" with probability δ and the
//              four-value token is mapped with map_fourvalue (uncertain →
//              uncertain_value); otherwise c equals the bit
enum class ConceptNoise { uniform, fourvalue };

ConceptNoise parse_concept_noise(std::string_view name);

struct UMnistOptions {
  std::size_t n = 1000;
  std::size_t p = 5;
  double delta = 0.0;
  std::uint64_t seed = 0;
  double mask_fraction = 0.0;
  ConceptNoise noise = ConceptNoise::uniform;
  double uncertain_value = 0.5;
};

// Samples are [28×28×p] with digit i in channel i; y counts the pre-noise
// ones and lives in 0..p; the schema is p binary concepts "digit<i>::on".
ConceptDataset gen_umnist(const MnistStore& mnist, const UMnistOptions& opt);

}  // namespace scl
