#include "scl/umnist.hpp"

#include <cmath>

#include "scl/errors.hpp"
#include "scl/soft_labels.hpp"
#include "scl/idx.hpp"

namespace scl {

ConceptNoise parse_concept_noise(std::string_view name) {
  if (name == "uniform") return ConceptNoise::uniform;
  if (name == "fourvalue") return ConceptNoise::fourvalue;
  throw ConfigError("concept noise must be 'uniform' or 'fourvalue', got '" + std::string(name) + "'");
}

MnistStore::MnistStore(Tensor images, std::vector<std::uint8_t> labels)
    : images_(std::move(images)), labels_(std::move(labels)), by_digit_(10) {
  if (images_.rank() != 3 || images_.dim(1) != kDigitSide || images_.dim(2) != kDigitSide) {
    throw DimensionError("MNIST images must be [N×28×28], got " + shape_str(images_.shape()));
  }
  if (images_.dim(0) != labels_.size()) {
    throw DimensionError("MNIST image/label counts differ");
  }
  for (double v : images_.data()) {
    if (v < 0.0 || v > 1.0) throw DataError("MNIST pixel outside [0, 1]");
  }
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    if (labels_[i] > 9) throw DataError("MNIST label " + std::to_string(labels_[i]) + " > 9");
    by_digit_[labels_[i]].push_back(i);
  }
}

MnistStore MnistStore::load(const std::filesystem::path& images_idx,
                            const std::filesystem::path& labels_idx) {
  return MnistStore(load_idx_images(images_idx), load_idx_labels(labels_idx));
}

std::span<const double> MnistStore::image(std::size_t i) const {
  if (i >= size()) throw IndexError("MNIST index " + std::to_string(i) + " out of range");
  return images_.data().subspan(i * kDigitPixels, kDigitPixels);
}

const std::vector<std::size_t>& MnistStore::indices_of(int digit) const {
  return by_digit_.at(static_cast<std::size_t>(digit));
}

double noise_concept(int bit, double delta, Rng& rng) {
  if (!(delta >= 0.0 && delta <= 1.0)) {
    throw ParameterError("delta must lie in [0, 1]");
  }
  const double u = rng.uniform();
  return bit == 0 ? delta * u : 1.0 - delta * u;
}

std::vector<double> mix_digit(std::span<const double> x, int bit, double c,
                              std::span<const double> z) {
  if (x.size() != z.size()) throw DimensionError("mix_digit: plane sizes differ");
  const double keep = bit == 0 ? 1.0 - c : c;
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = keep * x[i] + (1.0 - keep) * z[i];
  return out;
}

ConceptDataset gen_umnist(const MnistStore& mnist, const UMnistOptions& opt) {
  if (opt.n == 0 || opt.p == 0) throw ParameterError("gen_umnist needs n > 0 and p > 0");
  if (!(opt.mask_fraction >= 0.0 && opt.mask_fraction <= 1.0)) {
    throw ParameterError("mask_fraction must lie in [0, 1]");
  }
  if (!(opt.delta >= 0.0 && opt.delta <= 1.0)) {
    throw ParameterError("delta must lie in [0, 1]");
  }
  const auto& zeros = mnist.indices_of(0);
  const auto& ones = mnist.indices_of(1);
  if (zeros.empty() || ones.empty()) {
    throw DataError("gen_umnist needs MNIST images of both zeros and ones");
  }
  std::vector<std::size_t> pool(zeros);
  pool.insert(pool.end(), ones.begin(), ones.end());

  const std::size_t p = opt.p;
  ConceptDataset ds;
  ds.sample_shape = {kDigitSide, kDigitSide, p};
  ds.n_classes = static_cast<int>(p) + 1;
  ds.schema = ConceptGroupSchema::binary(p, "digit");
  ds.inputs.resize(opt.n * kDigitPixels * p);
  ds.concepts.resize(opt.n * p);
  ds.mask.assign(opt.n * p, 1.0);
  ds.truth.resize(opt.n * p);
  ds.labels.resize(opt.n);
  ds.provenance = {{"generator", "umnist"},
                   {"n", opt.n},
                   {"p", p},
                   {"delta", opt.delta},
                   {"seed", opt.seed},
                   {"mask_fraction", opt.mask_fraction},
                   {"concept_noise", opt.noise == ConceptNoise::uniform ? "uniform" : "fourvalue"}};
  if (opt.noise == ConceptNoise::fourvalue) ds.provenance["uncertain_value"] = opt.uncertain_value;

  const auto masked_per_sample =
      static_cast<std::size_t>(std::llround(opt.mask_fraction * static_cast<double>(p)));
  Rng rng(opt.seed);
  std::vector<std::size_t> positions(p);
  for (std::size_t s = 0; s < opt.n; ++s) {
    int count = 0;
    for (std::size_t i = 0; i < p; ++i) {
      const std::size_t src = pool[rng.below(pool.size())];
      const int bit = mnist.label(src) == 1 ? 1 : 0;
      count += bit;
      double c = 0.0;
      if (opt.noise == ConceptNoise::uniform) {
        c = noise_concept(bit, opt.delta, rng);
      } else {
        const FourValue token = rng.uniform() < opt.delta ? FourValue::uncertain
                                : bit == 1              ? FourValue::positive
                                                        : FourValue::negative;
        c = map_fourvalue(std::span<const FourValue>(&token, 1), opt.uncertain_value, 0.0)[0];
      }
      const auto& opposite = bit == 0 ? ones : zeros;
      const std::size_t z = opposite[rng.below(opposite.size())];
      const auto mixed = mix_digit(mnist.image(src), bit, c, mnist.image(z));
      double* dst = ds.inputs.data() + s * kDigitPixels * p;
      for (std::size_t px = 0; px < kDigitPixels; ++px) dst[px * p + i] = mixed[px];
      ds.concepts[s * p + i] = c;
      ds.truth[s * p + i] = bit;
    }
    ds.labels[s] = count;
    if (masked_per_sample > 0) {
      for (std::size_t i = 0; i < p; ++i) positions[i] = i;
      // Partial Fisher–Yates: the first `masked_per_sample` slots are a
      // uniform subset.
      for (std::size_t i = 0; i < masked_per_sample; ++i) {
        std::swap(positions[i], positions[i + rng.below(p - i)]);
        ds.mask[s * p + positions[i]] = 0.0;
      }
    }
  }
  return ds;
}

}  // namespace scl
