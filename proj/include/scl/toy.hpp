#pragma once

#include <array>
#include <cstdint>

#include "scl/dataset.hpp"
#include "scl/soft_labels.hpp"

namespace scl {

// Categorical stand-in for CUB at desk scale.
//
// Each class owns a prototype attribute per group (prototypes differ between
// classes in at least one group). A sample draws y uniformly, then for every
// group keeps the prototype attribute with probability 1 − noise or switches
// to a uniformly chosen other attribute. Inputs are the one-hot concept bits
// plus N(0, input_noise²) per coordinate; every group also carries a coarse
// certainty tag drawn from `certainty_probs` (guessing, probably, definitely).
// `class_concept_probs` records the generating distribution p(attribute | y),
// which doubles as the population-level soft label.
struct ToyOptions {
  ConceptGroupSchema schema;
  int n_classes = 8;
  std::size_t n = 1000;
  double noise = 0.0;
  double input_noise = 0.8;
  std::array<double, 3> certainty_probs{0.1, 0.3, 0.6};
  std::uint64_t seed = 0;
  // Fixes the class prototypes; train and test splits must share it.
  std::uint64_t prototype_seed = 0;
};

// Six groups (sizes 3, 4, 3, 2, 4, 3; k = 19) used by tests and the CLI.
ConceptGroupSchema default_toy_schema();

ConceptDataset gen_categorical_toy(const ToyOptions& opt);

// Prototype attribute position per (class, group), as used by the generator.
std::vector<std::vector<std::size_t>> toy_prototypes(const ConceptGroupSchema& schema,
                                                     int n_classes, std::uint64_t seed);

}  // namespace scl
