#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "scl/dataset.hpp"

namespace scl {

// ---- Four-valued (CheXpert-style) labels -----------------------------------

enum class FourValue { positive, negative, unknown, uncertain };

// Accepts names ("positive", "negative", "unknown", "uncertain") and the
// CheXpert CSV encodings ("1", "0", "" or "nan" for unknown, "-1").
// Throws DataError for anything else.
FourValue parse_fourvalue(std::string_view token);

std::vector<double> map_fourvalue(std::span<const FourValue> labels,
                                  double uncertain_value, double unknown_value);
std::vector<double> map_fourvalue(std::span<const std::string> tokens,
                                  double uncertain_value, double unknown_value);

// ---- Coarse (CUB-style) certainty ------------------------------------------

enum class Certainty { guessing = 0, probably = 1, definitely = 2 };

const char* to_string(Certainty c);
Certainty parse_certainty(std::string_view name);

// Γ: certainty level → imputed confidence ρ.
struct CertaintyMap {
  double guessing = 0.5;
  double probably = 0.7;
  double definitely = 1.0;

  double operator()(Certainty c) const;
};

struct CoarseAnnotation {
  std::size_t group = 0;
  std::vector<int> on_bits;  // over the group's attributes
  Certainty certainty = Certainty::definitely;
};

enum class SpreadMode { broad, narrow };

SpreadMode parse_spread_mode(std::string_view name);

// broad:  on → ρ, off → 1 − ρ.
// narrow: on → ρ, off attributes inside `plausible` share 1 − ρ equally,
//         every other off attribute → 0.
// `plausible` holds attribute positions within the group.
std::vector<double> coarse_to_soft(const CoarseAnnotation& annotation,
                                   const CertaintyMap& gamma, SpreadMode mode,
                                   const std::optional<std::vector<std::size_t>>& plausible);

// Attribute positions with nonzero population frequency; the default
// plausible set for narrow mode.
std::vector<std::size_t> plausible_from_population(std::span<const double> group_frequencies);

// ---- Population aggregation --------------------------------------------------

struct LabeledSoftVector {
  int label = 0;
  std::vector<double> values;
};

// Per-class arithmetic mean. Throws DataError when a class has no annotation.
std::vector<std::vector<double>> aggregate_population(
    std::span<const LabeledSoftVector> annotations, int n_classes);

// ---- Dataset-level relabeling ----------------------------------------------

// Replaces every group's concept values with coarse_to_soft of its hard bits
// (ds.truth) at the sample's certainty level (ds.certainty). Narrow mode takes
// the plausible set from ds.class_concept_probs for the sample's class.
// Throws ConfigError when the dataset carries no certainty levels.
ConceptDataset apply_coarse_labels(const ConceptDataset& ds, const CertaintyMap& gamma,
                                   SpreadMode mode);

// Replaces each sample's concept values with the mean over its class.
ConceptDataset apply_population_labels(const ConceptDataset& ds);

// ---- Elicited soft annotations ----------------------------------------------

// One annotator's mass (integer 0..100 per attribute) over one concept group.
// Totals are kept as entered; over- and under-assignment is data.
struct SoftGroupAnnotation {
  std::string annotator_id;
  std::string stimulus_id;
  std::string group_id;
  std::map<std::string, int> mass;
  bool not_visible = false;
  std::string timestamp;

  int total_mass() const;
  nlohmann::json to_json() const;
  // Throws DataError naming the offending field.
  static SoftGroupAnnotation from_json(const nlohmann::json& j);
};

// mass/100 for each of the group's attributes (missing attributes → 0).
std::vector<double> masses_to_values(const ConceptGroupSchema& schema,
                                     const SoftGroupAnnotation& annotation);

}  // namespace scl
