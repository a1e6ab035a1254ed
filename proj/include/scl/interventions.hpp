#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "scl/dataset.hpp"
#include "scl/model.hpp"
#include "scl/rng.hpp"
#include "scl/soft_labels.hpp"

namespace scl {

enum class Granularity { concept_level, group_level };
enum class Policy { random, skyline };

const char* to_string(Granularity g);
const char* to_string(Policy p);
Granularity parse_granularity(std::string_view name);
Policy parse_policy(std::string_view name);

// The values a (simulated or real) human would supply for every concept of
// every sample. `available` marks concepts the human actually expressed; a
// unit with no available concept is intervened as a no-op.
struct InterventionSource {
  std::string id;
  std::size_t k = 0;
  std::vector<double> values;     // n × k, in [0, 1]
  std::vector<double> available;  // n × k, 1 or 0

  std::size_t size() const { return k == 0 ? 0 : values.size() / k; }
  std::span<const double> values_of(std::size_t i) const;
  std::span<const double> available_of(std::size_t i) const;
  // Throws ParameterError on values outside [0, 1], DimensionError on shape.
  void validate() const;
};

// Every concept available, values taken as given.
InterventionSource source_from_values(std::string id, std::size_t k, std::vector<double> values);
// Ground-truth bits of a dataset.
InterventionSource truth_source(const ConceptDataset& ds);
// The dataset's (possibly noised or soft) concept values.
InterventionSource concept_source(const ConceptDataset& ds, std::string id = "dataset");
// Elicited mass/100 per attribute. `stimulus_ids[i]` names sample i; groups
// without an annotation, or whose mass sums to 0, are unavailable. When one
// group was annotated several times for a sample the masses are averaged.
InterventionSource source_from_annotations(const ConceptGroupSchema& schema,
                                           std::span<const std::string> stimulus_ids,
                                           std::span<const SoftGroupAnnotation> annotations);

// Intervenable units: single concepts or whole groups.
struct UnitSet {
  std::vector<std::vector<std::size_t>> members;
  std::vector<std::string> names;

  std::size_t size() const { return members.size(); }
};

// Group granularity needs a schema (ConfigError otherwise).
UnitSet make_units(Granularity g, std::size_t k, const ConceptGroupSchema* schema);

struct InterventionTrace {
  std::size_t sample_id = 0;
  int y_true = 0;
  std::vector<std::size_t> units;               // unit chosen at steps 1..L−1
  std::vector<std::vector<double>> class_probs;  // per step, including step 0
  std::vector<int> predicted;
  std::vector<double> p_true;
  std::vector<bool> correct;

  std::size_t steps() const { return predicted.size(); }
};

// Uniform draw from `remaining` (StateError when empty).
std::size_t next_random(std::span<const std::size_t> remaining, Rng& rng);

// p(y_true) after tentatively adding each remaining unit on top of `current`,
// in the order of `remaining`.
std::vector<double> skyline_scores(const ConceptModel& model, std::span<const double> input,
                                   const InterventionBatch& current,
                                   std::span<const double> values,
                                   std::span<const double> available, const UnitSet& units,
                                   std::span<const std::size_t> remaining, int y_true);

// Remaining unit with the highest p(y_true); ties go to the lowest unit index.
std::size_t next_skyline(const ConceptModel& model, std::span<const double> input,
                         const InterventionBatch& current, std::span<const double> values,
                         std::span<const double> available, const UnitSet& units,
                         std::span<const std::size_t> remaining, int y_true);

struct PolicyOptions {
  Policy policy = Policy::random;
  std::uint64_t seed = 0;
};

// Intervenes one unit per step until every unit is used. Random draws units
// carrying information first and spends the remaining steps on no-op units.
// The random stream is derived from (seed, sample_id), so traces do not
// depend on evaluation order.
InterventionTrace run_policy(const ConceptModel& model, const ConceptDataset& ds,
                             std::size_t sample_id, const InterventionSource& source,
                             const UnitSet& units, const PolicyOptions& opt);

// CSV columns: sample_id, step, unit_id, predicted_class, p_true, correct.
// unit_id is -1 at step 0.
void write_traces_csv(std::ostream& out, std::span<const InterventionTrace> traces);

}  // namespace scl
