#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "scl/tensor.hpp"

namespace scl {

struct ConceptGroup {
  std::string name;
  std::vector<std::string> attributes;
};

// Ordered categorical groups; every attribute is one binary concept and the
// flat concept index runs group by group.
class ConceptGroupSchema {
 public:
  ConceptGroupSchema() = default;
  explicit ConceptGroupSchema(std::vector<ConceptGroup> groups);

  // k independent binary concepts, each its own single-attribute group
  // named "<prefix><i>" with attribute "on".
  static ConceptGroupSchema binary(std::size_t k, const std::string& prefix = "c");

  const std::vector<ConceptGroup>& groups() const { return groups_; }
  std::size_t group_count() const { return groups_.size(); }
  std::size_t concept_count() const { return offsets_.empty() ? 0 : offsets_.back(); }
  std::size_t group_offset(std::size_t g) const { return offsets_.at(g); }
  std::size_t group_size(std::size_t g) const { return groups_.at(g).attributes.size(); }
  // Concept indices belonging to group g.
  std::vector<std::size_t> group_concepts(std::size_t g) const;
  std::size_t group_of(std::size_t concept_index) const;

  // Throws NotFoundError for unknown names.
  std::size_t group_index(const std::string& group) const;
  std::size_t concept_index(const std::string& group, const std::string& attribute) const;
  // "group::attribute"
  std::string concept_name(std::size_t concept_index) const;
  std::size_t concept_index(const std::string& qualified) const;

  nlohmann::json to_json() const;
  static ConceptGroupSchema from_json(const nlohmann::json& j);

  bool operator==(const ConceptGroupSchema& other) const;

 private:
  std::vector<ConceptGroup> groups_;
  std::vector<std::size_t> offsets_;  // size groups+1
};

// Samples with soft concept targets. Row-major flat storage; row i of every
// per-sample array belongs to sample i.
struct ConceptDataset {
  Shape sample_shape;             // e.g. {28, 28, p} or {d}
  std::vector<double> inputs;     // n × prod(sample_shape)
  std::vector<double> concepts;   // n × k, values in [0, 1]
  std::vector<double> mask;       // n × k, 1 where the annotation is provided
  std::vector<double> truth;      // n × k, pre-noise hard bits
  std::vector<int> labels;        // n
  int n_classes = 0;
  ConceptGroupSchema schema;

  // Optional extras (categorical toy data).
  std::vector<int> certainty;               // n × groups, Certainty as int
  std::vector<double> class_concept_probs;  // n_classes × k
  nlohmann::json provenance = nlohmann::json::object();

  std::size_t size() const { return labels.size(); }
  std::size_t concept_count() const { return schema.concept_count(); }
  std::size_t sample_size() const { return shape_size(sample_shape); }

  std::span<const double> input(std::size_t i) const;
  std::span<const double> concepts_of(std::size_t i) const;
  std::span<const double> mask_of(std::size_t i) const;
  std::span<const double> truth_of(std::size_t i) const;

  // [B, sample_shape...] for the given rows.
  Tensor batch_inputs(std::span<const std::size_t> rows) const;
  ConceptDataset subset(std::span<const std::size_t> rows) const;

  // Throws DimensionError on inconsistent array lengths.
  void validate() const;
};

// On-disk layout of a dataset directory:
//   dataset.json   metadata (schema, n_classes, sample_shape, provenance, ...)
//   samples.jsonl  one record per sample:
//                  {"x_ref": {"file": "planes.scl", "tensor": "x", "index": i},
//                   "c": [...], "y": ..., "mask": [...], "truth": [...]}
//   planes.scl     checkpoint-format tensor "x" of shape [n, sample_shape...]
void save_dataset(const ConceptDataset& ds, const std::filesystem::path& dir);
ConceptDataset load_dataset(const std::filesystem::path& dir);

}  // namespace scl
