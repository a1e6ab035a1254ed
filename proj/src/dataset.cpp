#include "scl/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include "scl/checkpoint.hpp"
#include "scl/errors.hpp"
#include "scl/idx.hpp"

namespace scl {

using nlohmann::json;

ConceptGroupSchema::ConceptGroupSchema(std::vector<ConceptGroup> groups)
    : groups_(std::move(groups)) {
  offsets_.push_back(0);
  std::set<std::string> group_names;
  for (const auto& g : groups_) {
    if (g.attributes.empty()) {
      throw ParameterError("concept group '" + g.name + "' has no attributes");
    }
    if (!group_names.insert(g.name).second) {
      throw ParameterError("duplicate concept group '" + g.name + "'");
    }
    std::set<std::string> names(g.attributes.begin(), g.attributes.end());
    if (names.size() != g.attributes.size()) {
      throw ParameterError("duplicate attribute in group '" + g.name + "'");
    }
    offsets_.push_back(offsets_.back() + g.attributes.size());
  }
}

ConceptGroupSchema ConceptGroupSchema::binary(std::size_t k, const std::string& prefix) {
  std::vector<ConceptGroup> groups;
  for (std::size_t i = 0; i < k; ++i) {
    groups.push_back({prefix + std::to_string(i), {"on"}});
  }
  return ConceptGroupSchema(std::move(groups));
}

std::vector<std::size_t> ConceptGroupSchema::group_concepts(std::size_t g) const {
  std::vector<std::size_t> out(group_size(g));
  for (std::size_t a = 0; a < out.size(); ++a) out[a] = offsets_[g] + a;
  return out;
}

std::size_t ConceptGroupSchema::group_of(std::size_t concept_index) const {
  if (concept_index >= concept_count()) {
    throw IndexError("concept index " + std::to_string(concept_index) + " >= " +
                     std::to_string(concept_count()));
  }
  auto it = std::upper_bound(offsets_.begin(), offsets_.end(), concept_index);
  return static_cast<std::size_t>(it - offsets_.begin()) - 1;
}

std::size_t ConceptGroupSchema::group_index(const std::string& group) const {
  for (std::size_t g = 0; g < groups_.size(); ++g) {
    if (groups_[g].name == group) return g;
  }
  throw NotFoundError("unknown concept group '" + group + "'");
}

std::size_t ConceptGroupSchema::concept_index(const std::string& group,
                                              const std::string& attribute) const {
  const auto g = group_index(group);
  const auto& attrs = groups_[g].attributes;
  auto it = std::find(attrs.begin(), attrs.end(), attribute);
  if (it == attrs.end()) {
    throw NotFoundError("unknown attribute '" + attribute + "' in group '" + group + "'");
  }
  return offsets_[g] + static_cast<std::size_t>(it - attrs.begin());
}

std::string ConceptGroupSchema::concept_name(std::size_t concept_index) const {
  const auto g = group_of(concept_index);
  return groups_[g].name + "::" + groups_[g].attributes[concept_index - offsets_[g]];
}

std::size_t ConceptGroupSchema::concept_index(const std::string& qualified) const {
  const auto sep = qualified.find("::");
  if (sep == std::string::npos) {
    throw NotFoundError("concept name '" + qualified + "' is not group::attribute");
  }
  return concept_index(qualified.substr(0, sep), qualified.substr(sep + 2));
}

json ConceptGroupSchema::to_json() const {
  json groups = json::array();
  for (const auto& g : groups_) {
    groups.push_back({{"name", g.name}, {"attributes", g.attributes}});
  }
  return groups;
}

ConceptGroupSchema ConceptGroupSchema::from_json(const json& j) {
  std::vector<ConceptGroup> groups;
  for (const auto& g : j) {
    groups.push_back({g.at("name").get<std::string>(),
                      g.at("attributes").get<std::vector<std::string>>()});
  }
  return ConceptGroupSchema(std::move(groups));
}

bool ConceptGroupSchema::operator==(const ConceptGroupSchema& other) const {
  if (groups_.size() != other.groups_.size()) return false;
  for (std::size_t g = 0; g < groups_.size(); ++g) {
    if (groups_[g].name != other.groups_[g].name ||
        groups_[g].attributes != other.groups_[g].attributes) {
      return false;
    }
  }
  return true;
}

namespace {

std::span<const double> row(const std::vector<double>& v, std::size_t i, std::size_t width) {
  if ((i + 1) * width > v.size()) {
    throw IndexError("sample " + std::to_string(i) + " out of range");
  }
  return {v.data() + i * width, width};
}

template <class T>
void copy_rows(const std::vector<T>& src, std::vector<T>& dst,
               std::span<const std::size_t> rows, std::size_t width) {
  if (src.empty()) return;
  dst.reserve(rows.size() * width);
  for (auto r : rows) {
    dst.insert(dst.end(), src.begin() + static_cast<std::ptrdiff_t>(r * width),
               src.begin() + static_cast<std::ptrdiff_t>((r + 1) * width));
  }
}

}  // namespace

std::span<const double> ConceptDataset::input(std::size_t i) const {
  return row(inputs, i, sample_size());
}
std::span<const double> ConceptDataset::concepts_of(std::size_t i) const {
  return row(concepts, i, concept_count());
}
std::span<const double> ConceptDataset::mask_of(std::size_t i) const {
  return row(mask, i, concept_count());
}
std::span<const double> ConceptDataset::truth_of(std::size_t i) const {
  return row(truth, i, concept_count());
}

Tensor ConceptDataset::batch_inputs(std::span<const std::size_t> rows) const {
  Shape shape{rows.size()};
  shape.insert(shape.end(), sample_shape.begin(), sample_shape.end());
  Tensor out(shape);
  const std::size_t d = sample_size();
  auto data = out.data();
  for (std::size_t b = 0; b < rows.size(); ++b) {
    auto src = input(rows[b]);
    std::copy(src.begin(), src.end(), data.begin() + static_cast<std::ptrdiff_t>(b * d));
  }
  return out;
}

ConceptDataset ConceptDataset::subset(std::span<const std::size_t> rows) const {
  ConceptDataset out;
  out.sample_shape = sample_shape;
  out.n_classes = n_classes;
  out.schema = schema;
  out.class_concept_probs = class_concept_probs;
  out.provenance = provenance;
  const std::size_t k = concept_count();
  for (auto r : rows) {
    if (r >= size()) throw IndexError("subset row " + std::to_string(r) + " out of range");
  }
  copy_rows(inputs, out.inputs, rows, sample_size());
  copy_rows(concepts, out.concepts, rows, k);
  copy_rows(mask, out.mask, rows, k);
  copy_rows(truth, out.truth, rows, k);
  copy_rows(certainty, out.certainty, rows, schema.group_count());
  for (auto r : rows) out.labels.push_back(labels[r]);
  return out;
}

void ConceptDataset::validate() const {
  const std::size_t n = size(), k = concept_count();
  auto expect = [](std::size_t got, std::size_t want, const char* what) {
    if (got != want) {
      throw DimensionError(std::string("dataset ") + what + " has " +
                           std::to_string(got) + " values, expected " +
                           std::to_string(want));
    }
  };
  expect(inputs.size(), n * sample_size(), "inputs");
  expect(concepts.size(), n * k, "concepts");
  expect(mask.size(), n * k, "mask");
  expect(truth.size(), n * k, "truth");
  if (!certainty.empty()) expect(certainty.size(), n * schema.group_count(), "certainty");
  if (!class_concept_probs.empty()) {
    expect(class_concept_probs.size(), static_cast<std::size_t>(n_classes) * k,
           "class_concept_probs");
  }
  for (int y : labels) {
    if (y < 0 || y >= n_classes) {
      throw DimensionError("label " + std::to_string(y) + " outside [0, " +
                           std::to_string(n_classes) + ")");
    }
  }
}

void save_dataset(const ConceptDataset& ds, const std::filesystem::path& dir) {
  ds.validate();
  std::filesystem::create_directories(dir);
  const std::size_t n = ds.size(), groups = ds.schema.group_count();

  json meta = {{"format", "scl-dataset-1"},
               {"n", n},
               {"n_classes", ds.n_classes},
               {"sample_shape", ds.sample_shape},
               {"schema", ds.schema.to_json()},
               {"provenance", ds.provenance}};
  if (!ds.class_concept_probs.empty()) meta["class_concept_probs"] = ds.class_concept_probs;
  write_file(dir / "dataset.json", meta.dump(2) + "\n");

  std::string lines;
  for (std::size_t i = 0; i < n; ++i) {
    json rec = {{"x_ref", {{"file", "planes.scl"}, {"tensor", "x"}, {"index", i}}},
                {"c", std::vector<double>(ds.concepts_of(i).begin(), ds.concepts_of(i).end())},
                {"y", ds.labels[i]},
                {"mask", std::vector<double>(ds.mask_of(i).begin(), ds.mask_of(i).end())},
                {"truth", std::vector<double>(ds.truth_of(i).begin(), ds.truth_of(i).end())}};
    if (!ds.certainty.empty()) {
      rec["certainty"] = std::vector<int>(ds.certainty.begin() + static_cast<std::ptrdiff_t>(i * groups),
                                          ds.certainty.begin() + static_cast<std::ptrdiff_t>((i + 1) * groups));
    }
    lines += rec.dump();
    lines += '\n';
  }
  write_file(dir / "samples.jsonl", lines);

  Shape shape{n};
  shape.insert(shape.end(), ds.sample_shape.begin(), ds.sample_shape.end());
  save_tensors(dir / "planes.scl", {{"x", Tensor(shape, ds.inputs)}});
}

ConceptDataset load_dataset(const std::filesystem::path& dir) {
  ConceptDataset ds;
  json meta;
  try {
    meta = json::parse(read_file(dir / "dataset.json"));
  } catch (const json::exception& e) {
    throw FormatError("dataset.json: " + std::string(e.what()));
  }
  ds.n_classes = meta.at("n_classes").get<int>();
  ds.sample_shape = meta.at("sample_shape").get<Shape>();
  ds.schema = ConceptGroupSchema::from_json(meta.at("schema"));
  ds.provenance = meta.value("provenance", json::object());
  if (meta.contains("class_concept_probs")) {
    ds.class_concept_probs = meta["class_concept_probs"].get<std::vector<double>>();
  }

  auto planes = load_tensors(dir / "planes.scl");
  auto it = std::find_if(planes.begin(), planes.end(),
                         [](const NamedTensor& t) { return t.name == "x"; });
  if (it == planes.end()) throw FormatError("planes.scl has no tensor 'x'");
  const Tensor& x = it->tensor;
  const std::size_t d = ds.sample_size();

  std::ifstream in(dir / "samples.jsonl");
  if (!in) throw NotFoundError("cannot open " + (dir / "samples.jsonl").string());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      auto rec = json::parse(line);
      const auto idx = rec.at("x_ref").at("index").get<std::size_t>();
      if ((idx + 1) * d > x.size()) {
        throw FormatError("samples.jsonl line " + std::to_string(lineno) +
                          ": x_ref index out of range");
      }
      ds.inputs.insert(ds.inputs.end(), x.data().begin() + static_cast<std::ptrdiff_t>(idx * d),
                       x.data().begin() + static_cast<std::ptrdiff_t>((idx + 1) * d));
      auto c = rec.at("c").get<std::vector<double>>();
      auto m = rec.at("mask").get<std::vector<double>>();
      auto t = rec.contains("truth") ? rec["truth"].get<std::vector<double>>() : c;
      ds.concepts.insert(ds.concepts.end(), c.begin(), c.end());
      ds.mask.insert(ds.mask.end(), m.begin(), m.end());
      ds.truth.insert(ds.truth.end(), t.begin(), t.end());
      ds.labels.push_back(rec.at("y").get<int>());
      if (rec.contains("certainty")) {
        auto cert = rec["certainty"].get<std::vector<int>>();
        ds.certainty.insert(ds.certainty.end(), cert.begin(), cert.end());
      }
    } catch (const json::exception& e) {
      throw FormatError("samples.jsonl line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  ds.validate();
  return ds;
}

}  // namespace scl
