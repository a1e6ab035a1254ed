#include "scl/soft_labels.hpp"

#include <algorithm>
#include <cctype>

#include "scl/errors.hpp"

namespace scl {

using nlohmann::json;

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::string trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return std::string(s);
}

}  // namespace

FourValue parse_fourvalue(std::string_view token) {
  const auto t = lower(trim(token));
  if (t == "positive" || t == "pos" || t == "1" || t == "1.0") return FourValue::positive;
  if (t == "negative" || t == "neg" || t == "0" || t == "0.0") return FourValue::negative;
  if (t == "uncertain" || t == "-1" || t == "-1.0") return FourValue::uncertain;
  if (t == "unknown" || t.empty() || t == "nan" || t == "blank") return FourValue::unknown;
  throw DataError("unrecognized four-value label '" + std::string(token) + "'");
}

std::vector<double> map_fourvalue(std::span<const FourValue> labels,
                                  double uncertain_value, double unknown_value) {
  for (double v : {uncertain_value, unknown_value}) {
    if (!(v >= 0.0 && v <= 1.0)) throw ParameterError("four-value mapping values must lie in [0, 1]");
  }
  std::vector<double> out;
  out.reserve(labels.size());
  for (auto l : labels) {
    switch (l) {
      case FourValue::positive: out.push_back(1.0); break;
      case FourValue::negative: out.push_back(0.0); break;
      case FourValue::uncertain: out.push_back(uncertain_value); break;
      case FourValue::unknown: out.push_back(unknown_value); break;
    }
  }
  return out;
}

std::vector<double> map_fourvalue(std::span<const std::string> tokens,
                                  double uncertain_value, double unknown_value) {
  std::vector<FourValue> labels;
  labels.reserve(tokens.size());
  for (const auto& t : tokens) labels.push_back(parse_fourvalue(t));
  return map_fourvalue(labels, uncertain_value, unknown_value);
}

const char* to_string(Certainty c) {
  switch (c) {
    case Certainty::guessing: return "guessing";
    case Certainty::probably: return "probably";
    case Certainty::definitely: return "definitely";
  }
  return "?";
}

Certainty parse_certainty(std::string_view name) {
  const auto t = lower(trim(name));
  if (t == "guessing") return Certainty::guessing;
  if (t == "probably") return Certainty::probably;
  if (t == "definitely") return Certainty::definitely;
  throw DataError("unknown certainty level '" + std::string(name) + "'");
}

double CertaintyMap::operator()(Certainty c) const {
  switch (c) {
    case Certainty::guessing: return guessing;
    case Certainty::probably: return probably;
    case Certainty::definitely: return definitely;
  }
  return definitely;
}

SpreadMode parse_spread_mode(std::string_view name) {
  const auto t = lower(trim(name));
  if (t == "broad") return SpreadMode::broad;
  if (t == "narrow") return SpreadMode::narrow;
  throw ConfigError("spread mode must be 'broad' or 'narrow', got '" + std::string(name) + "'");
}

std::vector<double> coarse_to_soft(const CoarseAnnotation& annotation,
                                   const CertaintyMap& gamma, SpreadMode mode,
                                   const std::optional<std::vector<std::size_t>>& plausible) {
  const double rho = gamma(annotation.certainty);
  if (!(rho >= 0.5 && rho <= 1.0)) {
    throw ParameterError("imputed confidence must lie in [0.5, 1], got " + std::to_string(rho));
  }
  const auto& bits = annotation.on_bits;
  std::vector<double> out(bits.size(), 0.0);

  if (mode == SpreadMode::broad) {
    for (std::size_t a = 0; a < bits.size(); ++a) out[a] = bits[a] != 0 ? rho : 1.0 - rho;
    return out;
  }

  std::vector<std::size_t> off_plausible;
  const bool any_off = std::any_of(bits.begin(), bits.end(), [](int b) { return b == 0; });
  if (any_off && rho < 1.0) {
    if (!plausible) {
      throw ConfigError("narrow spreading needs a plausible attribute set");
    }
    for (auto a : *plausible) {
      if (a >= bits.size()) {
        throw IndexError("plausible attribute " + std::to_string(a) + " outside group of " +
                         std::to_string(bits.size()));
      }
      if (bits[a] == 0 &&
          std::find(off_plausible.begin(), off_plausible.end(), a) == off_plausible.end()) {
        off_plausible.push_back(a);
      }
    }
    if (off_plausible.empty()) {
      throw ConfigError("narrow spreading with confidence < 1 needs at least one plausible "
                        "off attribute");
    }
  }
  for (std::size_t a = 0; a < bits.size(); ++a) {
    if (bits[a] != 0) out[a] = rho;
  }
  const double share = off_plausible.empty()
                           ? 0.0
                           : (1.0 - rho) / static_cast<double>(off_plausible.size());
  for (auto a : off_plausible) out[a] = share;
  return out;
}

std::vector<std::size_t> plausible_from_population(std::span<const double> group_frequencies) {
  std::vector<std::size_t> out;
  for (std::size_t a = 0; a < group_frequencies.size(); ++a) {
    if (group_frequencies[a] > 0.0) out.push_back(a);
  }
  return out;
}

std::vector<std::vector<double>> aggregate_population(
    std::span<const LabeledSoftVector> annotations, int n_classes) {
  if (n_classes <= 0) throw ParameterError("aggregate_population needs n_classes > 0");
  std::size_t width = 0;
  if (!annotations.empty()) width = annotations.front().values.size();
  std::vector<std::vector<double>> sums(static_cast<std::size_t>(n_classes),
                                        std::vector<double>(width, 0.0));
  std::vector<std::size_t> counts(static_cast<std::size_t>(n_classes), 0);
  for (const auto& a : annotations) {
    if (a.label < 0 || a.label >= n_classes) {
      throw IndexError("annotation class " + std::to_string(a.label) + " outside [0, " +
                       std::to_string(n_classes) + ")");
    }
    if (a.values.size() != width) throw DimensionError("annotation vectors differ in length");
    auto& s = sums[static_cast<std::size_t>(a.label)];
    for (std::size_t j = 0; j < width; ++j) s[j] += a.values[j];
    ++counts[static_cast<std::size_t>(a.label)];
  }
  for (std::size_t c = 0; c < sums.size(); ++c) {
    if (counts[c] == 0) {
      throw DataError("class " + std::to_string(c) + " has no annotations to aggregate");
    }
    for (auto& v : sums[c]) v /= static_cast<double>(counts[c]);
  }
  return sums;
}

ConceptDataset apply_coarse_labels(const ConceptDataset& ds, const CertaintyMap& gamma,
                                   SpreadMode mode) {
  const auto& schema = ds.schema;
  const std::size_t groups = schema.group_count(), k = schema.concept_count();
  if (ds.certainty.size() != ds.size() * groups) {
    throw ConfigError("coarse relabeling needs per-group certainty levels in the dataset");
  }
  const bool have_population = ds.class_concept_probs.size() == static_cast<std::size_t>(ds.n_classes) * k;
  ConceptDataset out = ds;
  for (std::size_t s = 0; s < ds.size(); ++s) {
    for (std::size_t g = 0; g < groups; ++g) {
      const auto off = schema.group_offset(g), size = schema.group_size(g);
      CoarseAnnotation a{g, std::vector<int>(size), static_cast<Certainty>(ds.certainty[s * groups + g])};
      for (std::size_t j = 0; j < size; ++j) a.on_bits[j] = ds.truth[s * k + off + j] >= 0.5 ? 1 : 0;
      std::optional<std::vector<std::size_t>> plausible;
      if (mode == SpreadMode::narrow && have_population) {
        const auto row = static_cast<std::size_t>(ds.labels[s]) * k + off;
        plausible = plausible_from_population(
            std::span<const double>(ds.class_concept_probs).subspan(row, size));
      }
      const auto soft = coarse_to_soft(a, gamma, mode, plausible);
      std::copy(soft.begin(), soft.end(), out.concepts.begin() + static_cast<std::ptrdiff_t>(s * k + off));
    }
  }
  out.provenance["labels"] = {{"kind", "coarse"},
                              {"mode", mode == SpreadMode::broad ? "broad" : "narrow"},
                              {"gamma", {gamma.guessing, gamma.probably, gamma.definitely}}};
  out.provenance["rho"] = gamma.probably;
  return out;
}

ConceptDataset apply_population_labels(const ConceptDataset& ds) {
  const std::size_t k = ds.concept_count();
  std::vector<LabeledSoftVector> vectors;
  vectors.reserve(ds.size());
  for (std::size_t s = 0; s < ds.size(); ++s) {
    auto c = ds.concepts_of(s);
    vectors.push_back({ds.labels[s], std::vector<double>(c.begin(), c.end())});
  }
  const auto means = aggregate_population(vectors, ds.n_classes);
  ConceptDataset out = ds;
  for (std::size_t s = 0; s < ds.size(); ++s) {
    const auto& m = means[static_cast<std::size_t>(ds.labels[s])];
    std::copy(m.begin(), m.end(), out.concepts.begin() + static_cast<std::ptrdiff_t>(s * k));
  }
  out.provenance["population_labels"] = true;
  return out;
}

int SoftGroupAnnotation::total_mass() const {
  int total = 0;
  for (const auto& [_, m] : mass) total += m;
  return total;
}

json SoftGroupAnnotation::to_json() const {
  return {{"annotator_id", annotator_id}, {"stimulus_id", stimulus_id},
          {"group_id", group_id},         {"mass", mass},
          {"not_visible", not_visible},   {"timestamp", timestamp}};
}

SoftGroupAnnotation SoftGroupAnnotation::from_json(const json& j) {
  if (!j.is_object()) throw DataError("annotation: payload must be an object");
  SoftGroupAnnotation a;
  auto str_field = [&](const char* name, bool required) -> std::string {
    if (!j.contains(name)) {
      if (required) throw DataError(std::string("missing field '") + name + "'");
      return {};
    }
    if (!j[name].is_string()) throw DataError(std::string("field '") + name + "' must be a string");
    return j[name].get<std::string>();
  };
  a.annotator_id = str_field("annotator_id", true);
  a.stimulus_id = str_field("stimulus_id", true);
  a.group_id = str_field("group_id", true);
  a.timestamp = str_field("timestamp", false);
  if (j.contains("not_visible")) {
    if (!j["not_visible"].is_boolean()) throw DataError("field 'not_visible' must be a boolean");
    a.not_visible = j["not_visible"].get<bool>();
  }
  if (!j.contains("mass") || !j["mass"].is_object()) {
    throw DataError("field 'mass' must be an object of attribute → integer");
  }
  for (const auto& [attr, v] : j["mass"].items()) {
    const std::string field = "mass." + attr;
    if (!v.is_number_integer() && !v.is_number_unsigned()) {
      throw DataError("field '" + field + "' must be an integer in [0, 100]");
    }
    const auto m = v.get<long long>();
    if (m < 0 || m > 100) throw DataError("field '" + field + "' must be an integer in [0, 100]");
    a.mass[attr] = static_cast<int>(m);
  }
  return a;
}

std::vector<double> masses_to_values(const ConceptGroupSchema& schema,
                                     const SoftGroupAnnotation& annotation) {
  const auto g = schema.group_index(annotation.group_id);
  const auto& attrs = schema.groups()[g].attributes;
  for (const auto& [attr, _] : annotation.mass) {
    if (std::find(attrs.begin(), attrs.end(), attr) == attrs.end()) {
      throw NotFoundError("unknown attribute '" + attr + "' in group '" + annotation.group_id + "'");
    }
  }
  std::vector<double> out(attrs.size(), 0.0);
  for (std::size_t a = 0; a < attrs.size(); ++a) {
    auto it = annotation.mass.find(attrs[a]);
    if (it != annotation.mass.end()) out[a] = it->second / 100.0;
  }
  return out;
}

}  // namespace scl
