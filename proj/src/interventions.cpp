#include "scl/interventions.hpp"

#include <algorithm>
#include <map>

#include "scl/errors.hpp"

namespace scl {

const char* to_string(Granularity g) {
  return g == Granularity::concept_level ? "concept" : "group";
}

const char* to_string(Policy p) { return p == Policy::random ? "random" : "skyline"; }

Granularity parse_granularity(std::string_view name) {
  if (name == "concept") return Granularity::concept_level;
  if (name == "group") return Granularity::group_level;
  throw ConfigError("granularity must be 'concept' or 'group', got '" + std::string(name) + "'");
}

Policy parse_policy(std::string_view name) {
  if (name == "random") return Policy::random;
  if (name == "skyline") return Policy::skyline;
  throw ConfigError("policy must be 'random' or 'skyline', got '" + std::string(name) + "'");
}

// ---- Sources -----------------------------------------------------------------

std::span<const double> InterventionSource::values_of(std::size_t i) const {
  if (i >= size()) throw IndexError("source has no sample " + std::to_string(i));
  return std::span<const double>(values).subspan(i * k, k);
}

std::span<const double> InterventionSource::available_of(std::size_t i) const {
  if (i >= size()) throw IndexError("source has no sample " + std::to_string(i));
  return std::span<const double>(available).subspan(i * k, k);
}

void InterventionSource::validate() const {
  if (k == 0 || values.size() % k != 0 || available.size() != values.size()) {
    throw DimensionError("intervention source arrays are inconsistent");
  }
  for (double v : values) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw ParameterError("intervention source value outside [0, 1]: " + std::to_string(v));
    }
  }
}

InterventionSource source_from_values(std::string id, std::size_t k, std::vector<double> values) {
  InterventionSource s{std::move(id), k, std::move(values), {}};
  s.available.assign(s.values.size(), 1.0);
  s.validate();
  return s;
}

InterventionSource truth_source(const ConceptDataset& ds) {
  return source_from_values("truth", ds.concept_count(), ds.truth);
}

InterventionSource concept_source(const ConceptDataset& ds, std::string id) {
  return source_from_values(std::move(id), ds.concept_count(), ds.concepts);
}

InterventionSource source_from_annotations(const ConceptGroupSchema& schema,
                                           std::span<const std::string> stimulus_ids,
                                           std::span<const SoftGroupAnnotation> annotations) {
  const std::size_t k = schema.concept_count();
  std::map<std::string, std::size_t> row_of;
  for (std::size_t i = 0; i < stimulus_ids.size(); ++i) row_of[stimulus_ids[i]] = i;

  InterventionSource s;
  s.id = "elicited";
  s.k = k;
  s.values.assign(stimulus_ids.size() * k, 0.0);
  s.available.assign(stimulus_ids.size() * k, 0.0);
  std::vector<double> counts(stimulus_ids.size() * schema.group_count(), 0.0);

  for (const auto& a : annotations) {
    auto it = row_of.find(a.stimulus_id);
    if (it == row_of.end()) continue;
    if (a.total_mass() == 0) continue;  // nothing expressed
    const auto g = schema.group_index(a.group_id);
    const auto vals = masses_to_values(schema, a);
    const auto off = it->second * k + schema.group_offset(g);
    auto& count = counts[it->second * schema.group_count() + g];
    for (std::size_t j = 0; j < vals.size(); ++j) {
      s.values[off + j] = (s.values[off + j] * count + vals[j]) / (count + 1.0);
      s.available[off + j] = 1.0;
    }
    count += 1.0;
  }
  s.validate();
  return s;
}

// ---- Units -------------------------------------------------------------------

UnitSet make_units(Granularity g, std::size_t k, const ConceptGroupSchema* schema) {
  UnitSet u;
  if (g == Granularity::concept_level) {
    for (std::size_t i = 0; i < k; ++i) {
      u.members.push_back({i});
      u.names.push_back(schema && schema->concept_count() == k ? schema->concept_name(i)
                                                               : "c" + std::to_string(i));
    }
    return u;
  }
  if (schema == nullptr) throw ConfigError("group granularity needs a concept-group schema");
  if (schema->concept_count() != k) {
    throw ConfigError("schema has " + std::to_string(schema->concept_count()) +
                      " concepts, model has " + std::to_string(k));
  }
  for (std::size_t gi = 0; gi < schema->group_count(); ++gi) {
    u.members.push_back(schema->group_concepts(gi));
    u.names.push_back(schema->groups()[gi].name);
  }
  return u;
}

// ---- Policies ----------------------------------------------------------------

namespace {

void apply_unit(InterventionBatch& iv, std::size_t row, const std::vector<std::size_t>& members,
                std::span<const double> values, std::span<const double> available) {
  for (auto c : members) {
    if (available[c] != 0.0) iv.set(row, c, values[c]);
  }
}

bool informative(const std::vector<std::size_t>& members, std::span<const double> available) {
  return std::any_of(members.begin(), members.end(), [&](std::size_t c) { return available[c] != 0.0; });
}

Tensor repeat_input(const ConceptModel& model, std::span<const double> input, std::size_t times) {
  Shape shape{times};
  const auto& s = model.config().input_shape;
  shape.insert(shape.end(), s.begin(), s.end());
  if (input.size() != shape_size(s)) throw DimensionError("input does not match the model");
  Tensor x(shape);
  auto d = x.data();
  for (std::size_t t = 0; t < times; ++t) {
    std::copy(input.begin(), input.end(), d.begin() + static_cast<std::ptrdiff_t>(t * input.size()));
  }
  return x;
}

void record_step(InterventionTrace& trace, const Prediction& p, std::size_t row, int n_classes) {
  auto probs = p.class_probs_of(row, static_cast<std::size_t>(n_classes));
  trace.class_probs.emplace_back(probs.begin(), probs.end());
  trace.predicted.push_back(p.predicted[row]);
  trace.p_true.push_back(probs[static_cast<std::size_t>(trace.y_true)]);
  trace.correct.push_back(p.predicted[row] == trace.y_true);
}

}  // namespace

std::size_t next_random(std::span<const std::size_t> remaining, Rng& rng) {
  if (remaining.empty()) throw StateError("no units left to intervene on");
  return remaining[rng.below(remaining.size())];
}

std::vector<double> skyline_scores(const ConceptModel& model, std::span<const double> input,
                                   const InterventionBatch& current,
                                   std::span<const double> values,
                                   std::span<const double> available, const UnitSet& units,
                                   std::span<const std::size_t> remaining, int y_true) {
  if (remaining.empty()) return {};
  const std::size_t k = model.k();
  if (current.batch != 1 || current.k != k) throw DimensionError("skyline needs a 1 × k intervention state");
  if (y_true < 0 || y_true >= model.n_classes()) throw IndexError("true label outside the class range");
  InterventionBatch trial(remaining.size(), k);
  for (std::size_t r = 0; r < remaining.size(); ++r) {
    std::copy(current.mask.begin(), current.mask.end(), trial.mask.begin() + static_cast<std::ptrdiff_t>(r * k));
    std::copy(current.values.begin(), current.values.end(),
              trial.values.begin() + static_cast<std::ptrdiff_t>(r * k));
    apply_unit(trial, r, units.members.at(remaining[r]), values, available);
  }
  auto p = model.predict(repeat_input(model, input, remaining.size()), &trial);
  std::vector<double> scores(remaining.size());
  for (std::size_t r = 0; r < remaining.size(); ++r) {
    scores[r] = p.class_probs_of(r, static_cast<std::size_t>(model.n_classes()))[static_cast<std::size_t>(y_true)];
  }
  return scores;
}

std::size_t next_skyline(const ConceptModel& model, std::span<const double> input,
                         const InterventionBatch& current, std::span<const double> values,
                         std::span<const double> available, const UnitSet& units,
                         std::span<const std::size_t> remaining, int y_true) {
  if (remaining.empty()) throw StateError("no units left to intervene on");
  auto scores = skyline_scores(model, input, current, values, available, units, remaining, y_true);
  std::size_t best = 0;
  for (std::size_t r = 1; r < remaining.size(); ++r) {
    if (scores[r] > scores[best] || (scores[r] == scores[best] && remaining[r] < remaining[best])) {
      best = r;
    }
  }
  return remaining[best];
}

InterventionTrace run_policy(const ConceptModel& model, const ConceptDataset& ds,
                             std::size_t sample_id, const InterventionSource& source,
                             const UnitSet& units, const PolicyOptions& opt) {
  if (sample_id >= ds.size()) throw IndexError("dataset has no sample " + std::to_string(sample_id));
  if (source.k != model.k()) throw DimensionError("intervention source does not match the model's k");
  const auto input = ds.input(sample_id);
  const auto values = source.values_of(sample_id);
  const auto available = source.available_of(sample_id);

  InterventionTrace trace;
  trace.sample_id = sample_id;
  trace.y_true = ds.labels[sample_id];

  InterventionBatch current(1, model.k());
  auto x = repeat_input(model, input, 1);
  record_step(trace, model.predict(x), 0, model.n_classes());

  std::vector<std::size_t> useful, idle;
  for (std::size_t u = 0; u < units.size(); ++u) {
    (informative(units.members[u], available) ? useful : idle).push_back(u);
  }

  Rng rng = Rng(opt.seed).fork(sample_id);
  std::vector<std::size_t> remaining(units.size());
  for (std::size_t u = 0; u < units.size(); ++u) remaining[u] = u;

  while (!remaining.empty()) {
    std::size_t unit = 0;
    if (opt.policy == Policy::random) {
      unit = useful.empty() ? idle.front() : next_random(useful, rng);
    } else {
      unit = next_skyline(model, input, current, values, available, units, remaining, trace.y_true);
    }
    for (auto* list : {&remaining, &useful, &idle}) {
      list->erase(std::remove(list->begin(), list->end(), unit), list->end());
    }
    apply_unit(current, 0, units.members[unit], values, available);
    trace.units.push_back(unit);
    record_step(trace, model.predict(x, &current), 0, model.n_classes());
  }
  return trace;
}

void write_traces_csv(std::ostream& out, std::span<const InterventionTrace> traces) {
  out << "sample_id,step,unit_id,predicted_class,p_true,correct\n";
  const auto old_precision = out.precision(17);
  for (const auto& t : traces) {
    for (std::size_t s = 0; s < t.steps(); ++s) {
      out << t.sample_id << ',' << s << ',' << (s == 0 ? -1 : static_cast<long long>(t.units[s - 1]))
          << ',' << t.predicted[s] << ',' << t.p_true[s] << ',' << (t.correct[s] ? 1 : 0) << '\n';
    }
  }
  out.precision(old_precision);
}

}  // namespace scl
