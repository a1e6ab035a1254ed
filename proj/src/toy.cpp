#include "scl/toy.hpp"

#include <set>

#include "scl/errors.hpp"
#include "scl/rng.hpp"

namespace scl {

ConceptGroupSchema default_toy_schema() {
  return ConceptGroupSchema({
      {"wing_color", {"blue", "brown", "yellow"}},
      {"bill_shape", {"dagger", "hooked", "cone", "needle"}},
      {"tail_pattern", {"solid", "striped", "spotted"}},
      {"size", {"small", "large"}},
      {"breast_color", {"white", "red", "grey", "black"}},
      {"eye_color", {"black", "red", "yellow"}},
  });
}

std::vector<std::vector<std::size_t>> toy_prototypes(const ConceptGroupSchema& schema,
                                                     int n_classes, std::uint64_t seed) {
  if (schema.group_count() == 0) throw ParameterError("toy schema has no groups");
  if (n_classes <= 0) throw ParameterError("toy data needs n_classes > 0");
  double combos = 1.0;
  for (std::size_t g = 0; g < schema.group_count(); ++g) {
    combos *= static_cast<double>(schema.group_size(g));
  }
  if (combos < n_classes) {
    throw ParameterError("schema admits only " + std::to_string(static_cast<long long>(combos)) +
                         " distinct prototypes for " + std::to_string(n_classes) + " classes");
  }
  Rng rng = Rng(seed).fork(0);
  std::set<std::vector<std::size_t>> seen;
  std::vector<std::vector<std::size_t>> protos;
  while (protos.size() < static_cast<std::size_t>(n_classes)) {
    std::vector<std::size_t> p(schema.group_count());
    for (std::size_t g = 0; g < p.size(); ++g) p[g] = rng.below(schema.group_size(g));
    if (seen.insert(p).second) protos.push_back(std::move(p));
  }
  return protos;
}

ConceptDataset gen_categorical_toy(const ToyOptions& opt) {
  if (opt.n == 0) throw ParameterError("toy data needs n > 0");
  if (!(opt.noise >= 0.0 && opt.noise <= 1.0)) throw ParameterError("noise must lie in [0, 1]");
  const auto& schema = opt.schema;
  const auto protos = toy_prototypes(schema, opt.n_classes, opt.prototype_seed);
  const std::size_t k = schema.concept_count(), groups = schema.group_count();

  ConceptDataset ds;
  ds.sample_shape = {k};
  ds.n_classes = opt.n_classes;
  ds.schema = schema;
  ds.inputs.resize(opt.n * k);
  ds.concepts.resize(opt.n * k);
  ds.mask.assign(opt.n * k, 1.0);
  ds.truth.resize(opt.n * k);
  ds.labels.resize(opt.n);
  ds.certainty.resize(opt.n * groups);
  ds.class_concept_probs.assign(static_cast<std::size_t>(opt.n_classes) * k, 0.0);
  ds.provenance = {{"generator", "categorical_toy"},
                   {"n", opt.n},
                   {"n_classes", opt.n_classes},
                   {"noise", opt.noise},
                   {"input_noise", opt.input_noise},
                   {"certainty_probs", opt.certainty_probs},
                   {"seed", opt.seed},
                   {"prototype_seed", opt.prototype_seed}};

  for (int c = 0; c < opt.n_classes; ++c) {
    for (std::size_t g = 0; g < groups; ++g) {
      const std::size_t size = schema.group_size(g), off = schema.group_offset(g);
      for (std::size_t a = 0; a < size; ++a) {
        const bool proto = a == protos[static_cast<std::size_t>(c)][g];
        const double p = size == 1 ? 1.0
                         : proto   ? 1.0 - opt.noise
                                   : opt.noise / static_cast<double>(size - 1);
        ds.class_concept_probs[static_cast<std::size_t>(c) * k + off + a] = p;
      }
    }
  }

  double cert_total = opt.certainty_probs[0] + opt.certainty_probs[1] + opt.certainty_probs[2];
  if (!(cert_total > 0.0)) throw ParameterError("certainty_probs must have positive mass");

  Rng rng = Rng(opt.seed).fork(1);
  for (std::size_t s = 0; s < opt.n; ++s) {
    const int y = static_cast<int>(rng.below(static_cast<std::size_t>(opt.n_classes)));
    ds.labels[s] = y;
    for (std::size_t g = 0; g < groups; ++g) {
      const std::size_t size = schema.group_size(g), off = schema.group_offset(g);
      std::size_t attr = protos[static_cast<std::size_t>(y)][g];
      if (size > 1 && rng.bernoulli(opt.noise)) {
        std::size_t other = rng.below(size - 1);
        if (other >= attr) ++other;
        attr = other;
      }
      ds.truth[s * k + off + attr] = 1.0;
      ds.concepts[s * k + off + attr] = 1.0;
      const double u = rng.uniform() * cert_total;
      ds.certainty[s * groups + g] = u < opt.certainty_probs[0]                              ? 0
                                     : u < opt.certainty_probs[0] + opt.certainty_probs[1] ? 1
                                                                                            : 2;
    }
    for (std::size_t j = 0; j < k; ++j) {
      ds.inputs[s * k + j] = ds.truth[s * k + j] + opt.input_noise * rng.normal();
    }
  }
  return ds;
}

}  // namespace scl
