#include <doctest.h>

#include <sstream>

#include "../common/oracles.hpp"
#include "scl/errors.hpp"
#include "scl/evaluation.hpp"
#include "scl/interventions.hpp"
#include "scl/toy.hpp"

using namespace scl;

namespace {

BottleneckConfig toy_config(const ConceptDataset& ds, Variant v = Variant::cbm) {
  BottleneckConfig c;
  c.variant = v;
  c.k = ds.concept_count();
  c.m = 4;
  c.input_shape = ds.sample_shape;
  c.conv_filters.clear();
  c.backbone_width = 16;
  c.head_widths = {16};
  c.n_classes = ds.n_classes;
  return c;
}

ConceptDataset small_toy(std::size_t n, std::uint64_t seed, double noise = 0.1) {
  ToyOptions opt{.schema = default_toy_schema()};
  opt.n = n;
  opt.noise = noise;
  opt.seed = seed;
  return gen_categorical_toy(opt);
}

// A trained toy CBM shared by several cases.
const ConceptModel& trained_toy_model() {
  static const ConceptModel model = [] {
    const auto ds = small_toy(1500, 1);
    ConceptModel m(toy_config(ds), 3);
    TrainOptions opt;
    opt.batch_size = 64;
    opt.max_epochs = 25;
    opt.adam.lr = 5e-3;
    train(m, ds, opt);
    return m;
  }();
  return model;
}

}  // namespace

TEST_CASE("next_random") {
  Rng rng(1);
  std::vector<std::size_t> one{7};
  CHECK(next_random(one, rng) == 7);
  CHECK_THROWS_AS(next_random(std::vector<std::size_t>{}, rng), StateError);

  std::vector<std::size_t> four{0, 1, 2, 3};
  Rng a(5), b(5);
  for (int i = 0; i < 20; ++i) CHECK(next_random(four, a) == next_random(four, b));

  std::vector<double> freq(4, 0.0);
  Rng r(123);
  const int draws = 100000;
  for (int i = 0; i < draws; ++i) freq[next_random(four, r)] += 1.0;
  for (double f : freq) CHECK(std::abs(f / draws - 0.25) <= 0.01);
}

TEST_CASE("unit sets") {
  const auto schema = default_toy_schema();
  auto concepts = make_units(Granularity::concept_level, schema.concept_count(), &schema);
  CHECK(concepts.size() == schema.concept_count());
  CHECK(concepts.names[0] == schema.concept_name(0));
  auto groups = make_units(Granularity::group_level, schema.concept_count(), &schema);
  CHECK(groups.size() == schema.group_count());
  CHECK(groups.members[1] == schema.group_concepts(1));
  CHECK_THROWS_AS(make_units(Granularity::group_level, 5, nullptr), ConfigError);
  CHECK_THROWS_AS(parse_policy("greedy"), ConfigError);
  CHECK_THROWS_AS(parse_granularity("unit"), ConfigError);
}

TEST_CASE("skyline picks the enumerated argmax with the lowest-index tie rule") {
  const auto ds = small_toy(30, 9);
  const auto& model = trained_toy_model();
  const auto units = make_units(Granularity::group_level, ds.concept_count(), &ds.schema);
  const auto src = truth_source(ds);
  for (std::size_t i = 0; i < 10; ++i) {
    InterventionBatch current(1, model.k());
    std::vector<std::size_t> remaining{0, 2, 3, 5};
    const auto scores = skyline_scores(model, ds.input(i), current, src.values_of(i), src.available_of(i),
                                       units, remaining, ds.labels[i]);
    const auto oracle = oracle::skyline_enumeration(model, ds.input(i), {}, src.values_of(i),
                                                    src.available_of(i), units, remaining, ds.labels[i]);
    CHECK(scores == oracle);
    std::size_t best = 0;
    for (std::size_t r = 1; r < oracle.size(); ++r) {
      if (oracle[r] > oracle[best]) best = r;
    }
    CHECK(next_skyline(model, ds.input(i), current, src.values_of(i), src.available_of(i), units, remaining,
                       ds.labels[i]) == remaining[best]);
  }

  // Only one remaining unit.
  InterventionBatch current(1, model.k());
  std::vector<std::size_t> single{4};
  CHECK(next_skyline(model, ds.input(0), current, src.values_of(0), src.available_of(0), units, single,
                     ds.labels[0]) == 4);

  // Units without available values leave p(y_true) unchanged, so they tie.
  std::vector<double> none(ds.concept_count(), 0.0);
  std::vector<std::size_t> tied{5, 1, 3};
  CHECK(next_skyline(model, ds.input(0), current, src.values_of(0), none, units, tied, ds.labels[0]) == 1);
}

TEST_CASE("skyline matches exhaustive enumeration at every step on a 3-concept model") {
  ConceptDataset ds;
  ds.sample_shape = {4};
  ds.schema = ConceptGroupSchema::binary(3);
  ds.n_classes = 4;
  Rng rng(2);
  for (int i = 0; i < 8; ++i) {
    int y = 0;
    for (int j = 0; j < 4; ++j) ds.inputs.push_back(rng.normal());
    for (int j = 0; j < 3; ++j) {
      const double bit = rng.bernoulli(0.5) ? 1.0 : 0.0;
      ds.truth.push_back(bit);
      ds.concepts.push_back(bit);
      ds.mask.push_back(1.0);
      y += static_cast<int>(bit);
    }
    ds.labels.push_back(y);
  }
  ConceptModel model(toy_config(ds), 6);
  const auto units = make_units(Granularity::concept_level, 3, nullptr);
  const auto src = truth_source(ds);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto trace = run_policy(model, ds, i, src, units, {.policy = Policy::skyline});
    REQUIRE(trace.steps() == 4);
    std::map<std::size_t, double> applied;
    std::vector<std::size_t> remaining{0, 1, 2};
    for (std::size_t t = 0; t < 3; ++t) {
      const auto scores = oracle::skyline_enumeration(model, ds.input(i), applied, src.values_of(i),
                                                      src.available_of(i), units, remaining, ds.labels[i]);
      const auto chosen = trace.units[t];
      const auto pos = static_cast<std::size_t>(std::find(remaining.begin(), remaining.end(), chosen) -
                                                remaining.begin());
      for (double s : scores) CHECK(trace.p_true[t + 1] >= s);
      CHECK(trace.p_true[t + 1] == scores[pos]);
      applied[chosen] = src.values_of(i)[chosen];
      remaining.erase(remaining.begin() + static_cast<std::ptrdiff_t>(pos));
    }
  }
}

TEST_CASE("trace structure and reproducibility") {
  const auto ds = small_toy(20, 4);
  const auto& model = trained_toy_model();
  const auto units = make_units(Granularity::group_level, ds.concept_count(), &ds.schema);
  const auto src = truth_source(ds);
  const auto plain = predict_dataset(model, ds);
  for (std::size_t i = 0; i < 5; ++i) {
    const auto a = run_policy(model, ds, i, src, units, {.policy = Policy::random, .seed = 3});
    const auto b = run_policy(model, ds, i, src, units, {.policy = Policy::random, .seed = 3});
    CHECK(a.units == b.units);
    CHECK(a.class_probs == b.class_probs);
    CHECK(a.steps() == units.size() + 1);
    std::set<std::size_t> distinct(a.units.begin(), a.units.end());
    CHECK(distinct.size() == units.size());
    CHECK(a.predicted[0] == plain.predicted[i]);
    const auto step0 = plain.class_probs_of(i, static_cast<std::size_t>(ds.n_classes));
    CHECK(std::equal(step0.begin(), step0.end(), a.class_probs[0].begin()));

    // The last step is the prediction under every ground-truth value.
    std::map<std::size_t, double> all;
    for (std::size_t c = 0; c < ds.concept_count(); ++c) all[c] = ds.truth_of(i)[c];
    CHECK(a.class_probs.back() == model.predict_one(ds.input(i), all).class_probs);
  }
  CHECK_THROWS_AS(run_policy(model, ds, 99, src, units, {}), IndexError);
}

TEST_CASE("a head that ignores concepts gives a constant trace") {
  const auto ds = small_toy(10, 5);
  ConceptModel model(toy_config(ds), 2);
  for (auto& v : model.param("head0.w").value.data()) v = 0.0;
  const auto units = make_units(Granularity::concept_level, ds.concept_count(), &ds.schema);
  const auto t = run_policy(model, ds, 0, truth_source(ds), units, {.policy = Policy::random});
  for (const auto& p : t.class_probs) CHECK(p == t.class_probs[0]);
}

TEST_CASE("groups without elicited mass are spent last by Random") {
  const auto schema = default_toy_schema();
  std::vector<std::string> ids{"0"};
  std::vector<SoftGroupAnnotation> anns;
  SoftGroupAnnotation a;
  a.annotator_id = "ann";
  a.stimulus_id = "0";
  a.group_id = schema.groups()[2].name;
  a.mass[schema.groups()[2].attributes[0]] = 80;
  anns.push_back(a);
  a.mass[schema.groups()[2].attributes[0]] = 40;  // second annotation of the same group
  anns.push_back(a);
  SoftGroupAnnotation empty = a;
  empty.group_id = schema.groups()[4].name;
  empty.mass.clear();
  empty.mass[schema.groups()[4].attributes[0]] = 0;
  anns.push_back(empty);

  const auto src = source_from_annotations(schema, ids, anns);
  const auto off = schema.group_offset(2);
  CHECK(src.values[off] == doctest::Approx(0.6));
  CHECK(src.available[off] == 1.0);
  CHECK(src.available[schema.group_offset(4)] == 0.0);

  auto ds = small_toy(1, 8);
  const auto& model = trained_toy_model();
  const auto units = make_units(Granularity::group_level, schema.concept_count(), &schema);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto t = run_policy(model, ds, 0, src, units, {.policy = Policy::random, .seed = seed});
    CHECK(t.units[0] == 2);
    for (std::size_t s = 2; s < t.steps(); ++s) CHECK(t.class_probs[s] == t.class_probs[1]);
  }
}

TEST_CASE("traces CSV") {
  InterventionTrace t;
  t.sample_id = 3;
  t.y_true = 1;
  t.units = {2};
  t.class_probs = {{0.6, 0.4}, {0.25, 0.75}};
  t.predicted = {0, 1};
  t.p_true = {0.4, 0.75};
  t.correct = {false, true};
  std::ostringstream out;
  write_traces_csv(out, std::vector<InterventionTrace>{t});
  CHECK(out.str() ==
        "sample_id,step,unit_id,predicted_class,p_true,correct\n"
        "3,0,-1,0,0.40000000000000002,0\n"
        "3,1,2,1,0.75,1\n");
}

TEST_CASE("skyline reaches a best-step accuracy at least that of random on toy data") {
  const auto ds = small_toy(200, 77);
  const auto& model = trained_toy_model();
  const auto units = make_units(Granularity::group_level, ds.concept_count(), &ds.schema);
  const auto src = truth_source(ds);
  std::vector<InterventionTrace> sky, rnd;
  auto cs = intervention_curve(model, ds, src, units, {.policy = {.policy = Policy::skyline}}, &sky);
  auto cr = intervention_curve(model, ds, src, units, {.policy = {.policy = Policy::random, .seed = 1}}, &rnd);
  double best_sky = 0.0, best_rnd = 0.0;
  for (std::size_t i = 0; i < sky.size(); ++i) {
    best_sky += *std::max_element(sky[i].correct.begin(), sky[i].correct.end()) ? 1.0 : 0.0;
    best_rnd += *std::max_element(rnd[i].correct.begin(), rnd[i].correct.end()) ? 1.0 : 0.0;
  }
  CHECK(best_sky >= best_rnd);
  CHECK(curve_auc(cs.accuracies) >= curve_auc(cr.accuracies));
}
