#include <doctest.h>

#include <sstream>

#include "../common/oracles.hpp"
#include "scl/errors.hpp"
#include "scl/evaluation.hpp"
#include "scl/toy.hpp"

using namespace scl;

namespace {

std::vector<SoftGroupAnnotation> random_annotations(std::size_t n, Rng& rng) {
  const std::vector<std::string> annotators{"a", "b", "c"};
  const std::vector<std::string> groups{"g0", "g1"};
  const std::vector<std::string> attrs{"x", "y", "z", "w"};
  std::vector<SoftGroupAnnotation> out;
  for (std::size_t i = 0; i < n; ++i) {
    SoftGroupAnnotation a;
    a.annotator_id = annotators[rng.below(annotators.size())];
    a.group_id = groups[rng.below(groups.size())];
    a.stimulus_id = std::to_string(rng.below(10));
    for (const auto& at : attrs) {
      if (rng.bernoulli(0.6)) {
        const double u = rng.uniform();
        a.mass[at] = u < 0.2 ? 0 : u < 0.4 ? 50 : u < 0.5 ? 100 : static_cast<int>(rng.below(101));
      }
    }
    out.push_back(a);
  }
  return out;
}

}  // namespace

TEST_CASE("curve_auc") {
  CHECK(curve_auc(std::vector<double>{0.7, 0.7, 0.7}) == doctest::Approx(0.7).epsilon(1e-15));
  CHECK(curve_auc(std::vector<double>{0.0, 0.25, 0.5, 0.75, 1.0}) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK_THROWS_AS(curve_auc(std::vector<double>{0.3}), ParameterError);
  Rng rng(4);
  for (int t = 0; t < 200; ++t) {
    std::vector<double> c(2 + rng.below(20));
    for (auto& v : c) v = rng.uniform();
    const double a = curve_auc(c);
    CHECK(std::abs(a - oracle::curve_auc(c)) <= 1e-12);
    CHECK(a >= *std::min_element(c.begin(), c.end()));
    CHECK(a <= *std::max_element(c.begin(), c.end()));
  }
}

TEST_CASE("curve_at_fraction interpolates") {
  std::vector<double> c{0.2, 0.4, 0.8};
  CHECK(curve_at_fraction(c, 0.0) == 0.2);
  CHECK(curve_at_fraction(c, 0.5) == 0.4);
  CHECK(curve_at_fraction(c, 0.75) == doctest::Approx(0.6));
  CHECK(curve_at_fraction(c, 1.0) == 0.8);
  std::vector<double> even{0.0, 0.2, 0.4, 1.0};
  CHECK(curve_at_fraction(even, 0.5) == doctest::Approx(0.3));
  CHECK_THROWS_AS(curve_at_fraction(c, 1.5), ParameterError);
}

TEST_CASE("roc_auc") {
  CHECK(roc_auc(std::vector<double>{0.1, 0.2, 0.8, 0.9}, std::vector<int>{0, 0, 1, 1}) == 1.0);
  CHECK(roc_auc(std::vector<double>(6, 0.4), std::vector<int>{0, 1, 0, 1, 1, 0}) == 0.5);
  CHECK_THROWS_AS(roc_auc(std::vector<double>{0.1, 0.2}, std::vector<int>{1, 1}), UndefinedError);
  Rng rng(8);
  for (int t = 0; t < 50; ++t) {
    std::vector<double> s(500);
    std::vector<int> y(500);
    for (std::size_t i = 0; i < s.size(); ++i) {
      s[i] = static_cast<double>(rng.below(40)) / 40.0;  // plenty of ties
      y[i] = rng.bernoulli(0.4) ? 1 : 0;
    }
    const double a = roc_auc(s, y);
    CHECK(std::abs(a - oracle::roc_auc(s, y)) <= 1e-12);
    std::vector<double> neg(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) neg[i] = -s[i];
    CHECK(a + roc_auc(neg, y) == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("ECE and calibration curve") {
  std::vector<double> conf(10, 0.8);
  std::vector<int> half{1, 0, 1, 0, 1, 0, 1, 0, 1, 0};
  CHECK(ece(conf, half) == doctest::Approx(0.3).epsilon(1e-12));
  CHECK_THROWS_AS(ece(std::vector<double>{}, std::vector<int>{}), UndefinedError);
  CHECK_THROWS_AS(ece(std::vector<double>{1.2}, std::vector<int>{1}), ParameterError);

  // Bin edges: 0 joins the first bin, 0.1 closes it, 1.0 is in the last.
  auto r = calibration_curve(std::vector<double>{0.0, 0.1, 0.1000001, 1.0}, std::vector<int>{0, 1, 1, 1});
  CHECK(r.bins[0].count == 2);
  CHECK(r.bins[1].count == 1);
  CHECK(r.bins[9].count == 1);

  Rng rng(15);
  for (int t = 0; t < 300; ++t) {
    std::vector<double> c(1 + rng.below(60));
    std::vector<int> o(c.size());
    for (std::size_t i = 0; i < c.size(); ++i) {
      c[i] = rng.bernoulli(0.2) ? static_cast<double>(rng.below(11)) / 10.0 : rng.uniform();
      o[i] = rng.bernoulli(0.5) ? 1 : 0;
    }
    const auto nb = 1 + rng.below(15);
    const auto rep = calibration_curve(c, o, nb);
    CHECK(std::abs(rep.ece - oracle::ece(c, o, nb)) <= 1e-12);
    std::size_t total = 0;
    for (const auto& b : rep.bins) total += b.count;
    CHECK(total == c.size());
    CHECK(rep.ece >= 0.0);
    CHECK(rep.ece <= 1.0);
    auto shuffled_c = c;
    auto shuffled_o = o;
    for (std::size_t i = c.size(); i > 1; --i) {
      const auto j = rng.below(i);
      std::swap(shuffled_c[i - 1], shuffled_c[j]);
      std::swap(shuffled_o[i - 1], shuffled_o[j]);
    }
    CHECK(std::abs(ece(shuffled_c, shuffled_o, nb) - rep.ece) <= 1e-12);
  }

  // Outcomes drawn with probability equal to the confidence.
  std::vector<double> cc(100000);
  std::vector<int> oo(cc.size());
  for (std::size_t i = 0; i < cc.size(); ++i) {
    cc[i] = rng.uniform();
    oo[i] = rng.bernoulli(cc[i]) ? 1 : 0;
  }
  CHECK(ece(cc, oo) <= 0.02);
}

TEST_CASE("annotation statistics") {
  SoftGroupAnnotation one{.annotator_id = "u", .stimulus_id = "1", .group_id = "g", .mass = {{"a", 100}}};
  auto s = annotation_stats(std::vector<SoftGroupAnnotation>{one}, std::set<std::string>{"g::a"});
  CHECK(s.histogram[100] == 1);
  CHECK(s.mean_total_mass["u"]["g"] == 100.0);
  CHECK(s.discarded_mass["u"] == 0.0);

  SoftGroupAnnotation two{.annotator_id = "u", .stimulus_id = "1", .group_id = "g", .mass = {{"a", 70}, {"b", 30}}};
  CHECK(annotation_stats(std::vector<SoftGroupAnnotation>{two}, std::set<std::string>{"g::a"})
            .discarded_mass["u"] == 30.0);

  Rng rng(21);
  for (int t = 0; t < 20; ++t) {
    const auto anns = random_annotations(100, rng);
    std::optional<std::set<std::string>> keep;
    if (t % 2 == 0) keep = std::set<std::string>{"g0::x", "g0::y", "g1::z"};
    const auto got = annotation_stats(anns, keep);
    const auto want = oracle::annotation_stats(anns, keep);
    CHECK(got.histogram == want.histogram);
    CHECK(got.group_totals == want.group_totals);
    CHECK(got.annotations == anns.size());
    REQUIRE(got.mean_total_mass.size() == want.mean_total_mass.size());
    for (const auto& [who, groups] : want.mean_total_mass) {
      for (const auto& [g, v] : groups) CHECK(std::abs(got.mean_total_mass.at(who).at(g) - v) <= 1e-12);
    }
    REQUIRE(got.discarded_mass.size() == want.discarded_mass.size());
    for (const auto& [who, v] : want.discarded_mass) CHECK(std::abs(got.discarded_mass.at(who) - v) <= 1e-12);
  }
}

TEST_CASE("intervention curves") {
  ToyOptions opt{.schema = default_toy_schema()};
  opt.n = 20;
  opt.seed = 3;
  const auto ds = gen_categorical_toy(opt);
  BottleneckConfig cfg;
  cfg.k = ds.concept_count();
  cfg.input_shape = ds.sample_shape;
  cfg.conv_filters.clear();
  cfg.n_classes = ds.n_classes;
  ConceptModel model(cfg, 1);
  const auto units = make_units(Granularity::group_level, ds.concept_count(), &ds.schema);
  const auto src = truth_source(ds);

  std::vector<InterventionTrace> traces;
  const auto curve = intervention_curve(model, ds, src, units, {.policy = {.seed = 4}, .threads = 3}, &traces);
  REQUIRE(traces.size() == 20);
  CHECK(curve.accuracies.size() == units.size() + 1);
  for (std::size_t s = 0; s < curve.accuracies.size(); ++s) {
    double acc = 0.0, pt = 0.0;
    for (const auto& t : traces) {
      acc += t.correct[s] ? 1.0 : 0.0;
      pt += t.p_true[s];
    }
    CHECK(std::abs(curve.accuracies[s] - acc / 20.0) <= 1e-12);
    CHECK(std::abs(curve.mean_p_true[s] - pt / 20.0) <= 1e-12);
  }
  const auto single = intervention_curve(model, ds, src, units, {.policy = {.seed = 4}, .threads = 1});
  CHECK(single.accuracies == curve.accuracies);
  CHECK(curve.to_json().at("auc").get<double>() == curve_auc(curve.accuracies));

  // A head that ignores the bottleneck gives a flat curve at the base accuracy.
  for (auto& v : model.param("head0.w").value.data()) v = 0.0;
  const auto flat = intervention_curve(model, ds, src, units, {});
  for (double a : flat.accuracies) CHECK(a == flat.accuracies[0]);
  CHECK(flat.accuracies[0] == task_accuracy(model, ds));

  std::ostringstream csv;
  write_curve_csv(csv, flat);
  CHECK(csv.str().rfind("step,accuracy,mean_p_true\n0,", 0) == 0);
}
