#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "../common/grad_check.hpp"
#include "scl/errors.hpp"
#include "scl/model.hpp"
#include "scl/ops.hpp"

using namespace scl;
using scl::testing::grad_check;

namespace {

// Random images with count labels, shaped like a small UMNIST batch.
ConceptDataset random_image_dataset(std::size_t n, std::size_t p, std::uint64_t seed,
                                    std::size_t side = 28) {
  Rng rng(seed);
  ConceptDataset ds;
  ds.sample_shape = {side, side, p};
  ds.schema = ConceptGroupSchema::binary(p, "digit");
  ds.n_classes = static_cast<int>(p) + 1;
  ds.inputs.resize(n * side * side * p);
  for (auto& v : ds.inputs) v = rng.uniform();
  for (std::size_t i = 0; i < n; ++i) {
    int count = 0;
    for (std::size_t j = 0; j < p; ++j) {
      const double bit = rng.bernoulli(0.5) ? 1.0 : 0.0;
      ds.truth.push_back(bit);
      ds.concepts.push_back(bit == 1.0 ? rng.uniform(0.7, 1.0) : rng.uniform(0.0, 0.3));
      ds.mask.push_back(j == 1 && i % 2 == 0 ? 0.0 : 1.0);
      count += static_cast<int>(bit);
    }
    ds.labels.push_back(count);
  }
  return ds;
}

ConceptDataset random_flat_dataset(std::size_t n, std::size_t d, std::size_t k, int classes,
                                   std::uint64_t seed) {
  Rng rng(seed);
  ConceptDataset ds;
  ds.sample_shape = {d};
  ds.schema = ConceptGroupSchema::binary(k);
  ds.n_classes = classes;
  for (std::size_t i = 0; i < n * d; ++i) ds.inputs.push_back(rng.normal());
  for (std::size_t i = 0; i < n * k; ++i) {
    ds.truth.push_back(rng.bernoulli(0.5) ? 1.0 : 0.0);
    ds.concepts.push_back(ds.truth.back());
    ds.mask.push_back(1.0);
  }
  for (std::size_t i = 0; i < n; ++i) ds.labels.push_back(static_cast<int>(rng.below(static_cast<std::size_t>(classes))));
  return ds;
}

BottleneckConfig flat_config(Variant v, std::size_t d, std::size_t k, int classes) {
  BottleneckConfig c;
  c.variant = v;
  c.k = k;
  c.m = 3;
  c.input_shape = {d};
  c.conv_filters.clear();
  c.backbone_width = 6;
  c.head_widths = {5};
  c.n_classes = classes;
  return c;
}

std::vector<double> logits_of(ConceptModel& model, const Tensor& x, const InterventionBatch* iv) {
  auto out = model.forward(nullptr, x, false, iv);
  auto d = out.logits.data();
  return {d.begin(), d.end()};
}

Tensor rows_tensor(const ConceptDataset& ds, std::vector<std::size_t> rows) {
  return ds.batch_inputs(rows);
}

// Independent CEM forward for flat inputs and inference-mode parameters,
// mixing with the given per-concept coefficient vector.
std::vector<double> cem_oracle_logits(const ConceptModel& model, std::span<const double> x,
                                      std::span<const double> mix) {
  const auto& c = model.config();
  auto P = [&](const std::string& n) { return model.param(n).value.data(); };
  auto affine = [](std::span<const double> in, std::span<const double> w, std::span<const double> b) {
    const std::size_t out_n = b.size();
    std::vector<double> out(out_n);
    for (std::size_t o = 0; o < out_n; ++o) {
      double s = b[o];
      for (std::size_t i = 0; i < in.size(); ++i) s += in[i] * w[i * out_n + o];
      out[o] = s;
    }
    return out;
  };
  auto leaky = [](std::vector<double> v) {
    for (auto& e : v) e = e > 0 ? e : 0.01 * e;
    return v;
  };
  const auto h = leaky(affine(x, P("backbone.w"), P("backbone.b")));
  const auto pos = leaky(affine(h, P("pos.w"), P("pos.b")));
  const auto neg = leaky(affine(h, P("neg.w"), P("neg.b")));
  std::vector<double> z;
  for (std::size_t i = 0; i < c.k; ++i) {
    for (std::size_t j = 0; j < c.m; ++j) {
      const double a = pos[i * c.m + j], b = neg[i * c.m + j];
      z.push_back(mix[i] * a + (1.0 - mix[i]) * b);
    }
  }
  for (std::size_t j = 0; j < c.head_widths.size(); ++j) {
    const auto id = std::to_string(j);
    z = affine(z, P("head" + id + ".w"), P("head" + id + ".b"));
    for (auto& e : z) e = std::max(e, 0.0);
  }
  return affine(z, P("out.w"), P("out.b"));
}

}  // namespace

TEST_CASE("config validation and json round trip") {
  auto c = flat_config(Variant::cem, 4, 3, 2);
  c.alpha = 0.25;
  auto back = BottleneckConfig::from_json(c.to_json());
  CHECK(back.to_json() == c.to_json());
  CHECK(c.bottleneck_width() == 9);
  c.alpha = -1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = flat_config(Variant::cem, 4, 3, 2);
  c.m = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CHECK_THROWS_AS(parse_variant("xyz"), ConfigError);
}

TEST_CASE("joint loss gradient matches finite differences for CBM and CEM") {
  const auto ds = random_image_dataset(4, 3, 11);
  const std::vector<std::size_t> rows{0, 1, 2, 3};
  const auto weights = class_weights(ds.labels, ds.n_classes);
  for (auto variant : {Variant::cbm, Variant::cem}) {
    BottleneckConfig cfg;
    cfg.variant = variant;
    cfg.k = 3;
    cfg.input_shape = ds.sample_shape;
    cfg.n_classes = ds.n_classes;
    ConceptModel model(cfg, 5);
    std::vector<Tensor> inputs;
    for (auto* p : model.parameters()) inputs.push_back(p->value);
    auto loss = [&](Tape* tape) { return joint_loss(tape, model, ds, rows, weights, true).total; };
    const auto r = grad_check(loss, inputs, 1e-5, 40);
    INFO(to_string(variant));
    CHECK(r.checked > 400);
    CHECK(r.max_rel_error < 1e-3);
  }
}

TEST_CASE("CBM intervention arithmetic on a hand-built summing head") {
  BottleneckConfig cfg = flat_config(Variant::cbm, 2, 2, 2);
  cfg.head_widths.clear();
  ConceptModel model(cfg, 0);
  for (auto& v : model.param("concept.w").value.data()) v = 0.0;
  model.param("concept.b").value.data()[0] = std::log(0.2 / 0.8);
  model.param("concept.b").value.data()[1] = std::log(0.9 / 0.1);
  auto w = model.param("out.w").value.data();  // [2×2], column 0 sums the bottleneck
  w[0] = 1.0;
  w[1] = 0.0;
  w[2] = 1.0;
  w[3] = 0.0;
  for (auto& v : model.param("out.b").value.data()) v = 0.0;

  Tensor x({1, 2}, 0.3);
  auto plain = model.forward(nullptr, x, false);
  CHECK(plain.concept_probs.data()[0] == doctest::Approx(0.2).epsilon(1e-12));
  CHECK(plain.logits.data()[0] == doctest::Approx(1.1).epsilon(1e-12));

  InterventionBatch iv(1, 2);
  iv.set(0, 0, 1.0);
  auto out = model.forward(nullptr, x, false, &iv);
  CHECK(out.logits.data()[0] == doctest::Approx(1.9).epsilon(1e-12));
}

TEST_CASE("empty and self-valued interventions leave the prediction unchanged") {
  const auto ds = random_flat_dataset(6, 5, 4, 3, 2);
  const auto x = rows_tensor(ds, {0, 1, 2, 3, 4, 5});
  for (auto variant : {Variant::cbm, Variant::cem}) {
    ConceptModel model(flat_config(variant, 5, 4, 3), 9);
    const auto base = logits_of(model, x, nullptr);
    InterventionBatch none(6, 4);
    CHECK(logits_of(model, x, &none) == base);

    const auto own = model.forward(nullptr, x, false);
    const auto probs = own.concept_probs.data();
    InterventionBatch self(6, 4);
    for (std::size_t r = 0; r < 6; ++r) {
      for (std::size_t j = 0; j < 4; ++j) self.set(r, j, probs[r * 4 + j]);
    }
    CHECK(logits_of(model, x, &self) == base);
  }
}

TEST_CASE("intervention batch rejects bad indices and values") {
  InterventionBatch iv(2, 3);
  CHECK_THROWS_AS(iv.set(0, 3, 0.5), IndexError);
  CHECK_THROWS_AS(iv.set(0, 1, 1.5), ParameterError);
  CHECK_THROWS_AS(iv.set(0, 1, -0.1), ParameterError);
  ConceptModel model(flat_config(Variant::cbm, 3, 3, 2), 0);
  std::vector<double> input{0.1, 0.2, 0.3};
  CHECK_THROWS_AS(model.predict_one(input, {{3, 1.0}}), IndexError);
}

TEST_CASE("fully intervened CBM ignores the input") {
  const auto ds = random_flat_dataset(2, 5, 4, 3, 8);
  ConceptModel model(flat_config(Variant::cbm, 5, 4, 3), 1);
  const std::vector<double> bits{1, 0, 0.3, 1};
  auto a = model.predict_one(ds.input(0), {{0, bits[0]}, {1, bits[1]}, {2, bits[2]}, {3, bits[3]}});
  auto b = model.predict_one(ds.input(1), {{0, bits[0]}, {1, bits[1]}, {2, bits[2]}, {3, bits[3]}});
  CHECK(a.class_probs == b.class_probs);
  CHECK(a.concept_probs != b.concept_probs);
}

TEST_CASE("CEM intervention mixes the positive and negative embeddings") {
  const auto ds = random_flat_dataset(1, 5, 3, 4, 21);
  ConceptModel model(flat_config(Variant::cem, 5, 3, 4), 4);
  const auto x = ds.batch_inputs(std::vector<std::size_t>{0});
  const auto plain_out = model.forward(nullptr, x, false);
  const auto p = plain_out.concept_probs.data();
  const std::vector<double> own(p.begin(), p.end());

  // Plain forward agrees with the oracle using the model's own probabilities.
  auto oracle = cem_oracle_logits(model, ds.input(0), own);
  auto plain = logits_of(model, x, nullptr);
  for (std::size_t c = 0; c < plain.size(); ++c) CHECK(plain[c] == doctest::Approx(oracle[c]).epsilon(1e-12));

  for (double v : {0.0, 1.0, 0.35}) {
    InterventionBatch iv(1, 3);
    iv.set(0, 1, v);
    auto mix = own;
    mix[1] = v;
    const auto expect = cem_oracle_logits(model, ds.input(0), mix);
    const auto got = logits_of(model, x, &iv);
    for (std::size_t c = 0; c < got.size(); ++c) CHECK(got[c] == doctest::Approx(expect[c]).epsilon(1e-12));
  }

  // Continuity in the supplied value.
  InterventionBatch a(1, 3), b(1, 3);
  a.set(0, 2, 0.5);
  b.set(0, 2, 0.5 + 1e-9);
  const auto la = logits_of(model, x, &a), lb = logits_of(model, x, &b);
  for (std::size_t c = 0; c < la.size(); ++c) CHECK(std::abs(la[c] - lb[c]) < 1e-6);
}

TEST_CASE("alpha = 0 sends no concept-loss gradient to the concept head") {
  const auto ds = random_flat_dataset(8, 5, 3, 2, 3);
  std::vector<std::size_t> rows{0, 1, 2, 3, 4, 5, 6, 7};
  const auto weights = class_weights(ds.labels, ds.n_classes);
  for (auto variant : {Variant::cbm, Variant::cem}) {
    auto cfg = flat_config(variant, 5, 3, 2);
    cfg.alpha = 0.0;
    ConceptModel model(cfg, 2);
    Tape tape;
    auto jl = joint_loss(&tape, model, ds, rows, weights, true);
    CHECK(jl.concept_term.item() == 0.0);
    tape.backward(jl.concept_term);
    double norm = 0.0;
    for (auto* p : model.parameters()) {
      if (!p->value.has_grad()) continue;
      for (double g : p->value.grad()) norm += g * g;
    }
    CHECK(norm == 0.0);
    zero_grad(model.parameters());

    cfg.alpha = 1.0;
    ConceptModel with_alpha(cfg, 2);
    Tape tape2;
    auto jl2 = joint_loss(&tape2, with_alpha, ds, rows, weights, true);
    tape2.backward(jl2.concept_term);
    const auto& head = with_alpha.param(variant == Variant::cbm ? "concept.w" : "score.w");
    double n2 = 0.0;
    for (double g : head.value.grad()) n2 += g * g;
    CHECK(n2 > 0.0);
  }
}

TEST_CASE("soft concept target equal to the prediction gives a non-negative loss") {
  auto ds = random_flat_dataset(4, 5, 3, 2, 6);
  ConceptModel model(flat_config(Variant::cbm, 5, 3, 2), 6);
  const auto out = model.forward(nullptr, ds.batch_inputs(std::vector<std::size_t>{0, 1, 2, 3}), false);
  const auto p = out.concept_probs.data();
  ds.concepts.assign(p.begin(), p.end());
  auto jl = joint_loss(nullptr, model, ds, std::vector<std::size_t>{0, 1, 2, 3},
                       class_weights(ds.labels, 2), false);
  double entropy = 0.0;
  for (double q : p) entropy -= q * std::log(q) + (1 - q) * std::log(1 - q);
  CHECK(jl.concept_term.item() >= 0.0);
  CHECK(jl.concept_term.item() == doctest::Approx(entropy / 12.0).epsilon(1e-9));
}

TEST_CASE("balanced class weights with add-one smoothing") {
  std::vector<int> labels{0, 0, 0, 1};
  auto w = class_weights(labels, 2);
  CHECK(w[0] == doctest::Approx(4.0 / 6.0));
  CHECK(w[1] == doctest::Approx(2.0));
  std::vector<std::string> warnings;
  auto s = class_weights(labels, 3, &warnings);
  CHECK(warnings.size() == 1);
  // Counts {4, 2, 1} over N = 7.
  CHECK(s[0] == doctest::Approx(7.0 / (3.0 * 4.0)));
  CHECK(s[2] == doctest::Approx(7.0 / 3.0));
}

TEST_CASE("training memorizes a single repeated sample") {
  auto one = random_flat_dataset(1, 5, 3, 2, 12);
  ConceptDataset ds = one;
  std::vector<std::size_t> rows(40, 0);
  ds = one.subset(rows);
  ConceptModel model(flat_config(Variant::cbm, 5, 3, 2), 3);
  std::vector<double> losses;
  TrainOptions opt;
  opt.batch_size = 8;
  opt.max_epochs = 5;
  opt.on_epoch = [&](const nlohmann::json& j) { losses.push_back(j.at("train_loss").get<double>()); };
  auto result = train(model, ds, opt);
  REQUIRE(losses.size() == 5);
  for (std::size_t e = 1; e < losses.size(); ++e) CHECK(losses[e] < losses[e - 1]);
  CHECK(result.epochs.size() == 5);
  CHECK(result.warnings.size() == 1);  // class absent from the data
}

TEST_CASE("training is bit-reproducible under a fixed seed") {
  const auto ds = random_flat_dataset(60, 5, 3, 3, 4);
  TrainOptions opt;
  opt.batch_size = 16;
  opt.max_epochs = 3;
  opt.seed = 17;
  ConceptModel a(flat_config(Variant::cem, 5, 3, 3), 1), b(flat_config(Variant::cem, 5, 3, 3), 1);
  train(a, ds, opt);
  train(b, ds, opt);
  const auto pa = a.parameters(), pb = b.parameters();
  for (std::size_t i = 0; i < pa.size(); ++i) {
    const auto da = pa[i]->value.data(), db = pb[i]->value.data();
    CHECK(std::equal(da.begin(), da.end(), db.begin(), db.end()));
  }
  CHECK(a.history == b.history);
}

TEST_CASE("early stopping restores the best validation epoch") {
  const auto ds = random_flat_dataset(50, 5, 3, 2, 31);
  ConceptModel model(flat_config(Variant::cbm, 5, 3, 2), 0);
  TrainOptions opt;
  opt.batch_size = 10;
  opt.max_epochs = 40;
  opt.patience = 2;
  opt.adam.lr = 0.05;
  auto r = train(model, ds, opt);
  REQUIRE(!r.epochs.empty());
  double best = r.epochs[0].val_loss;
  for (const auto& e : r.epochs) best = std::min(best, e.val_loss);
  CHECK(r.epochs[r.best_epoch - 1].val_loss == best);
  if (r.early_stopped) CHECK(r.epochs.size() == r.best_epoch + opt.patience);
  // The restored parameters reproduce the best validation loss.
  std::vector<std::size_t> all(ds.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  CHECK(std::isfinite(joint_loss(nullptr, model, ds, all, class_weights(ds.labels, 2), false).total.item()));
}

TEST_CASE("checkpoint round trip preserves predictions and sidecar") {
  const auto dir = std::filesystem::temp_directory_path() / "scl_model_roundtrip";
  std::filesystem::create_directories(dir);
  BottleneckConfig cfg;
  cfg.variant = Variant::cem;
  cfg.k = 2;
  cfg.input_shape = {8, 8, 2};
  cfg.conv_filters = {3, 4};
  cfg.n_classes = 3;
  cfg.alpha = 0.5;
  ConceptModel model(cfg, 7);
  const auto ds = random_image_dataset(5, 2, 3, 8);
  TrainOptions opt;
  opt.batch_size = 4;
  opt.max_epochs = 1;
  train(model, ds, opt);
  model.provenance = {{"delta", 0.2}};
  model.save(dir / "m.scl");
  auto loaded = ConceptModel::load(dir / "m.scl");
  const auto x = ds.batch_inputs(std::vector<std::size_t>{0, 1, 2, 3, 4});
  auto a = model.predict(x), b = loaded.predict(x);
  CHECK(a.class_probs == b.class_probs);
  CHECK(a.concept_probs == b.concept_probs);
  CHECK(loaded.config().alpha == 0.5);
  CHECK(loaded.provenance == model.provenance);
  CHECK(loaded.history == model.history);
  std::filesystem::remove_all(dir);
  CHECK_THROWS_AS(ConceptModel::load(dir / "missing.scl"), NotFoundError);
}

TEST_CASE("concept accuracy") {
  std::vector<double> t{1, 0, 1, 0.8, 0.2}, m{1, 1, 1, 1, 1};
  CHECK(concept_accuracy(t, t, m) == 1.0);
  std::vector<double> below(5, 0.5 - 1e-9), ones(5, 1.0);
  CHECK(concept_accuracy(below, ones, m) == 0.0);
  std::vector<double> masked{1, 0, 0, 0, 0};
  CHECK(concept_accuracy(std::vector<double>{0, 0, 0, 0, 0}, ones, masked) == 0.0);
  CHECK_THROWS_AS(concept_accuracy(t, t, std::vector<double>(5, 0.0)), UndefinedError);

  Rng rng(99);
  std::vector<double> pred, target, mask;
  for (int i = 0; i < 10000; ++i) {
    pred.push_back(rng.uniform());
    target.push_back(rng.bernoulli(0.5) ? 1.0 : 0.0);
    mask.push_back(1.0);
  }
  CHECK(std::abs(concept_accuracy(pred, target, mask) - 0.5) <= 0.02);
}
