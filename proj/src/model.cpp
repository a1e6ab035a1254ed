#include "scl/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include "scl/checkpoint.hpp"
#include "scl/errors.hpp"
#include "scl/rng.hpp"

namespace scl {

using nlohmann::json;

const char* to_string(Variant v) { return v == Variant::cbm ? "cbm" : "cem"; }

Variant parse_variant(std::string_view name) {
  if (name == "cbm" || name == "CBM") return Variant::cbm;
  if (name == "cem" || name == "CEM") return Variant::cem;
  throw ConfigError("variant must be 'cbm' or 'cem', got '" + std::string(name) + "'");
}

// ---- BottleneckConfig --------------------------------------------------------

void BottleneckConfig::validate() const {
  if (k == 0) throw ConfigError("config: k must be >= 1");
  if (variant == Variant::cem && m == 0) throw ConfigError("config: m must be >= 1");
  if (!(alpha >= 0.0)) throw ConfigError("config: alpha must be >= 0");
  if (n_classes < 1) throw ConfigError("config: n_classes must be >= 1");
  if (backbone_width == 0) throw ConfigError("config: backbone_width must be >= 1");
  if (input_shape.empty() || shape_size(input_shape) == 0) {
    throw ConfigError("config: input_shape must be non-empty");
  }
  if (!conv_filters.empty() && input_shape.size() != 3) {
    throw ConfigError("config: a convolutional backbone needs input_shape {H, W, C}");
  }
  if (conv.stride < 1) throw ConfigError("config: conv stride must be >= 1");
  for (auto f : conv_filters) {
    if (f == 0) throw ConfigError("config: conv filter counts must be >= 1");
  }
  for (auto w : head_widths) {
    if (w == 0) throw ConfigError("config: head widths must be >= 1");
  }
}

std::size_t BottleneckConfig::bottleneck_width() const {
  return variant == Variant::cbm ? k : k * m;
}

json BottleneckConfig::to_json() const {
  return {{"variant", to_string(variant)},
          {"k", k},
          {"m", m},
          {"alpha", alpha},
          {"input_shape", input_shape},
          {"conv_filters", conv_filters},
          {"conv_stride", conv.stride},
          {"conv_padding", conv.padding == ops::Padding::same ? "same" : "valid"},
          {"backbone_width", backbone_width},
          {"head_widths", head_widths},
          {"n_classes", n_classes}};
}

BottleneckConfig BottleneckConfig::from_json(const json& j) {
  BottleneckConfig c;
  try {
    c.variant = parse_variant(j.at("variant").get<std::string>());
    c.k = j.at("k").get<std::size_t>();
    c.m = j.value("m", std::size_t{8});
    c.alpha = j.value("alpha", 1.0);
    c.input_shape = j.at("input_shape").get<Shape>();
    c.conv_filters = j.value("conv_filters", std::vector<std::size_t>{});
    c.conv.stride = j.value("conv_stride", std::size_t{2});
    const auto pad = j.value("conv_padding", std::string("same"));
    if (pad != "same" && pad != "valid") throw ConfigError("config: bad conv_padding '" + pad + "'");
    c.conv.padding = pad == "same" ? ops::Padding::same : ops::Padding::valid;
    c.backbone_width = j.value("backbone_width", std::size_t{20});
    c.head_widths = j.value("head_widths", std::vector<std::size_t>{20});
    c.n_classes = j.at("n_classes").get<int>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

// ---- InterventionBatch -------------------------------------------------------

void InterventionBatch::set(std::size_t row, std::size_t concept_index, double value) {
  if (row >= batch) throw IndexError("intervention row " + std::to_string(row) + " >= batch");
  if (concept_index >= k) {
    throw IndexError("intervention on concept " + std::to_string(concept_index) +
                     " but the model has k = " + std::to_string(k));
  }
  if (!(value >= 0.0 && value <= 1.0)) {
    throw ParameterError("intervention value must lie in [0, 1], got " + std::to_string(value));
  }
  mask[row * k + concept_index] = 1.0;
  values[row * k + concept_index] = value;
}

void InterventionBatch::validate() const {
  if (mask.size() != batch * k || values.size() != batch * k) {
    throw DimensionError("intervention arrays do not match batch × k");
  }
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i] != 0.0 && !(values[i] >= 0.0 && values[i] <= 1.0)) {
      throw ParameterError("intervention value must lie in [0, 1]");
    }
  }
}

// ---- ConceptModel ------------------------------------------------------------

namespace {

// U(±1/sqrt(fan_in)) for weights and biases alike.
Tensor fan_in_uniform(Shape shape, std::size_t fan_in, Rng rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = rng.uniform(-bound, bound);
  return t;
}

}  // namespace

ConceptModel::ConceptModel(BottleneckConfig config, std::uint64_t seed)
    : config_(std::move(config)) {
  config_.validate();
  build(seed);
}

void ConceptModel::build(std::uint64_t seed) {
  Rng rng(seed);
  std::uint64_t stream = 0;
  auto add_uniform = [&](const std::string& name, Shape shape, std::size_t fan_in) {
    params_.emplace_back(name, fan_in_uniform(std::move(shape), fan_in, rng.fork(stream++)));
  };
  auto add_const = [&](const std::string& name, std::size_t n, double v) {
    params_.emplace_back(name, Tensor({n}, v));
  };

  std::size_t features = 0;
  if (!config_.conv_filters.empty()) {
    std::size_t h = config_.input_shape[0], w = config_.input_shape[1], c = config_.input_shape[2];
    for (std::size_t i = 0; i < config_.conv_filters.size(); ++i) {
      const auto f = config_.conv_filters[i];
      const auto id = std::to_string(i);
      add_uniform("conv" + id + ".w", {3, 3, c, f}, 9 * c);
      add_uniform("conv" + id + ".b", {f}, 9 * c);
      add_const("bn" + id + ".gamma", f, 1.0);
      add_const("bn" + id + ".beta", f, 0.0);
      norms_.emplace_back(f);
      if (config_.conv.padding == ops::Padding::valid && (h < 3 || w < 3)) {
        throw ConfigError("config: input too small for " + std::to_string(i + 1) +
                          " valid convolutions");
      }
      h = ops::conv_out_extent(h, config_.conv);
      w = ops::conv_out_extent(w, config_.conv);
      c = f;
    }
    features = h * w * c;
  } else {
    features = shape_size(config_.input_shape);
  }

  const auto width = config_.backbone_width;
  const auto k = config_.k;
  add_uniform("backbone.w", {features, width}, features);
  add_uniform("backbone.b", {width}, features);

  if (config_.variant == Variant::cbm) {
    add_uniform("concept.w", {width, k}, width);
    add_uniform("concept.b", {k}, width);
  } else {
    const auto m = config_.m;
    add_uniform("pos.w", {width, k * m}, width);
    add_uniform("pos.b", {k * m}, width);
    add_uniform("neg.w", {width, k * m}, width);
    add_uniform("neg.b", {k * m}, width);
    add_uniform("score.w", {2 * m, 1}, 2 * m);
    add_uniform("score.b", {1}, 2 * m);
  }

  std::size_t in = config_.bottleneck_width();
  for (std::size_t j = 0; j < config_.head_widths.size(); ++j) {
    const auto out = config_.head_widths[j];
    add_uniform("head" + std::to_string(j) + ".w", {in, out}, in);
    add_uniform("head" + std::to_string(j) + ".b", {out}, in);
    in = out;
  }
  const auto classes = static_cast<std::size_t>(config_.n_classes);
  add_uniform("out.w", {in, classes}, in);
  add_uniform("out.b", {classes}, in);
}

Parameter& ConceptModel::param(const std::string& name) {
  for (auto& p : params_) {
    if (p.name == name) return p;
  }
  throw NotFoundError("no parameter named '" + name + "'");
}

const Parameter& ConceptModel::param(const std::string& name) const {
  return const_cast<ConceptModel*>(this)->param(name);
}

std::vector<Parameter*> ConceptModel::parameters() {
  std::vector<Parameter*> out;
  for (auto& p : params_) out.push_back(&p);
  return out;
}

std::vector<const Parameter*> ConceptModel::parameters() const {
  std::vector<const Parameter*> out;
  for (const auto& p : params_) out.push_back(&p);
  return out;
}

ForwardOutput ConceptModel::run(Tape* tape, const Tensor& x, bool training,
                                const InterventionBatch* interventions,
                                std::vector<ops::BatchNormStats>& norms) const {
  if (x.rank() != config_.input_shape.size() + 1 ||
      !std::equal(config_.input_shape.begin(), config_.input_shape.end(), x.shape().begin() + 1)) {
    throw DimensionError("model expects samples of shape " + shape_str(config_.input_shape) +
                         ", got input " + shape_str(x.shape()));
  }
  const std::size_t batch = x.dim(0);
  const std::size_t k = config_.k;
  if (interventions != nullptr) {
    if (interventions->batch != batch || interventions->k != k) {
      throw DimensionError("intervention batch does not match the input batch");
    }
    interventions->validate();
  }
  auto P = [this](const std::string& name) -> const Tensor& { return param(name).value; };

  Tensor h = x;
  for (std::size_t i = 0; i < config_.conv_filters.size(); ++i) {
    const auto id = std::to_string(i);
    h = ops::conv2d_3x3(tape, h, P("conv" + id + ".w"), P("conv" + id + ".b"), config_.conv);
    h = ops::leaky_relu(tape, h);
    h = ops::batch_norm(tape, h, P("bn" + id + ".gamma"), P("bn" + id + ".beta"), norms[i],
                        training);
  }
  h = ops::reshape(tape, h, {batch, h.size() / std::max<std::size_t>(batch, 1)});
  h = ops::leaky_relu(tape, ops::linear(tape, h, P("backbone.w"), P("backbone.b")));

  static const std::vector<double> kNone;
  const std::span<const double> mask = interventions ? std::span<const double>(interventions->mask)
                                                     : std::span<const double>(kNone);
  const std::span<const double> values =
      interventions ? std::span<const double>(interventions->values) : std::span<const double>(kNone);

  ForwardOutput out;
  Tensor bottleneck;
  if (config_.variant == Variant::cbm) {
    out.concept_probs = ops::sigmoid(tape, ops::linear(tape, h, P("concept.w"), P("concept.b")));
    bottleneck = interventions ? ops::substitute(tape, out.concept_probs, mask, values)
                               : out.concept_probs;
  } else {
    const auto m = config_.m;
    auto pos = ops::leaky_relu(tape, ops::linear(tape, h, P("pos.w"), P("pos.b")));
    auto neg = ops::leaky_relu(tape, ops::linear(tape, h, P("neg.w"), P("neg.b")));
    pos = ops::reshape(tape, pos, {batch, k, m});
    neg = ops::reshape(tape, neg, {batch, k, m});
    auto joint = ops::reshape(tape, ops::concat_last(tape, pos, neg), {batch * k, 2 * m});
    auto score = ops::linear(tape, joint, P("score.w"), P("score.b"));
    out.concept_probs = ops::sigmoid(tape, ops::reshape(tape, score, {batch, k}));
    auto mixing = interventions ? ops::substitute(tape, out.concept_probs, mask, values)
                                : out.concept_probs;
    bottleneck = ops::reshape(tape, ops::mix_embeddings(tape, mixing, pos, neg), {batch, k * m});
  }

  Tensor z = bottleneck;
  for (std::size_t j = 0; j < config_.head_widths.size(); ++j) {
    const auto id = std::to_string(j);
    z = ops::relu(tape, ops::linear(tape, z, P("head" + id + ".w"), P("head" + id + ".b")));
  }
  out.logits = ops::linear(tape, z, P("out.w"), P("out.b"));
  return out;
}

ForwardOutput ConceptModel::forward(Tape* tape, const Tensor& x, bool training,
                                    const InterventionBatch* interventions) {
  return run(tape, x, training, interventions, norms_);
}

Prediction ConceptModel::predict(const Tensor& x, const InterventionBatch* interventions) const {
  // Inference only reads the statistics; the copy keeps this method const.
  auto norms = norms_;
  auto out = run(nullptr, x, false, interventions, norms);
  Prediction p;
  p.batch = x.dim(0);
  auto cp = out.concept_probs.data();
  p.concept_probs.assign(cp.begin(), cp.end());
  p.class_probs = ops::softmax_rows(out.logits);
  const auto c = static_cast<std::size_t>(config_.n_classes);
  p.predicted.resize(p.batch);
  for (std::size_t b = 0; b < p.batch; ++b) {
    auto row = p.class_probs.begin() + static_cast<std::ptrdiff_t>(b * c);
    p.predicted[b] = static_cast<int>(std::max_element(row, row + static_cast<std::ptrdiff_t>(c)) - row);
  }
  return p;
}

Prediction ConceptModel::predict_one(std::span<const double> input,
                                     const std::map<std::size_t, double>& interventions) const {
  Shape shape{1};
  shape.insert(shape.end(), config_.input_shape.begin(), config_.input_shape.end());
  if (input.size() != shape_size(shape)) {
    throw DimensionError("input has " + std::to_string(input.size()) + " values, model expects " +
                         std::to_string(shape_size(shape)));
  }
  Tensor x(shape, std::vector<double>(input.begin(), input.end()));
  if (interventions.empty()) return predict(x);
  InterventionBatch iv(1, config_.k);
  for (const auto& [i, v] : interventions) iv.set(0, i, v);
  return predict(x, &iv);
}

ConceptModel::Snapshot ConceptModel::snapshot() const {
  Snapshot s;
  for (const auto& p : params_) {
    auto d = p.value.data();
    s.values.emplace_back(d.begin(), d.end());
  }
  s.norms = norms_;
  return s;
}

void ConceptModel::restore(const Snapshot& s) {
  if (s.values.size() != params_.size()) throw StateError("snapshot does not match the model");
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto d = params_[i].value.data();
    if (d.size() != s.values[i].size()) throw StateError("snapshot does not match the model");
    std::copy(s.values[i].begin(), s.values[i].end(), d.begin());
  }
  norms_ = s.norms;
}

void ConceptModel::save(const std::filesystem::path& path) const {
  std::vector<NamedTensor> tensors;
  for (const auto& p : params_) tensors.push_back({p.name, p.value});
  for (std::size_t i = 0; i < norms_.size(); ++i) {
    const auto id = std::to_string(i);
    tensors.push_back({"bn" + id + ".running_mean",
                       Tensor({norms_[i].running_mean.size()}, norms_[i].running_mean)});
    tensors.push_back({"bn" + id + ".running_var",
                       Tensor({norms_[i].running_var.size()}, norms_[i].running_var)});
  }
  save_tensors(path, tensors);
  json sidecar = {{"format", "scl-model-1"},
                  {"config", config_.to_json()},
                  {"provenance", provenance},
                  {"history", history}};
  std::ofstream out(path.string() + ".json");
  if (!out) throw NotFoundError("cannot write " + path.string() + ".json");
  out << sidecar.dump(2) << '\n';
}

ConceptModel ConceptModel::load(const std::filesystem::path& path) {
  std::ifstream in(path.string() + ".json");
  if (!in) throw NotFoundError("missing model sidecar " + path.string() + ".json");
  json sidecar;
  try {
    sidecar = json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError("model sidecar " + path.string() + ".json: " + e.what());
  }
  ConceptModel model(BottleneckConfig::from_json(sidecar.at("config")), 0);
  model.provenance = sidecar.value("provenance", json::object());
  model.history = sidecar.value("history", json::array());

  auto tensors = load_tensors(path);
  auto find = [&](const std::string& name) -> const Tensor& {
    for (const auto& t : tensors) {
      if (t.name == name) return t.tensor;
    }
    throw FormatError("checkpoint " + path.string() + " lacks tensor '" + name + "'");
  };
  for (auto& p : model.params_) {
    const auto& t = find(p.name);
    if (t.shape() != p.value.shape()) {
      throw FormatError("checkpoint tensor '" + p.name + "' has shape " + shape_str(t.shape()) +
                        ", expected " + shape_str(p.value.shape()));
    }
    std::copy(t.data().begin(), t.data().end(), p.value.data().begin());
  }
  for (std::size_t i = 0; i < model.norms_.size(); ++i) {
    const auto id = std::to_string(i);
    auto mean = find("bn" + id + ".running_mean").data();
    auto var = find("bn" + id + ".running_var").data();
    if (mean.size() != model.norms_[i].running_mean.size() ||
        var.size() != model.norms_[i].running_var.size()) {
      throw FormatError("checkpoint batch-norm statistics for layer " + id + " have wrong size");
    }
    model.norms_[i].running_mean.assign(mean.begin(), mean.end());
    model.norms_[i].running_var.assign(var.begin(), var.end());
  }
  return model;
}

// ---- Training ----------------------------------------------------------------

std::vector<double> class_weights(std::span<const int> labels, int n_classes,
                                  std::vector<std::string>* warnings) {
  if (n_classes < 1) throw ParameterError("class_weights needs n_classes >= 1");
  if (labels.empty()) throw DataError("class_weights needs at least one label");
  const auto c = static_cast<std::size_t>(n_classes);
  std::vector<double> counts(c, 0.0);
  for (int y : labels) {
    if (y < 0 || y >= n_classes) {
      throw IndexError("label " + std::to_string(y) + " outside [0, " + std::to_string(n_classes) + ")");
    }
    counts[static_cast<std::size_t>(y)] += 1.0;
  }
  double n = static_cast<double>(labels.size());
  std::vector<std::size_t> absent;
  for (std::size_t i = 0; i < c; ++i) {
    if (counts[i] == 0.0) absent.push_back(i);
  }
  if (!absent.empty()) {
    for (auto& v : counts) v += 1.0;
    n += static_cast<double>(c);
    if (warnings) {
      std::string msg = "classes absent from training data (add-one smoothed weights):";
      for (auto a : absent) msg += " " + std::to_string(a);
      warnings->push_back(msg);
    }
  }
  std::vector<double> w(c);
  for (std::size_t i = 0; i < c; ++i) w[i] = n / (static_cast<double>(c) * counts[i]);
  return w;
}

JointLoss joint_loss(Tape* tape, ConceptModel& model, const ConceptDataset& ds,
                     std::span<const std::size_t> rows, std::span<const double> weights,
                     bool training) {
  const std::size_t k = ds.concept_count();
  if (k != model.k()) {
    throw DimensionError("dataset has " + std::to_string(k) + " concepts, model has " +
                         std::to_string(model.k()));
  }
  auto x = ds.batch_inputs(rows);
  std::vector<double> targets, mask;
  std::vector<int> labels;
  targets.reserve(rows.size() * k);
  mask.reserve(rows.size() * k);
  for (auto r : rows) {
    auto c = ds.concepts_of(r);
    auto mk = ds.mask_of(r);
    targets.insert(targets.end(), c.begin(), c.end());
    mask.insert(mask.end(), mk.begin(), mk.end());
    labels.push_back(ds.labels[r]);
  }
  auto out = model.forward(tape, x, training);
  JointLoss loss;
  loss.task = ops::weighted_softmax_ce(tape, out.logits, labels, weights);
  auto concept_loss = ops::bce(tape, out.concept_probs, targets, mask);
  loss.empty_mask = concept_loss.empty_mask;
  loss.concept_term = ops::scale(tape, concept_loss.value, model.config().alpha);
  loss.total = ops::add(tape, loss.task, loss.concept_term);
  return loss;
}

json TrainResult::to_json() const {
  json epochs_json = json::array();
  for (const auto& e : epochs) {
    epochs_json.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_loss", e.val_loss}});
  }
  return {{"epochs", epochs_json},
          {"best_epoch", best_epoch},
          {"early_stopped", early_stopped},
          {"warnings", warnings}};
}

TrainResult train(ConceptModel& model, const ConceptDataset& ds, const TrainOptions& opt) {
  ds.validate();
  if (ds.size() == 0) throw DataError("cannot train on an empty dataset");
  if (ds.n_classes != model.n_classes()) {
    throw ConfigError("dataset has " + std::to_string(ds.n_classes) + " classes, model has " +
                      std::to_string(model.n_classes()));
  }
  if (!(opt.val_fraction >= 0.0 && opt.val_fraction < 1.0)) {
    throw ParameterError("val_fraction must lie in [0, 1)");
  }
  if (opt.batch_size < 2) throw ParameterError("batch size must be >= 2 for batch normalization");

  Rng rng(opt.seed);
  std::vector<std::size_t> order(ds.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  {
    auto split_rng = rng.fork(1);
    split_rng.shuffle(std::span<std::size_t>(order));
  }
  const auto n_val = static_cast<std::size_t>(std::floor(opt.val_fraction * static_cast<double>(ds.size())));
  std::vector<std::size_t> val(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<std::size_t> tr(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
  if (tr.size() < 2) throw DataError("training split needs at least 2 samples");

  TrainResult result;
  std::vector<int> tr_labels;
  for (auto r : tr) tr_labels.push_back(ds.labels[r]);
  const auto weights = class_weights(tr_labels, ds.n_classes, &result.warnings);

  auto params = model.parameters();
  double best = std::numeric_limits<double>::infinity();
  auto best_state = model.snapshot();
  std::size_t stale = 0;

  for (std::size_t epoch = 1; epoch <= opt.max_epochs; ++epoch) {
    auto epoch_rng = rng.fork(1000 + epoch);
    epoch_rng.shuffle(std::span<std::size_t>(tr));
    double train_sum = 0.0;
    std::size_t train_count = 0;
    for (std::size_t start = 0; start < tr.size(); start += opt.batch_size) {
      const auto end = std::min(tr.size(), start + opt.batch_size);
      if (end - start < 2) break;  // batch norm needs two samples
      std::span<const std::size_t> rows(tr.data() + start, end - start);
      Tape tape;
      auto loss = joint_loss(&tape, model, ds, rows, weights, true);
      tape.backward(loss.total);
      adam_step(params, opt.adam);
      train_sum += loss.total.item() * static_cast<double>(rows.size());
      train_count += rows.size();
    }
    EpochRecord rec{epoch, train_sum / static_cast<double>(train_count), 0.0};

    if (val.empty()) {
      rec.val_loss = rec.train_loss;
    } else {
      double val_sum = 0.0;
      for (std::size_t start = 0; start < val.size(); start += 512) {
        const auto end = std::min(val.size(), start + 512);
        std::span<const std::size_t> rows(val.data() + start, end - start);
        auto loss = joint_loss(nullptr, model, ds, rows, weights, false);
        val_sum += loss.total.item() * static_cast<double>(rows.size());
      }
      rec.val_loss = val_sum / static_cast<double>(val.size());
    }
    result.epochs.push_back(rec);
    if (opt.on_epoch) {
      opt.on_epoch({{"epoch", rec.epoch}, {"train_loss", rec.train_loss}, {"val_loss", rec.val_loss}});
    }

    if (rec.val_loss < best) {
      best = rec.val_loss;
      best_state = model.snapshot();
      result.best_epoch = epoch;
      stale = 0;
    } else if (++stale >= opt.patience) {
      result.early_stopped = true;
      break;
    }
  }
  model.restore(best_state);
  model.history = result.to_json();
  return result;
}

// ---- Metrics -----------------------------------------------------------------

double concept_accuracy(std::span<const double> predicted, std::span<const double> targets,
                        std::span<const double> mask, double threshold) {
  if (predicted.size() != targets.size() || (!mask.empty() && mask.size() != targets.size())) {
    throw DimensionError("concept_accuracy: predictions, targets and mask differ in length");
  }
  std::size_t hits = 0, total = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    if (!mask.empty() && mask[i] == 0.0) continue;
    ++total;
    hits += (predicted[i] >= threshold) == (targets[i] >= threshold);
  }
  if (total == 0) throw UndefinedError("concept_accuracy: no unmasked concepts");
  return static_cast<double>(hits) / static_cast<double>(total);
}

Prediction predict_dataset(const ConceptModel& model, const ConceptDataset& ds,
                           std::size_t batch_size) {
  Prediction all;
  std::vector<std::size_t> rows;
  for (std::size_t start = 0; start < ds.size(); start += batch_size) {
    const auto end = std::min(ds.size(), start + batch_size);
    rows.resize(end - start);
    std::iota(rows.begin(), rows.end(), start);
    auto p = model.predict(ds.batch_inputs(rows));
    all.concept_probs.insert(all.concept_probs.end(), p.concept_probs.begin(), p.concept_probs.end());
    all.class_probs.insert(all.class_probs.end(), p.class_probs.begin(), p.class_probs.end());
    all.predicted.insert(all.predicted.end(), p.predicted.begin(), p.predicted.end());
    all.batch += p.batch;
  }
  return all;
}

double concept_accuracy(const ConceptModel& model, const ConceptDataset& ds, double threshold) {
  auto p = predict_dataset(model, ds);
  return concept_accuracy(p.concept_probs, ds.concepts, ds.mask, threshold);
}

double task_accuracy(const ConceptModel& model, const ConceptDataset& ds) {
  if (ds.size() == 0) throw UndefinedError("task accuracy of an empty dataset");
  auto p = predict_dataset(model, ds);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) hits += p.predicted[i] == ds.labels[i];
  return static_cast<double>(hits) / static_cast<double>(ds.size());
}

}  // namespace scl
