#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "scl/dataset.hpp"
#include "scl/ops.hpp"
#include "scl/optim.hpp"
#include "scl/tensor.hpp"

namespace scl {

enum class Variant { cbm, cem };

const char* to_string(Variant v);
Variant parse_variant(std::string_view name);

struct BottleneckConfig {
  Variant variant = Variant::cbm;
  std::size_t k = 0;
  std::size_t m = 8;  // CEM embedding size
  double alpha = 1.0;
  Shape input_shape;  // {H, W, C} for a conv backbone, {d} otherwise
  std::vector<std::size_t> conv_filters{5, 10, 20, 40};
  ops::ConvOptions conv;
  std::size_t backbone_width = 20;
  std::vector<std::size_t> head_widths{20};
  int n_classes = 0;

  // Throws ConfigError on an inconsistent configuration.
  void validate() const;
  // Width of the representation the label head sees: k (CBM) or k·m (CEM).
  std::size_t bottleneck_width() const;

  nlohmann::json to_json() const;
  static BottleneckConfig from_json(const nlohmann::json& j);
};

// Per-sample intervention masks and values, both [batch×k] row-major.
// mask = 1 marks an intervened concept whose bottleneck value becomes `values`.
struct InterventionBatch {
  std::size_t batch = 0;
  std::size_t k = 0;
  std::vector<double> mask;
  std::vector<double> values;

  InterventionBatch() = default;
  InterventionBatch(std::size_t batch, std::size_t k)
      : batch(batch), k(k), mask(batch * k, 0.0), values(batch * k, 0.0) {}

  void set(std::size_t row, std::size_t concept_index, double value);
  // Throws IndexError / ParameterError on bad indices or values.
  void validate() const;
};

struct ForwardOutput {
  Tensor concept_probs;  // [batch×k]
  Tensor logits;         // [batch×n_classes]
};

// Batched inference result, flattened row-major.
struct Prediction {
  std::size_t batch = 0;
  std::vector<double> concept_probs;  // batch × k
  std::vector<double> class_probs;    // batch × n_classes
  std::vector<int> predicted;         // batch

  std::span<const double> class_probs_of(std::size_t row, std::size_t n_classes) const {
    return std::span<const double>(class_probs).subspan(row * n_classes, n_classes);
  }
};

class ConceptModel {
 public:
  ConceptModel() = default;
  ConceptModel(BottleneckConfig config, std::uint64_t seed);

  const BottleneckConfig& config() const { return config_; }
  std::size_t k() const { return config_.k; }
  int n_classes() const { return config_.n_classes; }

  // Full forward pass. In training mode batch-norm uses batch statistics and
  // updates its running estimates. `interventions` may be null.
  ForwardOutput forward(Tape* tape, const Tensor& x, bool training,
                        const InterventionBatch* interventions = nullptr);

  // Inference with running statistics; never mutates the model, so it is
  // safe to call concurrently.
  Prediction predict(const Tensor& x, const InterventionBatch* interventions = nullptr) const;
  // Single sample with a concept → value map.
  Prediction predict_one(std::span<const double> input,
                         const std::map<std::size_t, double>& interventions = {}) const;

  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;
  // Throws NotFoundError for unknown names.
  Parameter& param(const std::string& name);
  const Parameter& param(const std::string& name) const;
  const std::vector<ops::BatchNormStats>& norms() const { return norms_; }

  // Deep copy of every trainable value and batch-norm statistic.
  struct Snapshot {
    std::vector<std::vector<double>> values;
    std::vector<ops::BatchNormStats> norms;
  };
  Snapshot snapshot() const;
  void restore(const Snapshot& s);

  nlohmann::json provenance = nlohmann::json::object();
  nlohmann::json history = nlohmann::json::array();

  // Writes `path` (tensor checkpoint) and `path` + ".json" (config sidecar).
  void save(const std::filesystem::path& path) const;
  static ConceptModel load(const std::filesystem::path& path);

 private:
  ForwardOutput run(Tape* tape, const Tensor& x, bool training,
                    const InterventionBatch* interventions,
                    std::vector<ops::BatchNormStats>& norms) const;
  void build(std::uint64_t seed);

  BottleneckConfig config_;
  std::vector<Parameter> params_;
  std::vector<ops::BatchNormStats> norms_;
};

// w_y = N / (n_classes · count(y)). When a class is absent every count is
// smoothed by one and a warning is appended to `warnings`.
std::vector<double> class_weights(std::span<const int> labels, int n_classes,
                                  std::vector<std::string>* warnings = nullptr);

struct JointLoss {
  Tensor total;
  Tensor task;
  Tensor concept_term;  // α · masked BCE
  bool empty_mask = false;
};

// Weighted task cross-entropy plus α times the masked soft-target BCE on
// rows `rows` of `ds`.
JointLoss joint_loss(Tape* tape, ConceptModel& model, const ConceptDataset& ds,
                     std::span<const std::size_t> rows,
                     std::span<const double> weights, bool training);

struct TrainOptions {
  AdamOptions adam;
  std::size_t batch_size = 256;
  std::size_t max_epochs = 50;
  std::size_t patience = 15;
  double val_fraction = 0.2;
  std::uint64_t seed = 0;
  std::function<void(const nlohmann::json&)> on_epoch;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
};

struct TrainResult {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  bool early_stopped = false;
  std::vector<std::string> warnings;

  nlohmann::json to_json() const;
};

// Joint training with Adam and early stopping on validation loss. The
// parameters of the best validation epoch are restored at the end. The
// validation rows are the head of a seeded shuffle.
TrainResult train(ConceptModel& model, const ConceptDataset& ds, const TrainOptions& opt);

// Concept accuracy at a 0.5-style threshold over unmasked entries. Throws
// UndefinedError when no entry is unmasked.
double concept_accuracy(std::span<const double> predicted, std::span<const double> targets,
                        std::span<const double> mask, double threshold = 0.5);
double concept_accuracy(const ConceptModel& model, const ConceptDataset& ds,
                        double threshold = 0.5);

// Inference over a whole dataset in batches.
Prediction predict_dataset(const ConceptModel& model, const ConceptDataset& ds,
                           std::size_t batch_size = 512);
double task_accuracy(const ConceptModel& model, const ConceptDataset& ds);

}  // namespace scl
