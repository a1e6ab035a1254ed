#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "scl/interventions.hpp"
#include "scl/soft_labels.hpp"

namespace scl {

struct InterventionCurve {
  std::vector<double> accuracies;  // one per step, step 0 first
  std::vector<double> mean_p_true;
  std::size_t n_samples = 0;
  std::string policy;
  std::string source;

  nlohmann::json to_json() const;
};

struct CurveOptions {
  PolicyOptions policy;
  std::size_t threads = 1;
};

// Runs the policy for every sample of `ds` and averages correctness per step.
// Also returns the individual traces when `traces` is non-null.
InterventionCurve intervention_curve(const ConceptModel& model, const ConceptDataset& ds,
                                     const InterventionSource& source, const UnitSet& units,
                                     const CurveOptions& opt,
                                     std::vector<InterventionTrace>* traces = nullptr);

// Averages per-step correctness of equally long traces.
InterventionCurve curve_from_traces(std::span<const InterventionTrace> traces);

// Trapezoidal area over a unit-width step axis: the mean of adjacent pairs.
// Throws ParameterError for fewer than two points.
double curve_auc(std::span<const double> curve);

// Linear interpolation at fraction f ∈ [0, 1] of the step axis.
double curve_at_fraction(std::span<const double> curve, double f);

// Mann–Whitney AUC with ties counted as one half. Throws UndefinedError when
// only one class is present.
double roc_auc(std::span<const double> scores, std::span<const int> labels);

struct CalibrationBin {
  double lower = 0.0;
  double upper = 0.0;
  std::size_t count = 0;
  double mean_confidence = 0.0;
  double accuracy = 0.0;
};

struct CalibrationReport {
  std::vector<CalibrationBin> bins;
  double ece = 0.0;

  nlohmann::json to_json() const;
};

// Equal-width right-closed bins (lower, upper]; confidence 0 joins the first
// bin. Throws UndefinedError on empty input, ParameterError on confidences
// outside [0, 1].
CalibrationReport calibration_curve(std::span<const double> confidences,
                                    std::span<const int> outcomes, std::size_t n_bins = 10);
double ece(std::span<const double> confidences, std::span<const int> outcomes,
           std::size_t n_bins = 10);

struct AnnotationStats {
  std::vector<std::size_t> histogram;  // 101 bins, mass value 0..100
  // annotator → group → mean total mass
  std::map<std::string, std::map<std::string, double>> mean_total_mass;
  // group → list of total masses, one per annotation
  std::map<std::string, std::vector<int>> group_totals;
  // annotator → mean mass on attributes outside the keep-set
  std::map<std::string, double> discarded_mass;
  std::size_t annotations = 0;

  nlohmann::json to_json() const;
};

// `keep` holds "group::attribute" names; when absent no discarded mass is
// computed.
AnnotationStats annotation_stats(std::span<const SoftGroupAnnotation> annotations,
                                 const std::optional<std::set<std::string>>& keep = std::nullopt);

void write_curve_csv(std::ostream& out, const InterventionCurve& curve);
void write_calibration_csv(std::ostream& out, const CalibrationReport& report);

}  // namespace scl
