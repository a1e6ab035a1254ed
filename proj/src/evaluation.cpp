#include "scl/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <thread>

#include "scl/errors.hpp"

namespace scl {

using nlohmann::json;

json InterventionCurve::to_json() const {
  return {{"accuracies", accuracies},
          {"mean_p_true", mean_p_true},
          {"n_samples", n_samples},
          {"policy", policy},
          {"source", source},
          {"auc", accuracies.size() >= 2 ? json(curve_auc(accuracies)) : json(nullptr)}};
}

InterventionCurve curve_from_traces(std::span<const InterventionTrace> traces) {
  if (traces.empty()) throw UndefinedError("intervention curve over zero samples");
  const auto steps = traces.front().steps();
  InterventionCurve c;
  c.accuracies.assign(steps, 0.0);
  c.mean_p_true.assign(steps, 0.0);
  for (const auto& t : traces) {
    if (t.steps() != steps) throw DimensionError("traces differ in length");
    for (std::size_t s = 0; s < steps; ++s) {
      c.accuracies[s] += t.correct[s] ? 1.0 : 0.0;
      c.mean_p_true[s] += t.p_true[s];
    }
  }
  const auto n = static_cast<double>(traces.size());
  for (std::size_t s = 0; s < steps; ++s) {
    c.accuracies[s] /= n;
    c.mean_p_true[s] /= n;
  }
  c.n_samples = traces.size();
  return c;
}

InterventionCurve intervention_curve(const ConceptModel& model, const ConceptDataset& ds,
                                     const InterventionSource& source, const UnitSet& units,
                                     const CurveOptions& opt,
                                     std::vector<InterventionTrace>* traces) {
  if (ds.size() == 0) throw UndefinedError("intervention curve over an empty dataset");
  if (source.size() != ds.size()) throw DimensionError("source and dataset differ in size");
  std::vector<InterventionTrace> all(ds.size());
  const std::size_t threads = std::clamp<std::size_t>(opt.threads, 1, ds.size());
  auto work = [&](std::size_t t) {
    for (std::size_t i = t; i < ds.size(); i += threads) {
      all[i] = run_policy(model, ds, i, source, units, opt.policy);
    }
  };
  if (threads == 1) {
    work(0);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(work, t);
  }
  auto curve = curve_from_traces(all);
  curve.policy = to_string(opt.policy.policy);
  curve.source = source.id;
  if (traces) *traces = std::move(all);
  return curve;
}

double curve_auc(std::span<const double> curve) {
  if (curve.size() < 2) throw ParameterError("curve_auc needs at least two points");
  double area = 0.0;
  for (std::size_t i = 1; i < curve.size(); ++i) area += 0.5 * (curve[i - 1] + curve[i]);
  return area / static_cast<double>(curve.size() - 1);
}

double curve_at_fraction(std::span<const double> curve, double f) {
  if (curve.empty()) throw ParameterError("empty curve");
  if (!(f >= 0.0 && f <= 1.0)) throw ParameterError("fraction must lie in [0, 1]");
  const double pos = f * static_cast<double>(curve.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  if (lo + 1 >= curve.size()) return curve.back();
  const double t = pos - static_cast<double>(lo);
  return (1.0 - t) * curve[lo] + t * curve[lo + 1];
}

double roc_auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw DimensionError("roc_auc: scores and labels differ in length");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Average ranks over tie blocks, then the rank-sum statistic.
  double pos_rank_sum = 0.0;
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t t = i; t < j; ++t) {
      if (labels[order[t]] != 0) {
        pos_rank_sum += rank;
        ++n_pos;
      }
    }
    i = j;
  }
  const std::size_t n_neg = scores.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) throw UndefinedError("roc_auc needs both classes");
  const double np = static_cast<double>(n_pos), nn = static_cast<double>(n_neg);
  return (pos_rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

json CalibrationReport::to_json() const {
  json b = json::array();
  for (const auto& bin : bins) {
    b.push_back({{"lower", bin.lower},
                 {"upper", bin.upper},
                 {"count", bin.count},
                 {"mean_confidence", bin.mean_confidence},
                 {"accuracy", bin.accuracy}});
  }
  return {{"bins", b}, {"ece", ece}};
}

CalibrationReport calibration_curve(std::span<const double> confidences,
                                    std::span<const int> outcomes, std::size_t n_bins) {
  if (confidences.size() != outcomes.size()) throw DimensionError("confidences and outcomes differ in length");
  if (confidences.empty()) throw UndefinedError("calibration of an empty set");
  if (n_bins == 0) throw ParameterError("n_bins must be >= 1");
  CalibrationReport r;
  r.bins.resize(n_bins);
  std::vector<double> conf_sum(n_bins, 0.0), hit_sum(n_bins, 0.0);
  const double nb = static_cast<double>(n_bins);
  for (std::size_t i = 0; i < confidences.size(); ++i) {
    const double c = confidences[i];
    if (!(c >= 0.0 && c <= 1.0)) throw ParameterError("confidence outside [0, 1]: " + std::to_string(c));
    auto b = static_cast<std::size_t>(std::max(std::ceil(c * nb) - 1.0, 0.0));
    // c·nb may round across an edge; settle against the edges b/nb themselves.
    if (b > 0 && c <= static_cast<double>(b) / nb) --b;
    if (b + 1 < n_bins && c > static_cast<double>(b + 1) / nb) ++b;
    b = std::min(b, n_bins - 1);
    conf_sum[b] += c;
    hit_sum[b] += outcomes[i] != 0 ? 1.0 : 0.0;
    ++r.bins[b].count;
  }
  const double n = static_cast<double>(confidences.size());
  for (std::size_t b = 0; b < n_bins; ++b) {
    auto& bin = r.bins[b];
    bin.lower = static_cast<double>(b) / nb;
    bin.upper = static_cast<double>(b + 1) / nb;
    if (bin.count == 0) continue;
    const double cnt = static_cast<double>(bin.count);
    bin.mean_confidence = conf_sum[b] / cnt;
    bin.accuracy = hit_sum[b] / cnt;
    r.ece += cnt / n * std::abs(bin.accuracy - bin.mean_confidence);
  }
  return r;
}

double ece(std::span<const double> confidences, std::span<const int> outcomes, std::size_t n_bins) {
  return calibration_curve(confidences, outcomes, n_bins).ece;
}

json AnnotationStats::to_json() const {
  return {{"histogram", histogram},
          {"mean_total_mass", mean_total_mass},
          {"group_totals", group_totals},
          {"discarded_mass", discarded_mass},
          {"annotations", annotations}};
}

AnnotationStats annotation_stats(std::span<const SoftGroupAnnotation> annotations,
                                 const std::optional<std::set<std::string>>& keep) {
  AnnotationStats s;
  s.histogram.assign(101, 0);
  s.annotations = annotations.size();
  std::map<std::string, std::map<std::string, std::pair<double, std::size_t>>> totals;
  std::map<std::string, std::pair<double, std::size_t>> discarded;
  for (const auto& a : annotations) {
    int total = 0;
    double dropped = 0.0;
    for (const auto& [attr, m] : a.mass) {
      if (m < 0 || m > 100) throw DataError("mass outside [0, 100] for '" + attr + "'");
      ++s.histogram[static_cast<std::size_t>(m)];
      total += m;
      if (keep && !keep->contains(a.group_id + "::" + attr)) dropped += m;
    }
    auto& t = totals[a.annotator_id][a.group_id];
    t.first += total;
    ++t.second;
    s.group_totals[a.group_id].push_back(total);
    auto& d = discarded[a.annotator_id];
    d.first += dropped;
    ++d.second;
  }
  for (const auto& [annotator, groups] : totals) {
    for (const auto& [group, sum] : groups) {
      s.mean_total_mass[annotator][group] = sum.first / static_cast<double>(sum.second);
    }
  }
  if (keep) {
    for (const auto& [annotator, sum] : discarded) {
      s.discarded_mass[annotator] = sum.first / static_cast<double>(sum.second);
    }
  }
  return s;
}

void write_curve_csv(std::ostream& out, const InterventionCurve& curve) {
  const auto old_precision = out.precision(17);
  out << "step,accuracy,mean_p_true\n";
  for (std::size_t s = 0; s < curve.accuracies.size(); ++s) {
    out << s << ',' << curve.accuracies[s] << ',' << curve.mean_p_true[s] << '\n';
  }
  out.precision(old_precision);
}

void write_calibration_csv(std::ostream& out, const CalibrationReport& report) {
  const auto old_precision = out.precision(17);
  out << "bin,lower,upper,count,mean_confidence,accuracy\n";
  for (std::size_t b = 0; b < report.bins.size(); ++b) {
    const auto& bin = report.bins[b];
    out << b << ',' << bin.lower << ',' << bin.upper << ',' << bin.count << ',' << bin.mean_confidence
        << ',' << bin.accuracy << '\n';
  }
  out.precision(old_precision);
}

}  // namespace scl
