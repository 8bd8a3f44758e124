#pragma once

// Evaluation quantities for binary and ordinal classifiers. Class 1 is the
// positive class in all binary rates.

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "biascorr/data.hpp"

namespace biascorr {

// K x K counts, rows indexed by truth and columns by prediction.
struct ConfusionCounts {
  std::size_t num_classes = 2;
  std::vector<std::uint64_t> matrix;

  std::uint64_t at(Label truth, Label pred) const { return matrix[truth * num_classes + pred]; }
  std::uint64_t total() const;

  std::uint64_t tp() const { return at(1, 1); }
  std::uint64_t fp() const { return at(0, 1); }
  std::uint64_t tn() const { return at(0, 0); }
  std::uint64_t fn() const { return at(1, 0); }

  static ConfusionCounts binary(std::uint64_t tp, std::uint64_t fp, std::uint64_t tn, std::uint64_t fn);
};

ConfusionCounts confusion(std::span<const Label> pred_labels, std::span<const Label> true_labels,
                          std::size_t num_classes = 2);

// Rates that have no meaning for the evaluated problem are NaN and
// serialize as null.
struct MetricsReport {
  double exp_log_lik = 0.0;
  double acc = 0.0;
  double w_acc = 0.0;
  double ba = 0.0;
  double ppv = 0.0;
  double npv = 0.0;
  double tpr = 0.0;
  double tnr = 0.0;
  double auc = 0.0;
  bool ppv_undefined = false;
  bool npv_undefined = false;
  std::optional<double> off_by_one_acc;
  std::vector<double> per_class_true_rates;
};

// Binary report at prevalence pi. class_probs rows hold p(y | x) per sample
// (empty when only counts are available, in which case exp_log_lik and auc
// are NaN).
MetricsReport report(const ConfusionCounts& counts, std::span<const std::vector<double>> class_probs,
                     std::span<const Label> truths, double prevalence);

// Multiclass report. w_acc weights per-class recall by the true marginal, ba
// is their plain mean. For 5 ordinal classes the off-by-one accuracy and the
// off-by-one per-class rates are filled in.
MetricsReport report_multiclass(const ConfusionCounts& counts, std::span<const std::vector<double>> class_probs,
                                std::span<const Label> truths, std::span<const double> true_marginal);

struct RocPoint {
  double threshold;
  double tpr;
  double fpr;
};

struct RocResult {
  std::vector<RocPoint> curve;
  double auc = 0.0;
};

// One point per distinct score (predict positive when score >= threshold),
// plus the (0,0) start at threshold +inf. Trapezoidal AUC.
RocResult roc_auc(std::span<const double> scores, std::span<const Label> truths);

struct Histogram {
  std::vector<double> edges;                        // bins + 1 entries over [0, 1]
  std::vector<std::vector<std::uint64_t>> counts;   // [bin][class]
};

Histogram probability_histogram(std::span<const double> scores, std::span<const Label> truths, std::size_t bins,
                                std::size_t num_classes = 2);

// Ratings are 1-based (1..5).
double off_by_one_accuracy(std::span<const int> pred_ratings, std::span<const int> true_ratings);

double calibration_error(std::span<const double> pred_probs, std::span<const double> analytic_probs);

nlohmann::json to_json(const MetricsReport& r);
MetricsReport report_from_json(const nlohmann::json& j);

}  // namespace biascorr
