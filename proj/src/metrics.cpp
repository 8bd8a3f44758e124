#include "biascorr/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "biascorr/error.hpp"

namespace biascorr {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double ratio_or_zero(double num, double den, bool* undefined) {
  if (den == 0.0) {
    if (undefined != nullptr) *undefined = true;
    return 0.0;
  }
  return num / den;
}

double mean_true_log_prob(std::span<const std::vector<double>> probs, std::span<const Label> truths) {
  if (probs.empty()) return kNaN;
  if (probs.size() != truths.size()) throw ShapeError("probabilities and truths differ in length");
  double s = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) s += std::log(probs[i].at(truths[i]));
  return s / static_cast<double>(probs.size());
}

nlohmann::json number_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(); }

double number_from(const nlohmann::json& j, const char* key) {
  const auto& v = j.at(key);
  return v.is_null() ? kNaN : v.get<double>();
}

}  // namespace

std::uint64_t ConfusionCounts::total() const { return std::accumulate(matrix.begin(), matrix.end(), std::uint64_t{0}); }

ConfusionCounts ConfusionCounts::binary(std::uint64_t tp, std::uint64_t fp, std::uint64_t tn, std::uint64_t fn) {
  return {2, {tn, fp, fn, tp}};
}

ConfusionCounts confusion(std::span<const Label> pred_labels, std::span<const Label> true_labels,
                          std::size_t num_classes) {
  if (pred_labels.size() != true_labels.size()) throw UsageError("confusion: prediction/truth length mismatch");
  if (pred_labels.empty()) throw UsageError("confusion: no samples");
  ConfusionCounts c{num_classes, std::vector<std::uint64_t>(num_classes * num_classes, 0)};
  for (std::size_t i = 0; i < pred_labels.size(); ++i) {
    if (pred_labels[i] >= num_classes || true_labels[i] >= num_classes) {
      throw DomainError("confusion: label out of range");
    }
    ++c.matrix[true_labels[i] * num_classes + pred_labels[i]];
  }
  return c;
}

MetricsReport report(const ConfusionCounts& counts, std::span<const std::vector<double>> class_probs,
                     std::span<const Label> truths, double prevalence) {
  if (counts.num_classes != 2) throw UsageError("report: binary counts required; use report_multiclass");
  if (!(prevalence > 0.0 && prevalence < 1.0)) throw DomainError("report: prevalence must lie in (0, 1)");
  const double tp = static_cast<double>(counts.tp());
  const double fp = static_cast<double>(counts.fp());
  const double tn = static_cast<double>(counts.tn());
  const double fn = static_cast<double>(counts.fn());
  MetricsReport r;
  r.tpr = ratio_or_zero(tp, tp + fn, nullptr);
  r.tnr = ratio_or_zero(tn, tn + fp, nullptr);
  r.ppv = ratio_or_zero(tp, tp + fp, &r.ppv_undefined);
  r.npv = ratio_or_zero(tn, tn + fn, &r.npv_undefined);
  r.acc = ratio_or_zero(tp + tn, tp + tn + fp + fn, nullptr);
  r.w_acc = prevalence * r.tpr + (1.0 - prevalence) * r.tnr;
  r.ba = (r.tpr + r.tnr) / 2.0;
  r.exp_log_lik = mean_true_log_prob(class_probs, truths);
  r.auc = kNaN;
  if (!class_probs.empty()) {
    const bool both = std::find(truths.begin(), truths.end(), Label{0}) != truths.end() &&
                      std::find(truths.begin(), truths.end(), Label{1}) != truths.end();
    if (both) {
      std::vector<double> scores(class_probs.size());
      for (std::size_t i = 0; i < scores.size(); ++i) scores[i] = class_probs[i].at(1);
      r.auc = roc_auc(scores, truths).auc;
    }
  }
  return r;
}

MetricsReport report_multiclass(const ConfusionCounts& counts, std::span<const std::vector<double>> class_probs,
                                std::span<const Label> truths, std::span<const double> true_marginal) {
  const std::size_t k = counts.num_classes;
  if (true_marginal.size() != k) throw ShapeError("report_multiclass: marginal has the wrong class count");
  MetricsReport r;
  double diag = 0.0;
  std::vector<double> recall(k, 0.0);
  for (Label y = 0; y < k; ++y) {
    double row = 0.0;
    for (Label p = 0; p < k; ++p) row += static_cast<double>(counts.at(y, p));
    diag += static_cast<double>(counts.at(y, y));
    recall[y] = ratio_or_zero(static_cast<double>(counts.at(y, y)), row, nullptr);
  }
  r.acc = diag / static_cast<double>(counts.total());
  r.ba = std::accumulate(recall.begin(), recall.end(), 0.0) / static_cast<double>(k);
  r.w_acc = 0.0;
  for (Label y = 0; y < k; ++y) r.w_acc += true_marginal[y] * recall[y];
  r.exp_log_lik = mean_true_log_prob(class_probs, truths);
  r.ppv = r.npv = r.tpr = r.tnr = r.auc = kNaN;
  if (k == 5) {
    double within = 0.0;
    r.per_class_true_rates.assign(k, 0.0);
    for (Label y = 0; y < k; ++y) {
      double row = 0.0;
      double ok = 0.0;
      for (Label p = 0; p < k; ++p) {
        const auto c = static_cast<double>(counts.at(y, p));
        row += c;
        if (std::max(y, p) - std::min(y, p) <= 1) ok += c;
      }
      within += ok;
      r.per_class_true_rates[y] = ratio_or_zero(ok, row, nullptr);
    }
    r.off_by_one_acc = within / static_cast<double>(counts.total());
  }
  return r;
}

RocResult roc_auc(std::span<const double> scores, std::span<const Label> truths) {
  if (scores.size() != truths.size()) throw UsageError("roc_auc: score/truth length mismatch");
  double pos = 0.0;
  double neg = 0.0;
  for (Label y : truths) {
    if (y > 1) throw DomainError("roc_auc: binary labels required");
    (y == 1 ? pos : neg) += 1.0;
  }
  if (pos == 0.0 || neg == 0.0) throw DomainError("roc_auc: AUC undefined when only one class is present");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  RocResult r;
  r.curve.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
  double tp = 0.0;
  double fp = 0.0;
  double area = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    const double s = scores[order[i]];
    double dtp = 0.0;
    double dfp = 0.0;
    for (; i < order.size() && scores[order[i]] == s; ++i) (truths[order[i]] == 1 ? dtp : dfp) += 1.0;
    // Tied scores move diagonally, which counts each tied pair as 1/2.
    area += dfp * (tp + dtp / 2.0);
    tp += dtp;
    fp += dfp;
    r.curve.push_back({s, tp / pos, fp / neg});
  }
  r.auc = area / (pos * neg);
  return r;
}

Histogram probability_histogram(std::span<const double> scores, std::span<const Label> truths, std::size_t bins,
                                std::size_t num_classes) {
  if (bins == 0) throw UsageError("histogram: bins must be positive");
  if (scores.size() != truths.size()) throw UsageError("histogram: score/truth length mismatch");
  Histogram h;
  h.edges.resize(bins + 1);
  for (std::size_t b = 0; b <= bins; ++b) h.edges[b] = static_cast<double>(b) / static_cast<double>(bins);
  h.counts.assign(bins, std::vector<std::uint64_t>(num_classes, 0));
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const double s = scores[i];
    if (!(s >= 0.0 && s <= 1.0)) throw DomainError("histogram: scores must lie in [0, 1]");
    if (truths[i] >= num_classes) throw DomainError("histogram: label out of range");
    auto b = static_cast<std::size_t>(s * static_cast<double>(bins));
    b = std::min(b, bins - 1);
    ++h.counts[b][truths[i]];
  }
  return h;
}

double off_by_one_accuracy(std::span<const int> pred_ratings, std::span<const int> true_ratings) {
  if (pred_ratings.size() != true_ratings.size()) throw UsageError("off_by_one: length mismatch");
  if (pred_ratings.empty()) throw UsageError("off_by_one: no samples");
  std::size_t ok = 0;
  for (std::size_t i = 0; i < pred_ratings.size(); ++i) {
    const int p = pred_ratings[i];
    const int t = true_ratings[i];
    if (p < 1 || p > 5 || t < 1 || t > 5) throw DomainError("off_by_one: ratings must lie in 1..5");
    if (std::abs(p - t) <= 1) ++ok;
  }
  return static_cast<double>(ok) / static_cast<double>(pred_ratings.size());
}

double calibration_error(std::span<const double> pred_probs, std::span<const double> analytic_probs) {
  if (pred_probs.size() != analytic_probs.size()) throw UsageError("calibration_error: length mismatch");
  if (pred_probs.empty()) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < pred_probs.size(); ++i) s += std::abs(pred_probs[i] - analytic_probs[i]);
  return s / static_cast<double>(pred_probs.size());
}

nlohmann::json to_json(const MetricsReport& r) {
  nlohmann::json j = {
      {"exp_log_lik", number_or_null(r.exp_log_lik)},
      {"acc", number_or_null(r.acc)},
      {"w_acc", number_or_null(r.w_acc)},
      {"ba", number_or_null(r.ba)},
      {"ppv", number_or_null(r.ppv)},
      {"npv", number_or_null(r.npv)},
      {"tpr", number_or_null(r.tpr)},
      {"tnr", number_or_null(r.tnr)},
      {"auc", number_or_null(r.auc)},
      {"ppv_undefined", r.ppv_undefined},
      {"npv_undefined", r.npv_undefined},
  };
  j["off_by_one_acc"] = r.off_by_one_acc ? nlohmann::json(*r.off_by_one_acc) : nlohmann::json();
  j["per_class_true_rates"] = r.per_class_true_rates;
  return j;
}

MetricsReport report_from_json(const nlohmann::json& j) {
  MetricsReport r;
  r.exp_log_lik = number_from(j, "exp_log_lik");
  r.acc = number_from(j, "acc");
  r.w_acc = number_from(j, "w_acc");
  r.ba = number_from(j, "ba");
  r.ppv = number_from(j, "ppv");
  r.npv = number_from(j, "npv");
  r.tpr = number_from(j, "tpr");
  r.tnr = number_from(j, "tnr");
  r.auc = number_from(j, "auc");
  r.ppv_undefined = j.value("ppv_undefined", false);
  r.npv_undefined = j.value("npv_undefined", false);
  if (j.contains("off_by_one_acc") && !j["off_by_one_acc"].is_null()) r.off_by_one_acc = j["off_by_one_acc"].get<double>();
  if (j.contains("per_class_true_rates")) r.per_class_true_rates = j["per_class_true_rates"].get<std::vector<double>>();
  return r;
}

}  // namespace biascorr
