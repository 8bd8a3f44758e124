#include "biascorr/marginal.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "biascorr/error.hpp"

namespace biascorr {

void validate_distribution(std::span<const double> p, const char* what) {
  if (p.empty()) throw ConfigError(std::string(what) + ": empty distribution");
  double s = 0.0;
  for (double v : p) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError(std::string(what) + ": entries must be finite and >= 0");
    s += v;
  }
  if (std::abs(s - 1.0) > 1e-12) {
    throw ConfigError(std::string(what) + ": entries sum to " + std::to_string(s) + ", expected 1");
  }
}

void PrevalenceSpec::validate() const {
  validate_distribution(true_marginal, "true marginal");
  validate_distribution(train_marginal, "train marginal");
  if (true_marginal.size() != train_marginal.size()) {
    throw ConfigError("true and train marginals have different class counts");
  }
}

PrevalenceSpec PrevalenceSpec::binary(double prevalence, std::vector<double> train_marginal) {
  if (!(prevalence > 0.0 && prevalence < 1.0)) throw DomainError("prevalence must lie in (0, 1)");
  return PrevalenceSpec{{1.0 - prevalence, prevalence}, std::move(train_marginal)};
}

double beta_for(const PrevalenceSpec& spec, Label y) {
  if (y >= spec.num_classes()) throw DomainError("class " + std::to_string(y) + " out of range");
  if (spec.train_marginal[y] == 0.0) {
    throw DomainError("train marginal of class " + std::to_string(y) + " is zero; beta undefined");
  }
  return spec.true_marginal[y] / spec.train_marginal[y];
}

std::vector<double> beta_weights(const PrevalenceSpec& spec) {
  std::vector<double> b(spec.num_classes());
  for (Label y = 0; y < b.size(); ++y) b[y] = beta_for(spec, y);
  return b;
}

namespace {

void check_batch(std::span<const ClassLogProbs> probs, std::span<const Label> labels, std::size_t k) {
  if (probs.empty()) throw UsageError("marginal estimate needs a nonempty batch");
  if (probs.size() != labels.size()) throw ShapeError("batch probabilities and labels differ in length");
  for (std::size_t n = 0; n < probs.size(); ++n) {
    if (probs[n].logp.size() != k) throw ShapeError("class count mismatch in batch probabilities");
    if (labels[n] >= k) throw DomainError("batch label out of range");
  }
}

}  // namespace

MarginalEstimate estimate_marginal_sample_weighted(std::span<const ClassLogProbs> batch_probs,
                                                   std::span<const Label> batch_labels,
                                                   const PrevalenceSpec& spec) {
  const std::size_t k = spec.num_classes();
  check_batch(batch_probs, batch_labels, k);
  MarginalEstimate e{std::vector<double>(k, 0.0), MarginalMethod::eq3_sample_weighted};
  for (std::size_t n = 0; n < batch_probs.size(); ++n) {
    const double beta = beta_for(spec, batch_labels[n]);
    for (std::size_t y = 0; y < k; ++y) e.probs[y] += beta * std::exp(batch_probs[n].logp[y]);
  }
  const double inv_n = 1.0 / static_cast<double>(batch_probs.size());
  for (double& p : e.probs) p *= inv_n;
  return e;
}

MarginalEstimate estimate_marginal_per_class(std::span<const ClassLogProbs> batch_probs,
                                             std::span<const Label> batch_labels,
                                             const PrevalenceSpec& spec) {
  const std::size_t k = spec.num_classes();
  check_batch(batch_probs, batch_labels, k);
  std::vector<std::vector<double>> sums(k, std::vector<double>(k, 0.0));
  std::vector<std::size_t> counts(k, 0);
  for (std::size_t n = 0; n < batch_probs.size(); ++n) {
    const Label y = batch_labels[n];
    ++counts[y];
    for (std::size_t c = 0; c < k; ++c) sums[y][c] += std::exp(batch_probs[n].logp[c]);
  }
  MarginalEstimate e{std::vector<double>(k, 0.0), MarginalMethod::eq12_per_class};
  for (Label y = 0; y < k; ++y) {
    if (spec.true_marginal[y] == 0.0) continue;
    if (counts[y] == 0) {
      throw PreconditionError("per-class marginal estimate: class " + std::to_string(y) +
                              " has positive prevalence but no sample in the batch");
    }
    const double w = spec.true_marginal[y] / static_cast<double>(counts[y]);
    for (std::size_t c = 0; c < k; ++c) e.probs[c] += w * sums[y][c];
  }
  return e;
}

MarginalEstimate renormalized(MarginalEstimate e) {
  const double s = std::accumulate(e.probs.begin(), e.probs.end(), 0.0);
  if (!(s > 0.0) || !std::isfinite(s)) throw NumericError("cannot renormalize a marginal with zero mass");
  for (double& p : e.probs) p /= s;
  return e;
}

MarginalTracker::MarginalTracker(std::vector<double> initial, double learning_rate)
    : psi_(std::move(initial)), lr_(learning_rate) {
  if (psi_.empty()) throw ConfigError("marginal tracker needs at least one class");
  if (!(lr_ >= 0.0) || !std::isfinite(lr_)) throw ConfigError("tracker learning rate must be >= 0");
}

MarginalTracker MarginalTracker::from_prior(std::span<const double> true_marginal, double learning_rate) {
  std::vector<double> psi(true_marginal.size());
  for (std::size_t y = 0; y < psi.size(); ++y) {
    psi[y] = std::log(std::max(true_marginal[y], kMarginalFloor));
  }
  return MarginalTracker(std::move(psi), learning_rate);
}

std::vector<double> MarginalTracker::estimate() const {
  const double lse = log_sum_exp(psi_);
  std::vector<double> q(psi_.size());
  for (std::size_t y = 0; y < q.size(); ++y) q[y] = std::exp(psi_[y] - lse);
  return q;
}

void MarginalTracker::update(const MarginalEstimate& target) {
  if (target.probs.size() != psi_.size()) throw ShapeError("tracker target has the wrong class count");
  const std::vector<double> q = estimate();
  for (std::size_t y = 0; y < psi_.size(); ++y) psi_[y] -= lr_ * (q[y] - target.probs[y]);
}

std::vector<double> MarginalTracker::floored_estimate(bool* clamped) const {
  std::vector<double> q = estimate();
  bool any = false;
  for (double& v : q) {
    if (v < kMarginalFloor) {
      v = kMarginalFloor;
      any = true;
    }
  }
  if (clamped != nullptr) *clamped = any;
  return q;
}

const char* to_string(MarginalMethod m) {
  switch (m) {
    case MarginalMethod::eq3_sample_weighted:
      return "sample_weighted";
    case MarginalMethod::eq12_per_class:
      return "per_class";
    case MarginalMethod::tracked:
      return "tracked";
  }
  return "?";
}

}  // namespace biascorr
