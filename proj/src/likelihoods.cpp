#include "biascorr/likelihoods.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "biascorr/error.hpp"

namespace biascorr {

std::size_t LikelihoodModel::logit_count() const {
  switch (kind) {
    case LikelihoodKind::softmax:
      return num_classes;
    case LikelihoodKind::bernoulli:
      return 1;
    case LikelihoodKind::onion_peeling:
      return 4;
  }
  return 0;
}

void LikelihoodModel::validate() const {
  switch (kind) {
    case LikelihoodKind::softmax:
      if (num_classes < 2) throw ConfigError("softmax likelihood needs at least 2 classes");
      break;
    case LikelihoodKind::bernoulli:
      if (num_classes != 2) throw ConfigError("bernoulli likelihood is binary (K = 2)");
      break;
    case LikelihoodKind::onion_peeling:
      if (num_classes != 5) throw ConfigError("onion-peeling likelihood is defined for 5 ratings");
      break;
  }
}

std::vector<double> ClassLogProbs::probs() const {
  std::vector<double> p(logp.size());
  std::transform(logp.begin(), logp.end(), p.begin(), [](double v) { return std::exp(v); });
  return p;
}

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double log_sigmoid(double z) {
  // log sigmoid(z) = -softplus(-z)
  if (z >= 0.0) return -std::log1p(std::exp(-z));
  return z - std::log1p(std::exp(z));
}

double log_sum_exp(std::span<const double> v) {
  const double m = *std::max_element(v.begin(), v.end());
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

namespace {

void check_logits(const LikelihoodModel& model, std::span<const double> logits) {
  model.validate();
  if (logits.size() != model.logit_count()) {
    throw ShapeError(std::string(to_string(model.kind)) + " likelihood expects " +
                     std::to_string(model.logit_count()) + " logits, got " + std::to_string(logits.size()));
  }
  for (double z : logits) {
    if (!std::isfinite(z)) throw NumericError("non-finite logit");
  }
}

// For the ordinal model log(1 - sigmoid(z)) = log_sigmoid(-z).
void onion_log_prob(std::span<const double> gates, std::span<double> out) {
  double log_remaining = 0.0;
  for (std::size_t i = 0; i < kOnionPeelOrder.size(); ++i) {
    out[kOnionPeelOrder[i]] = log_remaining + log_sigmoid(gates[i]);
    log_remaining += log_sigmoid(-gates[i]);
  }
  out[kOnionResidualClass] = log_remaining;
}

}  // namespace

ClassLogProbs log_prob(const LikelihoodModel& model, std::span<const double> logits) {
  check_logits(model, logits);
  ClassLogProbs r;
  r.logp.assign(model.num_classes, 0.0);
  switch (model.kind) {
    case LikelihoodKind::softmax: {
      const double lse = log_sum_exp(logits);
      for (std::size_t k = 0; k < logits.size(); ++k) r.logp[k] = logits[k] - lse;
      break;
    }
    case LikelihoodKind::bernoulli:
      r.logp[0] = log_sigmoid(-logits[0]);
      r.logp[1] = log_sigmoid(logits[0]);
      break;
    case LikelihoodKind::onion_peeling:
      onion_log_prob(logits, r.logp);
      break;
  }
  return r;
}

std::vector<double> log_prob_grad(const LikelihoodModel& model, std::span<const double> logits, Label y) {
  check_logits(model, logits);
  if (y >= model.num_classes) {
    throw DomainError("class " + std::to_string(y) + " out of range for " +
                      std::to_string(model.num_classes) + " classes");
  }
  std::vector<double> g(logits.size(), 0.0);
  switch (model.kind) {
    case LikelihoodKind::softmax: {
      const double lse = log_sum_exp(logits);
      for (std::size_t k = 0; k < logits.size(); ++k) g[k] = -std::exp(logits[k] - lse);
      g[y] += 1.0;
      break;
    }
    case LikelihoodKind::bernoulli: {
      const double s = sigmoid(logits[0]);
      g[0] = y == 1 ? 1.0 - s : -s;
      break;
    }
    case LikelihoodKind::onion_peeling: {
      // Gates before the one that accepts y contribute log(1 - s_i), whose
      // derivative is -s_i; the accepting gate contributes log s_i -> 1 - s_i.
      for (std::size_t i = 0; i < kOnionPeelOrder.size(); ++i) {
        const double s = sigmoid(logits[i]);
        if (kOnionPeelOrder[i] == y) {
          g[i] = 1.0 - s;
          break;
        }
        g[i] = -s;
      }
      break;
    }
  }
  return g;
}

const char* to_string(LikelihoodKind kind) {
  switch (kind) {
    case LikelihoodKind::softmax:
      return "softmax";
    case LikelihoodKind::bernoulli:
      return "bernoulli";
    case LikelihoodKind::onion_peeling:
      return "onion_peeling";
  }
  return "?";
}

LikelihoodKind likelihood_kind_from_string(const std::string& s) {
  if (s == "softmax") return LikelihoodKind::softmax;
  if (s == "bernoulli") return LikelihoodKind::bernoulli;
  if (s == "onion_peeling") return LikelihoodKind::onion_peeling;
  throw ConfigError("unknown likelihood '" + s + "'");
}

}  // namespace biascorr
