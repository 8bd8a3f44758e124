#pragma once

// Training objectives over a minibatch. Every loss is the negative of a
// batch-averaged objective, with the gradient taken w.r.t. the scorer
// parameters.
//
//   nll       -mean_n log p(y_n | x_n, w)
//   weighted  -sum_n beta_n log p(y_n | x_n, w) / sum_n beta_n
//   bayes_ig  -mean_n [log p(y_n | x_n, w) - log p^(y_n | w)]
//
// For bayes_ig the marginal p^ is a fixed snapshot (no gradient flows into
// its parameters). Its log-gradient is the minibatch estimate
//   grad log p(y|w) ~ (1/N) sum_m beta_m p(y|x_m,w) / p^(y) grad log p(y|x_m,w)
// which is exact for the sample-weighted estimator when p^ equals it.

#include <span>
#include <string>
#include <vector>

#include "biascorr/data.hpp"
#include "biascorr/diffcore.hpp"
#include "biascorr/likelihoods.hpp"
#include "biascorr/marginal.hpp"

namespace biascorr {

enum class LossKind { nll, weighted, bayes_ig };

struct Scorer {
  ScorerSpec spec;
  ParamVector params;
};

struct LossDiagnostics {
  double mean_log_lik = 0.0;
  double mean_log_marginal = 0.0;
  double mean_beta = 1.0;
  bool marginal_clamped = false;
};

struct LossOutput {
  double loss_value = 0.0;
  ParamVector param_grad;
  LossDiagnostics diagnostics;
};

LossOutput nll_loss(const Batch& batch, const Scorer& scorer, const LikelihoodModel& likelihood);

LossOutput weighted_loss(const Batch& batch, const Scorer& scorer, const LikelihoodModel& likelihood,
                         const PrevalenceSpec& spec);

// Uses the tracker's floored estimate as p^.
LossOutput bayes_ig_loss(const Batch& batch, const Scorer& scorer, const LikelihoodModel& likelihood,
                         const PrevalenceSpec& spec, const MarginalTracker& tracker);

// Same objective with an explicit marginal vector p^ (length K). Entries
// below kMarginalFloor are clamped and flagged.
LossOutput bayes_ig_loss(const Batch& batch, const Scorer& scorer, const LikelihoodModel& likelihood,
                         const PrevalenceSpec& spec, std::span<const double> marginal);

const char* to_string(LossKind kind);
LossKind loss_kind_from_string(const std::string& s);

}  // namespace biascorr
