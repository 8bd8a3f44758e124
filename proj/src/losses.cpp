#include "biascorr/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "biascorr/error.hpp"

namespace biascorr {

namespace {

void check_batch(const Batch& batch, const Scorer& scorer, const LikelihoodModel& likelihood) {
  if (batch.size() == 0) throw UsageError("loss: empty batch");
  if (batch.features.rows != batch.size()) throw ShapeError("loss: feature rows and labels differ");
  if (scorer.spec.output_dim != likelihood.logit_count()) {
    throw ShapeError("loss: scorer emits " + std::to_string(scorer.spec.output_dim) + " logits, likelihood expects " +
                     std::to_string(likelihood.logit_count()));
  }
}

// Samples are visited sorted by (label, features) so that every sum is
// formed in the same order whatever the batch order; the losses are then
// bitwise permutation-invariant.
std::vector<std::size_t> canonical_order(const Batch& batch) {
  std::vector<std::size_t> idx(batch.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    if (batch.labels[a] != batch.labels[b]) return batch.labels[a] < batch.labels[b];
    const auto ra = batch.features.row(a);
    const auto rb = batch.features.row(b);
    return std::lexicographical_compare(ra.begin(), ra.end(), rb.begin(), rb.end());
  });
  return idx;
}

// -sum_n weight_n log p(y_n|x_n) / sum_n weight_n. nll is the unit-weight
// case, which keeps nll and weighted bit-identical when all betas are 1.
LossOutput weighted_nll(const Batch& batch, const Scorer& scorer, const LikelihoodModel& likelihood,
                        std::span<const double> weights) {
  const std::vector<std::size_t> order = canonical_order(batch);
  double total = 0.0;
  for (std::size_t n : order) total += weights[n];
  LossOutput out;
  out.param_grad = scorer.params.zeros_like();
  double weighted_sum = 0.0;
  double log_lik_sum = 0.0;
  for (std::size_t n : order) {
    auto fwd = forward(scorer.params, scorer.spec, batch.features.row(n));
    const Label y = batch.labels[n];
    const double lp = log_prob(likelihood, fwd.logits).logp.at(y);
    weighted_sum += weights[n] * lp;
    log_lik_sum += lp;
    std::vector<double> d = log_prob_grad(likelihood, fwd.logits, y);
    const double scale = -weights[n] / total;
    for (double& v : d) v *= scale;
    backward_accumulate(fwd.tape, d, out.param_grad);
  }
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  out.loss_value = -weighted_sum / total;
  out.diagnostics.mean_log_lik = log_lik_sum * inv_n;
  out.diagnostics.mean_beta = total * inv_n;
  return out;
}

}  // namespace

LossOutput nll_loss(const Batch& batch, const Scorer& scorer, const LikelihoodModel& likelihood) {
  check_batch(batch, scorer, likelihood);
  const std::vector<double> ones(batch.size(), 1.0);
  return weighted_nll(batch, scorer, likelihood, ones);
}

LossOutput weighted_loss(const Batch& batch, const Scorer& scorer, const LikelihoodModel& likelihood,
                         const PrevalenceSpec& spec) {
  check_batch(batch, scorer, likelihood);
  std::vector<double> w(batch.size());
  for (std::size_t n = 0; n < batch.size(); ++n) w[n] = beta_for(spec, batch.labels[n]);
  return weighted_nll(batch, scorer, likelihood, w);
}

LossOutput bayes_ig_loss(const Batch& batch, const Scorer& scorer, const LikelihoodModel& likelihood,
                         const PrevalenceSpec& spec, const MarginalTracker& tracker) {
  const std::vector<double> q = tracker.estimate();
  return bayes_ig_loss(batch, scorer, likelihood, spec, q);
}

LossOutput bayes_ig_loss(const Batch& batch, const Scorer& scorer, const LikelihoodModel& likelihood,
                         const PrevalenceSpec& spec, std::span<const double> marginal) {
  check_batch(batch, scorer, likelihood);
  const std::size_t k = likelihood.num_classes;
  if (marginal.size() != k || spec.num_classes() != k) throw ShapeError("bayes_ig: class count mismatch");

  LossOutput out;
  std::vector<double> p_hat(marginal.begin(), marginal.end());
  for (double& v : p_hat) {
    if (!(v >= kMarginalFloor)) {
      v = kMarginalFloor;
      out.diagnostics.marginal_clamped = true;
    }
  }

  const std::size_t n_batch = batch.size();
  const double inv_n = 1.0 / static_cast<double>(n_batch);
  // Fraction of the batch carrying each label: the objective subtracts
  // log p^(y_n) once per sample, so class y's marginal gradient enters with
  // weight count_y / N.
  std::vector<double> label_share(k, 0.0);
  for (Label y : batch.labels) {
    if (y >= k) throw DomainError("bayes_ig: label out of range");
    label_share[y] += 1.0;
  }
  for (double& s : label_share) s *= inv_n;

  out.param_grad = scorer.params.zeros_like();
  double objective = 0.0;
  double log_lik_sum = 0.0;
  double log_marg_sum = 0.0;
  double beta_sum = 0.0;
  for (std::size_t m : canonical_order(batch)) {
    auto fwd = forward(scorer.params, scorer.spec, batch.features.row(m));
    const Label ym = batch.labels[m];
    const ClassLogProbs lp = log_prob(likelihood, fwd.logits);
    const double beta_m = beta_for(spec, ym);
    beta_sum += beta_m;
    log_lik_sum += lp.logp[ym];
    log_marg_sum += std::log(p_hat[ym]);
    objective += lp.logp[ym] - std::log(p_hat[ym]);

    // Likelihood term: -(1/N) d logp(y_m | x_m).
    std::vector<double> cot = log_prob_grad(likelihood, fwd.logits, ym);
    for (double& v : cot) v *= -inv_n;
    // Marginal term: +sum_y share_y * (1/N) beta_m p(y|x_m)/p^(y) d logp(y | x_m).
    for (Label y = 0; y < k; ++y) {
      if (label_share[y] == 0.0) continue;
      const double ratio = std::exp(lp.logp[y]) / p_hat[y];
      const double c = label_share[y] * inv_n * beta_m * ratio;
      const std::vector<double> g = log_prob_grad(likelihood, fwd.logits, y);
      for (std::size_t j = 0; j < cot.size(); ++j) cot[j] += c * g[j];
    }
    backward_accumulate(fwd.tape, cot, out.param_grad);
  }
  out.loss_value = -objective * inv_n;
  out.diagnostics.mean_log_lik = log_lik_sum * inv_n;
  out.diagnostics.mean_log_marginal = log_marg_sum * inv_n;
  out.diagnostics.mean_beta = beta_sum * inv_n;
  return out;
}

const char* to_string(LossKind kind) {
  switch (kind) {
    case LossKind::nll:
      return "nll";
    case LossKind::weighted:
      return "weighted";
    case LossKind::bayes_ig:
      return "bayes_ig";
  }
  return "?";
}

LossKind loss_kind_from_string(const std::string& s) {
  if (s == "nll") return LossKind::nll;
  if (s == "weighted") return LossKind::weighted;
  if (s == "bayes_ig") return LossKind::bayes_ig;
  throw ConfigError("unknown loss '" + s + "'");
}

}  // namespace biascorr
