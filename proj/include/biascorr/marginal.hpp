#pragma once

// Estimators of the label marginal p(y | w) implied by a model under the
// true population, and the tracked categorical estimate used at training
// time.

#include <span>
#include <vector>

#include "biascorr/data.hpp"
#include "biascorr/likelihoods.hpp"

namespace biascorr {

// True population marginal p_Y next to the marginal p~ the training batches
// were drawn from.
struct PrevalenceSpec {
  std::vector<double> true_marginal;
  std::vector<double> train_marginal;

  std::size_t num_classes() const { return true_marginal.size(); }
  void validate() const;

  // Binary helper: p_Y = (1 - prevalence, prevalence).
  static PrevalenceSpec binary(double prevalence, std::vector<double> train_marginal);
};

void validate_distribution(std::span<const double> p, const char* what);

// p_Y[y] / p~[y]. Throws DomainError when p~[y] is zero.
double beta_for(const PrevalenceSpec& spec, Label y);
std::vector<double> beta_weights(const PrevalenceSpec& spec);

enum class MarginalMethod { eq3_sample_weighted, eq12_per_class, tracked };

struct MarginalEstimate {
  std::vector<double> probs;
  MarginalMethod method = MarginalMethod::eq3_sample_weighted;
};

// probs[y] = (1/N) sum_n beta(y_n) p(y | x_n, w). Sums to mean(beta) rather
// than 1.
MarginalEstimate estimate_marginal_sample_weighted(std::span<const ClassLogProbs> batch_probs,
                                                   std::span<const Label> batch_labels,
                                                   const PrevalenceSpec& spec);

// probs[y'] = sum_y p_Y[y] * mean_{n : y_n = y} p(y' | x_n, w). Every class
// with positive prevalence must appear in the batch.
MarginalEstimate estimate_marginal_per_class(std::span<const ClassLogProbs> batch_probs,
                                             std::span<const Label> batch_labels,
                                             const PrevalenceSpec& spec);

// Scales a nonnegative estimate to sum to one.
MarginalEstimate renormalized(MarginalEstimate e);

inline constexpr double kMarginalFloor = 1e-8;

// Categorical estimate softmax(psi) of p(y | w), fitted by stochastic
// descent on the cross-entropy to minibatch targets.
class MarginalTracker {
 public:
  MarginalTracker(std::vector<double> initial, double learning_rate);

  // psi = log p_Y, with zero entries mapped to log(kMarginalFloor).
  static MarginalTracker from_prior(std::span<const double> true_marginal, double learning_rate);

  std::vector<double> estimate() const;
  std::span<const double> logits() const { return psi_; }
  double learning_rate() const { return lr_; }

  // One gradient step psi -= lr * (softmax(psi) - target).
  void update(const MarginalEstimate& target);

  // Estimate with every class floored at kMarginalFloor; sets *clamped when
  // any entry was raised.
  std::vector<double> floored_estimate(bool* clamped = nullptr) const;

 private:
  std::vector<double> psi_;
  double lr_;
};

const char* to_string(MarginalMethod m);

}  // namespace biascorr
