#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "biascorr/diffcore.hpp"
#include "biascorr/likelihoods.hpp"
#include "biascorr/losses.hpp"
#include "biascorr/marginal.hpp"
#include "biascorr/metrics.hpp"
#include "biascorr/sampling.hpp"

namespace biascorr {

// Starting point of the tracked marginal: the true marginal p_Y, or the
// renormalized sample-weighted estimate of the initial model on the first
// minibatch.
enum class TrackerInit { prior, first_batch };

struct TrainConfig {
  LossKind loss = LossKind::bayes_ig;
  ScorerSpec scorer;
  LikelihoodModel likelihood;
  // train_marginal is the label distribution of the minibatches: the
  // rebalanced sampler draws classes from it.
  PrevalenceSpec prevalence;
  SamplerMode sampler_mode = SamplerMode::rebalanced;
  std::size_t batch_size = 32;
  double learning_rate = 0.05;
  double momentum = 0.9;
  std::size_t steps = 2000;
  double tracker_learning_rate = 0.1;
  TrackerInit tracker_init = TrackerInit::first_batch;
  std::size_t eval_every = 500;
  std::uint64_t seed = 0;

  void validate() const;
};

struct TraceRecord {
  std::size_t step = 0;
  double train_loss = 0.0;  // mean minibatch loss since the previous record
  MetricsReport eval;
  std::vector<double> tracked_marginal;  // empty unless loss is bayes_ig
};

struct TrainTrace {
  std::vector<TraceRecord> records;
};

struct TrainResult {
  ParamVector params;
  TrainTrace trace;
  std::vector<double> tracked_marginal;
};

// SGD with momentum over `steps` minibatches. For bayes_ig the tracker is
// updated once per step from the renormalized sample-weighted estimate on
// the pre-step parameters, while the loss uses the tracker value from
// before that update. Evaluation happens every eval_every steps and after
// the last step.
TrainResult train(const TrainConfig& config, const Dataset& train_data, const Dataset& eval_data);

// Class probabilities under the plain likelihood, one row per sample.
std::vector<std::vector<double>> predict(const ParamVector& params, const ScorerSpec& spec,
                                         const LikelihoodModel& likelihood, const Matrix& features);

// Most probable class per row; ties go to the lower class.
std::vector<Label> predicted_labels(std::span<const std::vector<double>> probs);

// Metrics of a parameter vector on a dataset at the configured true marginal.
MetricsReport evaluate(const ParamVector& params, const TrainConfig& config, const Dataset& data);

const char* to_string(TrackerInit init);
TrackerInit tracker_init_from_string(const std::string& s);

}  // namespace biascorr
