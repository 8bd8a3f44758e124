#include "biascorr/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "biascorr/error.hpp"
#include "biascorr/seed.hpp"

namespace biascorr {

void TrainConfig::validate() const {
  scorer.validate();
  likelihood.validate();
  prevalence.validate();
  if (scorer.output_dim != likelihood.logit_count()) {
    throw ConfigError("scorer output_dim must equal the likelihood's logit count (" +
                      std::to_string(likelihood.logit_count()) + ")");
  }
  if (prevalence.num_classes() != likelihood.num_classes) {
    throw ConfigError("prevalence class count differs from the likelihood's");
  }
  if (steps == 0) throw ConfigError("steps must be >= 1");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning_rate must be >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (eval_every == 0) throw ConfigError("eval_every must be positive");
  if (!(tracker_learning_rate >= 0.0)) throw ConfigError("tracker_learning_rate must be >= 0");
}

std::vector<std::vector<double>> predict(const ParamVector& params, const ScorerSpec& spec,
                                         const LikelihoodModel& likelihood, const Matrix& features) {
  std::vector<std::vector<double>> out(features.rows);
  for (std::size_t i = 0; i < features.rows; ++i) {
    out[i] = log_prob(likelihood, forward_logits(params, spec, features.row(i))).probs();
  }
  return out;
}

std::vector<Label> predicted_labels(std::span<const std::vector<double>> probs) {
  std::vector<Label> out(probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i) {
    out[i] = static_cast<Label>(std::max_element(probs[i].begin(), probs[i].end()) - probs[i].begin());
  }
  return out;
}

MetricsReport evaluate(const ParamVector& params, const TrainConfig& config, const Dataset& data) {
  const auto probs = predict(params, config.scorer, config.likelihood, data.features);
  const auto preds = predicted_labels(probs);
  const std::size_t k = config.likelihood.num_classes;
  const ConfusionCounts counts = confusion(preds, data.labels, k);
  if (k == 2) return report(counts, probs, data.labels, config.prevalence.true_marginal[1]);
  return report_multiclass(counts, probs, data.labels, config.prevalence.true_marginal);
}

TrainResult train(const TrainConfig& config, const Dataset& train_data, const Dataset& eval_data) {
  config.validate();
  if (train_data.size() == 0) throw PreconditionError("train: empty training set");
  if (eval_data.size() == 0) throw PreconditionError("train: empty evaluation set");
  if (train_data.features.cols != config.scorer.input_dim) {
    throw ShapeError("train: dataset has " + std::to_string(train_data.features.cols) +
                     " features, scorer expects " + std::to_string(config.scorer.input_dim));
  }

  Scorer scorer{config.scorer, init_params(config.scorer, config.seed)};
  ParamVector velocity = scorer.params.zeros_like();
  BatchSampler sampler(config.sampler_mode, config.batch_size, splitmix64(config.seed),
                       config.prevalence.train_marginal);
  MarginalTracker tracker = MarginalTracker::from_prior(config.prevalence.true_marginal, config.tracker_learning_rate);
  const bool bayes = config.loss == LossKind::bayes_ig;

  TrainResult result;
  double loss_acc = 0.0;
  std::size_t loss_count = 0;
  for (std::size_t step = 1; step <= config.steps; ++step) {
    const Batch batch = sampler.next_batch(train_data);
    LossOutput out;
    try {
      switch (config.loss) {
        case LossKind::nll:
          out = nll_loss(batch, scorer, config.likelihood);
          break;
        case LossKind::weighted:
          out = weighted_loss(batch, scorer, config.likelihood, config.prevalence);
          break;
        case LossKind::bayes_ig: {
          std::vector<double> snapshot = tracker.estimate();
          std::vector<ClassLogProbs> lp(batch.size());
          for (std::size_t n = 0; n < batch.size(); ++n) {
            lp[n] = log_prob(config.likelihood, forward_logits(scorer.params, scorer.spec, batch.features.row(n)));
          }
          if (step == 1 && config.tracker_init == TrackerInit::first_batch) {
            const auto start = renormalized(estimate_marginal_sample_weighted(lp, batch.labels, config.prevalence));
            std::vector<double> psi(start.probs.size());
            for (std::size_t y = 0; y < psi.size(); ++y) psi[y] = std::log(std::max(start.probs[y], kMarginalFloor));
            tracker = MarginalTracker(std::move(psi), config.tracker_learning_rate);
            snapshot = tracker.estimate();
          }
          tracker.update(renormalized(estimate_marginal_sample_weighted(lp, batch.labels, config.prevalence)));
          out = bayes_ig_loss(batch, scorer, config.likelihood, config.prevalence, snapshot);
          break;
        }
      }
    } catch (const NumericError& e) {
      throw NumericError("train: step " + std::to_string(step) + ": " + e.what());
    }
    if (!std::isfinite(out.loss_value) || !out.param_grad.all_finite()) {
      std::ostringstream msg;
      msg << "train: non-finite loss at step " << step << " (mean_log_lik=" << out.diagnostics.mean_log_lik
          << ", mean_log_marginal=" << out.diagnostics.mean_log_marginal << ")";
      throw NumericError(msg.str());
    }
    loss_acc += out.loss_value;
    ++loss_count;

    auto v = velocity.values();
    auto w = scorer.params.values();
    const auto g = out.param_grad.values();
    for (std::size_t i = 0; i < w.size(); ++i) {
      v[i] = config.momentum * v[i] + g[i];
      w[i] -= config.learning_rate * v[i];
    }

    if (step % config.eval_every == 0 || step == config.steps) {
      TraceRecord rec;
      rec.step = step;
      rec.train_loss = loss_acc / static_cast<double>(loss_count);
      rec.eval = evaluate(scorer.params, config, eval_data);
      if (bayes) rec.tracked_marginal = tracker.estimate();
      result.trace.records.push_back(std::move(rec));
      loss_acc = 0.0;
      loss_count = 0;
    }
  }
  result.params = std::move(scorer.params);
  if (bayes) result.tracked_marginal = tracker.estimate();
  return result;
}

const char* to_string(TrackerInit init) { return init == TrackerInit::prior ? "prior" : "first_batch"; }

TrackerInit tracker_init_from_string(const std::string& s) {
  if (s == "prior") return TrackerInit::prior;
  if (s == "first_batch") return TrackerInit::first_batch;
  throw ConfigError("unknown tracker_init '" + s + "'");
}

}  // namespace biascorr
