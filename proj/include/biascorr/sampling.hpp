#pragma once

// Synthetic populations and the two ways of drawing data from them:
// i.i.d. from the true population, or label-biased (labels by a designer
// chosen marginal first, features from the true class conditionals).

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "biascorr/data.hpp"

namespace biascorr {

struct GaussianComponent {
  double weight = 1.0;
  std::vector<double> mean;
  std::vector<double> cov;  // dim x dim, row-major
};

struct ClassConditional {
  std::vector<GaussianComponent> components;
};

struct PopulationModel {
  std::size_t dim = 2;
  std::vector<ClassConditional> classes;
  std::vector<double> true_marginal;

  std::size_t num_classes() const { return classes.size(); }
  // Throws ConfigError on bad weights, shapes or non positive-definite
  // covariances.
  void validate() const;
  PopulationModel with_marginal(std::vector<double> p) const;

  // Unit-covariance Gaussians at (-1, 0) and (+1, 0); p_Y = (1-prev, prev).
  static PopulationModel binary_overlap(double prevalence);
  // Same geometry with means at (-3, 0) and (+3, 0).
  static PopulationModel binary_separable(double prevalence);
  // Five unit-covariance Gaussians with collinear means for ratings 1..5.
  static PopulationModel ordinal5();
};

struct Provenance {
  std::uint64_t seed = 0;
  nlohmann::json generator;
};

struct Dataset {
  Matrix features;
  std::vector<Label> labels;
  std::vector<double> apparent_marginal;
  std::size_t num_classes = 0;
  Provenance provenance;

  std::size_t size() const { return labels.size(); }
  std::vector<std::size_t> class_counts() const;
};

Dataset sample_population(const PopulationModel& model, std::size_t n, std::uint64_t seed);

// Label counts are the largest-remainder rounding of n * p_tilde, shuffled,
// then features are drawn from the class conditionals.
Dataset sample_biased_trainset(const PopulationModel& model, std::span<const double> p_tilde, std::size_t n,
                               std::uint64_t seed);

// Largest-remainder apportionment of n items to the given shares. Ties in
// the remainder go to the lower class index.
std::vector<std::size_t> quota_counts(std::span<const double> shares, std::size_t n);

enum class SamplerMode { rebalanced, natural };

class BatchSampler {
 public:
  // batch_marginal applies to rebalanced mode; empty means uniform.
  BatchSampler(SamplerMode mode, std::size_t batch_size, std::uint64_t seed,
               std::vector<double> batch_marginal = {});

  Batch next_batch(const Dataset& data);

  SamplerMode mode() const { return mode_; }
  std::size_t batch_size() const { return batch_size_; }

 private:
  void index_classes(const Dataset& data);

  SamplerMode mode_;
  std::size_t batch_size_;
  std::vector<double> batch_marginal_;
  std::mt19937_64 rng_;
  const Dataset* indexed_ = nullptr;
  std::size_t indexed_size_ = 0;
  std::vector<std::vector<std::size_t>> by_class_;
};

// Bayes posterior over classes at x, using the model's class-conditional
// densities and the supplied marginal. If every density underflows the
// marginal itself is returned and *underflow is set.
std::vector<double> analytic_posterior(const PopulationModel& model, std::span<const double> x,
                                       std::span<const double> at_marginal, bool* underflow = nullptr);

// log of the class-conditional density of class y at x.
double class_log_density(const PopulationModel& model, Label y, std::span<const double> x);

nlohmann::json to_json(const PopulationModel& model);
PopulationModel population_from_json(const nlohmann::json& j);

const char* to_string(SamplerMode mode);
SamplerMode sampler_mode_from_string(const std::string& s);

}  // namespace biascorr
