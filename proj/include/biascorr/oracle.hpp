#pragma once

// Exact Bayesian inference on small discrete problems by enumeration.
//
// A toy problem has a finite feature alphabet X, label alphabet Y and
// parameter grid W with prior p(w), a likelihood table p(y | x, w) and a
// population distribution p_X. Training data are label-biased: labels from
// a designer marginal p~, then x ~ p(x | y, w).

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace biascorr {

struct DiscreteToyProblem {
  std::size_t num_x = 0;
  std::size_t num_y = 0;
  std::size_t num_w = 0;
  std::vector<double> prior;       // [w]
  std::vector<double> likelihood;  // [w][x][y]
  std::vector<double> p_x;         // [x]

  double lik(std::size_t w, std::size_t x, std::size_t y) const { return likelihood[(w * num_x + x) * num_y + y]; }
  std::span<const double> lik_row(std::size_t w, std::size_t x) const {
    return {likelihood.data() + (w * num_x + x) * num_y, num_y};
  }
  void validate() const;
};

struct ToyObservation {
  std::size_t x = 0;
  std::size_t y = 0;

  friend bool operator==(const ToyObservation&, const ToyObservation&) = default;
};

using ToyData = std::vector<ToyObservation>;

struct PosteriorTable {
  std::vector<double> weights;
  // Set when some w with prior mass had p(y_n | w) = 0 for an observed label.
  bool zero_marginal = false;
};

// p(w) * prod_n p(x_n | y_n, w), with p(x | y, w) built from the likelihood
// table and p_X by Bayes' rule.
PosteriorTable posterior_firstprinciples(const DiscreteToyProblem& problem, const ToyData& data);

// p(w) * prod_n p(y_n | x_n, w) / p(y_n | w), with p(y | w) = sum_x p(y|x,w) p_X(x).
PosteriorTable posterior_surrogate(const DiscreteToyProblem& problem, const ToyData& data);

std::vector<double> posterior_predictive(const DiscreteToyProblem& problem, const PosteriorTable& posterior,
                                         std::size_t x_new);

// p(y | w) = sum_x p(y | x, w) p_X(x).
std::vector<double> marginal_exact(const DiscreteToyProblem& problem, std::size_t w);

// The same marginal in expectation form
//   sum_y p_Y(y) sum_x p(y' | x, w) p(x | y, w_star),  p_Y(y) = p(y | w_star),
// valid for any w_star because x is independent of w in the population.
std::vector<double> marginal_expectation_form(const DiscreteToyProblem& problem, std::size_t w, std::size_t w_star);

// p(x | y, w) for all x.
std::vector<double> feature_conditional(const DiscreteToyProblem& problem, std::size_t w, std::size_t y);

struct ToyInstanceSizes {
  std::size_t max_x = 6;
  std::size_t max_y = 3;
  std::size_t max_w = 40;
  std::size_t max_n = 12;
};

DiscreteToyProblem random_toy_problem(std::mt19937_64& rng, const ToyInstanceSizes& sizes = {});

// n label-biased observations generated under parameter w_true.
ToyData sample_label_biased(const DiscreteToyProblem& problem, std::span<const double> p_tilde, std::size_t n,
                            std::size_t w_true, std::mt19937_64& rng);

// A prediction rule maps (training data, new feature) to a distribution over Y.
using PredictionRule = std::function<std::vector<double>(const ToyData&, std::size_t)>;

// Bayes prediction risk of a rule, by enumerating w, every label-biased
// training set of size n and every test pair:
//   -sum_w p(w) sum_D p~(D | w) sum_{x,y} p_X(x) p(y | x, w) log q_{x,D}(y)
double bayes_prediction_risk(const DiscreteToyProblem& problem, std::span<const double> p_tilde, std::size_t n,
                             const PredictionRule& rule);

struct OracleInstanceResult {
  std::uint64_t seed = 0;
  double max_abs_diff = 0.0;
  bool pass = false;
};

struct OracleSuiteResult {
  std::vector<OracleInstanceResult> instances;
  double tolerance = 0.0;
  std::size_t passed = 0;

  bool all_passed() const { return passed == instances.size(); }
};

// Compares the two posterior routes on `count` random instances. Instance i
// uses seed base_seed + i; it passes when the max abs difference is strictly
// below the tolerance.
OracleSuiteResult run_oracle_suite(std::size_t count, double tolerance, std::uint64_t base_seed,
                                   const ToyInstanceSizes& sizes = {});

// One instance of the suite: the problem and the data it was checked on.
struct OracleInstance {
  DiscreteToyProblem problem;
  ToyData data;
};
OracleInstance make_oracle_instance(std::uint64_t seed, const ToyInstanceSizes& sizes = {});

nlohmann::json to_json(const DiscreteToyProblem& problem);
nlohmann::json to_json(const ToyData& data);
DiscreteToyProblem toy_problem_from_json(const nlohmann::json& j);
ToyData toy_data_from_json(const nlohmann::json& j);

}  // namespace biascorr
