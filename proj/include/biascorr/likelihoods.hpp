#pragma once

// Likelihood models p(y | x, w) as functions of scorer logits.
//
// softmax        K logits, K classes
// bernoulli      1 logit, 2 classes, p(y=1) = sigmoid(logit)
// onion_peeling  4 gate logits, 5 ordinal ratings. Gates are peeled in the
//                rating order 1, 5, 2, 4 and rating 3 keeps the residual
//                stick. Class index r-1 holds rating r.

#include <array>
#include <span>
#include <string>
#include <vector>

#include "biascorr/data.hpp"

namespace biascorr {

enum class LikelihoodKind { softmax, bernoulli, onion_peeling };

struct LikelihoodModel {
  LikelihoodKind kind = LikelihoodKind::softmax;
  std::size_t num_classes = 2;

  static LikelihoodModel softmax(std::size_t k) { return {LikelihoodKind::softmax, k}; }
  static LikelihoodModel bernoulli() { return {LikelihoodKind::bernoulli, 2}; }
  static LikelihoodModel onion_peeling() { return {LikelihoodKind::onion_peeling, 5}; }

  std::size_t logit_count() const;
  void validate() const;
};

// Class indices (0-based) in the order their gates are peeled.
inline constexpr std::array<std::size_t, 4> kOnionPeelOrder{0, 4, 1, 3};
inline constexpr std::size_t kOnionResidualClass = 2;

struct ClassLogProbs {
  std::vector<double> logp;

  std::vector<double> probs() const;
};

ClassLogProbs log_prob(const LikelihoodModel& model, std::span<const double> logits);

// d logp[y] / d logits.
std::vector<double> log_prob_grad(const LikelihoodModel& model, std::span<const double> logits, Label y);

// Numerically stable log(sigmoid(z)).
double log_sigmoid(double z);
double sigmoid(double z);
double log_sum_exp(std::span<const double> v);

const char* to_string(LikelihoodKind kind);
LikelihoodKind likelihood_kind_from_string(const std::string& s);

}  // namespace biascorr
