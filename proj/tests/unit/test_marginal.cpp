#include <doctest.h>

#include <cmath>

#include "biascorr/error.hpp"
#include "biascorr/marginal.hpp"
#include "support.hpp"

using namespace biascorr;

namespace {

ClassLogProbs from_probs(std::vector<double> p) {
  ClassLogProbs lp;
  for (double v : p) lp.logp.push_back(std::log(v));
  return lp;
}

double sum(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s;
}

}  // namespace

TEST_CASE("beta is the ratio of true to training marginal") {
  CHECK(beta_for(PrevalenceSpec::binary(0.001, {0.5, 0.5}), 1) == doctest::Approx(0.002).epsilon(1e-14));
  CHECK(beta_for(PrevalenceSpec{{0.7, 0.3}, {0.25, 0.75}}, 0) == doctest::Approx(2.8).epsilon(1e-14));
  const PrevalenceSpec same{{0.2, 0.3, 0.5}, {0.2, 0.3, 0.5}};
  for (double b : beta_weights(same)) CHECK(b == 1.0);
  CHECK_THROWS_AS(beta_for(PrevalenceSpec{{0.5, 0.5}, {1.0, 0.0}}, 1), DomainError);
}

TEST_CASE("beta weights average to one under the training marginal") {
  std::mt19937_64 rng(1);
  for (int t = 0; t < 100; ++t) {
    auto a = testsupport::random_vector(rng, 4, 0.01, 1.0);
    auto b = testsupport::random_vector(rng, 4, 0.01, 1.0);
    const double sa = sum(a), sb = sum(b);
    for (double& v : a) v /= sa;
    for (double& v : b) v /= sb;
    const PrevalenceSpec spec{a, b};
    const auto beta = beta_weights(spec);
    double s = 0.0;
    for (std::size_t y = 0; y < 4; ++y) {
      CHECK(beta[y] > 0.0);
      s += b[y] * beta[y];
    }
    CHECK(std::abs(s - 1.0) <= 1e-12);
  }
}

TEST_CASE("prevalence spec validation") {
  CHECK_THROWS_AS((PrevalenceSpec{{0.5, 0.6}, {0.5, 0.5}}.validate()), ConfigError);
  CHECK_THROWS_AS((PrevalenceSpec{{0.5, 0.5}, {0.5, 0.3, 0.2}}.validate()), ConfigError);
  CHECK_NOTHROW(PrevalenceSpec::binary(0.3, {0.5, 0.5}).validate());
}

TEST_CASE("sample-weighted estimate, hand example") {
  const PrevalenceSpec spec = PrevalenceSpec::binary(0.001, {0.5, 0.5});
  const std::vector<ClassLogProbs> probs{from_probs({0.8, 0.2}), from_probs({0.1, 0.9})};
  const std::vector<Label> labels{0, 1};
  const auto e = estimate_marginal_sample_weighted(probs, labels, spec);
  CHECK(e.method == MarginalMethod::eq3_sample_weighted);
  CHECK(e.probs[1] == doctest::Approx((1.998 * 0.2 + 0.002 * 0.9) / 2.0).epsilon(1e-13));
  CHECK(e.probs[1] == doctest::Approx(0.2007).epsilon(1e-12));
  CHECK(sum(e.probs) == doctest::Approx(1.0).epsilon(1e-13));  // mean beta = 1 here
  const auto r = renormalized(e);
  CHECK(std::abs(sum(r.probs) - 1.0) <= 1e-12);
}

TEST_CASE("sample-weighted estimate of constant rows is that row") {
  const PrevalenceSpec spec{{0.3, 0.7}, {0.3, 0.7}};
  const std::vector<ClassLogProbs> probs(5, from_probs({0.35, 0.65}));
  const std::vector<Label> labels{0, 1, 1, 0, 1};
  const auto e = estimate_marginal_sample_weighted(probs, labels, spec);
  CHECK(e.probs[0] == doctest::Approx(0.35).epsilon(1e-14));
  CHECK(e.probs[1] == doctest::Approx(0.65).epsilon(1e-14));

  const std::vector<ClassLogProbs> one{from_probs({0.6, 0.4})};
  const auto f = estimate_marginal_sample_weighted(one, std::vector<Label>{1}, spec);
  CHECK(f.probs[0] == doctest::Approx(0.6).epsilon(1e-14));

  CHECK_THROWS_AS(estimate_marginal_sample_weighted({}, {}, spec), UsageError);
}

TEST_CASE("sample-weighted estimate sums to one in expectation") {
  const PrevalenceSpec spec{{0.1, 0.3, 0.6}, {0.5, 0.25, 0.25}};
  const auto beta = beta_weights(spec);
  std::mt19937_64 rng(3);
  std::discrete_distribution<Label> draw(spec.train_marginal.begin(), spec.train_marginal.end());
  const std::size_t batches = 20000, n = 16;
  std::vector<double> sums;
  for (std::size_t b = 0; b < batches; ++b) {
    std::vector<Label> labels(n);
    std::vector<ClassLogProbs> probs;
    for (auto& y : labels) {
      y = draw(rng);
      auto p = testsupport::random_vector(rng, 3, 0.05, 1.0);
      const double s = sum(p);
      for (double& v : p) v /= s;
      probs.push_back(from_probs(p));
    }
    const auto e = estimate_marginal_sample_weighted(probs, labels, spec);
    double mb = 0.0;
    for (auto y : labels) mb += beta[y] / static_cast<double>(n);
    CHECK(sum(e.probs) == doctest::Approx(mb).epsilon(1e-12));
    sums.push_back(sum(e.probs));
  }
  const double m = testsupport::mean(sums);
  double var = 0.0;
  for (double s : sums) var += (s - m) * (s - m);
  var /= static_cast<double>(sums.size() - 1);
  CHECK(std::abs(m - 1.0) <= 3.0 * std::sqrt(var / static_cast<double>(sums.size())));
}

TEST_CASE("per-class estimate, hand example and properties") {
  const PrevalenceSpec uniform{{0.5, 0.5}, {0.5, 0.5}};
  const std::vector<ClassLogProbs> probs{from_probs({0.8, 0.2}), from_probs({0.3, 0.7})};
  const auto e = estimate_marginal_per_class(probs, std::vector<Label>{0, 1}, uniform);
  CHECK(e.method == MarginalMethod::eq12_per_class);
  CHECK(e.probs[0] == doctest::Approx(0.55).epsilon(1e-14));
  CHECK(e.probs[1] == doctest::Approx(0.45).epsilon(1e-14));

  const PrevalenceSpec skew{{0.9, 0.1}, {0.5, 0.5}};
  const std::vector<ClassLogProbs> same(4, from_probs({0.25, 0.75}));
  const auto f = estimate_marginal_per_class(same, std::vector<Label>{0, 1, 0, 1}, skew);
  CHECK(f.probs[0] == doctest::Approx(0.25).epsilon(1e-14));
  CHECK(f.probs[1] == doctest::Approx(0.75).epsilon(1e-14));

  const PrevalenceSpec degenerate{{1.0, 0.0}, {0.5, 0.5}};
  const std::vector<ClassLogProbs> rows{from_probs({0.9, 0.1}), from_probs({0.7, 0.3}), from_probs({0.2, 0.8})};
  const auto g = estimate_marginal_per_class(rows, std::vector<Label>{0, 0, 1}, degenerate);
  CHECK(g.probs[0] == doctest::Approx(0.8).epsilon(1e-14));
  CHECK(g.probs[1] == doctest::Approx(0.2).epsilon(1e-14));
  // Only class 0 carries prevalence, so a batch without class 1 is fine.
  CHECK_NOTHROW(estimate_marginal_per_class(std::vector<ClassLogProbs>{rows[0]}, std::vector<Label>{0}, degenerate));
}

TEST_CASE("per-class estimate names a missing class") {
  const PrevalenceSpec spec{{0.2, 0.3, 0.5}, {1.0 / 3, 1.0 / 3, 1.0 / 3}};
  const std::vector<ClassLogProbs> rows(2, from_probs({0.2, 0.3, 0.5}));
  try {
    estimate_marginal_per_class(rows, std::vector<Label>{0, 2}, spec);
    FAIL("expected a precondition error");
  } catch (const PreconditionError& e) {
    CHECK(std::string(e.what()).find("1") != std::string::npos);
  }
}

TEST_CASE("per-class estimate is always a distribution") {
  std::mt19937_64 rng(4);
  for (int t = 0; t < 200; ++t) {
    auto pY = testsupport::random_vector(rng, 3, 0.0, 1.0);
    const double s = sum(pY);
    for (double& v : pY) v /= s;
    const PrevalenceSpec spec{pY, {1.0 / 3, 1.0 / 3, 1.0 / 3}};
    std::vector<ClassLogProbs> rows;
    std::vector<Label> labels;
    for (Label y = 0; y < 3; ++y) {
      for (int k = 0; k < 3; ++k) {
        auto p = testsupport::random_vector(rng, 3, 0.01, 1.0);
        const double z = sum(p);
        for (double& v : p) v /= z;
        rows.push_back(from_probs(p));
        labels.push_back(y);
      }
    }
    const auto e = estimate_marginal_per_class(rows, labels, spec);
    for (double v : e.probs) CHECK(v >= 0.0);
    CHECK(std::abs(sum(e.probs) - 1.0) <= 1e-12);
  }
}

TEST_CASE("tracker: stationary point, symmetry and convergence") {
  MarginalTracker at(std::vector<double>{0.3, -1.2, 2.0}, 0.1);
  const auto before = std::vector<double>(at.logits().begin(), at.logits().end());
  at.update(MarginalEstimate{at.estimate(), MarginalMethod::tracked});
  for (std::size_t k = 0; k < 3; ++k) CHECK(at.logits()[k] == doctest::Approx(before[k]).epsilon(1e-15));

  MarginalTracker sym(std::vector<double>{0.0, 0.0, 0.0, 0.0}, 0.1);
  for (int i = 0; i < 100; ++i) sym.update(MarginalEstimate{{0.25, 0.25, 0.25, 0.25}, MarginalMethod::tracked});
  for (double v : sym.estimate()) CHECK(v == doctest::Approx(0.25).epsilon(1e-15));

  const std::vector<double> target{0.05, 0.7, 0.25};
  MarginalTracker conv(std::vector<double>{0.0, 0.0, 0.0}, 0.1);
  auto kl = [&](const std::vector<double>& q) {
    double s = 0.0;
    for (std::size_t k = 0; k < 3; ++k) s += target[k] * std::log(target[k] / q[k]);
    return s;
  };
  double prev = kl(conv.estimate());
  for (int i = 0; i < 10000; ++i) {
    conv.update(MarginalEstimate{target, MarginalMethod::eq12_per_class});
    const double now = kl(conv.estimate());
    CHECK(now <= prev + 1e-15);
    prev = now;
  }
  const auto q = conv.estimate();
  for (std::size_t k = 0; k < 3; ++k) CHECK(std::abs(q[k] - target[k]) <= 1e-3);
}

TEST_CASE("tracker from the prior and the denominator floor") {
  const auto t = MarginalTracker::from_prior(std::vector<double>{0.999, 0.001}, 0.1);
  CHECK(t.estimate()[1] == doctest::Approx(0.001).epsilon(1e-12));
  const auto z = MarginalTracker::from_prior(std::vector<double>{1.0, 0.0}, 0.1);
  bool clamped = false;
  const auto f = z.floored_estimate(&clamped);
  CHECK(f[1] >= kMarginalFloor);
  CHECK(clamped);
  bool c2 = true;
  t.floored_estimate(&c2);
  CHECK(!c2);
}
