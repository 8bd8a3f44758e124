#include "biascorr/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "biascorr/error.hpp"

namespace biascorr {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void check_normalized(std::span<const double> p, const char* what) {
  double s = 0.0;
  for (double v : p) {
    if (!(v >= 0.0)) throw ConfigError(std::string(what) + ": negative or NaN entry");
    s += v;
  }
  if (std::abs(s - 1.0) > 1e-12) throw ConfigError(std::string(what) + ": not normalized");
}

void check_data(const DiscreteToyProblem& problem, const ToyData& data) {
  for (const auto& o : data) {
    if (o.x >= problem.num_x || o.y >= problem.num_y) throw DomainError("toy data outside the alphabets");
  }
}

PosteriorTable normalize_log(std::vector<double> logw, bool zero_marginal) {
  const double m = *std::max_element(logw.begin(), logw.end());
  if (m == kNegInf) throw DegeneracyError("posterior has zero total mass");
  double s = 0.0;
  for (double& v : logw) {
    v = std::exp(v - m);
    s += v;
  }
  for (double& v : logw) v /= s;
  return {std::move(logw), zero_marginal};
}

std::vector<double> random_simplex(std::mt19937_64& rng, std::size_t k, double concentration) {
  std::gamma_distribution<double> g(concentration, 1.0);
  std::vector<double> p(k);
  double s = 0.0;
  for (double& v : p) {
    v = g(rng) + 1e-3;
    s += v;
  }
  for (double& v : p) v /= s;
  return p;
}

}  // namespace

void DiscreteToyProblem::validate() const {
  if (num_x == 0 || num_y == 0 || num_w == 0) throw ConfigError("toy problem: empty alphabet");
  if (num_x > 16 || num_y > 4 || num_w > 10000) throw ConfigError("toy problem: alphabet too large to enumerate");
  if (prior.size() != num_w || p_x.size() != num_x || likelihood.size() != num_w * num_x * num_y) {
    throw ConfigError("toy problem: table sizes do not match the alphabets");
  }
  check_normalized(prior, "prior");
  check_normalized(p_x, "p_X");
  for (std::size_t w = 0; w < num_w; ++w) {
    for (std::size_t x = 0; x < num_x; ++x) check_normalized(lik_row(w, x), "likelihood row");
  }
}

std::vector<double> feature_conditional(const DiscreteToyProblem& problem, std::size_t w, std::size_t y) {
  std::vector<double> joint(problem.num_x);
  for (std::size_t x = 0; x < problem.num_x; ++x) joint[x] = problem.lik(w, x, y) * problem.p_x[x];
  const double z = std::accumulate(joint.begin(), joint.end(), 0.0);
  if (z == 0.0) return std::vector<double>(problem.num_x, 0.0);
  for (double& v : joint) v /= z;
  return joint;
}

std::vector<double> marginal_exact(const DiscreteToyProblem& problem, std::size_t w) {
  std::vector<double> m(problem.num_y, 0.0);
  for (std::size_t x = 0; x < problem.num_x; ++x) {
    for (std::size_t y = 0; y < problem.num_y; ++y) m[y] += problem.lik(w, x, y) * problem.p_x[x];
  }
  return m;
}

std::vector<double> marginal_expectation_form(const DiscreteToyProblem& problem, std::size_t w, std::size_t w_star) {
  const std::vector<double> p_y = marginal_exact(problem, w_star);
  std::vector<double> m(problem.num_y, 0.0);
  for (std::size_t y = 0; y < problem.num_y; ++y) {
    if (p_y[y] == 0.0) continue;
    const std::vector<double> cond = feature_conditional(problem, w_star, y);
    for (std::size_t x = 0; x < problem.num_x; ++x) {
      for (std::size_t yp = 0; yp < problem.num_y; ++yp) m[yp] += p_y[y] * cond[x] * problem.lik(w, x, yp);
    }
  }
  return m;
}

PosteriorTable posterior_firstprinciples(const DiscreteToyProblem& problem, const ToyData& data) {
  check_data(problem, data);
  std::vector<double> logw(problem.num_w);
  bool zero_marginal = false;
  for (std::size_t w = 0; w < problem.num_w; ++w) {
    double lw = problem.prior[w] > 0.0 ? std::log(problem.prior[w]) : kNegInf;
    std::vector<std::vector<double>> cond(problem.num_y);
    for (std::size_t y = 0; y < problem.num_y; ++y) cond[y] = feature_conditional(problem, w, y);
    for (const auto& o : data) {
      const double p = cond[o.y][o.x];
      if (p == 0.0 && problem.prior[w] > 0.0 && std::all_of(cond[o.y].begin(), cond[o.y].end(), [](double v) { return v == 0.0; })) {
        zero_marginal = true;
      }
      lw += p > 0.0 ? std::log(p) : kNegInf;
    }
    logw[w] = lw;
  }
  return normalize_log(std::move(logw), zero_marginal);
}

PosteriorTable posterior_surrogate(const DiscreteToyProblem& problem, const ToyData& data) {
  check_data(problem, data);
  std::vector<double> logw(problem.num_w);
  bool zero_marginal = false;
  for (std::size_t w = 0; w < problem.num_w; ++w) {
    double lw = problem.prior[w] > 0.0 ? std::log(problem.prior[w]) : kNegInf;
    const std::vector<double> marg = marginal_exact(problem, w);
    for (const auto& o : data) {
      const double num = problem.lik(w, o.x, o.y);
      const double den = marg[o.y];
      if (den == 0.0) {
        if (problem.prior[w] > 0.0) zero_marginal = true;
        lw = kNegInf;
        continue;
      }
      lw += num > 0.0 ? std::log(num / den) : kNegInf;
    }
    logw[w] = lw;
  }
  return normalize_log(std::move(logw), zero_marginal);
}

std::vector<double> posterior_predictive(const DiscreteToyProblem& problem, const PosteriorTable& posterior,
                                         std::size_t x_new) {
  if (x_new >= problem.num_x) throw DomainError("x_new outside the feature alphabet");
  if (posterior.weights.size() != problem.num_w) throw ShapeError("posterior does not match the parameter grid");
  std::vector<double> q(problem.num_y, 0.0);
  for (std::size_t w = 0; w < problem.num_w; ++w) {
    const double pw = posterior.weights[w];
    if (pw == 0.0) continue;
    for (std::size_t y = 0; y < problem.num_y; ++y) q[y] += pw * problem.lik(w, x_new, y);
  }
  return q;
}

DiscreteToyProblem random_toy_problem(std::mt19937_64& rng, const ToyInstanceSizes& sizes) {
  std::uniform_int_distribution<std::size_t> nx(2, sizes.max_x);
  std::uniform_int_distribution<std::size_t> ny(2, sizes.max_y);
  std::uniform_int_distribution<std::size_t> nw(2, sizes.max_w);
  DiscreteToyProblem p;
  p.num_x = nx(rng);
  p.num_y = ny(rng);
  p.num_w = nw(rng);
  p.prior = random_simplex(rng, p.num_w, 1.0);
  p.p_x = random_simplex(rng, p.num_x, 1.0);
  p.likelihood.reserve(p.num_w * p.num_x * p.num_y);
  for (std::size_t w = 0; w < p.num_w; ++w) {
    for (std::size_t x = 0; x < p.num_x; ++x) {
      const auto row = random_simplex(rng, p.num_y, 0.7);
      p.likelihood.insert(p.likelihood.end(), row.begin(), row.end());
    }
  }
  return p;
}

ToyData sample_label_biased(const DiscreteToyProblem& problem, std::span<const double> p_tilde, std::size_t n,
                            std::size_t w_true, std::mt19937_64& rng) {
  std::discrete_distribution<std::size_t> label(p_tilde.begin(), p_tilde.end());
  std::vector<std::discrete_distribution<std::size_t>> feature;
  for (std::size_t y = 0; y < problem.num_y; ++y) {
    const auto c = feature_conditional(problem, w_true, y);
    feature.emplace_back(c.begin(), c.end());
  }
  ToyData d(n);
  for (auto& o : d) {
    o.y = label(rng);
    o.x = feature[o.y](rng);
  }
  return d;
}

double bayes_prediction_risk(const DiscreteToyProblem& problem, std::span<const double> p_tilde, std::size_t n,
                             const PredictionRule& rule) {
  problem.validate();
  const std::size_t cells = problem.num_x * problem.num_y;
  std::size_t datasets = 1;
  for (std::size_t i = 0; i < n; ++i) {
    datasets *= cells;
    if (datasets > 1'000'000) throw ConfigError("bayes_prediction_risk: too many training sets to enumerate");
  }
  // Precompute the rule's log-predictions for every (dataset, x).
  std::vector<std::vector<double>> log_q(datasets * problem.num_x);
  std::vector<ToyData> all(datasets, ToyData(n));
  for (std::size_t d = 0; d < datasets; ++d) {
    std::size_t code = d;
    for (std::size_t i = 0; i < n; ++i) {
      all[d][i] = {(code % cells) / problem.num_y, code % problem.num_y};
      code /= cells;
    }
    for (std::size_t x = 0; x < problem.num_x; ++x) {
      auto q = rule(all[d], x);
      for (double& v : q) v = std::log(v);
      log_q[d * problem.num_x + x] = std::move(q);
    }
  }
  double risk = 0.0;
  for (std::size_t w = 0; w < problem.num_w; ++w) {
    if (problem.prior[w] == 0.0) continue;
    std::vector<std::vector<double>> cond(problem.num_y);
    for (std::size_t y = 0; y < problem.num_y; ++y) cond[y] = feature_conditional(problem, w, y);
    for (std::size_t d = 0; d < datasets; ++d) {
      double pd = 1.0;
      for (const auto& o : all[d]) pd *= p_tilde[o.y] * cond[o.y][o.x];
      if (pd == 0.0) continue;
      double inner = 0.0;
      for (std::size_t x = 0; x < problem.num_x; ++x) {
        for (std::size_t y = 0; y < problem.num_y; ++y) {
          const double pxy = problem.p_x[x] * problem.lik(w, x, y);
          if (pxy > 0.0) inner += pxy * log_q[d * problem.num_x + x][y];
        }
      }
      risk -= problem.prior[w] * pd * inner;
    }
  }
  return risk;
}

OracleInstance make_oracle_instance(std::uint64_t seed, const ToyInstanceSizes& sizes) {
  std::mt19937_64 rng(seed);
  OracleInstance inst;
  inst.problem = random_toy_problem(rng, sizes);
  std::discrete_distribution<std::size_t> pick_w(inst.problem.prior.begin(), inst.problem.prior.end());
  const std::size_t w_true = pick_w(rng);
  const auto p_tilde = random_simplex(rng, inst.problem.num_y, 1.0);
  std::uniform_int_distribution<std::size_t> pick_n(0, sizes.max_n);
  inst.data = sample_label_biased(inst.problem, p_tilde, pick_n(rng), w_true, rng);
  return inst;
}

OracleSuiteResult run_oracle_suite(std::size_t count, double tolerance, std::uint64_t base_seed,
                                   const ToyInstanceSizes& sizes) {
  OracleSuiteResult r;
  r.tolerance = tolerance;
  for (std::size_t i = 0; i < count; ++i) {
    const std::uint64_t seed = base_seed + i;
    const OracleInstance inst = make_oracle_instance(seed, sizes);
    const auto a = posterior_firstprinciples(inst.problem, inst.data);
    const auto b = posterior_surrogate(inst.problem, inst.data);
    double diff = 0.0;
    for (std::size_t w = 0; w < a.weights.size(); ++w) diff = std::max(diff, std::abs(a.weights[w] - b.weights[w]));
    const bool pass = diff < tolerance;
    r.instances.push_back({seed, diff, pass});
    if (pass) ++r.passed;
  }
  return r;
}

nlohmann::json to_json(const DiscreteToyProblem& p) {
  return {{"num_x", p.num_x}, {"num_y", p.num_y}, {"num_w", p.num_w},
          {"prior", p.prior}, {"likelihood", p.likelihood}, {"p_x", p.p_x}};
}

nlohmann::json to_json(const ToyData& data) {
  nlohmann::json a = nlohmann::json::array();
  for (const auto& o : data) a.push_back({o.x, o.y});
  return a;
}

DiscreteToyProblem toy_problem_from_json(const nlohmann::json& j) {
  DiscreteToyProblem p;
  try {
    p.num_x = j.at("num_x").get<std::size_t>();
    p.num_y = j.at("num_y").get<std::size_t>();
    p.num_w = j.at("num_w").get<std::size_t>();
    p.prior = j.at("prior").get<std::vector<double>>();
    p.likelihood = j.at("likelihood").get<std::vector<double>>();
    p.p_x = j.at("p_x").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("toy problem: ") + e.what());
  }
  p.validate();
  return p;
}

ToyData toy_data_from_json(const nlohmann::json& j) {
  ToyData d;
  for (const auto& o : j) d.push_back({o.at(0).get<std::size_t>(), o.at(1).get<std::size_t>()});
  return d;
}

}  // namespace biascorr
