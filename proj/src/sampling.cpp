#include "biascorr/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "biascorr/error.hpp"
#include "biascorr/likelihoods.hpp"
#include "biascorr/marginal.hpp"

namespace biascorr {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct FactoredComponent {
  double log_weight;
  VectorXd mean;
  MatrixXd chol;  // lower factor L with L L^T = cov
  double log_det;
};

std::vector<std::vector<FactoredComponent>> factor(const PopulationModel& model) {
  std::vector<std::vector<FactoredComponent>> out(model.num_classes());
  const auto d = static_cast<Eigen::Index>(model.dim);
  for (std::size_t y = 0; y < model.num_classes(); ++y) {
    for (const auto& c : model.classes[y].components) {
      MatrixXd cov = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
          c.cov.data(), d, d);
      Eigen::LLT<MatrixXd> llt(cov);
      if (llt.info() != Eigen::Success) {
        throw ConfigError("class " + std::to_string(y) + ": covariance is not positive definite");
      }
      MatrixXd l = llt.matrixL();
      const double log_det = 2.0 * l.diagonal().array().log().sum();
      out[y].push_back({std::log(c.weight), Eigen::Map<const VectorXd>(c.mean.data(), d), std::move(l), log_det});
    }
  }
  return out;
}

double component_log_density(const FactoredComponent& c, std::span<const double> x) {
  const auto d = c.mean.size();
  VectorXd diff = Eigen::Map<const VectorXd>(x.data(), d) - c.mean;
  const VectorXd z = c.chol.triangularView<Eigen::Lower>().solve(diff);
  return -0.5 * (static_cast<double>(d) * std::log(2.0 * std::numbers::pi) + c.log_det + z.squaredNorm());
}

double mixture_log_density(const std::vector<FactoredComponent>& comps, std::span<const double> x) {
  std::vector<double> terms;
  terms.reserve(comps.size());
  for (const auto& c : comps) terms.push_back(c.log_weight + component_log_density(c, x));
  return log_sum_exp(terms);
}

// Draws one feature vector of class y into out.
template <class Rng>
void draw_features(const std::vector<FactoredComponent>& comps, const ClassConditional& cls, Rng& rng,
                   std::span<double> out) {
  std::size_t which = 0;
  if (comps.size() > 1) {
    std::vector<double> w;
    for (const auto& c : cls.components) w.push_back(c.weight);
    std::discrete_distribution<std::size_t> pick(w.begin(), w.end());
    which = pick(rng);
  }
  const auto& c = comps[which];
  std::normal_distribution<double> normal(0.0, 1.0);
  VectorXd z(c.mean.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = normal(rng);
  const VectorXd v = c.mean + c.chol * z;
  for (Eigen::Index i = 0; i < v.size(); ++i) out[static_cast<std::size_t>(i)] = v[i];
}

PopulationModel unit_gaussians(std::vector<std::vector<double>> means, std::vector<double> marginal) {
  PopulationModel m;
  m.dim = means.front().size();
  std::vector<double> eye(m.dim * m.dim, 0.0);
  for (std::size_t i = 0; i < m.dim; ++i) eye[i * m.dim + i] = 1.0;
  for (auto& mu : means) m.classes.push_back({{GaussianComponent{1.0, std::move(mu), eye}}});
  m.true_marginal = std::move(marginal);
  return m;
}

std::vector<double> frequencies(std::span<const Label> labels, std::size_t k) {
  std::vector<double> f(k, 0.0);
  for (Label y : labels) f[y] += 1.0;
  for (double& v : f) v /= static_cast<double>(labels.size());
  return f;
}

}  // namespace

void PopulationModel::validate() const {
  if (dim == 0) throw ConfigError("population: dim must be positive");
  if (classes.size() < 2) throw ConfigError("population: need at least two classes");
  if (true_marginal.size() != classes.size()) throw ConfigError("population: marginal/class count mismatch");
  validate_distribution(true_marginal, "population true marginal");
  for (std::size_t y = 0; y < classes.size(); ++y) {
    const auto& comps = classes[y].components;
    if (comps.empty()) throw ConfigError("population: class " + std::to_string(y) + " has no components");
    double s = 0.0;
    for (const auto& c : comps) {
      if (c.mean.size() != dim || c.cov.size() != dim * dim) {
        throw ConfigError("population: component shape mismatch in class " + std::to_string(y));
      }
      if (!(c.weight > 0.0)) throw ConfigError("population: mixture weights must be positive");
      s += c.weight;
    }
    if (std::abs(s - 1.0) > 1e-12) throw ConfigError("population: mixture weights must sum to 1");
  }
  factor(*this);
}

PopulationModel PopulationModel::with_marginal(std::vector<double> p) const {
  PopulationModel m = *this;
  m.true_marginal = std::move(p);
  return m;
}

PopulationModel PopulationModel::binary_overlap(double prevalence) {
  return unit_gaussians({{-1.0, 0.0}, {1.0, 0.0}}, {1.0 - prevalence, prevalence});
}

PopulationModel PopulationModel::binary_separable(double prevalence) {
  return unit_gaussians({{-3.0, 0.0}, {3.0, 0.0}}, {1.0 - prevalence, prevalence});
}

PopulationModel PopulationModel::ordinal5() {
  return unit_gaussians({{-2.0, 0.0}, {-1.0, 0.0}, {0.0, 0.0}, {1.0, 0.0}, {2.0, 0.0}},
                        {0.075, 0.2, 0.45, 0.2, 0.075});
}

std::vector<std::size_t> Dataset::class_counts() const {
  std::vector<std::size_t> c(num_classes, 0);
  for (Label y : labels) ++c[y];
  return c;
}

std::vector<std::size_t> quota_counts(std::span<const double> shares, std::size_t n) {
  const std::size_t k = shares.size();
  std::vector<std::size_t> counts(k);
  std::vector<double> rem(k);
  std::size_t assigned = 0;
  for (std::size_t y = 0; y < k; ++y) {
    const double exact = shares[y] * static_cast<double>(n);
    counts[y] = static_cast<std::size_t>(std::floor(exact));
    rem[y] = exact - static_cast<double>(counts[y]);
    assigned += counts[y];
  }
  std::vector<std::size_t> order(k);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return rem[a] > rem[b]; });
  for (std::size_t i = 0; assigned < n; i = (i + 1) % k) {
    ++counts[order[i]];
    ++assigned;
  }
  // Floating error on shares summing to 1 within 1e-12 could overshoot.
  for (std::size_t i = k; assigned > n && i-- > 0;) {
    const std::size_t y = order[i];
    if (counts[y] > 0) {
      --counts[y];
      --assigned;
    }
  }
  return counts;
}

Dataset sample_population(const PopulationModel& model, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw UsageError("sample_population: n must be >= 1");
  model.validate();
  const auto comps = factor(model);
  std::mt19937_64 rng(seed);
  std::discrete_distribution<std::size_t> label_dist(model.true_marginal.begin(), model.true_marginal.end());
  Dataset ds;
  ds.num_classes = model.num_classes();
  ds.features = Matrix(n, model.dim);
  ds.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Label y = label_dist(rng);
    ds.labels[i] = y;
    draw_features(comps[y], model.classes[y], rng, ds.features.row(i));
  }
  ds.apparent_marginal = model.true_marginal;
  ds.provenance = {seed, {{"sampler", "population"}, {"n", n}, {"model", to_json(model)}}};
  return ds;
}

Dataset sample_biased_trainset(const PopulationModel& model, std::span<const double> p_tilde, std::size_t n,
                               std::uint64_t seed) {
  if (n == 0) throw UsageError("sample_biased_trainset: n must be >= 1");
  model.validate();
  if (p_tilde.size() != model.num_classes()) throw ConfigError("p_tilde has the wrong number of classes");
  validate_distribution(p_tilde, "p_tilde");
  const auto comps = factor(model);
  const auto counts = quota_counts(p_tilde, n);
  std::vector<Label> labels;
  labels.reserve(n);
  for (Label y = 0; y < counts.size(); ++y) labels.insert(labels.end(), counts[y], y);
  std::mt19937_64 rng(seed);
  std::shuffle(labels.begin(), labels.end(), rng);

  Dataset ds;
  ds.num_classes = model.num_classes();
  ds.features = Matrix(n, model.dim);
  for (std::size_t i = 0; i < n; ++i) {
    draw_features(comps[labels[i]], model.classes[labels[i]], rng, ds.features.row(i));
  }
  ds.labels = std::move(labels);
  ds.apparent_marginal = frequencies(ds.labels, ds.num_classes);
  ds.provenance = {seed,
                   {{"sampler", "label_biased"},
                    {"n", n},
                    {"p_tilde", std::vector<double>(p_tilde.begin(), p_tilde.end())},
                    {"model", to_json(model)}}};
  return ds;
}

BatchSampler::BatchSampler(SamplerMode mode, std::size_t batch_size, std::uint64_t seed,
                           std::vector<double> batch_marginal)
    : mode_(mode), batch_size_(batch_size), batch_marginal_(std::move(batch_marginal)), rng_(seed) {
  if (batch_size_ == 0) throw ConfigError("batch_size must be positive");
  if (!batch_marginal_.empty()) validate_distribution(batch_marginal_, "batch marginal");
}

void BatchSampler::index_classes(const Dataset& data) {
  if (indexed_ == &data && indexed_size_ == data.size()) return;
  by_class_.assign(data.num_classes, {});
  for (std::size_t i = 0; i < data.size(); ++i) by_class_[data.labels[i]].push_back(i);
  indexed_ = &data;
  indexed_size_ = data.size();
}

Batch BatchSampler::next_batch(const Dataset& data) {
  if (data.size() == 0) throw PreconditionError("next_batch: empty dataset");
  Batch b;
  b.features = Matrix(batch_size_, data.features.cols);
  b.labels.resize(batch_size_);
  std::vector<std::size_t> rows(batch_size_);
  if (mode_ == SamplerMode::natural) {
    std::uniform_int_distribution<std::size_t> pick(0, data.size() - 1);
    for (auto& r : rows) r = pick(rng_);
  } else {
    index_classes(data);
    std::vector<double> marginal = batch_marginal_;
    if (marginal.empty()) marginal.assign(data.num_classes, 1.0 / static_cast<double>(data.num_classes));
    if (marginal.size() != data.num_classes) throw ConfigError("batch marginal has the wrong class count");
    for (Label y = 0; y < marginal.size(); ++y) {
      if (marginal[y] > 0.0 && by_class_[y].empty()) {
        throw PreconditionError("rebalanced sampling: class " + std::to_string(y) + " is absent from the dataset");
      }
    }
    std::discrete_distribution<std::size_t> pick_class(marginal.begin(), marginal.end());
    for (auto& r : rows) {
      const auto& members = by_class_[pick_class(rng_)];
      std::uniform_int_distribution<std::size_t> pick(0, members.size() - 1);
      r = members[pick(rng_)];
    }
  }
  for (std::size_t i = 0; i < batch_size_; ++i) {
    const auto src = data.features.row(rows[i]);
    std::copy(src.begin(), src.end(), b.features.row(i).begin());
    b.labels[i] = data.labels[rows[i]];
  }
  return b;
}

double class_log_density(const PopulationModel& model, Label y, std::span<const double> x) {
  if (y >= model.num_classes()) throw DomainError("class out of range");
  if (x.size() != model.dim) throw ShapeError("feature vector has the wrong dimension");
  const auto comps = factor(model);
  return mixture_log_density(comps[y], x);
}

std::vector<double> analytic_posterior(const PopulationModel& model, std::span<const double> x,
                                       std::span<const double> at_marginal, bool* underflow) {
  if (x.size() != model.dim) throw ShapeError("feature vector has the wrong dimension");
  if (at_marginal.size() != model.num_classes()) throw ShapeError("marginal has the wrong class count");
  const auto comps = factor(model);
  const std::size_t k = model.num_classes();
  std::vector<double> logw(k);
  for (Label y = 0; y < k; ++y) {
    logw[y] = at_marginal[y] > 0.0 ? std::log(at_marginal[y]) + mixture_log_density(comps[y], x)
                                   : -std::numeric_limits<double>::infinity();
  }
  const double lse = log_sum_exp(logw);
  if (underflow != nullptr) *underflow = false;
  if (!std::isfinite(lse)) {
    if (underflow != nullptr) *underflow = true;
    return {at_marginal.begin(), at_marginal.end()};
  }
  std::vector<double> post(k);
  for (Label y = 0; y < k; ++y) post[y] = std::exp(logw[y] - lse);
  return post;
}

nlohmann::json to_json(const PopulationModel& model) {
  nlohmann::json classes = nlohmann::json::array();
  for (const auto& c : model.classes) {
    nlohmann::json comps = nlohmann::json::array();
    for (const auto& g : c.components) comps.push_back({{"weight", g.weight}, {"mean", g.mean}, {"cov", g.cov}});
    classes.push_back(comps);
  }
  return {{"dim", model.dim}, {"true_marginal", model.true_marginal}, {"classes", classes}};
}

PopulationModel population_from_json(const nlohmann::json& j) {
  PopulationModel m;
  try {
    m.dim = j.at("dim").get<std::size_t>();
    m.true_marginal = j.at("true_marginal").get<std::vector<double>>();
    for (const auto& c : j.at("classes")) {
      ClassConditional cls;
      for (const auto& g : c) {
        cls.components.push_back({g.at("weight").get<double>(), g.at("mean").get<std::vector<double>>(),
                                  g.at("cov").get<std::vector<double>>()});
      }
      m.classes.push_back(std::move(cls));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("population model: ") + e.what());
  }
  m.validate();
  return m;
}

const char* to_string(SamplerMode mode) { return mode == SamplerMode::rebalanced ? "rebalanced" : "natural"; }

SamplerMode sampler_mode_from_string(const std::string& s) {
  if (s == "rebalanced") return SamplerMode::rebalanced;
  if (s == "natural") return SamplerMode::natural;
  throw ConfigError("unknown sampler mode '" + s + "'");
}

}  // namespace biascorr
