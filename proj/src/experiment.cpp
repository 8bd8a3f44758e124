#include "biascorr/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <set>
#include <thread>

#include "biascorr/error.hpp"
#include "biascorr/io.hpp"
#include "biascorr/seed.hpp"

namespace biascorr {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Typed access to one JSON object that remembers which keys were read, so
// leftovers can be reported as unknown.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail(path_, "expected an object");
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  const json* raw(const std::string& key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  double number(const std::string& key, double def) {
    const json* v = raw(key);
    if (!v) return def;
    if (!v->is_number()) fail(at(key), "expected a number");
    return v->get<double>();
  }

  std::optional<double> optional_number(const std::string& key) {
    if (!has(key)) {
      raw(key);
      return std::nullopt;
    }
    return number(key, 0.0);
  }

  std::uint64_t count(const std::string& key, std::uint64_t def) {
    const json* v = raw(key);
    if (!v) return def;
    return as_count(*v, at(key));
  }

  std::string string(const std::string& key, const std::string& def) {
    const json* v = raw(key);
    if (!v) return def;
    if (!v->is_string()) fail(at(key), "expected a string");
    return v->get<std::string>();
  }

  std::vector<double> numbers(const std::string& key, std::vector<double> def) {
    const json* v = raw(key);
    if (!v) return def;
    if (!v->is_array()) fail(at(key), "expected an array of numbers");
    std::vector<double> out;
    for (std::size_t i = 0; i < v->size(); ++i) {
      if (!(*v)[i].is_number()) fail(at(key) + "[" + std::to_string(i) + "]", "expected a number");
      out.push_back((*v)[i].get<double>());
    }
    return out;
  }

  std::vector<std::uint64_t> counts(const std::string& key, std::vector<std::uint64_t> def) {
    const json* v = raw(key);
    if (!v) return def;
    if (!v->is_array()) fail(at(key), "expected an array of nonnegative integers");
    std::vector<std::uint64_t> out;
    for (std::size_t i = 0; i < v->size(); ++i) out.push_back(as_count((*v)[i], at(key) + "[" + std::to_string(i) + "]"));
    return out;
  }

  Section child(const std::string& key) {
    const json* v = raw(key);
    static const json empty = json::object();
    return Section(v ? *v : empty, at(key));
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) fail(at(it.key()), "unknown key");
    }
  }

  std::string at(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  [[noreturn]] static void fail(const std::string& path, const std::string& what) {
    throw ConfigError((path.empty() ? std::string("<root>") : path) + ": " + what);
  }

 private:
  static std::uint64_t as_count(const json& v, const std::string& path) {
    if (v.is_number_unsigned()) return v.get<std::uint64_t>();
    if (v.is_number_integer() && v.get<std::int64_t>() >= 0) return static_cast<std::uint64_t>(v.get<std::int64_t>());
    fail(path, "expected a nonnegative integer");
  }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

// Runs a parse step, prefixing any ConfigError that lacks a path.
template <class F>
auto with_path(const std::string& path, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

std::vector<double> uniform(std::size_t k) { return std::vector<double>(k, 1.0 / static_cast<double>(k)); }

std::string sanitize(std::string s) {
  for (char& c : s) {
    if (c == ',' || c == '\n' || c == '\r') c = ';';
  }
  return s;
}

}  // namespace

std::vector<std::string> scenario_names() { return {"binary-overlap", "binary-separable", "ordinal5"}; }

PopulationModel population_for(const std::string& scenario, double prevalence) {
  if (scenario == "binary-overlap") return PopulationModel::binary_overlap(prevalence);
  if (scenario == "binary-separable") return PopulationModel::binary_separable(prevalence);
  if (scenario == "ordinal5") return PopulationModel::ordinal5();
  throw ConfigError("unknown scenario '" + scenario + "'");
}

ExperimentConfig parse_experiment_config(const json& j) {
  ExperimentConfig c;
  Section root(j, "");

  Section data = root.child("data");
  c.data.scenario = data.string("scenario", c.data.scenario);
  c.data.prevalence = data.optional_number("prevalence");
  c.data.true_marginal = data.numbers("true_marginal", {});
  c.data.ptilde = data.numbers("ptilde", {});
  c.data.train_n = data.count("train_n", c.data.train_n);
  c.data.eval_n = data.count("eval_n", c.data.eval_n);
  c.data.seed = data.count("seed", c.data.seed);
  c.data.train_csv = data.string("train_csv", "");
  c.data.eval_csv = data.string("eval_csv", "");
  data.finish();

  if (c.data.from_csv() != !c.data.eval_csv.empty()) {
    Section::fail(data.at(c.data.from_csv() ? "eval_csv" : "train_csv"), "train_csv and eval_csv go together");
  }
  if (c.data.from_csv()) {
    if (data.has("scenario")) Section::fail(data.at("scenario"), "not allowed with CSV data");
    if (c.data.true_marginal.empty() && !c.data.prevalence) {
      Section::fail(data.at("true_marginal"), "CSV data needs true_marginal or prevalence");
    }
  } else {
    with_path(data.at("scenario"), [&] { return population_for(c.data.scenario, 0.5); });
    if (c.data.train_n == 0) Section::fail(data.at("train_n"), "must be >= 1");
    if (c.data.eval_n == 0) Section::fail(data.at("eval_n"), "must be >= 1");
  }
  if (c.data.prevalence) {
    if (!(*c.data.prevalence > 0.0 && *c.data.prevalence < 1.0)) Section::fail(data.at("prevalence"), "must lie in (0, 1)");
    if (!c.data.true_marginal.empty()) Section::fail(data.at("prevalence"), "give prevalence or true_marginal, not both");
    if (c.data.scenario == "ordinal5" && !c.data.from_csv()) Section::fail(data.at("prevalence"), "binary scenarios only");
  }
  if (!c.data.true_marginal.empty()) {
    with_path(data.at("true_marginal"), [&] { validate_distribution(c.data.true_marginal, "true_marginal"); });
  }
  if (!c.data.ptilde.empty()) {
    with_path(data.at("ptilde"), [&] { validate_distribution(c.data.ptilde, "ptilde"); });
  }

  Section tr = root.child("train");
  TrainConfig& t = c.train;
  t.loss = with_path(tr.at("loss"), [&] { return loss_kind_from_string(tr.string("loss", to_string(t.loss))); });
  {
    Section sc = tr.child("scorer");
    t.scorer.kind = with_path(sc.at("kind"), [&] { return scorer_kind_from_string(sc.string("kind", "mlp")); });
    std::vector<std::size_t> hidden;
    for (auto h : sc.counts("hidden", {8})) hidden.push_back(static_cast<std::size_t>(h));
    t.scorer.hidden_dims = hidden;
    t.scorer.activation =
        with_path(sc.at("activation"), [&] { return activation_from_string(sc.string("activation", "relu")); });
    t.scorer.kernel_units = sc.count("kernel_units", t.scorer.kernel_units);
    t.scorer.kernel_bandwidth = sc.number("kernel_bandwidth", t.scorer.kernel_bandwidth);
    sc.finish();
  }
  t.likelihood.kind =
      with_path(tr.at("likelihood"), [&] { return likelihood_kind_from_string(tr.string("likelihood", "softmax")); });
  t.sampler_mode =
      with_path(tr.at("sampler"), [&] { return sampler_mode_from_string(tr.string("sampler", "rebalanced")); });
  t.batch_size = tr.count("batch_size", t.batch_size);
  t.learning_rate = tr.number("learning_rate", t.learning_rate);
  t.momentum = tr.number("momentum", t.momentum);
  t.steps = tr.count("steps", t.steps);
  t.tracker_learning_rate = tr.number("tracker_learning_rate", t.tracker_learning_rate);
  t.tracker_init = with_path(tr.at("tracker_init"),
                             [&] { return tracker_init_from_string(tr.string("tracker_init", to_string(t.tracker_init))); });
  t.eval_every = tr.count("eval_every", t.eval_every);
  t.seed = tr.count("seed", t.seed);
  c.batch_marginal = tr.numbers("batch_marginal", {});
  tr.finish();
  if (t.steps == 0) Section::fail(tr.at("steps"), "must be >= 1");
  if (!(t.learning_rate >= 0.0)) Section::fail(tr.at("learning_rate"), "must be >= 0");
  if (!(t.momentum >= 0.0 && t.momentum < 1.0)) Section::fail(tr.at("momentum"), "must lie in [0, 1)");
  if (t.batch_size == 0) Section::fail(tr.at("batch_size"), "must be >= 1");
  if (t.eval_every == 0) Section::fail(tr.at("eval_every"), "must be >= 1");
  if (!c.batch_marginal.empty()) {
    with_path(tr.at("batch_marginal"), [&] { validate_distribution(c.batch_marginal, "batch_marginal"); });
  }

  Section ev = root.child("eval");
  c.eval.prevalences = ev.numbers("prevalences", {});
  c.eval.seeds = ev.counts("seeds", c.eval.seeds);
  c.eval.histogram_bins = ev.count("histogram_bins", c.eval.histogram_bins);
  ev.finish();
  for (std::size_t i = 0; i < c.eval.prevalences.size(); ++i) {
    const double p = c.eval.prevalences[i];
    if (!(p > 0.0 && p < 1.0)) Section::fail(ev.at("prevalences") + "[" + std::to_string(i) + "]", "must lie in (0, 1)");
  }
  if (c.eval.histogram_bins == 0) Section::fail(ev.at("histogram_bins"), "must be >= 1");

  c.output_dir = root.string("output_dir", c.output_dir);
  root.finish();
  return c;
}

ExperimentConfig load_experiment_config(const fs::path& path) {
  if (!fs::exists(path)) throw ConfigError("config file not found: " + path.string());
  json j;
  try {
    j = json::parse(read_text(path));
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  } catch (const IoError& e) {
    throw ConfigError(e.what());
  }
  return parse_experiment_config(j);
}

json to_json(const ExperimentConfig& c) {
  json data = json::object();
  if (c.data.from_csv()) {
    data["train_csv"] = c.data.train_csv;
    data["eval_csv"] = c.data.eval_csv;
  } else {
    data["scenario"] = c.data.scenario;
    data["train_n"] = c.data.train_n;
    data["eval_n"] = c.data.eval_n;
  }
  if (c.data.prevalence) data["prevalence"] = *c.data.prevalence;
  if (!c.data.true_marginal.empty()) data["true_marginal"] = c.data.true_marginal;
  if (!c.data.ptilde.empty()) data["ptilde"] = c.data.ptilde;
  data["seed"] = c.data.seed;

  const TrainConfig& t = c.train;
  json scorer = {{"kind", to_string(t.scorer.kind)},
                 {"hidden", t.scorer.hidden_dims},
                 {"activation", to_string(t.scorer.activation)},
                 {"kernel_units", t.scorer.kernel_units},
                 {"kernel_bandwidth", t.scorer.kernel_bandwidth}};
  json train = {{"loss", to_string(t.loss)},
                {"scorer", scorer},
                {"likelihood", to_string(t.likelihood.kind)},
                {"sampler", to_string(t.sampler_mode)},
                {"batch_size", t.batch_size},
                {"learning_rate", t.learning_rate},
                {"momentum", t.momentum},
                {"steps", t.steps},
                {"tracker_learning_rate", t.tracker_learning_rate},
                {"tracker_init", to_string(t.tracker_init)},
                {"eval_every", t.eval_every},
                {"seed", t.seed}};
  if (!c.batch_marginal.empty()) train["batch_marginal"] = c.batch_marginal;
  json eval = {{"prevalences", c.eval.prevalences}, {"seeds", c.eval.seeds}, {"histogram_bins", c.eval.histogram_bins}};
  return {{"data", data}, {"train", train}, {"eval", eval}, {"output_dir", c.output_dir}};
}

PreparedRun prepare_run(const ExperimentConfig& config, std::optional<double> prevalence, std::uint64_t data_stream) {
  PreparedRun run;
  const DataSection& d = config.data;
  std::vector<double> true_marginal = d.true_marginal;
  const std::optional<double> prev = prevalence ? prevalence : d.prevalence;
  if (prevalence && !true_marginal.empty() && true_marginal.size() != 2) {
    throw ConfigError("a prevalence override needs a binary problem");
  }
  if (prev) true_marginal = {1.0 - *prev, *prev};

  if (d.from_csv()) {
    const std::size_t k = true_marginal.size();
    run.train_data = read_dataset_csv(d.train_csv, k);
    run.eval_data = read_dataset_csv(d.eval_csv, k);
    if (run.eval_data.features.cols != run.train_data.features.cols) {
      throw ConfigError("data: train and eval CSV have different feature counts");
    }
  } else {
    PopulationModel pop = population_for(d.scenario, prev.value_or(0.3));
    if (!true_marginal.empty()) {
      if (true_marginal.size() != pop.num_classes()) throw ConfigError("data.true_marginal: wrong class count for scenario");
      pop = pop.with_marginal(true_marginal);
    }
    const std::vector<double> ptilde = d.ptilde.empty() ? uniform(pop.num_classes()) : d.ptilde;
    if (ptilde.size() != pop.num_classes()) throw ConfigError("data.ptilde: wrong class count for scenario");
    run.train_data = sample_biased_trainset(pop, ptilde, d.train_n, derive_seed(d.seed, 2 * data_stream));
    run.eval_data = sample_biased_trainset(pop, ptilde, d.eval_n, derive_seed(d.seed, 2 * data_stream + 1));
    true_marginal = pop.true_marginal;
    run.population = std::move(pop);
  }

  const std::size_t k = true_marginal.size();
  TrainConfig& t = run.train;
  t = config.train;
  if (t.likelihood.kind == LikelihoodKind::softmax) t.likelihood = LikelihoodModel::softmax(k);
  if (t.likelihood.kind == LikelihoodKind::bernoulli) t.likelihood = LikelihoodModel::bernoulli();
  if (t.likelihood.kind == LikelihoodKind::onion_peeling) t.likelihood = LikelihoodModel::onion_peeling();
  if (t.likelihood.num_classes != k) {
    throw ConfigError(std::string("train.likelihood: ") + to_string(t.likelihood.kind) + " has " +
                      std::to_string(t.likelihood.num_classes) + " classes, data has " + std::to_string(k));
  }
  t.scorer.input_dim = run.train_data.features.cols;
  t.scorer.output_dim = t.likelihood.logit_count();
  std::vector<double> batch_marginal;
  if (t.sampler_mode == SamplerMode::rebalanced) {
    batch_marginal = config.batch_marginal.empty() ? uniform(k) : config.batch_marginal;
    if (batch_marginal.size() != k) throw ConfigError("train.batch_marginal: wrong class count");
  } else {
    batch_marginal = run.train_data.apparent_marginal;
  }
  t.prevalence = PrevalenceSpec{true_marginal, batch_marginal};
  t.validate();
  return run;
}

RunOutcome evaluate_params(const PreparedRun& run, const ParamVector& params, std::size_t histogram_bins) {
  RunOutcome out;
  const TrainConfig& t = run.train;
  const Dataset& ev = run.eval_data;
  out.report = evaluate(params, t, ev);
  const auto probs = predict(params, t.scorer, t.likelihood, ev.features);
  const std::size_t k = t.likelihood.num_classes;
  if (k == 2) {
    std::vector<double> scores(probs.size());
    for (std::size_t i = 0; i < probs.size(); ++i) scores[i] = probs[i][1];
    const auto counts = ev.class_counts();
    if (counts[0] > 0 && counts[1] > 0) out.roc = roc_auc(scores, ev.labels);
    out.histogram = probability_histogram(scores, ev.labels, histogram_bins, 2);
  }
  if (run.population) {
    std::vector<double> pred, exact;
    pred.reserve(ev.size() * k);
    exact.reserve(ev.size() * k);
    for (std::size_t i = 0; i < ev.size(); ++i) {
      const auto a = analytic_posterior(*run.population, ev.features.row(i), t.prevalence.true_marginal);
      pred.insert(pred.end(), probs[i].begin(), probs[i].end());
      exact.insert(exact.end(), a.begin(), a.end());
    }
    // Binary: the two class errors are equal, so this is |p(1|x) - posterior(1|x)|.
    out.calibration_mae = calibration_error(pred, exact) * static_cast<double>(k) / 2.0;
  } else {
    out.calibration_mae = std::numeric_limits<double>::quiet_NaN();
  }
  return out;
}

RunOutcome run_prepared(const PreparedRun& run, std::size_t histogram_bins) {
  TrainResult result = train(run.train, run.train_data, run.eval_data);
  RunOutcome out = evaluate_params(run, result.params, histogram_bins);
  out.result = std::move(result);
  return out;
}

namespace {

json report_document(const RunOutcome& out, const std::string& invocation) {
  json j = to_json(out.report);
  j["calibration_mae"] = std::isfinite(out.calibration_mae) ? json(out.calibration_mae) : json(nullptr);
  j["invocation"] = invocation;
  return j;
}

}  // namespace

RunOutcome run_train(const ExperimentConfig& config, const std::string& invocation) {
  const PreparedRun run = prepare_run(config);
  RunOutcome out = run_prepared(run, config.eval.histogram_bins);
  const fs::path dir = config.output_dir;
  write_params_csv(dir / "params.csv", out.result.params, invocation);
  write_trace_jsonl(dir / "trace.jsonl", out.result.trace, invocation);
  write_json(dir / "report.json", report_document(out, invocation));
  json resolved = to_json(config);
  resolved["invocation"] = invocation;
  write_json(dir / "config.json", resolved);
  return out;
}

RunOutcome run_eval(const ExperimentConfig& config, const fs::path& params_path, const std::string& invocation) {
  const PreparedRun run = prepare_run(config);
  const ParamVector params = read_params_csv(params_path, run.train.scorer);
  RunOutcome out = evaluate_params(run, params, config.eval.histogram_bins);
  const fs::path dir = config.output_dir;
  write_json(dir / "eval_report.json", report_document(out, invocation));
  if (!out.roc.curve.empty()) write_roc_csv(dir / "roc.csv", out.roc, invocation);
  if (!out.histogram.counts.empty()) write_histogram_csv(dir / "histogram.csv", out.histogram, invocation);
  return out;
}

std::string run_id(double prevalence, LossKind loss, std::uint64_t seed) {
  return "p" + format_double(prevalence) + "_" + to_string(loss) + "_s" + std::to_string(seed);
}

std::vector<SweepRow> run_sweep(const ExperimentConfig& config, std::size_t jobs, const std::string& invocation) {
  if (config.eval.prevalences.empty()) throw ConfigError("eval.prevalences: must be nonempty for a sweep");
  if (config.eval.seeds.empty()) throw ConfigError("eval.seeds: must be nonempty for a sweep");
  if (!config.data.true_marginal.empty() && config.data.true_marginal.size() != 2) {
    throw ConfigError("data.true_marginal: a sweep needs a binary problem");
  }
  if (!config.data.from_csv() && population_for(config.data.scenario, 0.5).num_classes() != 2) {
    throw ConfigError("data.scenario: a sweep needs a binary scenario");
  }

  std::vector<SweepRow> rows;
  for (double p : config.eval.prevalences) {
    for (LossKind loss : {LossKind::weighted, LossKind::bayes_ig}) {
      for (std::uint64_t seed : config.eval.seeds) {
        SweepRow r;
        r.prevalence = p;
        r.loss = loss;
        r.seed = seed;
        rows.push_back(std::move(r));
      }
    }
  }

  const fs::path dir = config.output_dir;
  auto work = [&](SweepRow& row) {
    try {
      ExperimentConfig c = config;
      c.train.loss = row.loss;
      c.train.seed = row.seed;
      const PreparedRun run = prepare_run(c, row.prevalence, row.seed);
      const RunOutcome out = run_prepared(run, config.eval.histogram_bins);
      row.report = out.report;
      row.calibration_mae = out.calibration_mae;
      const fs::path run_dir = dir / "runs" / run_id(row.prevalence, row.loss, row.seed);
      if (!out.roc.curve.empty()) write_roc_csv(run_dir / "roc.csv", out.roc, invocation);
      write_histogram_csv(run_dir / "histogram.csv", out.histogram, invocation);
    } catch (const std::exception& e) {
      const double nan = std::numeric_limits<double>::quiet_NaN();
      row.report = MetricsReport{nan, nan, nan, nan, nan, nan, nan, nan, nan, false, false, std::nullopt, {}};
      row.calibration_mae = nan;
      row.status = "error: " + sanitize(e.what());
    }
  };

  std::size_t hw = std::max<std::size_t>(1, std::thread::hardware_concurrency());
  if (jobs == 0) jobs = std::min(rows.size(), hw);
  jobs = std::clamp<std::size_t>(jobs, 1, rows.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < rows.size(); i = next++) work(rows[i]);
  };
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t i = 0; i < jobs; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  write_text(dir / "sweep.csv", sweep_csv(rows, invocation));
  return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows, const std::string& invocation) {
  std::string s = "# invocation: " + invocation + "\n";
  s += "prevalence,loss,seed,acc,w_acc,ba,ppv,npv,tpr,tnr,auc,exp_log_lik,status\n";
  for (const auto& r : rows) {
    const auto& m = r.report;
    s += format_double(r.prevalence) + "," + to_string(r.loss) + "," + std::to_string(r.seed);
    for (double v : {m.acc, m.w_acc, m.ba, m.ppv, m.npv, m.tpr, m.tnr, m.auc, m.exp_log_lik}) s += "," + format_double(v);
    s += "," + r.status + "\n";
  }
  return s;
}

}  // namespace biascorr
