#pragma once

// Experiment configuration and the runs the command line drives.
//
// {
//   "data":  {"scenario": "binary-overlap", "prevalence": 0.3, "ptilde": [0.5, 0.5],
//             "train_n": 2000, "eval_n": 4000, "seed": 1}
//         or {"train_csv": "...", "eval_csv": "...", "true_marginal": [...]},
//   "train": {"loss": "bayes_ig", "scorer": {...}, "likelihood": "softmax", ...},
//   "eval":  {"prevalences": [0.3, 0.001], "seeds": [0, 1, 2, 3, 4], "histogram_bins": 20},
//   "output_dir": "out"
// }
//
// Missing keys take defaults, unknown keys are rejected. Errors name the
// offending field path.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "biascorr/sampling.hpp"
#include "biascorr/trainer.hpp"

namespace biascorr {

struct DataSection {
  std::string scenario = "binary-overlap";
  std::optional<double> prevalence;
  std::vector<double> true_marginal;  // overrides the scenario's
  std::vector<double> ptilde;         // empty: uniform
  std::size_t train_n = 2000;
  std::size_t eval_n = 4000;
  std::uint64_t seed = 1;
  std::string train_csv;
  std::string eval_csv;

  bool from_csv() const { return !train_csv.empty(); }
};

struct EvalSection {
  std::vector<double> prevalences;
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  std::size_t histogram_bins = 20;
};

struct ExperimentConfig {
  DataSection data;
  TrainConfig train;
  // Empty means the rebalanced sampler draws classes uniformly.
  std::vector<double> batch_marginal;
  EvalSection eval;
  std::string output_dir = "out";
};

ExperimentConfig parse_experiment_config(const nlohmann::json& j);
// Reads and parses; a missing or malformed file is a ConfigError.
ExperimentConfig load_experiment_config(const std::filesystem::path& path);
nlohmann::json to_json(const ExperimentConfig& config);

PopulationModel population_for(const std::string& scenario, double prevalence);
std::vector<std::string> scenario_names();

// Population, datasets and a fully resolved TrainConfig for one run.
struct PreparedRun {
  std::optional<PopulationModel> population;  // absent for CSV data
  Dataset train_data;
  Dataset eval_data;
  TrainConfig train;
};

// prevalence overrides the binary true marginal; data_stream selects the
// dataset draw (sweep seeds use their own draws).
PreparedRun prepare_run(const ExperimentConfig& config, std::optional<double> prevalence = std::nullopt,
                        std::uint64_t data_stream = 0);

struct RunOutcome {
  TrainResult result;
  MetricsReport report;
  RocResult roc;          // binary only
  Histogram histogram;    // scores of class 1 for binary, argmax otherwise
  // Mean |p(1|x) - posterior(1|x)| over the eval set against the analytic
  // posterior at the true marginal. NaN without a synthetic population.
  double calibration_mae = 0.0;
};

RunOutcome evaluate_params(const PreparedRun& run, const ParamVector& params, std::size_t histogram_bins);
RunOutcome run_prepared(const PreparedRun& run, std::size_t histogram_bins);

// Writes params.csv, trace.jsonl and report.json into output_dir.
RunOutcome run_train(const ExperimentConfig& config, const std::string& invocation);
// Loads params and writes eval_report.json, roc.csv and histogram.csv.
RunOutcome run_eval(const ExperimentConfig& config, const std::filesystem::path& params_path,
                    const std::string& invocation);

struct SweepRow {
  double prevalence = 0.0;
  LossKind loss = LossKind::weighted;
  std::uint64_t seed = 0;
  MetricsReport report;
  double calibration_mae = 0.0;
  std::string status = "ok";
};

// prevalences x {weighted, bayes_ig} x seeds. Failed runs keep their row with
// the error in status. Writes sweep.csv and per-run ROC/histogram CSVs under
// output_dir/runs. jobs = 0 picks min(points, hardware threads).
std::vector<SweepRow> run_sweep(const ExperimentConfig& config, std::size_t jobs, const std::string& invocation);

std::string sweep_csv(const std::vector<SweepRow>& rows, const std::string& invocation);
std::string run_id(double prevalence, LossKind loss, std::uint64_t seed);

}  // namespace biascorr
