#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "biascorr/error.hpp"
#include "biascorr/experiment.hpp"
#include "biascorr/io.hpp"

using namespace biascorr;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "biascorr_test_experiment" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

json small_config(const fs::path& out) {
  return json{{"data", {{"scenario", "binary-overlap"}, {"prevalence", 0.3}, {"train_n", 300}, {"eval_n", 300}, {"seed", 4}}},
              {"train", {{"steps", 200}, {"eval_every", 100}}},
              {"eval", {{"prevalences", {0.3, 0.001}}, {"seeds", {0, 1}}, {"histogram_bins", 5}}},
              {"output_dir", out.string()}};
}

std::string config_error(const json& j) {
  try {
    parse_experiment_config(j);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("defaults") {
  const auto c = parse_experiment_config(json::object());
  CHECK(c.data.scenario == "binary-overlap");
  CHECK(c.train.loss == LossKind::bayes_ig);
  CHECK(c.train.scorer.hidden_dims == std::vector<std::size_t>{8});
  CHECK(c.eval.seeds.size() == 5);
  CHECK(c.output_dir == "out");
  const auto run = prepare_run(c);
  CHECK(run.train.prevalence.true_marginal == std::vector<double>{0.7, 0.30000000000000004 - 4e-17});
  CHECK(run.train.prevalence.train_marginal == std::vector<double>{0.5, 0.5});
  CHECK(run.train_data.size() == 2000);
  CHECK(run.eval_data.size() == 4000);
  CHECK(run.train_data.labels != run.eval_data.labels);
}

TEST_CASE("schema violations name the field") {
  CHECK(config_error(json{{"datta", json::object()}}) == "datta: unknown key");
  CHECK(config_error(json{{"train", {{"lr", 0.1}}}}) == "train.lr: unknown key");
  CHECK(config_error(json{{"train", {{"scorer", {{"width", 3}}}}}}) == "train.scorer.width: unknown key");
  CHECK(config_error(json{{"train", {{"steps", -1}}}}).rfind("train.steps:", 0) == 0);
  CHECK(config_error(json{{"train", {{"learning_rate", "fast"}}}}).rfind("train.learning_rate:", 0) == 0);
  CHECK(config_error(json{{"train", {{"loss", "focal"}}}}).rfind("train.loss:", 0) == 0);
  CHECK(config_error(json{{"data", {{"scenario", "cats"}}}}).rfind("data.scenario:", 0) == 0);
  CHECK(config_error(json{{"data", {{"prevalence", 1.5}}}}).rfind("data.prevalence:", 0) == 0);
  CHECK(config_error(json{{"data", {{"ptilde", {0.5, 0.6}}}}}).rfind("data.ptilde:", 0) == 0);
  CHECK(config_error(json{{"eval", {{"prevalences", {0.3, 0.0}}}}}).rfind("eval.prevalences[1]:", 0) == 0);
  CHECK(config_error(json{{"eval", {{"seeds", {1, -2}}}}}).rfind("eval.seeds[1]:", 0) == 0);
  CHECK(config_error(json{{"data", {{"train_csv", "a.csv"}}}}).rfind("data.eval_csv:", 0) == 0);
  CHECK(config_error(json::array()).rfind("<root>:", 0) == 0);
  CHECK_THROWS_AS(load_experiment_config("/nonexistent/cfg.json"), ConfigError);
}

TEST_CASE("resolved config round-trips") {
  const auto c = parse_experiment_config(small_config("x"));
  const auto again = parse_experiment_config(to_json(c));
  CHECK(to_json(again) == to_json(c));
}

TEST_CASE("train then eval reproduces the final report") {
  const fs::path out = scratch("train_eval");
  const auto c = parse_experiment_config(small_config(out));
  const auto trained = run_train(c, "inv");
  CHECK(fs::exists(out / "params.csv"));
  CHECK(fs::exists(out / "trace.jsonl"));
  CHECK(fs::exists(out / "report.json"));
  const auto evald = run_eval(c, out / "params.csv", "inv");
  const auto a = to_json(trained.result.trace.records.back().eval);
  const auto b = to_json(evald.report);
  for (auto it = a.begin(); it != a.end(); ++it) {
    if (!it->is_number()) continue;
    CHECK(std::abs(it->get<double>() - b[it.key()].get<double>()) <= 1e-12);
  }
  CHECK(fs::exists(out / "roc.csv"));
  CHECK(fs::exists(out / "histogram.csv"));
  CHECK(std::isfinite(evald.calibration_mae));
}

TEST_CASE("CSV data needs a true marginal and is read as given") {
  const fs::path dir = scratch("csv");
  const auto pop = PopulationModel::binary_overlap(0.2);
  write_dataset_csv(dir / "tr.csv", sample_biased_trainset(pop, std::vector<double>{0.5, 0.5}, 200, 1), "inv");
  write_dataset_csv(dir / "ev.csv", sample_biased_trainset(pop, std::vector<double>{0.5, 0.5}, 100, 2), "inv");
  json j = {{"data", {{"train_csv", (dir / "tr.csv").string()}, {"eval_csv", (dir / "ev.csv").string()}, {"prevalence", 0.2}}},
            {"train", {{"steps", 50}}},
            {"output_dir", (dir / "out").string()}};
  const auto run = prepare_run(parse_experiment_config(j));
  CHECK(run.train_data.size() == 200);
  CHECK(!run.population.has_value());
  CHECK(run.train.prevalence.true_marginal[1] == 0.2);
  const auto out = run_train(parse_experiment_config(j), "inv");
  CHECK(std::isnan(out.calibration_mae));
  j["data"].erase("prevalence");
  CHECK_THROWS_AS(parse_experiment_config(j), ConfigError);
}

TEST_CASE("likelihood and scenario must agree") {
  json j = {{"data", {{"scenario", "ordinal5"}}}, {"train", {{"likelihood", "bernoulli"}}}};
  CHECK_THROWS_AS(prepare_run(parse_experiment_config(j)), ConfigError);
  j["train"]["likelihood"] = "onion_peeling";
  const auto run = prepare_run(parse_experiment_config(j));
  CHECK(run.train.scorer.output_dim == 4);
  CHECK(run.train.prevalence.train_marginal.size() == 5);
}

TEST_CASE("sweep covers prevalences x losses x seeds") {
  const fs::path out = scratch("sweep");
  const auto c = parse_experiment_config(small_config(out));
  const auto rows = run_sweep(c, 2, "inv");
  CHECK(rows.size() == 2 * 2 * 2);
  for (const auto& r : rows) CHECK(r.status == "ok");
  const std::string csv = read_text(out / "sweep.csv");
  CHECK(csv.find("prevalence,loss,seed,acc,w_acc,ba,ppv,npv,tpr,tnr,auc,exp_log_lik,status\n") != std::string::npos);
  CHECK(fs::exists(out / "runs" / run_id(0.001, LossKind::bayes_ig, 1) / "roc.csv"));
  CHECK(fs::exists(out / "runs" / run_id(0.3, LossKind::weighted, 0) / "histogram.csv"));

  const fs::path serial = scratch("sweep_serial");
  ExperimentConfig c1 = c;
  c1.output_dir = serial.string();
  run_sweep(c1, 1, "inv");
  CHECK(read_text(serial / "sweep.csv") == csv);
}

TEST_CASE("failed sweep runs are recorded and the sweep continues") {
  const fs::path dir = scratch("sweep_fail");
  const auto pop = PopulationModel::binary_overlap(0.2);
  write_dataset_csv(dir / "tr.csv", sample_biased_trainset(pop, std::vector<double>{1.0, 0.0}, 50, 1), "inv");
  write_dataset_csv(dir / "ev.csv", sample_biased_trainset(pop, std::vector<double>{0.5, 0.5}, 50, 2), "inv");
  json j = {{"data", {{"train_csv", (dir / "tr.csv").string()}, {"eval_csv", (dir / "ev.csv").string()}, {"prevalence", 0.2}}},
            {"train", {{"steps", 20}}},
            {"eval", {{"prevalences", {0.3, 0.01}}, {"seeds", {0, 1, 2, 3, 4}}}},
            {"output_dir", (dir / "out").string()}};
  const auto rows = run_sweep(parse_experiment_config(j), 0, "inv");
  CHECK(rows.size() == 20);
  for (const auto& r : rows) CHECK(r.status.rfind("error: ", 0) == 0);
  CHECK(fs::exists(dir / "out" / "sweep.csv"));
}

TEST_CASE("sweeps need a binary problem and prevalences") {
  CHECK_THROWS_AS(run_sweep(parse_experiment_config(json{{"data", {{"scenario", "ordinal5"}}},
                                                         {"eval", {{"prevalences", {0.1}}}}}),
                            1, "inv"),
                  ConfigError);
  CHECK_THROWS_AS(run_sweep(parse_experiment_config(json::object()), 1, "inv"), ConfigError);
}
