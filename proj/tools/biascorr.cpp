// biascorr: data generation, training, evaluation, prevalence sweeps and the
// exact-posterior check.
//
// Exit codes: 0 success, 1 runtime failure, 2 configuration or usage error.

#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "biascorr/error.hpp"
#include "biascorr/experiment.hpp"
#include "biascorr/io.hpp"
#include "biascorr/oracle.hpp"
#include "biascorr/sampling.hpp"

namespace fs = std::filesystem;
using namespace biascorr;

namespace {

std::vector<double> parse_list(const std::string& s, const char* flag) {
  std::vector<double> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    std::size_t end = s.find(',', start);
    if (end == std::string::npos) end = s.size();
    try {
      out.push_back(parse_double(std::string_view(s).substr(start, end - start)));
    } catch (const IoError&) {
      throw UsageError(std::string(flag) + ": cannot parse '" + s + "' as a comma separated list of numbers");
    }
    start = end + 1;
  }
  return out;
}

std::string invocation_of(int argc, char** argv) {
  std::string s;
  if (const char* env = std::getenv("BIASCORR_SEED")) s = std::string("BIASCORR_SEED=") + env + " ";
  s += "biascorr";
  for (int i = 1; i < argc; ++i) s += std::string(" ") + argv[i];
  return s;
}

void apply_seed_env(ExperimentConfig& config) {
  const char* env = std::getenv("BIASCORR_SEED");
  if (!env) return;
  const std::string_view s(env);
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw ConfigError("BIASCORR_SEED: not a nonnegative integer");
  config.train.seed = v;
}

void print_report(const RunOutcome& out) {
  const auto& m = out.report;
  std::printf("acc %.4f  w_acc %.4f  ba %.4f  tpr %.4f  tnr %.4f  auc %.4f  exp_log_lik %.4f\n", m.acc, m.w_acc, m.ba,
              m.tpr, m.tnr, m.auc, m.exp_log_lik);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bias-corrected training under label-based sampling bias"};
  app.require_subcommand(1);

  auto* synth = app.add_subcommand("synth", "Draw a synthetic dataset");
  std::string scenario = "binary-overlap";
  std::size_t n = 0;
  std::string ptilde_s;
  double prevalence = 0.3;
  std::uint64_t synth_seed = 1;
  std::string out_path = "data.csv";
  synth->add_option("--scenario", scenario, "binary-overlap, binary-separable or ordinal5")->capture_default_str();
  synth->add_option("--n", n, "number of rows")->required();
  synth->add_option("--ptilde", ptilde_s, "label marginal of the drawn set, comma separated (default: the true marginal)");
  auto* prev_opt = synth->add_option("--prevalence", prevalence, "class-1 prevalence of binary scenarios")->capture_default_str();
  synth->add_option("--seed", synth_seed)->capture_default_str();
  synth->add_option("--out", out_path, "CSV path; the provenance goes next to it as .provenance.json")->capture_default_str();

  auto* train_cmd = app.add_subcommand("train", "Train one model");
  std::string config_path;
  std::string loss_s;
  std::string out_dir;
  train_cmd->add_option("--config", config_path)->required();
  train_cmd->add_option("--loss", loss_s, "nll, weighted or bayes_ig (overrides the config)");
  train_cmd->add_option("--out", out_dir, "output directory (overrides the config)");

  auto* eval_cmd = app.add_subcommand("eval", "Evaluate saved parameters on the configured eval set");
  std::string params_path;
  eval_cmd->add_option("--config", config_path)->required();
  eval_cmd->add_option("--params", params_path, "default: <output_dir>/params.csv");
  eval_cmd->add_option("--out", out_dir, "output directory (overrides the config)");

  auto* sweep = app.add_subcommand("sweep", "Prevalence sweep over weighted and bayes_ig");
  std::size_t jobs = 0;
  std::size_t num_seeds = 0;
  std::string prevalences_s;
  sweep->add_option("--config", config_path)->required();
  sweep->add_option("--jobs", jobs, "parallel runs (default: points capped at hardware threads)");
  sweep->add_option("--seeds", num_seeds, "use seeds 0..N-1 instead of eval.seeds");
  sweep->add_option("--prevalences", prevalences_s, "comma separated, overrides eval.prevalences");
  sweep->add_option("--out", out_dir, "output directory (overrides the config)");

  auto* oracle = app.add_subcommand("oracle-check", "Compare the two exact posteriors on random toy problems");
  std::size_t instances = 100;
  double tolerance = 1e-10;
  std::uint64_t oracle_seed = 0;
  oracle->add_option("--instances", instances)->capture_default_str();
  oracle->add_option("--tolerance", tolerance)->capture_default_str();
  oracle->add_option("--seed", oracle_seed, "seed of the first instance")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  const std::string invocation = invocation_of(argc, argv);

  auto load = [&] {
    ExperimentConfig c = load_experiment_config(config_path);
    if (!out_dir.empty()) c.output_dir = out_dir;
    return c;
  };

  try {
    if (*synth) {
      PopulationModel pop = population_for(scenario, prevalence);
      if (prev_opt->count() > 0 && pop.num_classes() != 2) throw UsageError("--prevalence applies to binary scenarios");
      const std::vector<double> ptilde = ptilde_s.empty() ? pop.true_marginal : parse_list(ptilde_s, "--ptilde");
      if (ptilde.size() != pop.num_classes()) throw UsageError("--ptilde: wrong number of classes for the scenario");
      try {
        validate_distribution(ptilde, "--ptilde");
      } catch (const Error& e) {
        throw UsageError(e.what());
      }
      if (n == 0) throw UsageError("--n must be >= 1");
      const Dataset data = sample_biased_trainset(pop, ptilde, n, synth_seed);
      fs::path csv = out_path;
      fs::path sidecar = csv;
      sidecar.replace_extension(".provenance.json");
      write_dataset_csv(csv, data, invocation);
      write_json(sidecar, provenance_json(data, invocation));
      const auto counts = data.class_counts();
      std::printf("wrote %s (%zu rows; class counts", csv.string().c_str(), data.size());
      for (auto c : counts) std::printf(" %zu", c);
      std::printf(")\n");
    } else if (*train_cmd) {
      ExperimentConfig c = load();
      if (!loss_s.empty()) c.train.loss = loss_kind_from_string(loss_s);
      apply_seed_env(c);
      const RunOutcome out = run_train(c, invocation);
      print_report(out);
      std::printf("wrote %s\n", c.output_dir.c_str());
    } else if (*eval_cmd) {
      ExperimentConfig c = load();
      apply_seed_env(c);
      if (params_path.empty()) params_path = (fs::path(c.output_dir) / "params.csv").string();
      const RunOutcome out = run_eval(c, params_path, invocation);
      print_report(out);
    } else if (*sweep) {
      ExperimentConfig c = load();
      if (num_seeds > 0) {
        c.eval.seeds.clear();
        for (std::size_t s = 0; s < num_seeds; ++s) c.eval.seeds.push_back(s);
      }
      if (!prevalences_s.empty()) {
        c.eval.prevalences = parse_list(prevalences_s, "--prevalences");
        for (double p : c.eval.prevalences) {
          if (!(p > 0.0 && p < 1.0)) throw UsageError("--prevalences: entries must lie in (0, 1)");
        }
      }
      const auto rows = run_sweep(c, jobs, invocation);
      std::size_t failed = 0;
      for (const auto& r : rows) {
        if (r.status != "ok") {
          ++failed;
          std::fprintf(stderr, "run %s failed: %s\n", run_id(r.prevalence, r.loss, r.seed).c_str(), r.status.c_str());
        }
      }
      std::printf("wrote %s (%zu rows, %zu failed)\n", (fs::path(c.output_dir) / "sweep.csv").string().c_str(),
                  rows.size(), failed);
      return failed == 0 ? 0 : 1;
    } else if (*oracle) {
      if (!(tolerance >= 0.0)) throw UsageError("--tolerance must be >= 0");
      const OracleSuiteResult r = run_oracle_suite(instances, tolerance, oracle_seed);
      for (const auto& inst : r.instances) {
        if (!inst.pass) {
          std::printf("FAIL instance seed %llu: max abs diff %.3e\n", static_cast<unsigned long long>(inst.seed),
                      inst.max_abs_diff);
        }
      }
      std::printf("%zu/%zu instances pass at tolerance %g\n", r.passed, r.instances.size(), tolerance);
      return r.all_passed() ? 0 : 1;
    }
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const UsageError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
