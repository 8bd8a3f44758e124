#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "biascorr/io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Run {
  int code = -1;
  std::string out;
};

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "biascorr_test_cli" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

Run cli(const fs::path& dir, const std::string& args, const std::string& env = "") {
  const fs::path log = dir / ".stdout";
  const std::string cmd = "cd '" + dir.string() + "' && " + env + (env.empty() ? "" : " ") + BIASCORR_CLI_PATH + " " +
                          args + " > '" + log.string() + "' 2>&1";
  const int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = biascorr::read_text(log);
  return r;
}

void write_config(const fs::path& dir, json j) {
  if (!j.contains("output_dir")) j["output_dir"] = "out";
  biascorr::write_json(dir / "config.json", j);
}

json small_config() {
  return json{{"data", {{"prevalence", 0.3}, {"train_n", 300}, {"eval_n", 300}, {"seed", 2}}},
              {"train", {{"steps", 150}, {"eval_every", 50}}},
              {"eval", {{"prevalences", {0.3, 0.01}}, {"seeds", {0, 1}}}}};
}

std::size_t count_lines(const std::string& s) {
  std::size_t n = 0;
  for (char c : s) n += c == '\n';
  return n;
}

}  // namespace

TEST_CASE("synth writes a rebalanced binary set with provenance") {
  const fs::path dir = scratch("synth");
  const Run r = cli(dir, "synth --n 2000 --ptilde 0.5,0.5 --prevalence 0.001 --seed 7 --out data.csv");
  REQUIRE(r.code == 0);
  const auto d = biascorr::read_dataset_csv(dir / "data.csv");
  CHECK(d.size() == 2000);
  CHECK(d.class_counts() == std::vector<std::size_t>{1000, 1000});
  const json prov = biascorr::read_json(dir / "data.provenance.json");
  CHECK(prov["seed"] == 7);
  CHECK(prov["invocation"].get<std::string>().find("--n 2000") != std::string::npos);

  const fs::path again = scratch("synth_again");
  REQUIRE(cli(again, "synth --n 2000 --ptilde 0.5,0.5 --prevalence 0.001 --seed 7 --out data.csv").code == 0);
  CHECK(biascorr::read_text(again / "data.csv") == biascorr::read_text(dir / "data.csv"));
  CHECK(biascorr::read_text(again / "data.provenance.json") == biascorr::read_text(dir / "data.provenance.json"));
}

TEST_CASE("synth ordinal5 follows the population marginal") {
  const fs::path dir = scratch("ordinal");
  REQUIRE(cli(dir, "synth --scenario ordinal5 --n 1086 --out o.csv").code == 0);
  const auto d = biascorr::read_dataset_csv(dir / "o.csv");
  CHECK(d.num_classes == 5);
  CHECK(d.size() == 1086);
  CHECK(cli(dir, "synth --scenario ordinal5 --n 10 --prevalence 0.2").code == 2);
  CHECK(cli(dir, "synth --n 10 --ptilde 0.2,0.2").code == 2);
  CHECK(cli(dir, "synth --n 10 --ptilde a,b").code == 2);
  CHECK(cli(dir, "synth --scenario cats --n 10").code == 2);
}

TEST_CASE("train then eval agree") {
  const fs::path dir = scratch("train_eval");
  write_config(dir, small_config());
  REQUIRE(cli(dir, "train --config config.json").code == 0);
  REQUIRE(cli(dir, "eval --config config.json").code == 0);
  const json a = biascorr::read_json(dir / "out" / "report.json");
  const json b = biascorr::read_json(dir / "out" / "eval_report.json");
  for (const char* key : {"acc", "w_acc", "ba", "tpr", "tnr", "auc", "exp_log_lik"}) {
    CHECK(std::abs(a[key].get<double>() - b[key].get<double>()) <= 1e-12);
  }
  const std::string trace = biascorr::read_text(dir / "out" / "trace.jsonl");
  CHECK(trace.rfind("{\"invocation\":", 0) == 0);
  CHECK(count_lines(trace) == 1 + 3);
}

TEST_CASE("nll and weighted coincide when train and true prevalences match") {
  const fs::path dir = scratch("matched");
  json j = small_config();
  j["data"]["ptilde"] = {0.7, 0.3};
  j["train"]["sampler"] = "natural";
  write_config(dir, j);
  REQUIRE(cli(dir, "train --config config.json --loss nll --out nll").code == 0);
  REQUIRE(cli(dir, "train --config config.json --loss weighted --out weighted").code == 0);
  CHECK(biascorr::read_text(dir / "nll" / "params.csv").substr(biascorr::read_text(dir / "nll" / "params.csv").find('\n')) ==
        biascorr::read_text(dir / "weighted" / "params.csv")
            .substr(biascorr::read_text(dir / "weighted" / "params.csv").find('\n')));
}

TEST_CASE("seed override") {
  const fs::path dir = scratch("seed_env");
  write_config(dir, small_config());
  REQUIRE(cli(dir, "train --config config.json --out a").code == 0);
  REQUIRE(cli(dir, "train --config config.json --out b", "BIASCORR_SEED=99").code == 0);
  REQUIRE(cli(dir, "train --config config.json --out c", "BIASCORR_SEED=99").code == 0);
  const auto params = [&](const char* d) {
    const std::string t = biascorr::read_text(dir / d / "params.csv");
    return t.substr(t.find('\n'));
  };
  CHECK(params("a") != params("b"));
  CHECK(params("b") == params("c"));
  CHECK(biascorr::read_text(dir / "b" / "params.csv").rfind("# invocation: BIASCORR_SEED=99 biascorr", 0) == 0);
  CHECK(cli(dir, "train --config config.json --out d", "BIASCORR_SEED=x").code == 2);
}

TEST_CASE("sweep") {
  const fs::path dir = scratch("sweep");
  write_config(dir, small_config());
  const Run r = cli(dir, "sweep --config config.json --seeds 3 --prevalences 0.3,0.001 --jobs 2");
  REQUIRE(r.code == 0);
  const std::string csv = biascorr::read_text(dir / "out" / "sweep.csv");
  CHECK(count_lines(csv) == 2 + 2 * 2 * 3);
  CHECK(cli(dir, "sweep --config config.json --prevalences 0.3,1.5").code == 2);
}

TEST_CASE("error exit codes") {
  const fs::path dir = scratch("errors");
  CHECK(cli(dir, "train --config missing.json").code == 2);
  write_config(dir, json{{"train", {{"lr", 0.1}}}});
  const Run unknown = cli(dir, "train --config config.json");
  CHECK(unknown.code == 2);
  CHECK(unknown.out.find("train.lr") != std::string::npos);
  CHECK(cli(dir, "train --bogus").code == 2);
  CHECK(cli(dir, "frobnicate").code == 2);
  write_config(dir, small_config());
  CHECK(cli(dir, "train --config config.json --out /proc/biascorr_cannot_write").code == 1);
  CHECK(cli(dir, "eval --config config.json --params nope.csv").code == 1);
  CHECK(cli(dir, "--help").code == 0);
}

TEST_CASE("oracle-check") {
  const fs::path dir = scratch("oracle");
  const Run ok = cli(dir, "oracle-check");
  CHECK(ok.code == 0);
  CHECK(ok.out.find("100/100 instances pass") != std::string::npos);
  const Run one = cli(dir, "oracle-check --instances 1 --seed 5");
  CHECK(one.code == 0);
  CHECK(cli(dir, "oracle-check --instances 1 --seed 5").out == one.out);
  const Run strict = cli(dir, "oracle-check --instances 3 --tolerance 0");
  CHECK(strict.code == 1);
  CHECK(strict.out.find("FAIL instance seed") != std::string::npos);
  CHECK(cli(dir, "oracle-check --tolerance -1").code == 2);
}
