#include <doctest.h>

#include <clocale>
#include <cmath>
#include <filesystem>

#include "biascorr/error.hpp"
#include "biascorr/io.hpp"
#include "support.hpp"

using namespace biascorr;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "biascorr_test_io";
  fs::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_CASE("numbers are written in shortest round-trip form") {
  std::mt19937_64 rng(1);
  for (int t = 0; t < 1000; ++t) {
    const double v = std::ldexp(std::uniform_real_distribution<double>(-1, 1)(rng), static_cast<int>(rng() % 200) - 100);
    CHECK(parse_double(format_double(v)) == v);
  }
  CHECK(format_double(0.5) == "0.5");
  CHECK(format_double(1e-3) == "0.001");
  CHECK(std::isnan(parse_double("nan")));
  CHECK_THROWS_AS(parse_double("1,5"), IoError);
}

TEST_CASE("a comma locale does not change the files") {
  const Dataset d = sample_biased_trainset(PopulationModel::binary_overlap(0.3), std::vector<double>{0.5, 0.5}, 20, 2);
  write_dataset_csv(scratch("c_locale.csv"), d, "test");
  const char* prev = std::setlocale(LC_ALL, nullptr);
  const std::string saved = prev ? prev : "C";
  if (std::setlocale(LC_ALL, "de_DE.UTF-8") || std::setlocale(LC_ALL, "fr_FR.UTF-8")) {
    write_dataset_csv(scratch("comma_locale.csv"), d, "test");
    CHECK(read_text(scratch("comma_locale.csv")) == read_text(scratch("c_locale.csv")));
    CHECK(read_dataset_csv(scratch("comma_locale.csv")).features.data == d.features.data);
  }
  std::setlocale(LC_ALL, saved.c_str());
  CHECK(read_text(scratch("c_locale.csv")).find("0.") != std::string::npos);
}

TEST_CASE("dataset CSV round trip") {
  const Dataset d = sample_biased_trainset(PopulationModel::ordinal5(), PopulationModel::ordinal5().true_marginal, 300, 3);
  write_dataset_csv(scratch("d.csv"), d, "biascorr synth --n 300");
  const std::string text = read_text(scratch("d.csv"));
  CHECK(text.rfind("# invocation: biascorr synth --n 300\nf0,f1,label\n", 0) == 0);
  const Dataset back = read_dataset_csv(scratch("d.csv"));
  CHECK(back.labels == d.labels);
  CHECK(back.features.data == d.features.data);
  CHECK(back.num_classes == 5);
  CHECK(read_dataset_csv(scratch("d.csv"), 7).num_classes == 7);
  CHECK_THROWS_AS(read_dataset_csv(scratch("d.csv"), 3), IoError);

  const auto prov = provenance_json(d, "inv");
  CHECK(prov["seed"] == 3);
  CHECK(prov["n"] == 300);
  CHECK(prov["invocation"] == "inv");
}

TEST_CASE("malformed dataset files") {
  write_text(scratch("bad1.csv"), "a,b,label\n1,2,0\n");
  CHECK_THROWS_AS(read_dataset_csv(scratch("bad1.csv")), IoError);
  write_text(scratch("bad2.csv"), "f0,f1,label\n1,2\n");
  CHECK_THROWS_AS(read_dataset_csv(scratch("bad2.csv")), IoError);
  write_text(scratch("bad3.csv"), "f0,label\n1.5,-1\n");
  CHECK_THROWS_AS(read_dataset_csv(scratch("bad3.csv")), IoError);
  write_text(scratch("ok.csv"), "# comment\r\nf0,label\r\n1.5,1\r\n-2,0\r\n");
  const auto ok = read_dataset_csv(scratch("ok.csv"));
  CHECK(ok.features.data == std::vector<double>{1.5, -2.0});
  CHECK(ok.apparent_marginal == std::vector<double>{0.5, 0.5});
  CHECK_THROWS_AS(read_dataset_csv(scratch("missing.csv")), IoError);
}

TEST_CASE("parameter CSV round trip") {
  ScorerSpec s;
  s.kind = ScorerKind::composite;
  s.input_dim = 3;
  s.hidden_dims = {4, 2};
  s.output_dim = 2;
  const ParamVector p = init_params(s, 4);
  write_params_csv(scratch("p.csv"), p, "inv");
  CHECK(read_params_csv(scratch("p.csv"), s) == p);
  ScorerSpec other = s;
  other.hidden_dims = {5};
  CHECK_THROWS_AS(read_params_csv(scratch("p.csv"), other), IoError);
  write_text(scratch("short.csv"), "segment,index,value\nmlp/W0,0,1.0\n");
  CHECK_THROWS_AS(read_params_csv(scratch("short.csv"), s), IoError);
}

TEST_CASE("ROC, histogram and trace files") {
  RocResult roc;
  roc.curve = {{INFINITY, 0.0, 0.0}, {0.7, 0.5, 0.0}, {0.2, 1.0, 1.0}};
  write_roc_csv(scratch("roc.csv"), roc, "inv");
  CHECK(read_text(scratch("roc.csv")) == "# invocation: inv\nthreshold,tpr,fpr\ninf,0,0\n0.7,0.5,0\n0.2,1,1\n");

  Histogram h;
  h.edges = {0.0, 0.5, 1.0};
  h.counts = {{3, 1}, {0, 4}};
  write_histogram_csv(scratch("h.csv"), h, "inv");
  CHECK(read_text(scratch("h.csv")) ==
        "# invocation: inv\nbin_lo,bin_hi,count_class0,count_class1\n0,0.5,3,1\n0.5,1,0,4\n");

  TrainTrace t;
  TraceRecord r;
  r.step = 10;
  r.train_loss = 0.25;
  r.tracked_marginal = {0.9, 0.1};
  t.records.push_back(r);
  write_trace_jsonl(scratch("t.jsonl"), t, "inv");
  const std::string text = read_text(scratch("t.jsonl"));
  const auto nl = text.find('\n');
  CHECK(nlohmann::json::parse(text.substr(0, nl))["invocation"] == "inv");
  const auto rec = nlohmann::json::parse(text.substr(nl + 1));
  CHECK(rec["step"] == 10);
  CHECK(rec["tracked_marginal"][1] == 0.1);
}

TEST_CASE("unwritable paths name the path") {
  try {
    write_text("/proc/biascorr_no_such_dir/x.csv", "x");
    FAIL("expected an I/O error");
  } catch (const IoError& e) {
    CHECK(std::string(e.what()).find("/proc/biascorr_no_such_dir/x.csv") != std::string::npos);
  }
}
