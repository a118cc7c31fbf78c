// Copyright 2026 The Contag Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "contag/contag.h"
#include "doctest.h"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path workdir() {
  static const fs::path dir = [] {
    auto p = fs::temp_directory_path() / "contag_capi_test";
    fs::remove_all(p);
    fs::create_directories(p);
    const std::string spec = R"({"seed": 5, "train": 120, "dev": 30, "test": 30})";
    REQUIRE(contag_synth(spec.c_str(), p.string().c_str()) == CONTAG_OK);
    return p;
  }();
  return dir;
}

std::string path(const std::string& name) { return (workdir() / name).string(); }

std::string take(char* s) {
  std::string out = s ? s : "";
  contag_string_free(s);
  return out;
}

const char* kConfig =
    R"({"encoder": {"units": 8}, "features": {"word_dim": 12, "pos_dim": 4, "shape_dim": 4},
        "max_epochs": 6, "learning_rate": 0.01, "batch_size": 8, "dropout": 0.1})";

std::string trained_model() {
  static const std::string dir = [] {
    char* summary = nullptr;
    const std::string out = path("model");
    REQUIRE(contag_train(path("train.tsv").c_str(), path("dev.tsv").c_str(), kConfig, out.c_str(), 3, 1, &summary) ==
            CONTAG_OK);
    take(summary);
    return out;
  }();
  return dir;
}

// The macro row reads 100.0 in all three columns.
bool perfect_macro(const std::string& table) {
  const auto at = table.find("macro-avg");
  if (at == std::string::npos) return false;
  std::istringstream row(table.substr(at, table.find('\n', at) - at));
  std::string label, p, r, f;
  row >> label >> p >> r >> f;
  return p == "100.0" && r == "100.0" && f == "100.0";
}

int run_cli(const std::string& args, std::string* output = nullptr) {
  const std::string log = path("cli_output.txt");
  const int status = std::system((std::string(CONTAG_CLI_PATH) + " " + args + " > " + log + " 2>&1").c_str());
  if (output) {
    std::ifstream in(log);
    std::stringstream ss;
    ss << in.rdbuf();
    *output = ss.str();
  }
  return WEXITSTATUS(status);
}

}  // namespace

TEST_CASE("missing files map to IO errors naming the path") {
  char* summary = nullptr;
  CHECK(contag_train("/no/such/train.tsv", nullptr, nullptr, path("m").c_str(), -1, 1, &summary) == CONTAG_ERR_IO);
  CHECK(std::string(contag_last_error()).find("/no/such/train.tsv") != std::string::npos);
  contag_model* m = nullptr;
  CHECK(contag_model_load("/no/such/model", &m) == CONTAG_ERR_IO);
  CHECK(m == nullptr);
  CHECK(contag_model_load(nullptr, &m) == CONTAG_ERR_USAGE);
}

TEST_CASE("invalid configs are usage errors") {
  char* summary = nullptr;
  CHECK(contag_train(path("train.tsv").c_str(), nullptr, "{not json", path("m").c_str(), -1, 1, &summary) ==
        CONTAG_ERR_USAGE);
  CHECK(contag_train(path("train.tsv").c_str(), nullptr, R"({"bogus": 1})", path("m").c_str(), -1, 1, &summary) ==
        CONTAG_ERR_USAGE);
  CHECK(std::string(contag_last_error()).find("bogus") != std::string::npos);
  CHECK(contag_train(path("train.tsv").c_str(), nullptr, nullptr, path("m").c_str(), -1, 0, &summary) ==
        CONTAG_ERR_USAGE);
}

TEST_CASE("free-form layer counts train with a warning") {
  char* summary = nullptr;
  const std::string cfg = R"({"encoder": {"units": 4, "layers": 5}, "features": {"word_dim": 4, "use_pos": false,
                              "use_shape": false}, "max_epochs": 1})";
  REQUIRE(contag_train(path("train.tsv").c_str(), nullptr, cfg.c_str(), path("m5").c_str(), 1, 1, &summary) ==
          CONTAG_OK);
  const json s = json::parse(take(summary));
  REQUIRE(s["warnings"].size() >= 1);
  CHECK(s["warnings"][0].get<std::string>().find("layers=5") != std::string::npos);
  CHECK(fs::exists(path("m5") + "/history.json"));
}

TEST_CASE("repeated runs report mean and spread") {
  char* summary = nullptr;
  const std::string cfg = R"({"encoder": {"units": 4}, "features": {"word_dim": 4}, "max_epochs": 1})";
  REQUIRE(contag_train(path("train.tsv").c_str(), nullptr, cfg.c_str(), path("m3").c_str(), 10, 3, &summary) ==
          CONTAG_OK);
  const json s = json::parse(take(summary));
  REQUIRE(s["runs"].size() == 3);
  double mean = 0;
  for (const auto& r : s["runs"]) mean += r["dev_f1"].get<double>() / 3;
  CHECK(s["dev_f1_mean"].get<double>() == doctest::Approx(mean));
  CHECK(s["runs"][2]["seed"] == 12);
}

TEST_CASE("evaluate and predict through the handle") {
  contag_model* m = nullptr;
  REQUIRE(contag_model_load(trained_model().c_str(), &m) == CONTAG_OK);

  char* report = nullptr;
  REQUIRE(contag_model_evaluate(m, path("train.tsv").c_str(), 0, &report) == CONTAG_OK);
  const json r = json::parse(take(report));
  CHECK(r["macro"]["f1"].get<double>() >= 0.99);

  REQUIRE(contag_model_evaluate(m, path("test.tsv").c_str(), 1, &report) == CONTAG_OK);
  const std::string self = take(report);
  for (const auto& row : json::parse(self)["per_type"]) CHECK(row["f1"] == 1.0);
  char* table = nullptr;
  REQUIRE(contag_format_report(self.c_str(), &table) == CONTAG_OK);
  CHECK(perfect_macro(take(table)));

  std::ofstream(path("law.tsv")) << "#zone=law types=GoverningLaw\nEngland\tNNP\tB-GoverningLaw\n";
  CHECK(contag_model_evaluate(m, path("law.tsv").c_str(), 0, &report) == CONTAG_ERR_USAGE);
  const std::string msg = contag_last_error();
  CHECK(msg.find("B-GoverningLaw") != std::string::npos);
  CHECK(msg.find("B-EffectiveDate") != std::string::npos);

  char* lines = nullptr;
  REQUIRE(contag_model_predict(m, path("train.tsv").c_str(), &lines) == CONTAG_OK);
  const std::string first = take(lines);
  REQUIRE(contag_model_predict(m, path("train.tsv").c_str(), &lines) == CONTAG_OK);
  CHECK(take(lines) == first);
  std::istringstream ss(first);
  std::string line;
  std::getline(ss, line);
  const json rec = json::parse(line);
  CHECK(rec["sequence"] == 0);
  CHECK(rec["tags"].size() == rec["tokens"].size());

  std::ofstream(path("empty.tsv")).close();
  REQUIRE(contag_model_predict(m, path("empty.tsv").c_str(), &lines) == CONTAG_OK);
  CHECK(take(lines).empty());

  REQUIRE(contag_model_save(m, path("resaved").c_str()) == CONTAG_OK);
  char* info = nullptr;
  REQUIRE(contag_model_info(m, &info) == CONTAG_OK);
  CHECK(json::parse(take(info))["schema"]["zone"] == "header");
  contag_model_free(m);
}

TEST_CASE("stats, wfr and tune") {
  char* stats = nullptr;
  REQUIRE(contag_dataset_stats(path("train.tsv").c_str(), &stats) == CONTAG_OK);
  const json s = json::parse(take(stats));
  CHECK(s["sequences"] == 120);
  CHECK(s["spans"]["Title"] == 120);
  CHECK(s["spans"]["Party"] == 240);

  std::ofstream(path("vocab.txt")) << "This\nAgreement\n";
  std::ofstream(path("small.tsv")) << "#zone=h types=Title\nThis\tDT\tO\nunable\tJJ\tB-Title\nThis\tDT\tO\n";
  std::ofstream(path("pieces.txt")) << "un\n##able\nable\nThis\n";
  double ratio = 0;
  REQUIRE(contag_wfr(path("small.tsv").c_str(), path("pieces.txt").c_str(), 0, 0, 0, &ratio) == CONTAG_OK);
  CHECK(ratio == 1.5);
  REQUIRE(contag_wfr(path("small.tsv").c_str(), path("pieces.txt").c_str(), 0, 1, 0, &ratio) == CONTAG_OK);
  CHECK(ratio == doctest::Approx(4.0 / 3.0));
  REQUIRE(contag_wfr(path("small.tsv").c_str(), path("pieces.txt").c_str(), 1, 0, 0, &ratio) == CONTAG_OK);
  CHECK(ratio == 2.0);

  char* result = nullptr;
  const std::string cfg = R"({"features": {"word_dim": 4, "use_pos": false, "use_shape": false}, "max_epochs": 1})";
  const std::string log = path("trials.jsonl");
  REQUIRE(contag_tune(path("dev.tsv").c_str(), cfg.c_str(), 2, 1, 0.3, 4, 2, log.c_str(), &result) == CONTAG_OK);
  const json r = json::parse(take(result));
  CHECK(r["trials"].size() == 2);
  std::ifstream in(log);
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    const json rec = json::parse(line);
    CHECK(rec.contains("units"));
    CHECK(rec.contains("score"));
    ++n;
  }
  CHECK(n == 2);
}

TEST_CASE("command line exit codes") {
  std::string out;
  CHECK(run_cli("train --data /no/such/data.tsv --model " + path("x"), &out) == 2);
  CHECK(out.find("/no/such/data.tsv") != std::string::npos);
  CHECK(run_cli("train --model " + path("x")) == 2);
  CHECK(run_cli("evaluate --model " + trained_model() + " --data " + path("test.tsv") + " --out " +
                    path("report.json"),
                &out) == 0);
  CHECK(out.find("macro-avg") != std::string::npos);
  CHECK(fs::exists(path("report.json")));
  CHECK(run_cli("evaluate --gold-as-prediction --model " + trained_model() + " --data " + path("test.tsv"), &out) ==
        0);
  CHECK(perfect_macro(out));
  CHECK(run_cli("predict --model " + trained_model() + " --data " + path("empty.tsv"), &out) == 0);
  CHECK(out.empty());
  CHECK(run_cli("stats --data " + path("train.tsv"), &out) == 0);
  CHECK(run_cli("train --data " + path("train.tsv") + " --features word+bogus --model " + path("x")) == 2);
  CHECK(run_cli("synth --out " + path("synth_cli") + " --train 5 --dev 2 --test 2 --distance 40") == 0);
  CHECK(fs::exists(path("synth_cli/test.tsv")));
}
