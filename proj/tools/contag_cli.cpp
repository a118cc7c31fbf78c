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

// contag: train, tune, evaluate and apply contract-element taggers.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "contag/contag.h"
#include "json.hpp"

namespace {

using nlohmann::json;

constexpr int kExitOk = 0;
constexpr int kExitInternal = 1;
constexpr int kExitUsage = 2;

struct CliError {
  int code;
  std::string message;
};

int exit_code(contag_status s) {
  switch (s) {
    case CONTAG_OK:
      return kExitOk;
    case CONTAG_ERR_USAGE:
    case CONTAG_ERR_IO:
      return kExitUsage;
    default:
      return kExitInternal;
  }
}

void check(contag_status s) {
  if (s != CONTAG_OK) throw CliError{exit_code(s), contag_last_error()};
}

// Owns a string returned by the library.
class OwnedString {
 public:
  ~OwnedString() { contag_string_free(p_); }
  char** out() { return &p_; }
  std::string str() const { return p_ ? p_ : ""; }

 private:
  char* p_ = nullptr;
};

class ModelHandle {
 public:
  explicit ModelHandle(const std::string& dir) { check(contag_model_load(dir.c_str(), &m_)); }
  ~ModelHandle() { contag_model_free(m_); }
  ModelHandle(const ModelHandle&) = delete;
  ModelHandle& operator=(const ModelHandle&) = delete;
  const contag_model* get() const { return m_; }

 private:
  contag_model* m_ = nullptr;
};

std::string read_file(const std::string& path) {
  if (!std::filesystem::exists(path)) throw CliError{kExitUsage, "file not found: " + path};
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CliError{kExitUsage, "cannot open " + path};
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& text) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CliError{kExitUsage, "cannot write " + path};
    out << text;
    if (!out.flush()) throw CliError{kExitUsage, "cannot write " + path};
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw CliError{kExitUsage, "cannot write " + path + ": " + ec.message()};
}

// Feature sets: "word", "word+pos+shape", "word+pos+shape+char". A leading
// "+" adds to the default word+pos+shape set.
void apply_features(json& config, const std::string& spec) {
  bool pos = false, shape = false, chr = false, word = false;
  std::string rest = spec;
  if (!rest.empty() && rest.front() == '+') {
    word = pos = shape = true;
    rest.erase(0, 1);
  }
  std::stringstream ss(rest);
  std::string part;
  while (std::getline(ss, part, '+')) {
    if (part == "word") word = true;
    else if (part == "pos") pos = true;
    else if (part == "shape") shape = true;
    else if (part == "char") chr = true;
    else throw CliError{kExitUsage, "unknown feature '" + part + "' in --features " + spec};
  }
  if (!word) throw CliError{kExitUsage, "--features must include word"};
  config["features"]["use_pos"] = pos;
  config["features"]["use_shape"] = shape;
  config["features"]["use_char"] = chr;
}

std::string percent(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", 100.0 * v);
  return buf;
}

struct Options {
  std::string data, dev, config, model, out, vocab, encoder, features;
  std::optional<std::uint64_t> seed;
  int runs = 3;
  bool no_crf = false;
  bool gold_as_prediction = false;
  int workers = 1;
  int budget = 20;
  int folds = 3;
  double dev_fraction = 0.15;
  bool entities_only = false, weighted = false, lowercase = false;
  std::size_t n_train = 2000, n_dev = 200, n_test = 500, distance = 2;
  std::optional<std::size_t> epochs;
};

json load_config(const Options& o) {
  json config = json::object();
  if (!o.config.empty()) {
    try {
      config = json::parse(read_file(o.config));
    } catch (const json::parse_error& e) {
      throw CliError{kExitUsage, "config " + o.config + " is not valid JSON: " + e.what()};
    }
  }
  if (o.no_crf) config["use_crf"] = false;
  if (!o.encoder.empty()) config["encoder"]["kind"] = o.encoder == "dcnn" ? "dilated_cnn" : o.encoder;
  if (!o.features.empty()) apply_features(config, o.features);
  if (o.epochs) config["max_epochs"] = *o.epochs;
  return config;
}

int run_train(const Options& o) {
  const std::string config = load_config(o).dump();
  OwnedString summary;
  const std::int64_t seed = o.seed ? static_cast<std::int64_t>(*o.seed) : -1;
  check(contag_train(o.data.c_str(), o.dev.empty() ? nullptr : o.dev.c_str(), config.c_str(), o.model.c_str(), seed,
                     o.runs, summary.out()));
  const json s = json::parse(summary.str());
  for (const auto& w : s["warnings"]) std::cerr << "warning: " << w.get<std::string>() << "\n";
  for (const auto& r : s["runs"]) {
    std::cout << "run seed=" << r["seed"] << " epochs=" << r["epochs"] << " best_epoch=" << r["best_epoch"]
              << " dev_f1=" << percent(r["dev_f1"].get<double>()) << "\n";
  }
  std::cout << "dev macro-F1 over " << s["runs"].size() << " run(s): " << percent(s["dev_f1_mean"].get<double>())
            << " +/- " << percent(s["dev_f1_stdev"].get<double>()) << "\n";
  const json& m = s["final"]["macro"];
  std::cout << "saved model (run " << s["selected_run"].get<int>() + 1 << ") dev macro P/R/F1: "
            << percent(m["precision"].get<double>()) << " / " << percent(m["recall"].get<double>()) << " / "
            << percent(m["f1"].get<double>()) << "\n";
  std::cout << "model written to " << o.model << "\n";
  return kExitOk;
}

int run_tune(const Options& o) {
  const std::string config = load_config(o).dump();
  OwnedString result;
  check(contag_tune(o.data.c_str(), config.c_str(), o.budget, o.folds, o.dev_fraction, o.seed.value_or(1),
                    o.workers, o.out.empty() ? nullptr : o.out.c_str(), result.out()));
  const json r = json::parse(result.str());
  for (const auto& t : r["trials"]) std::cout << t.dump() << "\n";
  std::cout << "best trial " << r["best_trial"] << " score " << percent(r["best_score"].get<double>()) << "\n";
  std::cout << r["config"].dump(2) << "\n";
  return kExitOk;
}

int run_evaluate(const Options& o) {
  ModelHandle model(o.model);
  OwnedString report;
  check(contag_model_evaluate(model.get(), o.data.c_str(), o.gold_as_prediction ? 1 : 0, report.out()));
  OwnedString table;
  check(contag_format_report(report.str().c_str(), table.out()));
  std::cout << table.str();
  if (!o.out.empty()) write_file(o.out, json::parse(report.str()).dump(2) + "\n");
  return kExitOk;
}

int run_predict(const Options& o) {
  ModelHandle model(o.model);
  OwnedString lines;
  check(contag_model_predict(model.get(), o.data.c_str(), lines.out()));
  if (o.out.empty()) {
    std::cout << lines.str();
  } else {
    write_file(o.out, lines.str());
  }
  return kExitOk;
}

int run_stats(const Options& o) {
  OwnedString stats;
  check(contag_dataset_stats(o.data.c_str(), stats.out()));
  const json s = json::parse(stats.str());
  std::cout << "zone " << s["zone"].get<std::string>() << ": " << s["sequences"] << " sequences, " << s["tokens"]
            << " tokens\n";
  for (const auto& [type, n] : s["spans"].items()) std::cout << "  " << type << " " << n << "\n";
  if (!o.out.empty()) write_file(o.out, s.dump(2) + "\n");
  return kExitOk;
}

int run_wfr(const Options& o) {
  double ratio = 0.0;
  check(contag_wfr(o.data.c_str(), o.vocab.c_str(), o.entities_only, o.weighted, o.lowercase, &ratio));
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", ratio);
  std::cout << buf << "\n";
  return kExitOk;
}

int run_synth(const Options& o) {
  json spec = {{"train", o.n_train}, {"dev", o.n_dev}, {"test", o.n_test}, {"distance", o.distance}};
  if (o.seed) spec["seed"] = *o.seed;
  check(contag_synth(spec.dump().c_str(), o.out.c_str()));
  std::cout << "wrote train.tsv, dev.tsv, test.tsv to " << o.out << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"contag: contract element tagging"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(contag_version()));
  Options o;

  auto* train = app.add_subcommand("train", "Train a tagger and save the best of --runs models");
  train->add_option("--data", o.data, "Training data file")->required();
  train->add_option("--dev", o.dev, "Dev data file (default: hold out 15% of --data)");
  train->add_option("--config", o.config, "JSON training config");
  train->add_option("--model,--out", o.model, "Output model directory")->required();
  train->add_option("--seed", o.seed, "Seed of the first run");
  train->add_option("--runs", o.runs, "Number of seeds to train and average")->capture_default_str();
  train->add_option("--epochs", o.epochs, "Maximum epochs");
  train->add_flag("--no-crf", o.no_crf, "Softmax output layer instead of a CRF");
  train->add_option("--encoder", o.encoder, "Encoder")->check(CLI::IsMember({"bilstm", "dcnn", "transformer"}));
  train->add_option("--features", o.features, "word | word+pos+shape | +char");

  auto* tune = app.add_subcommand("tune", "Random hyperparameter search with Monte-Carlo cross-validation");
  tune->add_option("--data", o.data, "Training data file")->required();
  tune->add_option("--config", o.config, "Base JSON training config");
  tune->add_option("--out", o.out, "Trial log (JSON lines)");
  tune->add_option("--seed", o.seed, "Search seed");
  tune->add_option("--budget", o.budget, "Number of trials")->capture_default_str();
  tune->add_option("--folds", o.folds, "Monte-Carlo folds per trial")->capture_default_str();
  tune->add_option("--dev-fraction", o.dev_fraction, "Dev share of each fold")->capture_default_str();
  tune->add_option("--workers", o.workers, "Concurrent trials")->capture_default_str();
  tune->add_option("--epochs", o.epochs, "Maximum epochs per fold");
  tune->add_flag("--no-crf", o.no_crf, "Softmax output layer instead of a CRF");
  tune->add_option("--encoder", o.encoder, "Encoder")->check(CLI::IsMember({"bilstm", "dcnn", "transformer"}));
  tune->add_option("--features", o.features, "word | word+pos+shape | +char");

  auto* evaluate = app.add_subcommand("evaluate", "Per-type and macro-averaged P/R/F1");
  evaluate->add_option("--model", o.model, "Model directory")->required();
  evaluate->add_option("--data", o.data, "Labelled data file")->required();
  evaluate->add_option("--out", o.out, "JSON report path");
  evaluate->add_flag("--gold-as-prediction", o.gold_as_prediction, "Score gold tags against themselves");

  auto* predict = app.add_subcommand("predict", "Tag sequences; one JSON record per sequence");
  predict->add_option("--model", o.model, "Model directory")->required();
  predict->add_option("--data", o.data, "Input file (surface and POS columns)")->required();
  predict->add_option("--out", o.out, "Output path (default stdout)");

  auto* stats = app.add_subcommand("stats", "Sequence, token and span counts");
  stats->add_option("--data", o.data, "Labelled data file")->required();
  stats->add_option("--out", o.out, "JSON output path");

  auto* wfr = app.add_subcommand("wfr", "Word fragmentation ratio under a WordPiece vocabulary");
  wfr->add_option("--data", o.data, "Labelled data file")->required();
  wfr->add_option("--vocab", o.vocab, "Subword vocabulary, one piece per line")->required();
  wfr->add_flag("--entities-only", o.entities_only, "Only words inside gold spans");
  wfr->add_flag("--weighted", o.weighted, "Count every token occurrence");
  wfr->add_flag("--lowercase", o.lowercase, "Lowercase words before segmentation");

  auto* synth = app.add_subcommand("synth", "Generate a synthetic contract-header corpus");
  synth->add_option("--out", o.out, "Output directory")->required();
  synth->add_option("--seed", o.seed, "Generator seed");
  synth->add_option("--train", o.n_train, "Training sequences")->capture_default_str();
  synth->add_option("--dev", o.n_dev, "Dev sequences")->capture_default_str();
  synth->add_option("--test", o.n_test, "Test sequences")->capture_default_str();
  synth->add_option("--distance", o.distance, "Trigger-to-date distance")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*train) return run_train(o);
    if (*tune) return run_tune(o);
    if (*evaluate) return run_evaluate(o);
    if (*predict) return run_predict(o);
    if (*stats) return run_stats(o);
    if (*wfr) return run_wfr(o);
    if (*synth) return run_synth(o);
  } catch (const CliError& e) {
    std::cerr << "contag: " << e.message << "\n";
    return e.code;
  } catch (const std::exception& e) {
    std::cerr << "contag: " << e.what() << "\n";
    return kExitInternal;
  }
  return kExitUsage;
}
