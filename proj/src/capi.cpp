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

#include "contag/contag.h"

#include <cmath>
#include <cstring>
#include <mutex>
#include <new>
#include <set>
#include <string>

#include "contag/artifact.hpp"
#include "contag/synthetic.hpp"
#include "contag/training.hpp"

struct contag_model {
  contag::Model model;
};

namespace {

using nlohmann::json;
using namespace contag;

thread_local std::string g_last_error;

contag_status fail(contag_status status, const std::string& message) {
  g_last_error = message;
  return status;
}

template <typename F>
contag_status guarded(F&& body) {
  g_last_error.clear();
  try {
    body();
    return CONTAG_OK;
  } catch (const UsageError& e) {
    return fail(CONTAG_ERR_USAGE, e.what());
  } catch (const IoError& e) {
    return fail(CONTAG_ERR_IO, e.what());
  } catch (const ShapeError& e) {
    return fail(CONTAG_ERR_SHAPE, e.what());
  } catch (const NumericError& e) {
    return fail(CONTAG_ERR_NUMERIC, e.what());
  } catch (const json::exception& e) {
    return fail(CONTAG_ERR_USAGE, std::string("invalid JSON: ") + e.what());
  } catch (const std::bad_alloc&) {
    return fail(CONTAG_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(CONTAG_ERR_INTERNAL, e.what());
  }
}

char* dup_string(const std::string& s) {
  char* out = new char[s.size() + 1];
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void need(const void* p, const char* what) {
  if (p == nullptr) throw UsageError(std::string(what) + " must not be null");
}

void need_file(const char* path, const char* what) {
  need(path, what);
  if (!std::filesystem::exists(path)) throw IoError(std::string(what) + " not found: " + path);
}

TrainConfig parse_config(const char* config_json) {
  if (config_json == nullptr || *config_json == '\0') return TrainConfig{};
  json j;
  try {
    j = json::parse(config_json);
  } catch (const json::parse_error& e) {
    throw UsageError(std::string("config is not valid JSON: ") + e.what());
  }
  return config_from_json(j);
}

std::string join_tags(const std::vector<std::string>& tags) {
  std::string out;
  for (const auto& t : tags) out += (out.empty() ? "" : ",") + t;
  return out;
}

void check_schema(const TagSchema& model, const TagSchema& data) {
  if (model == data) return;
  throw UsageError("schema mismatch: model zone '" + model.zone() + "' tags {" + join_tags(model.tags()) +
                   "} vs data zone '" + data.zone() + "' tags {" + join_tags(data.tags()) + "}");
}

json point_to_json(const SearchPoint& p) {
  return {{"units", p.units},
          {"layers", p.layers},
          {"batch_size", p.batch_size},
          {"dropout", p.dropout},
          {"word_dropout", p.word_dropout}};
}

}  // namespace

extern "C" {

const char* contag_last_error(void) { return g_last_error.c_str(); }

const char* contag_version(void) { return "0.1.0"; }

void contag_string_free(char* s) { delete[] s; }

contag_status contag_train(const char* train_path, const char* dev_path, const char* config_json,
                           const char* model_dir, int64_t seed, int runs, char** summary_json) {
  return guarded([&] {
    need_file(train_path, "training data");
    need(model_dir, "model directory");
    if (dev_path != nullptr) need_file(dev_path, "dev data");
    if (runs < 1) throw UsageError("runs must be at least 1");
    TrainConfig config = parse_config(config_json);
    if (seed >= 0) config.seed = static_cast<std::uint64_t>(seed);
    const std::vector<std::string> warnings = config.validate();

    Dataset train_data = read_dataset(train_path);
    Dataset dev_data;
    if (dev_path != nullptr) {
      dev_data = read_dataset(dev_path);
      check_schema(train_data.schema, dev_data.schema);
    } else {
      if (train_data.sequences.size() < 2) throw UsageError("need at least two sequences to hold out a dev set");
      const Split split = monte_carlo_splits(train_data.sequences.size(), 1, 0.15, config.seed).front();
      Dataset t{train_data.schema, {}};
      dev_data.schema = train_data.schema;
      for (auto i : split.train) t.sequences.push_back(train_data.sequences[i]);
      for (auto i : split.dev) dev_data.sequences.push_back(train_data.sequences[i]);
      train_data = std::move(t);
    }

    json run_rows = json::array();
    json histories = json::array();
    std::optional<TrainResult> best;
    std::size_t best_run = 0;
    std::vector<double> scores;
    for (int r = 0; r < runs; ++r) {
      TrainConfig c = config;
      c.seed = config.seed + static_cast<std::uint64_t>(r);
      TrainResult result = contag::train(c, train_data, dev_data);
      scores.push_back(result.best_dev_f1);
      run_rows.push_back({{"seed", c.seed},
                          {"epochs", result.history.size()},
                          {"best_epoch", result.best_epoch},
                          {"dev_f1", result.best_dev_f1}});
      histories.push_back({{"seed", c.seed}, {"history", history_to_json(result.history)}});
      if (!best || result.best_dev_f1 > best->best_dev_f1) {
        best_run = static_cast<std::size_t>(r);
        best.emplace(std::move(result));
      }
    }
    double mean = 0.0;
    for (double s : scores) mean += s;
    mean /= static_cast<double>(scores.size());
    double var = 0.0;
    for (double s : scores) var += (s - mean) * (s - mean);
    const double stdev = scores.size() > 1 ? std::sqrt(var / static_cast<double>(scores.size() - 1)) : 0.0;

    save_model(model_dir, best->model);
    write_file_atomic(std::filesystem::path(model_dir) / "history.json",
                      json({{"runs", histories}}).dump(2) + "\n");

    const EvalReport final_report = contag::evaluate(best->model, dev_data.sequences);
    json summary = {{"runs", run_rows},
                    {"dev_f1_mean", mean},
                    {"dev_f1_stdev", stdev},
                    {"selected_run", best_run},
                    {"warnings", warnings},
                    {"final", report_to_json(final_report)}};
    if (best->pretrained_coverage >= 0.0) summary["pretrained_coverage"] = best->pretrained_coverage;
    if (summary_json != nullptr) *summary_json = dup_string(summary.dump());
  });
}

contag_status contag_model_load(const char* model_dir, contag_model** out) {
  return guarded([&] {
    need(out, "output handle");
    *out = nullptr;
    need(model_dir, "model directory");
    if (!std::filesystem::exists(model_dir)) throw IoError(std::string("model not found: ") + model_dir);
    *out = new contag_model{load_model(model_dir)};
  });
}

void contag_model_free(contag_model* model) { delete model; }

contag_status contag_model_save(const contag_model* model, const char* model_dir) {
  return guarded([&] {
    need(model, "model");
    need(model_dir, "model directory");
    save_model(model_dir, model->model);
  });
}

contag_status contag_model_info(const contag_model* model, char** info_json) {
  return guarded([&] {
    need(model, "model");
    need(info_json, "output string");
    const Model& m = model->model;
    json info = {{"config", config_to_json(m.config())},
                 {"schema", {{"zone", m.schema().zone()}, {"types", m.schema().types()}, {"tags", m.schema().tags()}}},
                 {"parameters", m.params().scalar_count()},
                 {"vocabulary_sizes", {{"word", m.vocabs().words.size()},
                                       {"pos", m.vocabs().pos.size()},
                                       {"shape", m.vocabs().shapes.size()},
                                       {"char", m.vocabs().chars.size()}}}};
    *info_json = dup_string(info.dump());
  });
}

contag_status contag_model_evaluate(const contag_model* model, const char* data_path, int gold_as_prediction,
                                    char** report_json) {
  return guarded([&] {
    need(model, "model");
    need(report_json, "output string");
    need_file(data_path, "data");
    const Dataset data = read_dataset(data_path);
    check_schema(model->model.schema(), data.schema);
    EvalReport report;
    if (gold_as_prediction) {
      std::vector<std::vector<Span>> gold;
      for (const auto& s : data.sequences) gold.push_back(spans_from_tags(s.tags));
      report = entity_prf(gold, gold, data.schema.types());
    } else {
      report = contag::evaluate(model->model, data.sequences);
    }
    *report_json = dup_string(report_to_json(report).dump());
  });
}

contag_status contag_format_report(const char* report_json, char** table) {
  return guarded([&] {
    need(report_json, "report");
    need(table, "output string");
    const json j = json::parse(report_json);
    EvalReport report;
    for (const auto& r : j.at("per_type")) {
      TypeScore t;
      t.type = r.at("type").get<std::string>();
      t.tp = r.at("tp").get<std::size_t>();
      t.fp = r.at("fp").get<std::size_t>();
      t.fn = r.at("fn").get<std::size_t>();
      t.precision = r.at("precision").get<double>();
      t.recall = r.at("recall").get<double>();
      t.f1 = r.at("f1").get<double>();
      t.in_gold = r.at("in_gold").get<bool>();
      report.per_type.push_back(t);
    }
    report.macro_precision = j.at("macro").at("precision").get<double>();
    report.macro_recall = j.at("macro").at("recall").get<double>();
    report.macro_f1 = j.at("macro").at("f1").get<double>();
    *table = dup_string(format_report_table(report));
  });
}

contag_status contag_model_predict(const contag_model* model, const char* input_path, char** jsonl) {
  return guarded([&] {
    need(model, "model");
    need(jsonl, "output string");
    need_file(input_path, "input");
    std::string out;
    std::size_t index = 0;
    for (const auto& seq : read_unlabeled(input_path)) {
      const std::vector<std::string> tags = model->model.predict(seq);
      json spans = json::array();
      for (const auto& s : spans_from_tags(tags)) spans.push_back({{"start", s.start}, {"end", s.end}, {"type", s.type}});
      out += json({{"sequence", index++}, {"tokens", seq.tokens}, {"tags", tags}, {"spans", spans}}).dump();
      out += '\n';
    }
    *jsonl = dup_string(out);
  });
}

contag_status contag_dataset_stats(const char* data_path, char** stats_json) {
  return guarded([&] {
    need(stats_json, "output string");
    need_file(data_path, "data");
    const Dataset data = read_dataset(data_path);
    const DatasetStats stats = dataset_stats(data);
    json spans = json::object();
    for (const auto& type : data.schema.types()) spans[type] = 0;
    for (const auto& [type, n] : stats.spans) spans[type] = n;
    json j = {{"zone", data.schema.zone()},
              {"types", data.schema.types()},
              {"sequences", stats.sequences},
              {"tokens", stats.tokens},
              {"spans", spans}};
    *stats_json = dup_string(j.dump());
  });
}

contag_status contag_wfr(const char* data_path, const char* vocab_path, int entities_only, int weighted,
                         int lowercase, double* ratio) {
  return guarded([&] {
    need(ratio, "output value");
    need_file(data_path, "data");
    need_file(vocab_path, "subword vocabulary");
    const Dataset data = read_dataset(data_path);
    SubwordVocab vocab = read_subword_vocab(vocab_path);
    vocab.lowercase = lowercase != 0;

    std::set<std::string> in_entities;
    std::vector<std::string> words;
    std::set<std::string> distinct;
    for (const auto& seq : data.sequences) {
      for (const auto& span : spans_from_tags(seq.tags)) {
        for (std::size_t i = span.start; i < span.end; ++i) in_entities.insert(seq.tokens[i]);
      }
      for (const auto& tok : seq.tokens) {
        if (weighted) {
          words.push_back(tok);
        } else if (distinct.insert(tok).second) {
          words.push_back(tok);
        }
      }
    }
    *ratio = word_fragmentation_ratio(words, vocab, entities_only ? &in_entities : nullptr);
  });
}

contag_status contag_synth(const char* spec_json, const char* out_dir) {
  return guarded([&] {
    need(out_dir, "output directory");
    SyntheticSpec spec;
    if (spec_json != nullptr && *spec_json != '\0') {
      const json j = json::parse(spec_json);
      if (!j.is_object()) throw UsageError("synthetic spec must be a JSON object");
      for (const auto& [key, value] : j.items()) {
        if (key == "seed") spec.seed = value.get<std::uint64_t>();
        else if (key == "train") spec.train = value.get<std::size_t>();
        else if (key == "dev") spec.dev = value.get<std::size_t>();
        else if (key == "test") spec.test = value.get<std::size_t>();
        else if (key == "distance") spec.distance = value.get<std::size_t>();
        else if (key == "zone") spec.zone = value.get<std::string>();
        else if (key == "start_trigger") spec.start_trigger = value.get<std::string>();
        else if (key == "effective_trigger") spec.effective_trigger = value.get<std::string>();
        else throw UsageError("unknown synthetic spec key '" + key + "'");
      }
    }
    write_synthetic(out_dir, generate_synthetic(spec));
  });
}

contag_status contag_tune(const char* train_path, const char* config_json, int budget, int folds,
                          double dev_fraction, uint64_t seed, int workers, const char* trial_log_path,
                          char** result_json) {
  return guarded([&] {
    need_file(train_path, "training data");
    if (budget < 1) throw UsageError("budget must be at least 1");
    if (folds < 1) throw UsageError("folds must be at least 1");
    if (workers < 1) throw UsageError("workers must be at least 1");
    if (!(dev_fraction > 0.0 && dev_fraction < 1.0)) throw UsageError("dev fraction must lie in (0, 1)");
    const TrainConfig base = parse_config(config_json);
    base.validate();
    const Dataset data = read_dataset(train_path);

    const SearchSpace space;
    const SearchResult result = random_search(
        space, static_cast<std::size_t>(budget), seed,
        [&](const SearchPoint& p, std::size_t) {
          return cross_validate(p.apply(base), data, static_cast<std::size_t>(folds), dev_fraction, seed);
        },
        static_cast<std::size_t>(workers));

    json trials = json::array();
    std::string log;
    for (const auto& t : result.trials) {
      json rec = point_to_json(t.point);
      rec["trial"] = t.index;
      rec["score"] = t.score;
      log += rec.dump() + "\n";
      trials.push_back(rec);
    }
    if (trial_log_path != nullptr) write_file_atomic(trial_log_path, log);
    json out = {{"best", point_to_json(result.best)},
                {"best_score", result.best_score},
                {"best_trial", result.best_trial},
                {"config", config_to_json(result.best.apply(base))},
                {"trials", trials}};
    if (result_json != nullptr) *result_json = dup_string(out.dump());
  });
}

}  // extern "C"
