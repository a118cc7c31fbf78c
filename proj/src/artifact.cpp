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

#include "contag/artifact.hpp"

#include <bit>
#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>
#include <unistd.h>

namespace contag {

using nlohmann::json;

namespace {

// Reads j[key] into out when present and records the key as consumed.
template <typename T>
void take(const json& j, const char* key, T& out, std::set<std::string>& seen) {
  seen.insert(key);
  auto it = j.find(key);
  if (it == j.end()) return;
  try {
    out = it->get<T>();
  } catch (const json::exception& e) {
    throw UsageError(std::string("config key '") + key + "': " + e.what());
  }
}

void reject_unknown(const json& j, const std::set<std::string>& seen, const std::string& where) {
  for (const auto& item : j.items()) {
    if (!seen.count(item.key())) throw UsageError("unknown config key '" + where + item.key() + "'");
  }
}

void require_object(const json& j, const std::string& what) {
  if (!j.is_object()) throw UsageError(what + " must be a JSON object");
}

}  // namespace

json config_to_json(const TrainConfig& c) {
  const EncoderConfig& e = c.encoder;
  const FeatureConfig& f = c.features;
  json enc = {{"kind", to_string(e.kind)},
              {"layers", e.layers},
              {"units", e.units},
              {"kernel_width", e.kernel_width},
              {"dilations", e.dilations},
              {"heads", e.heads},
              {"ff_dim", e.ff_dim},
              {"max_positions", e.max_positions},
              {"positional", e.positional}};
  json feat = {{"word_dim", f.word_dim},
               {"use_pos", f.use_pos},
               {"pos_dim", f.pos_dim},
               {"use_shape", f.use_shape},
               {"shape_dim", f.shape_dim},
               {"use_char", f.use_char},
               {"char_dim", f.char_cnn.char_dim},
               {"char_filter_width", f.char_cnn.filter_width},
               {"char_filters", f.char_cnn.filters},
               {"min_count", f.min_count},
               {"freeze_words", f.freeze_words},
               {"pretrained", f.pretrained}};
  return {{"encoder", enc},
          {"features", feat},
          {"use_crf", c.use_crf},
          {"batch_size", c.batch_size},
          {"dropout", c.dropout},
          {"word_dropout", c.word_dropout},
          {"learning_rate", c.learning_rate},
          {"max_epochs", c.max_epochs},
          {"patience", c.patience},
          {"seed", c.seed},
          {"clip_norm", c.clip_norm}};
}

TrainConfig config_from_json(const json& j) {
  require_object(j, "config");
  TrainConfig c;
  std::set<std::string> seen;
  if (auto it = j.find("encoder"); it != j.end()) {
    require_object(*it, "config 'encoder'");
    std::set<std::string> s;
    std::string kind = to_string(c.encoder.kind);
    take(*it, "kind", kind, s);
    c.encoder.kind = parse_encoder_kind(kind);
    take(*it, "layers", c.encoder.layers, s);
    take(*it, "units", c.encoder.units, s);
    take(*it, "kernel_width", c.encoder.kernel_width, s);
    take(*it, "dilations", c.encoder.dilations, s);
    take(*it, "heads", c.encoder.heads, s);
    take(*it, "ff_dim", c.encoder.ff_dim, s);
    take(*it, "max_positions", c.encoder.max_positions, s);
    take(*it, "positional", c.encoder.positional, s);
    reject_unknown(*it, s, "encoder.");
  }
  seen.insert("encoder");
  if (auto it = j.find("features"); it != j.end()) {
    require_object(*it, "config 'features'");
    std::set<std::string> s;
    FeatureConfig& f = c.features;
    take(*it, "word_dim", f.word_dim, s);
    take(*it, "use_pos", f.use_pos, s);
    take(*it, "pos_dim", f.pos_dim, s);
    take(*it, "use_shape", f.use_shape, s);
    take(*it, "shape_dim", f.shape_dim, s);
    take(*it, "use_char", f.use_char, s);
    take(*it, "char_dim", f.char_cnn.char_dim, s);
    take(*it, "char_filter_width", f.char_cnn.filter_width, s);
    take(*it, "char_filters", f.char_cnn.filters, s);
    take(*it, "min_count", f.min_count, s);
    take(*it, "freeze_words", f.freeze_words, s);
    take(*it, "pretrained", f.pretrained, s);
    reject_unknown(*it, s, "features.");
  }
  seen.insert("features");
  take(j, "use_crf", c.use_crf, seen);
  take(j, "batch_size", c.batch_size, seen);
  take(j, "dropout", c.dropout, seen);
  take(j, "word_dropout", c.word_dropout, seen);
  take(j, "learning_rate", c.learning_rate, seen);
  take(j, "max_epochs", c.max_epochs, seen);
  take(j, "patience", c.patience, seen);
  take(j, "seed", c.seed, seen);
  take(j, "clip_norm", c.clip_norm, seen);
  reject_unknown(j, seen, "");
  return c;
}

json report_to_json(const EvalReport& report) {
  json rows = json::array();
  for (const auto& t : report.per_type) {
    rows.push_back({{"type", t.type},
                    {"tp", t.tp},
                    {"fp", t.fp},
                    {"fn", t.fn},
                    {"precision", t.precision},
                    {"recall", t.recall},
                    {"f1", t.f1},
                    {"in_gold", t.in_gold}});
  }
  return {{"per_type", rows},
          {"macro", {{"precision", report.macro_precision},
                     {"recall", report.macro_recall},
                     {"f1", report.macro_f1}}}};
}

json history_to_json(const std::vector<EpochRecord>& history) {
  json out = json::array();
  for (const auto& r : history) {
    out.push_back({{"epoch", r.epoch},
                   {"train_loss", r.train_loss},
                   {"dev_precision", r.dev_precision},
                   {"dev_recall", r.dev_recall},
                   {"dev_f1", r.dev_f1}});
  }
  return out;
}

void write_file_atomic(const std::filesystem::path& path, const std::string& bytes) {
  namespace fs = std::filesystem;
  fs::path tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw IoError("write failed: " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp);
    throw IoError("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
  }
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

namespace {

void put_f64(std::string& out, double v) {
  auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

double get_f64(const std::string& in, std::size_t at) {
  std::uint64_t bits = 0;
  for (int i = 7; i >= 0; --i) bits = (bits << 8) | static_cast<unsigned char>(in[at + static_cast<std::size_t>(i)]);
  return std::bit_cast<double>(bits);
}

}  // namespace

void save_model(const std::filesystem::path& dir, const Model& model) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create model directory " + dir.string() + ": " + ec.message());

  std::string payload;
  json catalog = json::array();
  for (const auto& [name, t] : model.params().items()) {
    const std::size_t offset = payload.size();
    for (std::size_t i = 0; i < t.size(); ++i) put_f64(payload, t[i]);
    catalog.push_back({{"name", name}, {"shape", t.shape()}, {"offset", offset}, {"bytes", payload.size() - offset}});
  }
  const FeatureVocabs& v = model.vocabs();
  json manifest = {{"format_version", kArtifactFormatVersion},
                   {"config", config_to_json(model.config())},
                   {"schema", {{"zone", model.schema().zone()}, {"types", model.schema().types()}}},
                   {"vocabularies", {{"word", v.words.entries()},
                                     {"pos", v.pos.entries()},
                                     {"shape", v.shapes.entries()},
                                     {"char", v.chars.entries()}}},
                   {"payload", kPayloadFile},
                   {"payload_bytes", payload.size()},
                   {"tensors", catalog}};
  write_file_atomic(dir / kPayloadFile, payload);
  write_file_atomic(dir / kManifestFile, manifest.dump(2) + "\n");
}

Model load_model(const std::filesystem::path& dir) {
  const auto manifest_path = dir / kManifestFile;
  if (!std::filesystem::exists(manifest_path)) throw IoError("no model manifest at " + manifest_path.string());
  json m;
  try {
    m = json::parse(read_text_file(manifest_path));
  } catch (const json::parse_error& e) {
    throw IoError("malformed manifest " + manifest_path.string() + ": " + e.what());
  }
  try {
    const int version = m.at("format_version").get<int>();
    if (version != kArtifactFormatVersion) {
      throw IoError("unsupported model format version " + std::to_string(version) + " in " + manifest_path.string());
    }
    TrainConfig config = config_from_json(m.at("config"));
    TagSchema schema(m.at("schema").at("zone").get<std::string>(),
                     m.at("schema").at("types").get<std::vector<std::string>>());
    const json& vj = m.at("vocabularies");
    FeatureVocabs vocabs;
    vocabs.words = Vocabulary::from_entries(vj.at("word").get<std::vector<std::string>>());
    vocabs.pos = Vocabulary::from_entries(vj.at("pos").get<std::vector<std::string>>());
    vocabs.shapes = Vocabulary::from_entries(vj.at("shape").get<std::vector<std::string>>());
    vocabs.chars = Vocabulary::from_entries(vj.at("char").get<std::vector<std::string>>());

    const std::string payload = read_text_file(dir / kPayloadFile);
    if (payload.size() != m.at("payload_bytes").get<std::size_t>()) {
      throw IoError("payload size of " + (dir / kPayloadFile).string() + " does not match the manifest");
    }
    ad::ParameterSet params;
    std::size_t cursor = 0;
    for (const auto& entry : m.at("tensors")) {
      const auto name = entry.at("name").get<std::string>();
      const auto shape = entry.at("shape").get<Shape>();
      const auto offset = entry.at("offset").get<std::size_t>();
      const auto bytes = entry.at("bytes").get<std::size_t>();
      std::size_t count = 1;
      for (auto d : shape) count *= d;
      if (offset != cursor || bytes != 8 * count || offset + bytes > payload.size()) {
        throw IoError("tensor catalog entry '" + name + "' does not tile the payload");
      }
      std::vector<double> values(count);
      for (std::size_t i = 0; i < count; ++i) values[i] = get_f64(payload, offset + 8 * i);
      params.add(name, Tensor(shape, std::move(values)));
      cursor += bytes;
    }
    if (cursor != payload.size()) throw IoError("tensor catalog leaves payload bytes unaccounted for");
    return Model(std::move(config), std::move(schema), std::move(vocabs), std::move(params));
  } catch (const json::exception& e) {
    throw IoError("malformed manifest " + manifest_path.string() + ": " + e.what());
  }
}

}  // namespace contag
