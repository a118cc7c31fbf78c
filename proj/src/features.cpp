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

#include "contag/features.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include "contag/init.hpp"

namespace contag {

Vocabulary::Vocabulary() {
  add(kPadEntry);
  add(kUnkEntry);
}

Vocabulary Vocabulary::from_entries(std::vector<std::string> entries) {
  if (entries.size() < 2 || entries[0] != kPadEntry || entries[1] != kUnkEntry) {
    throw IoError("vocabulary must start with the reserved <PAD> and <UNK> entries");
  }
  Vocabulary v;
  for (std::size_t i = 2; i < entries.size(); ++i) {
    if (v.contains(entries[i])) throw IoError("duplicate vocabulary entry '" + entries[i] + "'");
    v.add(entries[i]);
  }
  return v;
}

int Vocabulary::add(const std::string& entry) {
  if (auto it = index_.find(entry); it != index_.end()) return it->second;
  const int id = static_cast<int>(entries_.size());
  entries_.push_back(entry);
  index_.emplace(entry, id);
  return id;
}

int Vocabulary::lookup(const std::string& entry) const {
  auto it = index_.find(entry);
  return it == index_.end() ? kUnk : it->second;
}

std::string token_shape(const std::string& token) {
  if (token.empty()) throw UsageError("token_shape: empty token");
  std::string out;
  std::string last;
  for (const auto& ch : characters(token)) {
    std::string sym = ch;
    if (ch.size() == 1) {
      const unsigned char c = static_cast<unsigned char>(ch[0]);
      if (c >= 'A' && c <= 'Z') sym = "X";
      else if (c >= 'a' && c <= 'z') sym = "x";
      else if (c >= '0' && c <= '9') sym = "d";
    }
    if (sym != last) out += sym;
    last = sym;
  }
  return out;
}

std::vector<std::string> characters(const std::string& token) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < token.size();) {
    std::size_t j = i + 1;
    while (j < token.size() && (static_cast<unsigned char>(token[j]) & 0xC0) == 0x80) ++j;
    out.push_back(token.substr(i, j - i));
    i = j;
  }
  return out;
}

Vocabulary build_vocab(std::span<const LabeledSequence> corpus, Field field, std::size_t min_count) {
  if (min_count < 1) throw UsageError("build_vocab: min_count must be at least 1");
  if (corpus.empty()) throw UsageError("build_vocab: empty corpus");
  std::map<std::string, std::size_t> freq;
  for (const auto& seq : corpus) {
    for (std::size_t t = 0; t < seq.size(); ++t) {
      switch (field) {
        case Field::kWord: ++freq[seq.tokens[t]]; break;
        case Field::kPos: ++freq[seq.pos[t]]; break;
        case Field::kShape: ++freq[token_shape(seq.tokens[t])]; break;
        case Field::kChar:
          for (const auto& c : characters(seq.tokens[t])) ++freq[c];
          break;
      }
    }
  }
  std::vector<std::pair<std::string, std::size_t>> ranked(freq.begin(), freq.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  Vocabulary vocab;
  for (const auto& [entry, n] : ranked) {
    if (n >= min_count) vocab.add(entry);
  }
  return vocab;
}

// ---------------------------------------------------------------------------
// Pretrained vectors

PretrainedLoad load_pretrained(const std::filesystem::path& path, const Vocabulary& vocab,
                               std::size_t dim, Rng& rng) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open embedding file '" + path.string() + "'");
  if (dim == 0) throw UsageError("embedding dimension must be positive");

  PretrainedLoad out;
  out.table.weights = Tensor::matrix(vocab.size(), dim);
  out.covered.assign(vocab.size(), false);
  std::vector<double> mean(dim, 0.0);

  std::string line;
  std::size_t lineno = 0;
  std::vector<double> values;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream fields(line);
    std::string word;
    if (!(fields >> word)) continue;
    values.clear();
    std::string tok;
    while (fields >> tok) {
      char* end = nullptr;
      const double v = std::strtod(tok.c_str(), &end);
      if (end == tok.c_str() || *end != '\0') {
        throw IoError(path.string() + ":" + std::to_string(lineno) + ": bad number '" + tok + "'");
      }
      values.push_back(v);
    }
    if (lineno == 1 && values.size() == 1 && dim != 1 &&
        word.find_first_not_of("0123456789") == std::string::npos) {
      continue;  // word2vec text header
    }
    if (values.size() != dim) {
      throw IoError(path.string() + ":" + std::to_string(lineno) + ": expected " +
                    std::to_string(dim) + " values, found " + std::to_string(values.size()));
    }
    ++out.file_vectors;
    for (std::size_t c = 0; c < dim; ++c) mean[c] += values[c];
    const int row = vocab.lookup(word);
    if (row != Vocabulary::kUnk && row != Vocabulary::kPad && vocab.entry(row) == word) {
      std::copy(values.begin(), values.end(), out.table.weights.row_span(static_cast<std::size_t>(row)).begin());
      out.covered[static_cast<std::size_t>(row)] = true;
    }
  }

  std::size_t hits = 0;
  for (std::size_t r = 2; r < vocab.size(); ++r) {
    if (out.covered[r]) {
      ++hits;
      continue;
    }
    for (double& v : out.table.weights.row_span(r)) v = rng.normal(0.0, 0.1);
  }
  auto unk = out.table.weights.row_span(Vocabulary::kUnk);
  for (std::size_t c = 0; c < dim; ++c) {
    unk[c] = out.file_vectors ? mean[c] / static_cast<double>(out.file_vectors) : rng.normal(0.0, 0.1);
  }
  out.coverage = vocab.size() > 2 ? static_cast<double>(hits) / static_cast<double>(vocab.size() - 2) : 0.0;
  return out;
}

void save_embeddings(const std::filesystem::path& path, const Vocabulary& vocab, const Tensor& weights) {
  if (weights.rows() != vocab.size()) {
    throw ShapeError("save_embeddings: " + std::to_string(vocab.size()) + " entries vs " +
                     shape_string(weights.shape()));
  }
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << std::setprecision(17);
  for (std::size_t r = 2; r < vocab.size(); ++r) {
    out << vocab.entry(static_cast<int>(r));
    for (double v : weights.row_span(r)) out << ' ' << v;
    out << '\n';
  }
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

// ---------------------------------------------------------------------------
// Sequence features

std::size_t FeatureConfig::output_dim() const {
  return word_dim + (use_pos ? pos_dim : 0) + (use_shape ? shape_dim : 0) +
         (use_char ? char_cnn.filters : 0);
}

FeatureVocabs FeatureVocabs::build(std::span<const LabeledSequence> corpus, std::size_t min_count) {
  FeatureVocabs v;
  v.words = build_vocab(corpus, Field::kWord, min_count);
  v.pos = build_vocab(corpus, Field::kPos, 1);
  v.shapes = build_vocab(corpus, Field::kShape, 1);
  v.chars = build_vocab(corpus, Field::kChar, 1);
  return v;
}

EncodedSequence encode_sequence(const LabeledSequence& seq, const FeatureVocabs& vocabs) {
  EncodedSequence e;
  for (std::size_t t = 0; t < seq.size(); ++t) {
    e.words.push_back(vocabs.words.lookup(seq.tokens[t]));
    e.pos.push_back(vocabs.pos.lookup(seq.pos[t]));
    e.shapes.push_back(vocabs.shapes.lookup(token_shape(seq.tokens[t])));
    std::vector<int> chars;
    for (const auto& c : characters(seq.tokens[t])) chars.push_back(vocabs.chars.lookup(c));
    e.chars.push_back(std::move(chars));
  }
  return e;
}

namespace {

Tensor random_embedding(std::size_t rows, std::size_t dim, Rng& rng) {
  Tensor t = init::normal(rows, dim, 0.1, rng);
  for (double& v : t.row_span(Vocabulary::kPad)) v = 0.0;
  return t;
}

}  // namespace

void init_feature_params(ad::ParameterSet& params, const FeatureConfig& config,
                         const FeatureVocabs& vocabs, Rng& rng, const Tensor* pretrained_words) {
  if (config.word_dim == 0) throw UsageError("word embedding dimension must be positive");
  if (pretrained_words) {
    if (pretrained_words->rows() != vocabs.words.size() || pretrained_words->cols() != config.word_dim) {
      throw ShapeError("pretrained word matrix " + shape_string(pretrained_words->shape()) +
                       " does not match vocabulary of " + std::to_string(vocabs.words.size()) +
                       " x " + std::to_string(config.word_dim));
    }
    Tensor w = *pretrained_words;
    for (double& v : w.row_span(Vocabulary::kPad)) v = 0.0;
    params.add("emb.word", std::move(w));
  } else {
    params.add("emb.word", random_embedding(vocabs.words.size(), config.word_dim, rng));
  }
  if (config.use_pos) params.add("emb.pos", random_embedding(vocabs.pos.size(), config.pos_dim, rng));
  if (config.use_shape) params.add("emb.shape", random_embedding(vocabs.shapes.size(), config.shape_dim, rng));
  if (config.use_char) {
    const auto& cc = config.char_cnn;
    if (cc.filter_width < 1 || cc.filters < 1 || cc.char_dim < 1) {
      throw UsageError("char CNN needs positive width, filter count and char dimension");
    }
    params.add("emb.char", random_embedding(vocabs.chars.size(), cc.char_dim, rng));
    params.add("char.W", init::glorot(cc.filter_width * cc.char_dim, cc.filters, rng));
    params.add("char.b", Tensor::matrix(1, cc.filters));
  }
}

std::vector<std::string> embedding_param_names(const FeatureConfig& config) {
  std::vector<std::string> names{"emb.word"};
  if (config.use_pos) names.push_back("emb.pos");
  if (config.use_shape) names.push_back("emb.shape");
  if (config.use_char) names.push_back("emb.char");
  return names;
}

ad::Var char_cnn_embed(ad::Graph& graph, std::span<const int> chars, const CharCnnConfig& config,
                       const ad::ParameterSet& params) {
  std::vector<int> padded(chars.begin(), chars.end());
  if (padded.size() < config.filter_width) padded.resize(config.filter_width, Vocabulary::kPad);
  auto table = graph.parameter(params, "emb.char");
  auto x = ad::gather(table, padded);
  auto conv = ad::conv1d(x, graph.parameter(params, "char.W"), config.filter_width, 1, ad::Padding::kValid);
  auto pooled = ad::max_over_time(ad::add_bias(conv, graph.parameter(params, "char.b")));
  return ad::relu(pooled);
}

ad::Var embed_sequence(ad::Graph& graph, const EncodedSequence& seq, const FeatureConfig& config,
                       const ad::ParameterSet& params) {
  if (seq.size() == 0) throw UsageError("embed_sequence: empty sequence");
  std::vector<ad::Var> parts;
  parts.push_back(ad::gather(graph.parameter(params, "emb.word"), seq.words));
  if (config.use_pos) parts.push_back(ad::gather(graph.parameter(params, "emb.pos"), seq.pos));
  if (config.use_shape) parts.push_back(ad::gather(graph.parameter(params, "emb.shape"), seq.shapes));
  if (config.use_char) {
    std::vector<ad::Var> rows;
    for (const auto& word : seq.chars) rows.push_back(char_cnn_embed(graph, word, config.char_cnn, params));
    parts.push_back(ad::concat(rows, 0));
  }
  return ad::concat(parts, 1);
}

std::vector<int> word_dropout(std::span<const int> indices, double rate, Rng& rng) {
  if (!(rate >= 0.0 && rate <= 1.0)) throw UsageError("word dropout rate must lie in [0, 1]");
  std::vector<int> out(indices.begin(), indices.end());
  if (rate == 0.0) return out;
  for (int& idx : out) {
    if (idx != Vocabulary::kPad && rng.bernoulli(rate)) idx = Vocabulary::kUnk;
  }
  return out;
}

}  // namespace contag
