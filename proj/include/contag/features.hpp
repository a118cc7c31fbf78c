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

#pragma once

// Token-level input features: vocabularies, token shapes, pretrained word
// vectors, character CNN word embeddings and word dropout.

#include <filesystem>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "contag/data.hpp"
#include "contag/graph.hpp"

namespace contag {

/// Ordered entry list with reserved PAD (0) and UNK (1) slots. Lookups of
/// unseen entries return UNK.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr const char* kPadEntry = "<PAD>";
  static constexpr const char* kUnkEntry = "<UNK>";

  Vocabulary();
  /// `entries` must start with the two reserved entries.
  static Vocabulary from_entries(std::vector<std::string> entries);

  int add(const std::string& entry);
  int lookup(const std::string& entry) const;
  bool contains(const std::string& entry) const { return index_.count(entry) != 0; }
  const std::string& entry(int index) const { return entries_.at(static_cast<std::size_t>(index)); }
  std::size_t size() const { return entries_.size(); }
  const std::vector<std::string>& entries() const { return entries_; }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.entries_ == b.entries_; }

 private:
  std::vector<std::string> entries_;
  std::unordered_map<std::string, int> index_;
};

enum class Field { kWord, kPos, kShape, kChar };

/// Character classes: upper -> X, lower -> x, digit -> d, anything else
/// kept; runs of one symbol collapse to a single occurrence.
std::string token_shape(const std::string& token);

/// UTF-8 code points of a token as separate strings.
std::vector<std::string> characters(const std::string& token);

/// Entries with frequency >= min_count ordered by descending frequency,
/// then lexicographically.
Vocabulary build_vocab(std::span<const LabeledSequence> corpus, Field field, std::size_t min_count);

struct EmbeddingTable {
  Tensor weights;
  bool trainable = true;
};

struct PretrainedLoad {
  EmbeddingTable table;
  std::vector<bool> covered;  // per vocabulary row
  std::size_t file_vectors = 0;
  /// Covered non-reserved rows over all non-reserved rows.
  double coverage = 0.0;
};

/// Whitespace text format, one `word v1 ... v_dim` record per line. A
/// leading `<count> <dim>` line (word2vec text header) is skipped.
PretrainedLoad load_pretrained(const std::filesystem::path& path, const Vocabulary& vocab,
                               std::size_t dim, Rng& rng);
/// Writes every non-reserved row in the same text format.
void save_embeddings(const std::filesystem::path& path, const Vocabulary& vocab, const Tensor& weights);

struct CharCnnConfig {
  std::size_t char_dim = 16;
  std::size_t filter_width = 3;
  std::size_t filters = 30;
};

struct FeatureConfig {
  std::size_t word_dim = 200;
  bool use_pos = true;
  std::size_t pos_dim = 25;
  bool use_shape = true;
  std::size_t shape_dim = 25;
  bool use_char = false;
  CharCnnConfig char_cnn;
  std::size_t min_count = 1;
  bool freeze_words = false;
  std::string pretrained;  // optional embedding file

  std::size_t output_dim() const;
};

struct FeatureVocabs {
  Vocabulary words;
  Vocabulary pos;
  Vocabulary shapes;
  Vocabulary chars;

  static FeatureVocabs build(std::span<const LabeledSequence> corpus, std::size_t min_count);
  friend bool operator==(const FeatureVocabs&, const FeatureVocabs&) = default;
};

struct EncodedSequence {
  std::vector<int> words;
  std::vector<int> pos;
  std::vector<int> shapes;
  std::vector<std::vector<int>> chars;

  std::size_t size() const { return words.size(); }
};

EncodedSequence encode_sequence(const LabeledSequence& seq, const FeatureVocabs& vocabs);

/// Adds emb.word / emb.pos / emb.shape / emb.char and the char CNN filters.
/// `pretrained_words`, when given, replaces the random word matrix.
void init_feature_params(ad::ParameterSet& params, const FeatureConfig& config,
                         const FeatureVocabs& vocabs, Rng& rng, const Tensor* pretrained_words = nullptr);

/// Names of the embedding matrices whose PAD row stays frozen at zero.
std::vector<std::string> embedding_param_names(const FeatureConfig& config);

/// T x D token features, row t = [word | pos | shape | char] of token t.
ad::Var embed_sequence(ad::Graph& graph, const EncodedSequence& seq, const FeatureConfig& config,
                       const ad::ParameterSet& params);

/// Convolution over the character embeddings of one word, max over
/// positions, then relu. Returns 1 x filters.
ad::Var char_cnn_embed(ad::Graph& graph, std::span<const int> chars, const CharCnnConfig& config,
                       const ad::ParameterSet& params);

/// Replaces each non-PAD index by UNK with probability `rate`.
std::vector<int> word_dropout(std::span<const int> indices, double rate, Rng& rng);

}  // namespace contag
