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

// Dataset files, BIO span handling, entity-level scoring and the subword
// fragmentation diagnostic.

#include <cstddef>
#include <filesystem>
#include <map>
#include <set>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "contag/crf.hpp"

namespace contag {

struct LabeledSequence {
  std::vector<std::string> tokens;
  std::vector<std::string> pos;
  std::vector<std::string> tags;
  std::string zone;

  std::size_t size() const { return tokens.size(); }
};

/// One file's worth of sequences for a single zone.
struct Dataset {
  TagSchema schema;
  std::vector<LabeledSequence> sequences;
};

/// Half-open token range [start, end) labelled with an entity type.
struct Span {
  std::size_t start = 0;
  std::size_t end = 0;
  std::string type;

  friend bool operator==(const Span&, const Span&) = default;
  friend auto operator<=>(const Span&, const Span&) = default;
};

/// Reads the zone file format:
///   #zone=<name> types=<t1,t2,...>
///   surface<TAB>pos<TAB>tag
///   <blank line between sequences>
Dataset read_dataset(const std::filesystem::path& path);
Dataset parse_dataset(const std::string& text, const std::string& source = "<memory>");
void write_dataset(const std::filesystem::path& path, const Dataset& data);
std::string format_dataset(const Dataset& data);

/// Reads sequences for tagging. The header line is optional and a third
/// column, if present, is ignored. Returns an empty list for an empty file.
std::vector<LabeledSequence> read_unlabeled(const std::filesystem::path& path);

/// Maximal B-x I-x* runs. A stray I-x starts a new span.
std::vector<Span> spans_from_tags(std::span<const std::string> tags);
std::vector<Span> spans_from_tags(const TagSchema& schema, std::span<const int> tags);
std::vector<std::string> tags_from_spans(std::span<const Span> spans, std::size_t length);

struct TypeScore {
  std::string type;
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  bool in_gold = false;
};

struct EvalReport {
  std::vector<TypeScore> per_type;
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f1 = 0.0;
};

/// Unweighted mean; 0 for an empty list.
double macro_average(std::span<const double> values);

/// P, R and F1 from counts with 0/0 defined as 0.
TypeScore score_counts(std::string type, std::size_t tp, std::size_t fp, std::size_t fn);

/// Exact-match entity scoring. Counts are pooled over sequences per type,
/// then macro-averaged over the types that occur in gold. `types` fixes the
/// row order; types only seen in predictions are appended.
EvalReport entity_prf(std::span<const std::vector<Span>> gold, std::span<const std::vector<Span>> pred,
                      std::span<const std::string> types);

/// Rounds to `decimals` places after removing binary representation noise.
/// Exact ties round down: 95.25 -> 95.2, 86.55 -> 86.5.
double round_for_display(double value, int decimals);

/// Per-type rows plus a macro-avg row, scores in percent with one decimal.
/// Types absent from gold are marked with '*' and excluded from the macro.
std::string format_report_table(const EvalReport& report);

struct DatasetStats {
  std::size_t sequences = 0;
  std::size_t tokens = 0;
  std::map<std::string, std::size_t> spans;
};

DatasetStats dataset_stats(const Dataset& data);

struct SubwordVocab {
  std::unordered_set<std::string> pieces;
  std::string unk = "[UNK]";
  bool lowercase = false;
};

/// One piece per line; "##" marks continuation pieces.
SubwordVocab read_subword_vocab(const std::filesystem::path& path);

/// Greedy longest-match-first segmentation. Returns {unk} when some suffix
/// cannot be matched.
std::vector<std::string> wordpiece_tokenize(const std::string& word, const SubwordVocab& vocab);

/// Mean number of pieces per word. With `restrict_to`, only words in that
/// set are counted.
double word_fragmentation_ratio(std::span<const std::string> words, const SubwordVocab& vocab,
                                const std::set<std::string>* restrict_to = nullptr);

}  // namespace contag
