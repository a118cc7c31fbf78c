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

// Output layer: linear-chain CRF (forward algorithm, Viterbi, negative
// log-likelihood) and the independent per-token softmax baseline.

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "contag/graph.hpp"
#include "contag/tensor.hpp"

namespace contag {

/// BIO label inventory of one contract zone. Index 0 is "O"; entity type i
/// owns B at 1 + 2i and I at 2 + 2i.
class TagSchema {
 public:
  TagSchema() : tags_{"O"} {}
  TagSchema(std::string zone, std::vector<std::string> types);

  const std::string& zone() const { return zone_; }
  const std::vector<std::string>& types() const { return types_; }
  const std::vector<std::string>& tags() const { return tags_; }
  std::size_t size() const { return tags_.size(); }

  /// Throws UsageError naming the tag when it is not part of the schema.
  int index(const std::string& tag) const;
  std::optional<int> find(const std::string& tag) const;
  const std::string& tag(int index) const { return tags_.at(static_cast<std::size_t>(index)); }
  std::optional<std::size_t> type_index(const std::string& type) const;

  static int begin_tag(std::size_t type) { return static_cast<int>(1 + 2 * type); }
  static int inside_tag(std::size_t type) { return static_cast<int>(2 + 2 * type); }

  friend bool operator==(const TagSchema& a, const TagSchema& b) {
    return a.zone_ == b.zone_ && a.types_ == b.types_;
  }

 private:
  std::string zone_;
  std::vector<std::string> types_;
  std::vector<std::string> tags_;
};

namespace crf {

/// transitions(i, j) scores label j following label i; start and end are
/// 1 x K rows.
struct CrfParams {
  Tensor transitions;
  Tensor start;
  Tensor end;

  static CrfParams zeros(std::size_t labels);
  std::size_t labels() const { return start.cols(); }
};

double sequence_score(const Tensor& emissions, const CrfParams& params, std::span<const int> tags);

/// log of the sum over all label paths of exp(sequence_score).
double log_partition(const Tensor& emissions, const CrfParams& params);

struct ViterbiResult {
  std::vector<int> path;
  double score = 0.0;
};

/// Highest-scoring path. Ties go to the lower label index at each
/// backtracking step.
ViterbiResult viterbi(const Tensor& emissions, const CrfParams& params);

double crf_nll(const Tensor& emissions, const CrfParams& params, std::span<const int> gold);

/// Per-token argmax, ties to the lower index.
std::vector<int> softmax_decode(const Tensor& emissions);

/// T x K posterior label marginals from forward-backward.
Tensor marginals(const Tensor& emissions, const CrfParams& params);

// Differentiable versions. The parameter Vars are transitions (K x K),
// start (1 x K) and end (1 x K).
ad::Var nll(ad::Var emissions, ad::Var transitions, ad::Var start, ad::Var end,
            std::span<const int> gold);
ad::Var log_partition(ad::Var emissions, ad::Var transitions, ad::Var start, ad::Var end);
/// Sum over tokens of -log softmax(emissions[t])[gold[t]].
ad::Var softmax_cross_entropy(ad::Var emissions, std::span<const int> gold);

}  // namespace crf
}  // namespace contag
