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

// Tagger model, Adam training with early stopping, Monte-Carlo
// cross-validation splits and random hyperparameter search.

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "contag/crf.hpp"
#include "contag/data.hpp"
#include "contag/encoders.hpp"
#include "contag/features.hpp"
#include "contag/graph.hpp"

namespace contag {

struct TrainConfig {
  EncoderConfig encoder;
  FeatureConfig features;
  bool use_crf = true;
  std::size_t batch_size = 16;
  double dropout = 0.5;
  double word_dropout = 0.0;
  double learning_rate = 1e-3;
  std::size_t max_epochs = 50;
  std::size_t patience = 5;
  std::uint64_t seed = 1;
  double clip_norm = 5.0;

  /// Throws UsageError for invalid values; returns warnings for values
  /// outside the tuning grid.
  std::vector<std::string> validate() const;
};

/// Encoder + dense emission layer + CRF or softmax output, together with the
/// vocabularies it was built on.
class Model {
 public:
  Model(TrainConfig config, TagSchema schema, FeatureVocabs vocabs, ad::ParameterSet params);

  /// Fresh parameters for `vocabs`; `pretrained_words` replaces emb.word.
  static Model initialize(const TrainConfig& config, const TagSchema& schema, FeatureVocabs vocabs, Rng& rng,
                          const Tensor* pretrained_words = nullptr);

  const TrainConfig& config() const { return config_; }
  const TagSchema& schema() const { return schema_; }
  const FeatureVocabs& vocabs() const { return vocabs_; }
  const ad::ParameterSet& params() const { return params_; }
  ad::ParameterSet& params() { return params_; }

  EncodedSequence encode(const LabeledSequence& seq) const { return encode_sequence(seq, vocabs_); }
  std::vector<int> gold_indices(const LabeledSequence& seq) const;

  /// T x K emission scores. A non-null rng enables dropout.
  ad::Var emissions(ad::Graph& graph, const EncodedSequence& seq, Rng* dropout_rng) const;
  /// Per-sequence training loss: CRF negative log-likelihood or summed
  /// token cross-entropy.
  ad::Var loss(ad::Graph& graph, const EncodedSequence& seq, std::span<const int> gold,
               Rng* dropout_rng) const;

  std::vector<int> predict_indices(const EncodedSequence& seq) const;
  std::vector<std::string> predict(const LabeledSequence& seq) const;
  crf::CrfParams crf_params() const;

 private:
  TrainConfig config_;
  TagSchema schema_;
  FeatureVocabs vocabs_;
  ad::ParameterSet params_;
};

/// Decodes every sequence and scores the predicted spans.
EvalReport evaluate(const Model& model, std::span<const LabeledSequence> data);

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t step = 0;
  std::map<std::string, Tensor> m;
  std::map<std::string, Tensor> v;
};

/// Bias-corrected Adam update of every parameter that has a gradient.
void adam_step(ad::ParameterSet& params, const std::map<std::string, Tensor>& grads, AdamState& state,
               double learning_rate);

/// Scales all gradients so their global L2 norm is at most max_norm.
/// Returns the norm before clipping.
double clip_global_norm(std::map<std::string, Tensor>& grads, double max_norm);

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> dev;
};

/// Independent shuffle-and-split per fold (not a partition of the data).
std::vector<Split> monte_carlo_splits(std::size_t dataset_size, std::size_t folds, double dev_fraction,
                                      std::uint64_t seed);

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double dev_precision = 0.0;
  double dev_recall = 0.0;
  double dev_f1 = 0.0;

  friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

struct TrainResult {
  Model model;
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;  // 0: no epoch run
  double best_dev_f1 = 0.0;
  double pretrained_coverage = -1.0;  // -1: no pretrained file
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Minimizes the mean per-sequence loss with Adam and returns the
/// checkpoint with the best dev macro-F1.
TrainResult train(const TrainConfig& config, const Dataset& train_data, const Dataset& dev_data,
                  const EpochCallback& on_epoch = {});

struct SearchSpace {
  std::vector<std::size_t> units{100, 150, 200, 250, 300};
  std::vector<std::size_t> layers{1, 2, 3, 4};
  std::vector<std::size_t> batch_sizes{8, 12, 16, 24, 32};
  std::vector<double> dropout{0.2, 0.3, 0.4, 0.5, 0.6};
  std::vector<double> word_dropout{0.0, 0.05, 0.1};
};

struct SearchPoint {
  std::size_t units = 0;
  std::size_t layers = 0;
  std::size_t batch_size = 0;
  double dropout = 0.0;
  double word_dropout = 0.0;

  TrainConfig apply(TrainConfig base) const;
  friend bool operator==(const SearchPoint&, const SearchPoint&) = default;
};

SearchPoint sample_point(const SearchSpace& space, Rng& rng);

struct Trial {
  std::size_t index = 0;
  SearchPoint point;
  double score = 0.0;
};

struct SearchResult {
  SearchPoint best;
  double best_score = 0.0;
  std::size_t best_trial = 0;
  std::vector<Trial> trials;
};

/// Uniform random search. Points are drawn up front from `seed`, so the
/// outcome does not depend on `workers`. Ties keep the earliest trial.
SearchResult random_search(const SearchSpace& space, std::size_t budget, std::uint64_t seed,
                           const std::function<double(const SearchPoint&, std::size_t trial)>& objective,
                           std::size_t workers = 1);

/// Mean dev macro-F1 over Monte-Carlo folds of `data`.
double cross_validate(const TrainConfig& config, const Dataset& data, std::size_t folds, double dev_fraction,
                      std::uint64_t seed);

}  // namespace contag
