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

#include "contag/training.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <mutex>
#include <numeric>
#include <thread>

#include "contag/init.hpp"

namespace contag {

std::vector<std::string> TrainConfig::validate() const {
  if (batch_size < 1) throw UsageError("batch size must be at least 1");
  if (patience < 1) throw UsageError("patience must be at least 1");
  if (!(learning_rate > 0.0)) throw UsageError("learning rate must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw UsageError("dropout must lie in [0, 1)");
  if (!(word_dropout >= 0.0 && word_dropout <= 1.0)) throw UsageError("word dropout must lie in [0, 1]");
  if (!(clip_norm > 0.0)) throw UsageError("clip norm must be positive");
  EncoderConfig enc = encoder;
  enc.dropout = dropout;
  return enc.validate();
}

// ---------------------------------------------------------------------------
// Model

Model::Model(TrainConfig config, TagSchema schema, FeatureVocabs vocabs, ad::ParameterSet params)
    : config_(std::move(config)), schema_(std::move(schema)), vocabs_(std::move(vocabs)), params_(std::move(params)) {
  config_.encoder.dropout = config_.dropout;
}

Model Model::initialize(const TrainConfig& config, const TagSchema& schema, FeatureVocabs vocabs, Rng& rng,
                        const Tensor* pretrained_words) {
  config.validate();
  ad::ParameterSet params;
  init_feature_params(params, config.features, vocabs, rng, pretrained_words);
  EncoderConfig enc = config.encoder;
  enc.dropout = config.dropout;
  init_encoder_params(params, enc, config.features.output_dim(), rng);
  const std::size_t K = schema.size();
  params.add("out.W", init::glorot(enc.output_dim(), K, rng));
  params.add("out.b", Tensor::matrix(1, K));
  if (config.use_crf) {
    params.add("crf.trans", Tensor::matrix(K, K));
    params.add("crf.start", Tensor::matrix(1, K));
    params.add("crf.end", Tensor::matrix(1, K));
  }
  return Model(config, schema, std::move(vocabs), std::move(params));
}

std::vector<int> Model::gold_indices(const LabeledSequence& seq) const {
  std::vector<int> out;
  out.reserve(seq.tags.size());
  for (const auto& t : seq.tags) out.push_back(schema_.index(t));
  return out;
}

ad::Var Model::emissions(ad::Graph& graph, const EncodedSequence& seq, Rng* dropout_rng) const {
  auto x = embed_sequence(graph, seq, config_.features, params_);
  if (dropout_rng && config_.dropout > 0.0) x = ad::dropout(x, config_.dropout, *dropout_rng);
  auto h = contag::encode(graph, x, config_.encoder, params_, full_mask(seq.size()), dropout_rng);
  if (dropout_rng && config_.dropout > 0.0) h = ad::dropout(h, config_.dropout, *dropout_rng);
  return ad::add_bias(ad::matmul(h, graph.parameter(params_, "out.W")), graph.parameter(params_, "out.b"));
}

ad::Var Model::loss(ad::Graph& graph, const EncodedSequence& seq, std::span<const int> gold,
                    Rng* dropout_rng) const {
  auto e = emissions(graph, seq, dropout_rng);
  if (!config_.use_crf) return crf::softmax_cross_entropy(e, gold);
  return crf::nll(e, graph.parameter(params_, "crf.trans"), graph.parameter(params_, "crf.start"),
                  graph.parameter(params_, "crf.end"), gold);
}

crf::CrfParams Model::crf_params() const {
  if (!config_.use_crf) return crf::CrfParams::zeros(schema_.size());
  return {params_.at("crf.trans"), params_.at("crf.start"), params_.at("crf.end")};
}

std::vector<int> Model::predict_indices(const EncodedSequence& seq) const {
  ad::Graph graph;
  auto e = emissions(graph, seq, nullptr);
  if (!config_.use_crf) return crf::softmax_decode(e.value());
  crf::CrfParams p{params_.at("crf.trans"), params_.at("crf.start"), params_.at("crf.end")};
  return crf::viterbi(e.value(), p).path;
}

std::vector<std::string> Model::predict(const LabeledSequence& seq) const {
  std::vector<std::string> tags;
  for (int y : predict_indices(encode(seq))) tags.push_back(schema_.tag(y));
  return tags;
}

EvalReport evaluate(const Model& model, std::span<const LabeledSequence> data) {
  std::vector<std::vector<Span>> gold, pred;
  gold.reserve(data.size());
  pred.reserve(data.size());
  for (const auto& seq : data) {
    gold.push_back(spans_from_tags(seq.tags));
    pred.push_back(spans_from_tags(model.schema(), model.predict_indices(model.encode(seq))));
  }
  return entity_prf(gold, pred, model.schema().types());
}

// ---------------------------------------------------------------------------
// Optimization

void adam_step(ad::ParameterSet& params, const std::map<std::string, Tensor>& grads, AdamState& state,
               double learning_rate) {
  for (const auto& [name, g] : grads) {
    const Tensor& value = params.at(name);
    if (g.shape() != value.shape()) {
      throw ShapeError("adam_step: gradient for '" + name + "' has shape " + shape_string(g.shape()) +
                       ", parameter has " + shape_string(value.shape()));
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (const auto& [name, g] : grads) {
    Tensor& value = params.at(name);
    auto [mit, _m] = state.m.try_emplace(name, value.shape());
    auto [vit, _v] = state.v.try_emplace(name, value.shape());
    Tensor& m = mit->second;
    Tensor& v = vit->second;
    for (std::size_t i = 0; i < value.size(); ++i) {
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      value[i] -= learning_rate * mhat / (std::sqrt(vhat) + state.eps);
    }
  }
}

double clip_global_norm(std::map<std::string, Tensor>& grads, double max_norm) {
  double sq = 0.0;
  for (const auto& [_, g] : grads)
    for (double v : g.data()) sq += v * v;
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double s = max_norm / norm;
    for (auto& [_, g] : grads)
      for (double& v : g.data()) v *= s;
  }
  return norm;
}

std::vector<Split> monte_carlo_splits(std::size_t n, std::size_t folds, double dev_fraction, std::uint64_t seed) {
  if (n < 2) throw UsageError("Monte-Carlo splits need at least 2 sequences");
  if (folds < 1) throw UsageError("folds must be at least 1");
  if (!(dev_fraction > 0.0 && dev_fraction < 1.0)) throw UsageError("dev fraction must lie in (0, 1)");
  auto dev_size = static_cast<std::size_t>(std::llround(dev_fraction * static_cast<double>(n)));
  dev_size = std::clamp<std::size_t>(dev_size, 1, n - 1);
  Rng root(seed);
  std::vector<Split> out;
  for (std::size_t f = 0; f < folds; ++f) {
    Rng rng = root.split();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(order);
    Split s;
    s.dev.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(dev_size));
    s.train.assign(order.begin() + static_cast<std::ptrdiff_t>(dev_size), order.end());
    std::sort(s.dev.begin(), s.dev.end());
    std::sort(s.train.begin(), s.train.end());
    out.push_back(std::move(s));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Training loop

namespace {

void check_schema(const TagSchema& expected, const Dataset& data, const char* what) {
  if (!(expected == data.schema)) {
    throw UsageError(std::string(what) + " data uses zone '" + data.schema.zone() +
                     "' with a different entity inventory than the training data");
  }
}

}  // namespace

TrainResult train(const TrainConfig& config, const Dataset& train_data, const Dataset& dev_data,
                  const EpochCallback& on_epoch) {
  config.validate();
  if (train_data.sequences.empty()) throw UsageError("training data is empty");
  check_schema(train_data.schema, dev_data, "dev");

  Rng rng(config.seed);
  FeatureVocabs vocabs = FeatureVocabs::build(train_data.sequences, config.features.min_count);
  std::optional<PretrainedLoad> pretrained;
  if (!config.features.pretrained.empty()) {
    pretrained = load_pretrained(config.features.pretrained, vocabs.words, config.features.word_dim, rng);
  }
  Model model = Model::initialize(config, train_data.schema, std::move(vocabs), rng,
                                  pretrained ? &pretrained->table.weights : nullptr);

  TrainResult result{model, {}, 0, 0.0, pretrained ? pretrained->coverage : -1.0};
  if (config.max_epochs == 0) return result;

  std::vector<EncodedSequence> encoded;
  std::vector<std::vector<int>> gold;
  for (const auto& seq : train_data.sequences) {
    encoded.push_back(model.encode(seq));
    gold.push_back(model.gold_indices(seq));
  }
  const auto frozen_rows = embedding_param_names(config.features);

  AdamState adam;
  ad::ParameterSet best = model.params();
  double best_f1 = -1.0;
  std::size_t since_best = 0;
  std::map<std::string, Tensor> grads;

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    std::vector<std::size_t> order(encoded.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(order);

    double epoch_loss = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t b0 = 0; b0 < order.size(); b0 += config.batch_size, ++batch_index) {
      const std::size_t b1 = std::min(order.size(), b0 + config.batch_size);
      const double inv = 1.0 / static_cast<double>(b1 - b0);
      grads.clear();
      double batch_loss = 0.0;
      for (std::size_t i = b0; i < b1; ++i) {
        const std::size_t s = order[i];
        Rng seq_rng = rng.split();
        EncodedSequence input = encoded[s];
        input.words = word_dropout(input.words, config.word_dropout, seq_rng);
        ad::Graph graph;
        auto loss = model.loss(graph, input, gold[s], &seq_rng);
        const double value = loss.value().item();
        if (!std::isfinite(value)) {
          throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                             std::to_string(batch_index));
        }
        batch_loss += value * inv;
        for (auto& [name, g] : graph.gradients(loss)) {
          auto [it, inserted] = grads.try_emplace(name, g.shape());
          auto dst = it->second.data();
          auto src = g.data();
          for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += inv * src[k];
        }
      }
      for (const auto& name : frozen_rows) {
        if (auto it = grads.find(name); it != grads.end()) {
          for (double& v : it->second.row_span(Vocabulary::kPad)) v = 0.0;
        }
      }
      if (config.features.freeze_words) grads.erase("emb.word");
      const double norm = clip_global_norm(grads, config.clip_norm);
      if (!std::isfinite(norm)) {
        throw NumericError("non-finite gradient at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(batch_index));
      }
      adam_step(model.params(), grads, adam, config.learning_rate);
      epoch_loss += batch_loss * static_cast<double>(b1 - b0);
    }

    EvalReport dev = evaluate(model, dev_data.sequences);
    EpochRecord rec{epoch, epoch_loss / static_cast<double>(order.size()), dev.macro_precision, dev.macro_recall,
                    dev.macro_f1};
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec);
    if (dev.macro_f1 > best_f1) {
      best_f1 = dev.macro_f1;
      best = model.params();
      result.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= config.patience) {
      break;
    }
  }
  model.params() = std::move(best);
  result.model = std::move(model);
  result.best_dev_f1 = best_f1;
  return result;
}

// ---------------------------------------------------------------------------
// Hyperparameter search

TrainConfig SearchPoint::apply(TrainConfig base) const {
  base.encoder.units = units;
  base.encoder.layers = layers;
  base.encoder.dilations.clear();
  base.batch_size = batch_size;
  base.dropout = dropout;
  base.word_dropout = word_dropout;
  return base;
}

namespace {

template <typename T>
T pick(const std::vector<T>& values, Rng& rng) {
  if (values.empty()) throw UsageError("search space dimension is empty");
  return values[rng.below(values.size())];
}

}  // namespace

SearchPoint sample_point(const SearchSpace& space, Rng& rng) {
  SearchPoint p;
  p.units = pick(space.units, rng);
  p.layers = pick(space.layers, rng);
  p.batch_size = pick(space.batch_sizes, rng);
  p.dropout = pick(space.dropout, rng);
  p.word_dropout = pick(space.word_dropout, rng);
  return p;
}

SearchResult random_search(const SearchSpace& space, std::size_t budget, std::uint64_t seed,
                           const std::function<double(const SearchPoint&, std::size_t)>& objective,
                           std::size_t workers) {
  if (budget < 1) throw UsageError("search budget must be at least 1");
  Rng rng(seed);
  SearchResult result;
  for (std::size_t i = 0; i < budget; ++i) result.trials.push_back({i, sample_point(space, rng), 0.0});

  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < budget; i = next++) {
      try {
        result.trials[i].score = objective(result.trials[i].point, i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const std::size_t n = std::clamp<std::size_t>(workers, 1, budget);
  if (n == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < n; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  for (const auto& t : result.trials) {
    if (t.index == 0 || t.score > result.best_score) {
      result.best_score = t.score;
      result.best = t.point;
      result.best_trial = t.index;
    }
  }
  return result;
}

double cross_validate(const TrainConfig& config, const Dataset& data, std::size_t folds, double dev_fraction,
                      std::uint64_t seed) {
  auto splits = monte_carlo_splits(data.sequences.size(), folds, dev_fraction, seed);
  double total = 0.0;
  for (std::size_t f = 0; f < splits.size(); ++f) {
    Dataset tr{data.schema, {}}, dv{data.schema, {}};
    for (auto i : splits[f].train) tr.sequences.push_back(data.sequences[i]);
    for (auto i : splits[f].dev) dv.sequences.push_back(data.sequences[i]);
    TrainConfig c = config;
    c.seed = config.seed + f;
    total += train(c, tr, dv).best_dev_f1;
  }
  return total / static_cast<double>(splits.size());
}

}  // namespace contag
