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

#include "contag/crf.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <set>

namespace contag {

TagSchema::TagSchema(std::string zone, std::vector<std::string> types)
    : zone_(std::move(zone)), types_(std::move(types)) {
  if (types_.empty()) throw UsageError("zone '" + zone_ + "' declares no entity types");
  std::set<std::string> seen;
  tags_.push_back("O");
  for (const auto& t : types_) {
    if (t.empty()) throw UsageError("entity type names must be non-empty");
    if (t.find_first_of(" \t,") != std::string::npos) {
      throw UsageError("entity type '" + t + "' contains whitespace or a comma");
    }
    if (!seen.insert(t).second) throw UsageError("duplicate entity type '" + t + "'");
    tags_.push_back("B-" + t);
    tags_.push_back("I-" + t);
  }
}

std::optional<int> TagSchema::find(const std::string& tag) const {
  auto it = std::find(tags_.begin(), tags_.end(), tag);
  if (it == tags_.end()) return std::nullopt;
  return static_cast<int>(it - tags_.begin());
}

int TagSchema::index(const std::string& tag) const {
  if (auto i = find(tag)) return *i;
  throw UsageError("unknown tag '" + tag + "' for zone '" + zone_ + "'");
}

std::optional<std::size_t> TagSchema::type_index(const std::string& type) const {
  auto it = std::find(types_.begin(), types_.end(), type);
  if (it == types_.end()) return std::nullopt;
  return static_cast<std::size_t>(it - types_.begin());
}

namespace crf {

namespace {

double lse(std::span<const double> v) {
  double m = -std::numeric_limits<double>::infinity();
  for (double x : v) m = std::max(m, x);
  if (!std::isfinite(m)) return m;
  double z = 0.0;
  for (double x : v) z += std::exp(x - m);
  return m + std::log(z);
}

void check_params(const Tensor& e, const CrfParams& p) {
  const std::size_t k = e.cols();
  if (p.transitions.rows() != k || p.transitions.cols() != k || p.start.size() != k ||
      p.end.size() != k) {
    throw ShapeError("crf: emissions " + shape_string(e.shape()) + " incompatible with transitions " +
                     shape_string(p.transitions.shape()));
  }
}

void check_tags(const Tensor& e, std::span<const int> tags) {
  if (tags.size() != e.rows()) {
    throw ShapeError("crf: tag sequence of length " + std::to_string(tags.size()) +
                     " for emissions " + shape_string(e.shape()));
  }
  for (int y : tags) {
    if (y < 0 || static_cast<std::size_t>(y) >= e.cols()) {
      throw ShapeError("crf: tag index " + std::to_string(y) + " out of range for " +
                       std::to_string(e.cols()) + " labels");
    }
  }
}

/// Forward and backward log-space tables, T x K each.
struct Lattice {
  Tensor alpha;
  Tensor beta;
  double log_z = 0.0;
};

Lattice run_lattice(const Tensor& e, const CrfParams& p, bool with_beta) {
  check_params(e, p);
  const std::size_t T = e.rows(), K = e.cols();
  Lattice lat;
  lat.alpha = Tensor::matrix(T, K);
  std::vector<double> scratch(K);
  for (std::size_t k = 0; k < K; ++k) lat.alpha(0, k) = p.start[k] + e(0, k);
  for (std::size_t t = 1; t < T; ++t) {
    for (std::size_t j = 0; j < K; ++j) {
      for (std::size_t i = 0; i < K; ++i) scratch[i] = lat.alpha(t - 1, i) + p.transitions(i, j);
      lat.alpha(t, j) = e(t, j) + lse(scratch);
    }
  }
  for (std::size_t k = 0; k < K; ++k) scratch[k] = lat.alpha(T - 1, k) + p.end[k];
  lat.log_z = lse(scratch);
  if (with_beta) {
    lat.beta = Tensor::matrix(T, K);
    for (std::size_t k = 0; k < K; ++k) lat.beta(T - 1, k) = p.end[k];
    for (std::size_t t = T - 1; t-- > 0;) {
      for (std::size_t i = 0; i < K; ++i) {
        for (std::size_t j = 0; j < K; ++j) {
          scratch[j] = p.transitions(i, j) + e(t + 1, j) + lat.beta(t + 1, j);
        }
        lat.beta(t, i) = lse(scratch);
      }
    }
  }
  return lat;
}

CrfParams params_from(const Tensor* const* in) {
  return CrfParams{*in[1], *in[2], *in[3]};
}

/// Adds scale * d(log Z)/d(inputs) into the gradient slots.
void accumulate_expectations(const Tensor& e, const CrfParams& p, double scale,
                             std::span<Tensor* const> grads) {
  const std::size_t T = e.rows(), K = e.cols();
  Lattice lat = run_lattice(e, p, true);
  if (grads[0]) {
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t k = 0; k < K; ++k)
        (*grads[0])(t, k) += scale * std::exp(lat.alpha(t, k) + lat.beta(t, k) - lat.log_z);
  }
  if (grads[1]) {
    for (std::size_t t = 1; t < T; ++t)
      for (std::size_t i = 0; i < K; ++i)
        for (std::size_t j = 0; j < K; ++j)
          (*grads[1])(i, j) += scale * std::exp(lat.alpha(t - 1, i) + p.transitions(i, j) + e(t, j) +
                                                lat.beta(t, j) - lat.log_z);
  }
  if (grads[2]) {
    for (std::size_t k = 0; k < K; ++k)
      (*grads[2])[k] += scale * std::exp(lat.alpha(0, k) + lat.beta(0, k) - lat.log_z);
  }
  if (grads[3]) {
    for (std::size_t k = 0; k < K; ++k)
      (*grads[3])[k] += scale * std::exp(lat.alpha(T - 1, k) + p.end[k] - lat.log_z);
  }
}

class LogPartitionOp : public ad::CustomOp {
 public:
  std::string name() const override { return "crf_log_partition"; }
  Tensor forward(std::span<const Tensor* const> in) const override {
    return Tensor::scalar(crf::log_partition(*in[0], params_from(in.data())));
  }
  void backward(std::span<const Tensor* const> in, const Tensor&, const Tensor& g,
                std::span<Tensor* const> grads) const override {
    accumulate_expectations(*in[0], params_from(in.data()), g.item(), grads);
  }
};

class NllOp : public ad::CustomOp {
 public:
  explicit NllOp(std::vector<int> gold) : gold_(std::move(gold)) {}
  std::string name() const override { return "crf_nll"; }
  Tensor forward(std::span<const Tensor* const> in) const override {
    return Tensor::scalar(crf::crf_nll(*in[0], params_from(in.data()), gold_));
  }
  void backward(std::span<const Tensor* const> in, const Tensor&, const Tensor& g,
                std::span<Tensor* const> grads) const override {
    const double s = g.item();
    accumulate_expectations(*in[0], params_from(in.data()), s, grads);
    const std::size_t T = gold_.size();
    for (std::size_t t = 0; t < T; ++t) {
      const auto y = static_cast<std::size_t>(gold_[t]);
      if (grads[0]) (*grads[0])(t, y) -= s;
      if (grads[1] && t > 0) (*grads[1])(static_cast<std::size_t>(gold_[t - 1]), y) -= s;
    }
    if (grads[2]) (*grads[2])[static_cast<std::size_t>(gold_.front())] -= s;
    if (grads[3]) (*grads[3])[static_cast<std::size_t>(gold_.back())] -= s;
  }

 private:
  std::vector<int> gold_;
};

class SoftmaxXentOp : public ad::CustomOp {
 public:
  explicit SoftmaxXentOp(std::vector<int> gold) : gold_(std::move(gold)) {}
  std::string name() const override { return "softmax_cross_entropy"; }
  Tensor forward(std::span<const Tensor* const> in) const override {
    const Tensor& e = *in[0];
    check_tags(e, gold_);
    double loss = 0.0;
    for (std::size_t t = 0; t < e.rows(); ++t) {
      loss += lse(e.row_span(t)) - e(t, static_cast<std::size_t>(gold_[t]));
    }
    return Tensor::scalar(loss);
  }
  void backward(std::span<const Tensor* const> in, const Tensor&, const Tensor& g,
                std::span<Tensor* const> grads) const override {
    if (!grads[0]) return;
    const Tensor& e = *in[0];
    const double s = g.item();
    for (std::size_t t = 0; t < e.rows(); ++t) {
      const double z = lse(e.row_span(t));
      for (std::size_t k = 0; k < e.cols(); ++k) (*grads[0])(t, k) += s * std::exp(e(t, k) - z);
      (*grads[0])(t, static_cast<std::size_t>(gold_[t])) -= s;
    }
  }

 private:
  std::vector<int> gold_;
};

}  // namespace

CrfParams CrfParams::zeros(std::size_t labels) {
  return CrfParams{Tensor::matrix(labels, labels), Tensor::matrix(1, labels),
                   Tensor::matrix(1, labels)};
}

double sequence_score(const Tensor& e, const CrfParams& p, std::span<const int> tags) {
  check_params(e, p);
  check_tags(e, tags);
  auto y = [&](std::size_t t) { return static_cast<std::size_t>(tags[t]); };
  double s = p.start[y(0)] + p.end[y(tags.size() - 1)];
  for (std::size_t t = 0; t < tags.size(); ++t) {
    s += e(t, y(t));
    if (t > 0) s += p.transitions(y(t - 1), y(t));
  }
  return s;
}

double log_partition(const Tensor& e, const CrfParams& p) { return run_lattice(e, p, false).log_z; }

ViterbiResult viterbi(const Tensor& e, const CrfParams& p) {
  check_params(e, p);
  const std::size_t T = e.rows(), K = e.cols();
  Tensor delta = Tensor::matrix(T, K);
  std::vector<int> back(T * K, 0);
  for (std::size_t k = 0; k < K; ++k) delta(0, k) = p.start[k] + e(0, k);
  for (std::size_t t = 1; t < T; ++t) {
    for (std::size_t j = 0; j < K; ++j) {
      std::size_t best = 0;
      double best_score = delta(t - 1, 0) + p.transitions(0, j);
      for (std::size_t i = 1; i < K; ++i) {
        const double s = delta(t - 1, i) + p.transitions(i, j);
        if (s > best_score) {
          best_score = s;
          best = i;
        }
      }
      delta(t, j) = best_score + e(t, j);
      back[t * K + j] = static_cast<int>(best);
    }
  }
  std::size_t last = 0;
  double best_score = delta(T - 1, 0) + p.end[0];
  for (std::size_t k = 1; k < K; ++k) {
    const double s = delta(T - 1, k) + p.end[k];
    if (s > best_score) {
      best_score = s;
      last = k;
    }
  }
  ViterbiResult result;
  result.path.assign(T, 0);
  result.path[T - 1] = static_cast<int>(last);
  for (std::size_t t = T - 1; t > 0; --t) {
    result.path[t - 1] = back[t * K + static_cast<std::size_t>(result.path[t])];
  }
  result.score = best_score;
  return result;
}

double crf_nll(const Tensor& e, const CrfParams& p, std::span<const int> gold) {
  const double score = sequence_score(e, p, gold);
  // Rounding can leave a tiny negative value when gold carries all the mass.
  return std::max(0.0, log_partition(e, p) - score);
}

std::vector<int> softmax_decode(const Tensor& e) {
  std::vector<int> out(e.rows(), 0);
  for (std::size_t t = 0; t < e.rows(); ++t) {
    auto row = e.row_span(t);
    out[t] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return out;
}

Tensor marginals(const Tensor& e, const CrfParams& p) {
  Tensor out(e.shape());
  Tensor* grads[4] = {&out, nullptr, nullptr, nullptr};
  accumulate_expectations(e, p, 1.0, grads);
  return out;
}

ad::Var nll(ad::Var emissions, ad::Var transitions, ad::Var start, ad::Var end,
            std::span<const int> gold) {
  return ad::custom(std::make_shared<NllOp>(std::vector<int>(gold.begin(), gold.end())),
                    {emissions, transitions, start, end});
}

ad::Var log_partition(ad::Var emissions, ad::Var transitions, ad::Var start, ad::Var end) {
  return ad::custom(std::make_shared<LogPartitionOp>(), {emissions, transitions, start, end});
}

ad::Var softmax_cross_entropy(ad::Var emissions, std::span<const int> gold) {
  return ad::custom(std::make_shared<SoftmaxXentOp>(std::vector<int>(gold.begin(), gold.end())),
                    {emissions});
}

}  // namespace crf
}  // namespace contag
