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

#include "contag/encoders.hpp"

#include <algorithm>
#include <cmath>

#include "contag/init.hpp"

namespace contag {

std::string to_string(EncoderKind kind) {
  switch (kind) {
    case EncoderKind::kBiLstm: return "bilstm";
    case EncoderKind::kDilatedCnn: return "dilated_cnn";
    case EncoderKind::kTransformer: return "transformer";
  }
  return "?";
}

EncoderKind parse_encoder_kind(const std::string& name) {
  if (name == "bilstm") return EncoderKind::kBiLstm;
  if (name == "dilated_cnn" || name == "dcnn") return EncoderKind::kDilatedCnn;
  if (name == "transformer") return EncoderKind::kTransformer;
  throw UsageError("unknown encoder '" + name + "' (expected bilstm, dcnn or transformer)");
}

std::vector<std::size_t> EncoderConfig::dilation_schedule() const {
  if (!dilations.empty()) return dilations;
  std::vector<std::size_t> out;
  for (std::size_t l = 0; l < layers; ++l) out.push_back(std::size_t{1} << l);
  return out;
}

std::vector<std::string> EncoderConfig::validate() const {
  if (layers == 0) throw UsageError("encoder needs at least one layer");
  if (units == 0) throw UsageError("encoder units must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw UsageError("dropout must lie in [0, 1)");
  std::vector<std::string> warnings;
  if (layers > 4) {
    warnings.push_back("encoder layers=" + std::to_string(layers) + " is outside the tuning grid {1,2,3,4}");
  }
  static const std::size_t grid[] = {100, 150, 200, 250, 300};
  if (std::find(std::begin(grid), std::end(grid), units) == std::end(grid)) {
    warnings.push_back("encoder units=" + std::to_string(units) +
                       " is outside the tuning grid {100,150,200,250,300}");
  }
  if (kind == EncoderKind::kDilatedCnn) {
    if (kernel_width == 0) throw UsageError("kernel width must be positive");
    if (!dilations.empty() && dilations.size() != layers) {
      throw UsageError("dilation schedule has " + std::to_string(dilations.size()) + " entries for " +
                       std::to_string(layers) + " layers");
    }
    for (auto d : dilations) {
      if (d == 0) throw UsageError("dilations must be positive");
    }
  }
  if (kind == EncoderKind::kTransformer) {
    if (heads == 0 || units % heads != 0) {
      throw UsageError("transformer units (" + std::to_string(units) + ") must be divisible by heads (" +
                       std::to_string(heads) + ")");
    }
    if (max_positions == 0) throw UsageError("max_positions must be positive");
  }
  return warnings;
}

Mask full_mask(std::size_t length) { return Mask(length, true); }

namespace {

std::size_t check_mask(const Mask& mask, std::size_t rows) {
  if (rows == 0) throw UsageError("encoder input has no tokens");
  if (mask.size() != rows) {
    throw ShapeError("mask of length " + std::to_string(mask.size()) + " for " + std::to_string(rows) +
                     " tokens");
  }
  std::size_t n = 0;
  while (n < mask.size() && mask[n]) ++n;
  if (n == 0) throw UsageError("mask has no real tokens");
  for (std::size_t t = n; t < mask.size(); ++t) {
    if (mask[t]) throw UsageError("mask must be right-padded");
  }
  return n;
}

ad::Var maybe_dropout(ad::Var x, double rate, Rng* rng) {
  return rng && rate > 0.0 ? ad::dropout(x, rate, *rng) : x;
}

ad::Var p(ad::Graph& g, const ad::ParameterSet& params, const std::string& name) {
  return g.parameter(params, name);
}

std::string lstm_prefix(std::size_t layer, const char* dir) {
  return "enc.bilstm.l" + std::to_string(layer) + "." + dir;
}

std::string cnn_prefix(std::size_t layer) { return "enc.dcnn.l" + std::to_string(layer); }

std::string tf_prefix(std::size_t layer) { return "enc.tf.l" + std::to_string(layer); }

}  // namespace

void init_encoder_params(ad::ParameterSet& params, const EncoderConfig& config, std::size_t input_dim,
                         Rng& rng) {
  config.validate();
  const std::size_t H = config.units;
  switch (config.kind) {
    case EncoderKind::kBiLstm: {
      std::size_t in = input_dim;
      for (std::size_t l = 0; l < config.layers; ++l) {
        for (const char* dir : {"fw", "bw"}) {
          const std::string pre = lstm_prefix(l, dir);
          params.add(pre + ".Wx", init::glorot(in, 4 * H, rng));
          params.add(pre + ".U", init::glorot(H, 4 * H, rng));
          Tensor b = Tensor::matrix(1, 4 * H);
          for (std::size_t c = H; c < 2 * H; ++c) b[c] = 1.0;  // forget gate
          params.add(pre + ".b", std::move(b));
        }
        in = 2 * H;
      }
      break;
    }
    case EncoderKind::kDilatedCnn: {
      std::size_t in = input_dim;
      for (std::size_t l = 0; l < config.layers; ++l) {
        params.add(cnn_prefix(l) + ".W", init::glorot(config.kernel_width * in, H, rng));
        params.add(cnn_prefix(l) + ".b", Tensor::matrix(1, H));
        in = H;
      }
      break;
    }
    case EncoderKind::kTransformer: {
      const std::size_t F = config.ff_dim ? config.ff_dim : 4 * H;
      params.add("enc.tf.proj.W", init::glorot(input_dim, H, rng));
      params.add("enc.tf.proj.b", Tensor::matrix(1, H));
      params.add("enc.tf.pos", init::normal(config.max_positions, H, 0.1, rng));
      for (std::size_t l = 0; l < config.layers; ++l) {
        const std::string pre = tf_prefix(l);
        for (const char* m : {".Wq", ".Wk", ".Wv", ".Wo"}) params.add(pre + m, init::glorot(H, H, rng));
        for (const char* b : {".bq", ".bv", ".bo"}) params.add(pre + b, Tensor::matrix(1, H));
        params.add(pre + ".ln1.g", Tensor::matrix(1, H, 1.0));
        params.add(pre + ".ln1.b", Tensor::matrix(1, H));
        params.add(pre + ".ff.W1", init::glorot(H, F, rng));
        params.add(pre + ".ff.b1", Tensor::matrix(1, F));
        params.add(pre + ".ff.W2", init::glorot(F, H, rng));
        params.add(pre + ".ff.b2", Tensor::matrix(1, H));
        params.add(pre + ".ln2.g", Tensor::matrix(1, H, 1.0));
        params.add(pre + ".ln2.b", Tensor::matrix(1, H));
      }
      break;
    }
  }
}

ad::Var encode(ad::Graph& graph, ad::Var x, const EncoderConfig& config, const ad::ParameterSet& params,
               const Mask& mask, Rng* dropout_rng) {
  switch (config.kind) {
    case EncoderKind::kBiLstm: return bilstm_encode(graph, x, config, params, mask, dropout_rng);
    case EncoderKind::kDilatedCnn: return dilated_cnn_encode(graph, x, config, params, mask, dropout_rng);
    case EncoderKind::kTransformer: return transformer_encode(graph, x, config, params, mask, dropout_rng);
  }
  throw UsageError("unknown encoder kind");
}

// ---------------------------------------------------------------------------
// BiLSTM

ad::Var lstm_direction(ad::Graph& graph, ad::Var x, std::size_t units, const ad::ParameterSet& params,
                       const std::string& prefix, bool reverse) {
  const std::size_t H = units;
  const std::size_t n = x.rows();
  auto proj = ad::add_bias(ad::matmul(x, p(graph, params, prefix + ".Wx")), p(graph, params, prefix + ".b"));
  auto U = p(graph, params, prefix + ".U");
  std::vector<ad::Var> states(n);
  ad::Var h{}, c{};
  for (std::size_t step = 0; step < n; ++step) {
    const std::size_t t = reverse ? n - 1 - step : step;
    auto z = ad::slice_rows(proj, t, t + 1);
    if (step > 0) z = ad::add(z, ad::matmul(h, U));
    auto gates = ad::sigmoid(ad::slice_cols(z, 0, 3 * H));
    auto in_gate = ad::slice_cols(gates, 0, H);
    auto forget = ad::slice_cols(gates, H, 2 * H);
    auto out_gate = ad::slice_cols(gates, 2 * H, 3 * H);
    auto cand = ad::tanh(ad::slice_cols(z, 3 * H, 4 * H));
    c = step > 0 ? ad::add(ad::mul(forget, c), ad::mul(in_gate, cand)) : ad::mul(in_gate, cand);
    h = ad::mul(out_gate, ad::tanh(c));
    states[t] = h;
  }
  return ad::concat(states, 0);
}

ad::Var bilstm_encode(ad::Graph& graph, ad::Var x, const EncoderConfig& config,
                      const ad::ParameterSet& params, const Mask& mask, Rng* dropout_rng) {
  const std::size_t T = x.rows();
  const std::size_t n = check_mask(mask, T);
  auto cur = n < T ? ad::slice_rows(x, 0, n) : x;
  for (std::size_t l = 0; l < config.layers; ++l) {
    if (l > 0) cur = maybe_dropout(cur, config.dropout, dropout_rng);
    auto fw = lstm_direction(graph, cur, config.units, params, lstm_prefix(l, "fw"), false);
    auto bw = lstm_direction(graph, cur, config.units, params, lstm_prefix(l, "bw"), true);
    cur = ad::concat({fw, bw}, 1);
  }
  if (n < T) cur = ad::concat({cur, graph.constant(Tensor::matrix(T - n, 2 * config.units))}, 0);
  return cur;
}

// ---------------------------------------------------------------------------
// Dilated CNN

ad::Var dilated_cnn_encode(ad::Graph& graph, ad::Var x, const EncoderConfig& config,
                           const ad::ParameterSet& params, const Mask& mask, Rng* dropout_rng) {
  check_mask(mask, x.rows());
  const auto dilations = config.dilation_schedule();
  auto cur = ad::mask_rows(x, mask);
  for (std::size_t l = 0; l < config.layers; ++l) {
    if (l > 0) cur = maybe_dropout(cur, config.dropout, dropout_rng);
    auto conv = ad::conv1d(cur, p(graph, params, cnn_prefix(l) + ".W"), config.kernel_width, dilations[l],
                           ad::Padding::kSame);
    cur = ad::mask_rows(ad::relu(ad::add_bias(conv, p(graph, params, cnn_prefix(l) + ".b"))), mask);
  }
  return cur;
}

// ---------------------------------------------------------------------------
// Transformer

ad::Var transformer_encode(ad::Graph& graph, ad::Var x, const EncoderConfig& config,
                           const ad::ParameterSet& params, const Mask& mask, Rng* dropout_rng) {
  const std::size_t T = x.rows();
  check_mask(mask, T);
  if (T > config.max_positions) {
    throw UsageError("sequence of " + std::to_string(T) + " tokens exceeds max_positions " +
                     std::to_string(config.max_positions));
  }
  const std::size_t H = config.units;
  const std::size_t heads = config.heads;
  const std::size_t dh = H / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));

  auto h = ad::add_bias(ad::matmul(ad::mask_rows(x, mask), p(graph, params, "enc.tf.proj.W")),
                        p(graph, params, "enc.tf.proj.b"));
  if (config.positional) h = ad::add(h, ad::slice_rows(p(graph, params, "enc.tf.pos"), 0, T));
  h = maybe_dropout(h, config.dropout, dropout_rng);

  for (std::size_t l = 0; l < config.layers; ++l) {
    const std::string pre = tf_prefix(l);
    auto q = ad::add_bias(ad::matmul(h, p(graph, params, pre + ".Wq")), p(graph, params, pre + ".bq"));
    auto k = ad::matmul(h, p(graph, params, pre + ".Wk"));
    auto v = ad::add_bias(ad::matmul(h, p(graph, params, pre + ".Wv")), p(graph, params, pre + ".bv"));
    std::vector<ad::Var> outs;
    for (std::size_t a = 0; a < heads; ++a) {
      const std::size_t c0 = a * dh, c1 = c0 + dh;
      auto scores = ad::scale(ad::matmul(ad::slice_cols(q, c0, c1), ad::transpose(ad::slice_cols(k, c0, c1))),
                              inv_sqrt);
      auto attn = ad::row_softmax(scores, mask);
      outs.push_back(ad::matmul(attn, ad::slice_cols(v, c0, c1)));
    }
    auto att = ad::add_bias(ad::matmul(ad::concat(outs, 1), p(graph, params, pre + ".Wo")),
                            p(graph, params, pre + ".bo"));
    h = ad::layer_norm(ad::add(h, maybe_dropout(att, config.dropout, dropout_rng)),
                       p(graph, params, pre + ".ln1.g"), p(graph, params, pre + ".ln1.b"));
    auto ff = ad::relu(ad::add_bias(ad::matmul(h, p(graph, params, pre + ".ff.W1")),
                                    p(graph, params, pre + ".ff.b1")));
    ff = ad::add_bias(ad::matmul(ff, p(graph, params, pre + ".ff.W2")), p(graph, params, pre + ".ff.b2"));
    h = ad::layer_norm(ad::add(h, maybe_dropout(ff, config.dropout, dropout_rng)),
                       p(graph, params, pre + ".ln2.g"), p(graph, params, pre + ".ln2.b"));
    h = ad::mask_rows(h, mask);
  }
  return h;
}

}  // namespace contag
