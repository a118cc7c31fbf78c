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

// Contextual encoders mapping T x D token features to T x H states:
// stacked BiLSTM, stacked dilated CNN, stacked Transformer encoder.

#include <string>
#include <vector>

#include "contag/graph.hpp"

namespace contag {

enum class EncoderKind { kBiLstm, kDilatedCnn, kTransformer };

std::string to_string(EncoderKind kind);
/// Accepts bilstm, dilated_cnn / dcnn, transformer.
EncoderKind parse_encoder_kind(const std::string& name);

struct EncoderConfig {
  EncoderKind kind = EncoderKind::kBiLstm;
  std::size_t layers = 1;
  /// Per direction for the BiLSTM.
  std::size_t units = 100;
  double dropout = 0.0;
  // dilated CNN
  std::size_t kernel_width = 3;
  std::vector<std::size_t> dilations;  // empty: 1, 2, 4, ...
  // transformer
  std::size_t heads = 4;
  std::size_t ff_dim = 0;  // 0: 4 * units
  std::size_t max_positions = 512;
  bool positional = true;

  std::size_t output_dim() const { return kind == EncoderKind::kBiLstm ? 2 * units : units; }
  std::vector<std::size_t> dilation_schedule() const;
  /// Throws UsageError on structural problems; returns warnings for values
  /// outside the tuner's grid.
  std::vector<std::string> validate() const;
};

/// true = real token. Real tokens precede padding.
using Mask = std::vector<bool>;

Mask full_mask(std::size_t length);

/// Adds the encoder's parameters under the "enc." prefix.
void init_encoder_params(ad::ParameterSet& params, const EncoderConfig& config, std::size_t input_dim,
                         Rng& rng);

/// Dispatches on config.kind. `dropout_rng` enables training-time dropout
/// between layers; pass nullptr for inference.
ad::Var encode(ad::Graph& graph, ad::Var x, const EncoderConfig& config, const ad::ParameterSet& params,
               const Mask& mask, Rng* dropout_rng);

ad::Var bilstm_encode(ad::Graph& graph, ad::Var x, const EncoderConfig& config,
                      const ad::ParameterSet& params, const Mask& mask, Rng* dropout_rng);
ad::Var dilated_cnn_encode(ad::Graph& graph, ad::Var x, const EncoderConfig& config,
                           const ad::ParameterSet& params, const Mask& mask, Rng* dropout_rng);
ad::Var transformer_encode(ad::Graph& graph, ad::Var x, const EncoderConfig& config,
                           const ad::ParameterSet& params, const Mask& mask, Rng* dropout_rng);

/// One LSTM direction over the first n rows of x, in forward or reverse
/// order. Parameters are read from `<prefix>.Wx`, `.U`, `.b`.
ad::Var lstm_direction(ad::Graph& graph, ad::Var x, std::size_t units, const ad::ParameterSet& params,
                       const std::string& prefix, bool reverse);

}  // namespace contag
