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

#include <cmath>

#include "contag/tensor.hpp"

namespace contag::init {

/// Uniform in +-sqrt(6 / (fan_in + fan_out)).
inline Tensor glorot(std::size_t rows, std::size_t cols, Rng& rng) {
  Tensor t = Tensor::matrix(rows, cols);
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  for (double& v : t.data()) v = rng.uniform(-limit, limit);
  return t;
}

inline Tensor normal(std::size_t rows, std::size_t cols, double stddev, Rng& rng) {
  Tensor t = Tensor::matrix(rows, cols);
  for (double& v : t.data()) v = rng.normal(0.0, stddev);
  return t;
}

}  // namespace contag::init
