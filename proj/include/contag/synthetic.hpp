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

// Templated contract-header corpus. Each sequence carries a title, two
// parties and one date whose type (StartDate or EffectiveDate) is decided
// only by a trigger word placed `distance` tokens before the date.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "contag/data.hpp"

namespace contag {

struct SyntheticSpec {
  std::uint64_t seed = 7;
  std::size_t train = 2000;
  std::size_t dev = 200;
  std::size_t test = 500;
  /// Token offset from the trigger to the first date token; at least 1.
  std::size_t distance = 2;
  std::string zone = "header";
  std::string start_trigger = "signed";
  std::string effective_trigger = "effective";

  void validate() const;
};

struct SyntheticCorpus {
  Dataset train;
  Dataset dev;
  Dataset test;
};

/// Title, Party, StartDate, EffectiveDate.
TagSchema synthetic_schema(const std::string& zone = "header");

LabeledSequence synthetic_sequence(const SyntheticSpec& spec, Rng& rng);
SyntheticCorpus generate_synthetic(const SyntheticSpec& spec);
/// Writes train.tsv, dev.tsv and test.tsv into `dir`.
void write_synthetic(const std::filesystem::path& dir, const SyntheticCorpus& corpus);

}  // namespace contag
