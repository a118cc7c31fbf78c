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

// Model serialization: a JSON manifest (config, schema, vocabularies,
// tensor catalog) next to a little-endian float64 weight payload.

#include <filesystem>
#include <string>

#include "contag/training.hpp"
#include "json.hpp"

namespace contag {

inline constexpr int kArtifactFormatVersion = 1;
inline constexpr const char* kManifestFile = "manifest.json";
inline constexpr const char* kPayloadFile = "weights.bin";

nlohmann::json config_to_json(const TrainConfig& config);
/// Missing keys keep their defaults; unknown keys are rejected.
TrainConfig config_from_json(const nlohmann::json& j);

nlohmann::json report_to_json(const EvalReport& report);
nlohmann::json history_to_json(const std::vector<EpochRecord>& history);

/// Writes `bytes` to a temporary sibling and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, const std::string& bytes);
std::string read_text_file(const std::filesystem::path& path);

/// Creates `dir` if needed and writes manifest.json + weights.bin.
void save_model(const std::filesystem::path& dir, const Model& model);
Model load_model(const std::filesystem::path& dir);

}  // namespace contag
