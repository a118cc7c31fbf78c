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

/* C interface to the contag sequence tagger. Every function returns a
 * contag_status; on failure contag_last_error() describes the problem.
 * Strings returned through char** out-parameters are owned by the caller
 * and must be released with contag_string_free(). */

#ifndef CONTAG_CONTAG_H_
#define CONTAG_CONTAG_H_

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define CONTAG_API __declspec(dllexport)
#else
#define CONTAG_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum contag_status {
  CONTAG_OK = 0,
  CONTAG_ERR_USAGE = 1,    /* invalid argument or configuration */
  CONTAG_ERR_IO = 2,       /* missing or malformed file */
  CONTAG_ERR_SHAPE = 3,    /* tensor shape mismatch */
  CONTAG_ERR_NUMERIC = 4,  /* non-finite value */
  CONTAG_ERR_INTERNAL = 5
} contag_status;

typedef struct contag_model contag_model;

/* Message of the last failed call on this thread; "" if none. */
CONTAG_API const char* contag_last_error(void);
CONTAG_API const char* contag_version(void);
CONTAG_API void contag_string_free(char* s);

/* Trains `runs` models with seeds seed, seed+1, ... and saves the one with
 * the best dev macro-F1 to model_dir (plus history.json). dev_path may be
 * NULL, in which case 15% of the training data is held out. config_json may
 * be NULL for defaults. seed < 0 keeps the config's seed. The summary is a
 * JSON object with per-run scores, mean and stdev, warnings and the saved
 * model's dev P/R/F1. */
CONTAG_API contag_status contag_train(const char* train_path, const char* dev_path, const char* config_json,
                                      const char* model_dir, int64_t seed, int runs, char** summary_json);

CONTAG_API contag_status contag_model_load(const char* model_dir, contag_model** out);
CONTAG_API void contag_model_free(contag_model* model);
CONTAG_API contag_status contag_model_save(const contag_model* model, const char* model_dir);
/* Manifest of the loaded model's config, schema and parameter counts. */
CONTAG_API contag_status contag_model_info(const contag_model* model, char** info_json);

/* Scores the model on a labelled file. With gold_as_prediction the gold
 * tags are scored against themselves. */
CONTAG_API contag_status contag_model_evaluate(const contag_model* model, const char* data_path,
                                               int gold_as_prediction, char** report_json);

/* Renders a report from contag_model_evaluate as a text table. */
CONTAG_API contag_status contag_format_report(const char* report_json, char** table);

/* One JSON line per input sequence: tokens, tags, spans. */
CONTAG_API contag_status contag_model_predict(const contag_model* model, const char* input_path, char** jsonl);

CONTAG_API contag_status contag_dataset_stats(const char* data_path, char** stats_json);

/* Word fragmentation ratio of a labelled file's words under a WordPiece
 * vocabulary. entities_only restricts to words inside gold spans; weighted
 * counts every token occurrence instead of each distinct word once. */
CONTAG_API contag_status contag_wfr(const char* data_path, const char* vocab_path, int entities_only,
                                    int weighted, int lowercase, double* ratio);

/* spec_json may be NULL for defaults. Writes train.tsv, dev.tsv, test.tsv. */
CONTAG_API contag_status contag_synth(const char* spec_json, const char* out_dir);

/* Random search over the tuning grid. Each trial is scored by mean dev
 * macro-F1 over `folds` Monte-Carlo splits. trial_log_path may be NULL. */
CONTAG_API contag_status contag_tune(const char* train_path, const char* config_json, int budget, int folds,
                                     double dev_fraction, uint64_t seed, int workers, const char* trial_log_path,
                                     char** result_json);

#ifdef __cplusplus
}
#endif

#endif  /* CONTAG_CONTAG_H_ */
