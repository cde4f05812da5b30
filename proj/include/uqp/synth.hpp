/*
 * Copyright 2026 The UQP Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "uqp/feature_store.hpp"

namespace uqp {

// Synthetic corpus description. Correctness q ~ Beta(2, 2) is embedded along
// a per-dataset direction; dataset k's direction sits at angle shift_angle
// from dataset k-1's along a chain of fresh orthogonal axes, so directions
// k apart have cosine cos(shift_angle)^k.
struct SynthScenario {
  int n_datasets = 5;
  int n_per_dataset = 500;
  int dims = 32;
  int n_layers = 4;
  double shift_angle = 0.0;
  double signal_to_noise = 1.0;
  double prob_signal_corr = 0.5;
  uint64_t seed = 0;

  double train_fraction = 0.6;
  int context_min = 2;
  int context_max = 4;
  // Response lengths for short-form (prob_signal_corr >= 0.5) and long-form
  // corpora.
  int short_response_min = 3;
  int short_response_max = 6;
  int long_response_min = 20;
  int long_response_max = 60;
  // Per-token signal gain is drawn from [1 - spread, 1 + spread].
  double token_signal_spread = 0.5;
  // Signal gain carried by the last context token.
  double ctx_signal = 0.5;
  // Dataset mean offset scale (grows with the dataset's rotation).
  double mean_shift = 1.0;
  int attn_heads = 4;
  // Defaults to d0, d1, ...; the first ceil(n/2) datasets are qa.
  std::vector<std::string> dataset_names;

  // Throws InvalidArgument.
  void Validate() const;
  std::string DatasetName(int k) const;
  Task DatasetTask(int k) const;
  Form form() const { return prob_signal_corr >= 0.5 ? Form::kShort : Form::kLong; }
};

nlohmann::json ToJson(const SynthScenario& s);
SynthScenario SynthScenarioFromJson(const nlohmann::json& j);

// Writes a fresh UQFS store into `out` (which must not hold a manifest).
// Every record carries full-scope hidden states for each layer, response-
// scoped attn_prev / attn_prev2 / lookback summaries per layer and token
// log-probs. Byte-identical output for a fixed scenario.
FeatureStore GenerateCorpus(const SynthScenario& scenario, const std::filesystem::path& out);

}  // namespace uqp
