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
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "uqp/aggregation.hpp"
#include "uqp/feature_store.hpp"
#include "uqp/features.hpp"
#include "uqp/probes.hpp"

namespace uqp {

enum class OodSetting { kId, kLoo, kOneDSameTask, kDiffTask, kOneDDiffTask };

std::string_view ToString(OodSetting s);
OodSetting ParseOodSetting(std::string_view s);
inline constexpr OodSetting kAllSettings[] = {OodSetting::kId, OodSetting::kLoo,
                                              OodSetting::kOneDSameTask, OodSetting::kDiffTask,
                                              OodSetting::kOneDDiffTask};

// Names accepted in the "methods" list.
const std::vector<std::string>& KnownMethods();
bool IsUnsupervisedMethod(std::string_view method);

struct CompositionEntry {
  std::string dataset;
  int count = 0;
};

struct ExperimentConfig {
  std::vector<std::string> store_paths;
  std::string eval_dataset;
  OodSetting setting = OodSetting::kId;
  std::vector<CompositionEntry> train_composition;
  int train_budget = 1800;
  std::string method;
  FeatureSelector feature;
  AggregationStrategy aggregation;
  ProbeSpec probe;
  uint64_t seed = 0;
  int max_eval = 2000;
};

nlohmann::json ToJson(const ExperimentConfig& c);
ExperimentConfig ExperimentConfigFromJson(const nlohmann::json& j);

struct DatasetInfo {
  Task task = Task::kQa;
  Form form = Form::kShort;
  size_t n_train = 0;  // labelled train-split records
  size_t n_test = 0;   // labelled test-split records
};
using Inventory = std::map<std::string, DatasetInfo>;

// Expands a parsed config against the datasets it can see. Compositions
// follow the templates:
//   ID             eval dataset x budget
//   LOO            every other dataset, equal shares, remainder to the
//                  first donors in name order
//   OneD_SameTask  one same-task donor x budget
//   DiffTask       every other-task dataset, equal shares
//   OneD_DiffTask  one other-task donor x budget
// Throws BadComposition, EvalLeak, UnknownMethod, InvalidArgument.
std::vector<ExperimentConfig> ExpandConfig(const nlohmann::json& config, const Inventory& inventory);

// Throws BadComposition (counts not positive or not summing to the budget,
// unknown dataset), EvalLeak (eval dataset trains a non-ID cell) and
// UnknownMethod.
void ValidateCell(const ExperimentConfig& cell, const Inventory* inventory = nullptr);

// Read-only view over every store a config references.
class StoreSet {
 public:
  static std::shared_ptr<StoreSet> Open(const std::vector<std::string>& paths,
                                        const std::map<std::string, Task>& task_override = {});

  const FeatureStore& store_for(std::string_view dataset) const;
  const Inventory& inventory() const { return inventory_; }
  Task task(std::string_view dataset) const;
  // Combined checksum of every store's manifest and blob.
  uint64_t checksum() const { return checksum_; }

 private:
  std::vector<FeatureStore> stores_;
  std::map<std::string, size_t, std::less<>> owner_;
  Inventory inventory_;
  uint64_t checksum_ = 0;
};

// Parses the config file and opens its stores.
struct LoadedConfig {
  std::vector<ExperimentConfig> cells;
  std::shared_ptr<StoreSet> stores;
};
LoadedConfig LoadConfig(const std::filesystem::path& path);

struct ResultCell {
  std::string fingerprint;
  nlohmann::json config;
  std::string eval_dataset;
  std::string setting;
  std::string method;
  std::string form;
  uint64_t seed = 0;
  bool ok = false;
  std::string error;
  double prr = 0.0;
  int64_t n_train = 0;
  int64_t n_eval = 0;
  double wall_time = 0.0;
  bool cached = false;  // not persisted
};

nlohmann::json ToJson(const ResultCell& r);
ResultCell ResultCellFromJson(const nlohmann::json& j);

std::string Fingerprint(const ExperimentConfig& cell, const StoreSet& stores);

// Runs one cell; failures are captured in the returned cell.
ResultCell RunCell(const ExperimentConfig& cell, const StoreSet& stores);

struct RunOptions {
  // Results ledger directory (results.jsonl); empty disables caching.
  std::filesystem::path out_dir;
  // 0 reads UQP_WORKERS, falling back to the hardware thread count.
  int workers = 0;
};

// Runs every cell, reusing successful cached results keyed by fingerprint.
// Returned cells follow the input order.
std::vector<ResultCell> RunMatrix(const std::vector<ExperimentConfig>& cells, const StoreSet& stores,
                                  const RunOptions& options = {});

std::vector<ResultCell> LoadResults(const std::filesystem::path& results_jsonl);

int ResolveWorkers(int requested);

}  // namespace uqp
