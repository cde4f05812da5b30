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
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

namespace uqp {

enum class Task { kQa, kSummarisation };
enum class Form { kShort, kLong };
enum class Split { kTrain, kTest };
enum class FeatureKind { kHidden, kAttnPrev, kAttnPrev2, kLookback, kTokenLogprob };
// Which token range a tensor covers: response tokens only, or
// context followed by response.
enum class TokenScope { kResponse, kFull };

std::string_view ToString(Task v);
std::string_view ToString(Form v);
std::string_view ToString(Split v);
std::string_view ToString(FeatureKind v);
std::string_view ToString(TokenScope v);
Task ParseTask(std::string_view s);
Form ParseForm(std::string_view s);
Split ParseSplit(std::string_view s);
FeatureKind ParseFeatureKind(std::string_view s);
TokenScope ParseTokenScope(std::string_view s);

struct FeatureEntry {
  FeatureKind kind = FeatureKind::kHidden;
  std::optional<int> layer;  // absent only for token_logprob
  TokenScope scope = TokenScope::kResponse;
  std::vector<int64_t> shape;  // [T, D] or [T]
  uint64_t offset_bytes = 0;   // absolute offset into tensors.bin
  uint64_t length_bytes = 0;

  int64_t rows() const { return shape.empty() ? 0 : shape[0]; }
  int64_t cols() const { return shape.size() == 2 ? shape[1] : 1; }
};

struct FeatureRecord {
  std::string instance_id;
  std::string dataset;
  Task task = Task::kQa;
  Form form = Form::kShort;
  Split split = Split::kTrain;
  int64_t n_context_tokens = 0;
  int64_t n_response_tokens = 1;
  std::optional<double> correctness;
  std::vector<FeatureEntry> features;

  const FeatureEntry* Find(FeatureKind kind, std::optional<int> layer) const;
  // Sorted layer indices carrying `kind`.
  std::vector<int> Layers(FeatureKind kind) const;
  int64_t ExpectedRows(TokenScope scope) const {
    return scope == TokenScope::kResponse ? n_response_tokens
                                          : n_context_tokens + n_response_tokens;
  }
};

struct Tensor {
  std::vector<int64_t> shape;
  std::vector<float> data;  // row-major
};

// Throws MalformedManifest describing the first violated record invariant.
void ValidateRecord(const FeatureRecord& record);

// Handle onto a UQFS v1 directory:
//   manifest.jsonl  header line, then one JSON FeatureRecord per line
//   tensors.bin     "UQFSBIN1" then concatenated float32 LE tensors
// The header line stores FNV-1a-64 checksums of the blob and of the record
// lines. Appends are single-writer; reads are safe from any thread.
class FeatureStore {
 public:
  static constexpr std::string_view kFormatVersion = "uqfs-1";
  static constexpr std::string_view kManifestName = "manifest.jsonl";
  static constexpr std::string_view kBlobName = "tensors.bin";
  static constexpr std::string_view kBlobMagic = "UQFSBIN1";

  // Creates an empty store; fails if `dir` already holds a manifest.
  static FeatureStore Create(const std::filesystem::path& dir);
  static FeatureStore Open(const std::filesystem::path& dir);

  FeatureStore(FeatureStore&& other) noexcept;
  FeatureStore& operator=(FeatureStore&& other) noexcept;
  FeatureStore(const FeatureStore&) = delete;
  FeatureStore& operator=(const FeatureStore&) = delete;
  ~FeatureStore();

  // Offsets/lengths in `record.features` are assigned here; tensors are
  // matched to entries by position.
  std::string Append(FeatureRecord record, std::span<const Tensor> tensors);

  Tensor Read(std::string_view instance_id, FeatureKind kind,
              std::optional<int> layer) const;
  // Same as Read, promoted to double as a [T, D] matrix ([T, 1] for
  // token_logprob).
  Eigen::MatrixXd ReadMatrix(std::string_view instance_id, FeatureKind kind,
                             std::optional<int> layer) const;

  const std::vector<FeatureRecord>& records() const { return records_; }
  const FeatureRecord& record(std::string_view instance_id) const;
  bool contains(std::string_view instance_id) const;
  std::vector<const FeatureRecord*> ByDataset(std::string_view dataset) const;
  std::vector<std::string> datasets() const;

  uint64_t blob_checksum() const { return blob_hash_; }
  uint64_t manifest_checksum() const { return manifest_hash_; }
  uint64_t blob_size() const { return blob_size_; }
  const std::filesystem::path& dir() const { return dir_; }

 private:
  FeatureStore() = default;
  void Index();
  void WriteHeader() const;

  std::filesystem::path dir_;
  std::vector<FeatureRecord> records_;
  std::unordered_map<std::string, size_t> by_id_;
  std::unordered_map<std::string, std::vector<size_t>> by_dataset_;
  uint64_t blob_hash_ = 0;
  uint64_t manifest_hash_ = 0;
  uint64_t blob_size_ = 0;
  int fd_ = -1;
};

}  // namespace uqp
