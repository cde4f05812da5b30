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

#include "uqp/feature_store.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "uqp/error.hpp"
#include "uqp/util.hpp"

namespace uqp {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

template <typename E, size_t N>
E ParseEnum(std::string_view s, const std::pair<std::string_view, E> (&table)[N],
            std::string_view what) {
  for (const auto& [name, value] : table) {
    if (name == s) return value;
  }
  throw Error(ErrorCode::kInvalidArgument,
              "unknown " + std::string(what) + " '" + std::string(s) + "'");
}

constexpr std::pair<std::string_view, Task> kTasks[] = {
    {"qa", Task::kQa}, {"summarisation", Task::kSummarisation}};
constexpr std::pair<std::string_view, Form> kForms[] = {
    {"short", Form::kShort}, {"long", Form::kLong}};
constexpr std::pair<std::string_view, Split> kSplits[] = {
    {"train", Split::kTrain}, {"test", Split::kTest}};
constexpr std::pair<std::string_view, FeatureKind> kKinds[] = {
    {"hidden", FeatureKind::kHidden},
    {"attn_prev", FeatureKind::kAttnPrev},
    {"attn_prev2", FeatureKind::kAttnPrev2},
    {"lookback", FeatureKind::kLookback},
    {"token_logprob", FeatureKind::kTokenLogprob}};
constexpr std::pair<std::string_view, TokenScope> kScopes[] = {
    {"response", TokenScope::kResponse}, {"full", TokenScope::kFull}};

template <typename E, size_t N>
std::string_view EnumName(E v, const std::pair<std::string_view, E> (&table)[N]) {
  for (const auto& [name, value] : table) {
    if (value == v) return name;
  }
  return "?";
}

json EntryToJson(const FeatureEntry& e) {
  json j;
  j["kind"] = ToString(e.kind);
  if (e.layer) j["layer"] = *e.layer;
  j["scope"] = ToString(e.scope);
  j["shape"] = e.shape;
  j["offset_bytes"] = e.offset_bytes;
  j["length_bytes"] = e.length_bytes;
  return j;
}

json RecordToJson(const FeatureRecord& r) {
  json j;
  j["instance_id"] = r.instance_id;
  j["dataset"] = r.dataset;
  j["task"] = ToString(r.task);
  j["form"] = ToString(r.form);
  j["split"] = ToString(r.split);
  j["n_context_tokens"] = r.n_context_tokens;
  j["n_response_tokens"] = r.n_response_tokens;
  j["correctness"] = r.correctness ? json(*r.correctness) : json(nullptr);
  json feats = json::array();
  for (const auto& e : r.features) feats.push_back(EntryToJson(e));
  j["features"] = std::move(feats);
  return j;
}

FeatureRecord RecordFromJson(const json& j) {
  FeatureRecord r;
  r.instance_id = j.at("instance_id").get<std::string>();
  r.dataset = j.at("dataset").get<std::string>();
  r.task = ParseTask(j.at("task").get<std::string>());
  r.form = ParseForm(j.at("form").get<std::string>());
  r.split = ParseSplit(j.at("split").get<std::string>());
  r.n_context_tokens = j.at("n_context_tokens").get<int64_t>();
  r.n_response_tokens = j.at("n_response_tokens").get<int64_t>();
  if (auto it = j.find("correctness"); it != j.end() && !it->is_null()) {
    r.correctness = it->get<double>();
  }
  for (const auto& fe : j.at("features")) {
    FeatureEntry e;
    e.kind = ParseFeatureKind(fe.at("kind").get<std::string>());
    if (auto it = fe.find("layer"); it != fe.end() && !it->is_null()) {
      e.layer = it->get<int>();
    }
    e.scope = ParseTokenScope(fe.value("scope", std::string("response")));
    e.shape = fe.at("shape").get<std::vector<int64_t>>();
    e.offset_bytes = fe.at("offset_bytes").get<uint64_t>();
    e.length_bytes = fe.at("length_bytes").get<uint64_t>();
    r.features.push_back(std::move(e));
  }
  return r;
}

std::string HeaderLine(uint64_t blob_hash, uint64_t manifest_hash) {
  // Fixed width so the checksum fields can be patched in place on append.
  return std::string("{\"format_version\":\"") + std::string(FeatureStore::kFormatVersion) +
         "\",\"blob_file\":\"" + std::string(FeatureStore::kBlobName) +
         "\",\"blob_checksum\":\"" + HexU64(blob_hash) +
         "\",\"manifest_checksum\":\"" + HexU64(manifest_hash) + "\"}\n";
}

std::string ReadWholeFile(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kMissingFile, path.string());
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

uint64_t HashBytes(std::string_view bytes, uint64_t state = Fnv1a64::kOffsetBasis) {
  Fnv1a64 h(state);
  h.Update(bytes);
  return h.digest();
}

}  // namespace

std::string_view ToString(Task v) { return EnumName(v, kTasks); }
std::string_view ToString(Form v) { return EnumName(v, kForms); }
std::string_view ToString(Split v) { return EnumName(v, kSplits); }
std::string_view ToString(FeatureKind v) { return EnumName(v, kKinds); }
std::string_view ToString(TokenScope v) { return EnumName(v, kScopes); }
Task ParseTask(std::string_view s) { return ParseEnum(s, kTasks, "task"); }
Form ParseForm(std::string_view s) { return ParseEnum(s, kForms, "form"); }
Split ParseSplit(std::string_view s) { return ParseEnum(s, kSplits, "split"); }
FeatureKind ParseFeatureKind(std::string_view s) { return ParseEnum(s, kKinds, "feature kind"); }
TokenScope ParseTokenScope(std::string_view s) { return ParseEnum(s, kScopes, "token scope"); }

const FeatureEntry* FeatureRecord::Find(FeatureKind kind, std::optional<int> layer) const {
  for (const auto& e : features) {
    if (e.kind == kind && e.layer == layer) return &e;
  }
  return nullptr;
}

std::vector<int> FeatureRecord::Layers(FeatureKind kind) const {
  std::vector<int> out;
  for (const auto& e : features) {
    if (e.kind == kind && e.layer) out.push_back(*e.layer);
  }
  std::sort(out.begin(), out.end());
  return out;
}

void ValidateRecord(const FeatureRecord& r) {
  auto fail = [&](const std::string& why) {
    throw Error(ErrorCode::kMalformedManifest, "record '" + r.instance_id + "': " + why);
  };
  if (r.instance_id.empty()) fail("empty instance_id");
  if (r.n_response_tokens < 1) fail("n_response_tokens must be >= 1");
  if (r.n_context_tokens < 0) fail("negative n_context_tokens");
  if (r.correctness && !(*r.correctness >= 0.0 && *r.correctness <= 1.0)) {
    fail("correctness outside [0, 1]");
  }
  std::set<std::pair<int, int>> seen;
  for (const auto& e : r.features) {
    const bool logprob = e.kind == FeatureKind::kTokenLogprob;
    if (logprob && e.layer) fail("token_logprob entries carry no layer");
    if (!logprob && !e.layer) fail(std::string(ToString(e.kind)) + " entry without layer");
    if (e.layer && *e.layer < 0) fail("negative layer");
    if (!seen.insert({static_cast<int>(e.kind), e.layer.value_or(-1)}).second) {
      fail("duplicate feature entry");
    }
    const size_t rank = logprob ? 1 : 2;
    if (e.shape.size() != rank) fail("bad tensor rank for " + std::string(ToString(e.kind)));
    if (e.shape[0] != r.ExpectedRows(e.scope)) fail("token count disagrees with scope");
    if (rank == 2 && e.shape[1] < 1) fail("zero feature width");
    uint64_t elems = 1;
    for (int64_t d : e.shape) elems *= static_cast<uint64_t>(d);
    if (e.length_bytes != 4 * elems) fail("length_bytes != 4 * prod(shape)");
  }
}

FeatureStore::FeatureStore(FeatureStore&& other) noexcept { *this = std::move(other); }

FeatureStore& FeatureStore::operator=(FeatureStore&& other) noexcept {
  if (this != &other) {
    if (fd_ >= 0) ::close(fd_);
    dir_ = std::move(other.dir_);
    records_ = std::move(other.records_);
    by_id_ = std::move(other.by_id_);
    by_dataset_ = std::move(other.by_dataset_);
    blob_hash_ = other.blob_hash_;
    manifest_hash_ = other.manifest_hash_;
    blob_size_ = other.blob_size_;
    fd_ = std::exchange(other.fd_, -1);
  }
  return *this;
}

FeatureStore::~FeatureStore() {
  if (fd_ >= 0) ::close(fd_);
}

FeatureStore FeatureStore::Create(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::kIoError, "cannot create " + dir.string() + ": " + ec.message());
  if (fs::exists(dir / kManifestName)) {
    throw Error(ErrorCode::kIoError, dir.string() + " already holds a store");
  }
  FeatureStore store;
  store.dir_ = dir;
  {
    std::ofstream blob(dir / kBlobName, std::ios::binary | std::ios::trunc);
    if (!blob) throw Error(ErrorCode::kIoError, "cannot write blob in " + dir.string());
    blob.write(kBlobMagic.data(), static_cast<std::streamsize>(kBlobMagic.size()));
  }
  store.blob_hash_ = HashBytes(kBlobMagic);
  store.manifest_hash_ = Fnv1a64::kOffsetBasis;
  store.blob_size_ = kBlobMagic.size();
  {
    std::ofstream manifest(dir / kManifestName, std::ios::binary | std::ios::trunc);
    if (!manifest) throw Error(ErrorCode::kIoError, "cannot write manifest in " + dir.string());
    manifest << HeaderLine(store.blob_hash_, store.manifest_hash_);
  }
  store.fd_ = ::open((dir / kBlobName).c_str(), O_RDONLY);
  if (store.fd_ < 0) throw Error(ErrorCode::kIoError, "cannot reopen blob");
  return store;
}

FeatureStore FeatureStore::Open(const fs::path& dir) {
  const fs::path manifest_path = dir / kManifestName;
  const fs::path blob_path = dir / kBlobName;
  if (!fs::exists(manifest_path)) throw Error(ErrorCode::kMissingFile, manifest_path.string());
  if (!fs::exists(blob_path)) throw Error(ErrorCode::kMissingFile, blob_path.string());

  FeatureStore store;
  store.dir_ = dir;
  const std::string manifest = ReadWholeFile(manifest_path);
  const size_t first_nl = manifest.find('\n');
  if (first_nl == std::string::npos) {
    throw Error(ErrorCode::kMalformedManifest, "line 1: missing header");
  }
  uint64_t expected_blob = 0;
  uint64_t expected_manifest = 0;
  try {
    const json header = json::parse(manifest.substr(0, first_nl));
    if (header.at("format_version").get<std::string>() != kFormatVersion) {
      throw Error(ErrorCode::kMalformedManifest, "line 1: unsupported format_version");
    }
    expected_blob = ParseHexU64(header.at("blob_checksum").get<std::string>());
    expected_manifest = ParseHexU64(header.at("manifest_checksum").get<std::string>());
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kMalformedManifest, std::string("line 1: ") + e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kMalformedManifest) throw;
    throw Error(ErrorCode::kMalformedManifest, std::string("line 1: ") + e.what());
  }
  if (manifest.compare(0, first_nl + 1, HeaderLine(expected_blob, expected_manifest)) != 0) {
    throw Error(ErrorCode::kMalformedManifest, "line 1: non-canonical header");
  }

  const std::string_view body = std::string_view(manifest).substr(first_nl + 1);
  store.manifest_hash_ = HashBytes(body);
  if (store.manifest_hash_ != expected_manifest) {
    throw Error(ErrorCode::kChecksumMismatch, "manifest records checksum mismatch in " + dir.string());
  }

  const std::string blob = ReadWholeFile(blob_path);
  store.blob_hash_ = HashBytes(blob);
  store.blob_size_ = blob.size();
  if (store.blob_hash_ != expected_blob) {
    throw Error(ErrorCode::kChecksumMismatch, "blob checksum mismatch in " + dir.string());
  }
  if (blob.compare(0, kBlobMagic.size(), kBlobMagic) != 0) {
    throw Error(ErrorCode::kMalformedManifest, "blob magic missing");
  }

  size_t line_no = 1;
  size_t pos = 0;
  while (pos < body.size()) {
    size_t end = body.find('\n', pos);
    if (end == std::string_view::npos) end = body.size();
    ++line_no;
    const std::string_view line = body.substr(pos, end - pos);
    pos = end + 1;
    if (line.empty()) continue;
    FeatureRecord record;
    try {
      record = RecordFromJson(json::parse(line));
      ValidateRecord(record);
    } catch (const std::exception& e) {
      throw Error(ErrorCode::kMalformedManifest,
                  "line " + std::to_string(line_no) + ": " + e.what());
    }
    for (const auto& e : record.features) {
      if (e.offset_bytes < kBlobMagic.size() || e.offset_bytes + e.length_bytes > store.blob_size_) {
        throw Error(ErrorCode::kMalformedManifest,
                    "line " + std::to_string(line_no) + ": tensor outside blob");
      }
    }
    if (store.by_id_.count(record.instance_id)) {
      throw Error(ErrorCode::kMalformedManifest,
                  "line " + std::to_string(line_no) + ": duplicate instance_id '" +
                      record.instance_id + "'");
    }
    store.by_id_.emplace(record.instance_id, store.records_.size());
    store.records_.push_back(std::move(record));
  }
  store.Index();
  store.fd_ = ::open(blob_path.c_str(), O_RDONLY);
  if (store.fd_ < 0) throw Error(ErrorCode::kIoError, "cannot open " + blob_path.string());
  return store;
}

void FeatureStore::Index() {
  by_id_.clear();
  by_dataset_.clear();
  for (size_t i = 0; i < records_.size(); ++i) {
    by_id_.emplace(records_[i].instance_id, i);
    by_dataset_[records_[i].dataset].push_back(i);
  }
}

void FeatureStore::WriteHeader() const {
  std::fstream manifest(dir_ / kManifestName, std::ios::binary | std::ios::in | std::ios::out);
  if (!manifest) throw Error(ErrorCode::kIoError, "cannot update manifest header");
  manifest.seekp(0);
  manifest << HeaderLine(blob_hash_, manifest_hash_);
  if (!manifest) throw Error(ErrorCode::kIoError, "manifest header write failed");
}

std::string FeatureStore::Append(FeatureRecord record, std::span<const Tensor> tensors) {
  if (by_id_.count(record.instance_id)) {
    throw Error(ErrorCode::kDuplicateId, record.instance_id);
  }
  if (tensors.size() != record.features.size()) {
    throw Error(ErrorCode::kShapeMismatch, "record '" + record.instance_id +
                                               "' declares " + std::to_string(record.features.size()) +
                                               " entries but got " + std::to_string(tensors.size()) +
                                               " tensors");
  }
  std::vector<std::byte> payload;
  uint64_t offset = blob_size_;
  for (size_t i = 0; i < tensors.size(); ++i) {
    auto& entry = record.features[i];
    const Tensor& t = tensors[i];
    uint64_t elems = 1;
    for (int64_t d : t.shape) elems *= static_cast<uint64_t>(std::max<int64_t>(d, 0));
    if (t.shape != entry.shape || t.data.size() != elems) {
      throw Error(ErrorCode::kShapeMismatch, "record '" + record.instance_id + "' entry " +
                                                 std::to_string(i) + " tensor shape mismatch");
    }
    entry.offset_bytes = offset;
    entry.length_bytes = 4 * elems;
    offset += entry.length_bytes;
    for (float v : t.data) AppendFloat32LE(payload, v);
  }
  try {
    ValidateRecord(record);
  } catch (const Error& e) {
    throw Error(ErrorCode::kShapeMismatch, e.what());
  }

  {
    std::ofstream blob(dir_ / kBlobName, std::ios::binary | std::ios::app);
    if (!blob) throw Error(ErrorCode::kIoError, "cannot append to blob");
    blob.write(reinterpret_cast<const char*>(payload.data()), static_cast<std::streamsize>(payload.size()));
    if (!blob) throw Error(ErrorCode::kIoError, "blob append failed");
  }
  Fnv1a64 bh(blob_hash_);
  bh.Update(std::span<const std::byte>(payload));
  blob_hash_ = bh.digest();
  blob_size_ = offset;

  const std::string line = RecordToJson(record).dump() + "\n";
  {
    std::ofstream manifest(dir_ / kManifestName, std::ios::binary | std::ios::app);
    if (!manifest) throw Error(ErrorCode::kIoError, "cannot append to manifest");
    manifest << line;
    if (!manifest) throw Error(ErrorCode::kIoError, "manifest append failed");
  }
  manifest_hash_ = HashBytes(line, manifest_hash_);
  WriteHeader();

  const std::string id = record.instance_id;
  by_id_.emplace(id, records_.size());
  by_dataset_[record.dataset].push_back(records_.size());
  records_.push_back(std::move(record));
  return id;
}

const FeatureRecord& FeatureStore::record(std::string_view instance_id) const {
  auto it = by_id_.find(std::string(instance_id));
  if (it == by_id_.end()) throw Error(ErrorCode::kUnknownId, std::string(instance_id));
  return records_[it->second];
}

bool FeatureStore::contains(std::string_view instance_id) const {
  return by_id_.count(std::string(instance_id)) > 0;
}

std::vector<const FeatureRecord*> FeatureStore::ByDataset(std::string_view dataset) const {
  std::vector<const FeatureRecord*> out;
  auto it = by_dataset_.find(std::string(dataset));
  if (it == by_dataset_.end()) return out;
  for (size_t i : it->second) out.push_back(&records_[i]);
  return out;
}

std::vector<std::string> FeatureStore::datasets() const {
  std::vector<std::string> out;
  for (const auto& r : records_) {
    if (std::find(out.begin(), out.end(), r.dataset) == out.end()) out.push_back(r.dataset);
  }
  return out;
}

Tensor FeatureStore::Read(std::string_view instance_id, FeatureKind kind,
                          std::optional<int> layer) const {
  const FeatureRecord& r = record(instance_id);
  const FeatureEntry* e = r.Find(kind, layer);
  if (e == nullptr) {
    throw Error(ErrorCode::kMissingFeature,
                std::string(instance_id) + " has no " + std::string(ToString(kind)) +
                    (layer ? " layer " + std::to_string(*layer) : std::string()));
  }
  std::vector<std::byte> buf(e->length_bytes);
  size_t done = 0;
  while (done < buf.size()) {
    const ssize_t n = ::pread(fd_, buf.data() + done, buf.size() - done,
                              static_cast<off_t>(e->offset_bytes + done));
    if (n <= 0) throw Error(ErrorCode::kIoError, "short read from blob");
    done += static_cast<size_t>(n);
  }
  Tensor t;
  t.shape = e->shape;
  t.data.resize(e->length_bytes / 4);
  for (size_t i = 0; i < t.data.size(); ++i) t.data[i] = ReadFloat32LE(buf.data() + 4 * i);
  return t;
}

Eigen::MatrixXd FeatureStore::ReadMatrix(std::string_view instance_id, FeatureKind kind,
                                         std::optional<int> layer) const {
  const Tensor t = Read(instance_id, kind, layer);
  const Eigen::Index rows = t.shape[0];
  const Eigen::Index cols = t.shape.size() == 2 ? t.shape[1] : 1;
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = t.data[static_cast<size_t>(i * cols + j)];
  }
  return m;
}

}  // namespace uqp
