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

#include "uqp/container.hpp"

#include <cstring>
#include <fstream>
#include <iterator>

#include "uqp/error.hpp"
#include "uqp/util.hpp"

namespace uqp {
namespace {

constexpr char kMagic[8] = {'U', 'Q', 'P', 'B', 'L', 'O', 'B', '1'};

}  // namespace

const NamedArray& Container::at(const std::string& name) const {
  auto it = arrays.find(name);
  if (it == arrays.end()) {
    throw Error(ErrorCode::kMalformedManifest, "container has no array '" + name + "'");
  }
  return it->second;
}

void WriteContainer(const std::filesystem::path& path,
                    const nlohmann::json& header,
                    const std::vector<NamedArray>& arrays) {
  nlohmann::json full = header;
  nlohmann::json index = nlohmann::json::array();
  std::vector<std::byte> payload;
  uint64_t offset = 0;
  for (const auto& a : arrays) {
    int64_t expected = 1;
    for (int64_t d : a.shape) expected *= d;
    if (expected != static_cast<int64_t>(a.values.size())) {
      throw Error(ErrorCode::kShapeMismatch, "array '" + a.name + "' shape/size disagree");
    }
    index.push_back({{"name", a.name}, {"shape", a.shape}, {"offset", offset},
                     {"count", a.values.size()}});
    for (double v : a.values) AppendFloat32LE(payload, static_cast<float>(v));
    offset += a.values.size();
  }
  full["arrays"] = index;
  const std::string text = full.dump();

  std::vector<std::byte> head(reinterpret_cast<const std::byte*>(kMagic),
                              reinterpret_cast<const std::byte*>(kMagic) + 8);
  AppendUint64LE(head, text.size());

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(head.data()), static_cast<std::streamsize>(head.size()));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  out.write(reinterpret_cast<const char*>(payload.data()), static_cast<std::streamsize>(payload.size()));
  if (!out) throw Error(ErrorCode::kIoError, "short write to " + path.string());
}

Container ReadContainer(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kMissingFile, path.string());
  std::vector<char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const auto* bytes = reinterpret_cast<const std::byte*>(raw.data());
  if (raw.size() < 16 || std::memcmp(raw.data(), kMagic, 8) != 0) {
    throw Error(ErrorCode::kMalformedManifest, path.string() + ": bad magic");
  }
  const uint64_t header_len = ReadUint64LE(bytes + 8);
  if (16 + header_len > raw.size()) {
    throw Error(ErrorCode::kMalformedManifest, path.string() + ": truncated header");
  }
  Container c;
  try {
    c.header = nlohmann::json::parse(raw.begin() + 16, raw.begin() + 16 + static_cast<std::ptrdiff_t>(header_len));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kMalformedManifest, path.string() + ": " + e.what());
  }
  const std::byte* payload = bytes + 16 + header_len;
  const uint64_t payload_bytes = raw.size() - 16 - header_len;
  for (const auto& entry : c.header.at("arrays")) {
    NamedArray a;
    a.name = entry.at("name").get<std::string>();
    a.shape = entry.at("shape").get<std::vector<int64_t>>();
    const uint64_t off = entry.at("offset").get<uint64_t>();
    const uint64_t count = entry.at("count").get<uint64_t>();
    if ((off + count) * 4 > payload_bytes) {
      throw Error(ErrorCode::kMalformedManifest, path.string() + ": array '" + a.name + "' out of bounds");
    }
    a.values.resize(count);
    for (uint64_t i = 0; i < count; ++i) a.values[i] = ReadFloat32LE(payload + (off + i) * 4);
    c.arrays.emplace(a.name, std::move(a));
  }
  return c;
}

}  // namespace uqp
