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
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace uqp {

// A named array persisted as little-endian float32. Values are held as
// double in memory and narrowed on write.
struct NamedArray {
  std::string name;
  std::vector<int64_t> shape;
  std::vector<double> values;
};

// Single-file persistence used for trained probes and Gaussian statistics:
//   8-byte magic "UQPBLOB1" | uint64 LE header length | JSON header |
//   concatenated float32 LE arrays.
// The header carries a "format" tag and an "arrays" index (name, shape,
// element offset, element count) next to any caller-supplied fields.
struct Container {
  nlohmann::json header;
  std::map<std::string, NamedArray> arrays;

  const NamedArray& at(const std::string& name) const;
};

void WriteContainer(const std::filesystem::path& path,
                    const nlohmann::json& header,
                    const std::vector<NamedArray>& arrays);
Container ReadContainer(const std::filesystem::path& path);

}  // namespace uqp
