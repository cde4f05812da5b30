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

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "uqp/runner.hpp"

namespace uqp {

enum class TableFormat { kCsv, kMd };

TableFormat ParseTableFormat(std::string_view s);

// Mean PRR per (form, method, setting) over eval datasets and seeds.
// Failed cells are skipped.
struct TableSection {
  std::string form;
  std::vector<std::string> methods;   // first-seen order
  std::vector<std::string> settings;  // canonical order, present ones only
  std::map<std::string, std::map<std::string, double>> value;  // method -> setting -> PRR
};

std::vector<TableSection> BuildTable(const std::vector<ResultCell>& results);

// Row mean across settings; with `clamped` negative entries count as zero.
double RowAverage(const std::vector<double>& values, bool clamped);

// Columns: method, one per setting, avg, clamped_avg. Values use %.4f and
// "-" marks a missing cell. Throws EmptyInput when no cell succeeded.
std::string RenderTable(const std::vector<ResultCell>& results, TableFormat format);
void EmitTable(const std::vector<ResultCell>& results, const std::filesystem::path& out,
               TableFormat format);

}  // namespace uqp
