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

#include "uqp/report.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

#include "uqp/error.hpp"

namespace uqp {
namespace {

std::string Fixed4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

}  // namespace

TableFormat ParseTableFormat(std::string_view s) {
  if (s == "csv") return TableFormat::kCsv;
  if (s == "md") return TableFormat::kMd;
  throw Error(ErrorCode::kInvalidArgument, "unknown table format '" + std::string(s) + "'");
}

std::vector<TableSection> BuildTable(const std::vector<ResultCell>& results) {
  struct Acc {
    double sum = 0.0;
    int n = 0;
  };
  std::vector<std::string> forms;
  std::map<std::string, TableSection> sections;
  std::map<std::string, std::map<std::string, std::map<std::string, Acc>>> acc;
  for (const auto& r : results) {
    if (!r.ok) continue;
    if (sections.count(r.form) == 0) {
      forms.push_back(r.form);
      sections[r.form].form = r.form;
    }
    auto& sec = sections[r.form];
    if (std::find(sec.methods.begin(), sec.methods.end(), r.method) == sec.methods.end()) {
      sec.methods.push_back(r.method);
    }
    auto& a = acc[r.form][r.method][r.setting];
    a.sum += r.prr;
    a.n += 1;
  }
  // Short-form first, then long-form, then anything else.
  std::stable_sort(forms.begin(), forms.end(), [](const std::string& a, const std::string& b) {
    auto rank = [](const std::string& f) { return f == "short" ? 0 : f == "long" ? 1 : 2; };
    return rank(a) < rank(b);
  });
  std::vector<TableSection> out;
  for (const auto& f : forms) {
    TableSection sec = sections[f];
    for (OodSetting s : kAllSettings) {
      const std::string name(ToString(s));
      // Shared across sections so csv rows line up.
      bool present = false;
      for (const auto& [form, by_method] : acc) {
        for (const auto& [m, by_setting] : by_method) present = present || by_setting.count(name) != 0;
      }
      if (present) sec.settings.push_back(name);
    }
    for (const auto& [m, by_setting] : acc[f]) {
      for (const auto& [s, a] : by_setting) sec.value[m][s] = a.sum / a.n;
    }
    out.push_back(std::move(sec));
  }
  return out;
}

double RowAverage(const std::vector<double>& values, bool clamped) {
  if (values.empty()) return 0.0;
  double sum = 0.0;
  for (double v : values) sum += clamped ? std::max(v, 0.0) : v;
  return sum / static_cast<double>(values.size());
}

std::string RenderTable(const std::vector<ResultCell>& results, TableFormat format) {
  const auto sections = BuildTable(results);
  if (sections.empty()) throw Error(ErrorCode::kEmptyInput, "no successful results to tabulate");
  std::string out;
  for (size_t si = 0; si < sections.size(); ++si) {
    const auto& sec = sections[si];
    std::vector<std::string> header{"method"};
    header.insert(header.end(), sec.settings.begin(), sec.settings.end());
    header.push_back("avg");
    header.push_back("clamped_avg");
    std::vector<std::vector<std::string>> rows;
    for (const auto& m : sec.methods) {
      std::vector<std::string> row{m};
      std::vector<double> present;
      for (const auto& s : sec.settings) {
        const auto& by = sec.value.at(m);
        const auto it = by.find(s);
        if (it == by.end()) {
          row.push_back("-");
        } else {
          row.push_back(Fixed4(it->second));
          present.push_back(it->second);
        }
      }
      row.push_back(present.empty() ? "-" : Fixed4(RowAverage(present, false)));
      row.push_back(present.empty() ? "-" : Fixed4(RowAverage(present, true)));
      rows.push_back(std::move(row));
    }
    if (format == TableFormat::kMd) {
      if (si > 0) out += "\n";
      out += "## " + sec.form + "-form\n\n";
      auto line = [](const std::vector<std::string>& cells) {
        std::string s = "|";
        for (const auto& c : cells) s += " " + c + " |";
        return s + "\n";
      };
      out += line(header);
      std::string sep = "|";
      for (size_t i = 0; i < header.size(); ++i) sep += i == 0 ? " --- |" : " ---: |";
      out += sep + "\n";
      for (const auto& r : rows) out += line(r);
    } else {
      if (si == 0) {
        out += "form";
        for (const auto& h : header) out += "," + h;
        out += "\n";
      }
      for (const auto& r : rows) {
        out += sec.form;
        for (const auto& c : r) out += "," + c;
        out += "\n";
      }
    }
  }
  return out;
}

void EmitTable(const std::vector<ResultCell>& results, const std::filesystem::path& out,
               TableFormat format) {
  const std::string text = RenderTable(results, format);
  std::ofstream f(out, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(ErrorCode::kIoError, "cannot write " + out.string());
  f << text;
  if (!f) throw Error(ErrorCode::kIoError, "write failed for " + out.string());
}

}  // namespace uqp
