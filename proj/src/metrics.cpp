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

#include "uqp/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "uqp/error.hpp"

namespace uqp {
namespace {

void CheckFinite(std::span<const double> v, const char* what) {
  for (double x : v) {
    if (!std::isfinite(x)) throw Error(ErrorCode::kNonFiniteInput, std::string(what) + " has non-finite values");
  }
}

}  // namespace

std::vector<double> AverageRanks(std::span<const double> values) {
  const size_t n = values.size();
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](size_t a, size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(n);
  size_t i = 0;
  while (i < n) {
    size_t j = i + 1;
    while (j < n && values[order[j]] == values[order[i]]) ++j;
    // Positions i..j-1 (0-based) share rank mean((i+1)..j).
    const double rank = 0.5 * static_cast<double>(i + 1 + j);
    for (size_t k = i; k < j; ++k) ranks[order[k]] = rank;
    i = j;
  }
  return ranks;
}

RejectionCurve ComputeRejectionCurve(std::span<const double> uncertainty,
                                     std::span<const double> correctness) {
  if (uncertainty.size() != correctness.size()) {
    throw Error(ErrorCode::kLengthMismatch, "uncertainty and correctness lengths differ");
  }
  const size_t n = uncertainty.size();
  if (n < 2) throw Error(ErrorCode::kTooFewInstances, "rejection curve needs N >= 2");
  CheckFinite(uncertainty, "uncertainty");
  CheckFinite(correctness, "correctness");

  // Most uncertain first; the stable sort keeps tie blocks in index order so
  // that equal orderings produce bit-identical curves.
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](size_t a, size_t b) { return uncertainty[a] > uncertainty[b]; });

  struct Block {
    size_t begin, end;
    double sum;
  };
  std::vector<Block> blocks;
  for (size_t i = 0; i < n;) {
    size_t j = i;
    double sum = 0.0;
    while (j < n && uncertainty[order[j]] == uncertainty[order[i]]) sum += correctness[order[j++]];
    blocks.push_back({i, j, sum});
    i = j;
  }
  // after[b] = total correctness of blocks strictly after b.
  std::vector<double> after(blocks.size() + 1, 0.0);
  for (size_t b = blocks.size(); b-- > 0;) after[b] = after[b + 1] + blocks[b].sum;

  RejectionCurve curve;
  curve.retained_means.resize(n + 1);
  for (size_t b = 0; b < blocks.size(); ++b) {
    const Block& blk = blocks[b];
    const double size = static_cast<double>(blk.end - blk.begin);
    for (size_t k = blk.begin; k < blk.end; ++k) {
      double retained;
      if (k == blk.begin) {
        retained = after[b + 1] + blk.sum;
      } else {
        retained = after[b + 1] + blk.sum * (static_cast<double>(blk.end - k) / size);
      }
      curve.retained_means[k] = retained / static_cast<double>(n - k);
    }
  }
  curve.retained_means[n] = curve.retained_means[n - 1];
  double total = 0.0;
  for (size_t k = 0; k < n; ++k) total += curve.retained_means[k];
  curve.auc = total / static_cast<double>(n);
  return curve;
}

double PredictionRejectionRatio(std::span<const double> uncertainty,
                                std::span<const double> correctness) {
  const RejectionCurve unc = ComputeRejectionCurve(uncertainty, correctness);
  const auto [lo, hi] = std::minmax_element(correctness.begin(), correctness.end());
  if (*lo == *hi) {
    throw Error(ErrorCode::kDegenerateCorrectness, "correctness is constant");
  }
  std::vector<double> oracle_unc(correctness.size());
  for (size_t i = 0; i < correctness.size(); ++i) oracle_unc[i] = -correctness[i];
  const RejectionCurve oracle = ComputeRejectionCurve(oracle_unc, correctness);
  const double rnd = std::accumulate(correctness.begin(), correctness.end(), 0.0) /
                     static_cast<double>(correctness.size());
  const double denom = oracle.auc - rnd;
  if (!(denom > 0.0)) throw Error(ErrorCode::kDegenerateCorrectness, "oracle AUC equals random AUC");
  return (unc.auc - rnd) / denom;
}

double PearsonCorrelation(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error(ErrorCode::kLengthMismatch, "correlation inputs differ in length");
  const size_t n = a.size();
  if (n < 2) throw Error(ErrorCode::kTooFewInstances, "correlation needs N >= 2");
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / static_cast<double>(n);
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / static_cast<double>(n);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const double da = a[i] - ma;
    const double db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa == 0.0 || sbb == 0.0) throw Error(ErrorCode::kDegenerateInput, "constant input to correlation");
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

double SpearmanCorrelation(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error(ErrorCode::kLengthMismatch, "spearman inputs differ in length");
  if (a.size() < 3) throw Error(ErrorCode::kTooFewInstances, "spearman needs N >= 3");
  CheckFinite(a, "spearman input");
  CheckFinite(b, "spearman input");
  const auto ra = AverageRanks(a);
  const auto rb = AverageRanks(b);
  return PearsonCorrelation(ra, rb);
}

}  // namespace uqp
