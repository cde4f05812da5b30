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

#include "uqp/hybrid.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "uqp/error.hpp"
#include "uqp/metrics.hpp"

namespace uqp {
namespace {

void CheckOpenUnit(double v, const char* what) {
  if (!(v > 0.0 && v < 1.0)) {
    throw Error(ErrorCode::kOutOfRange, std::string(what) + " must lie in (0, 1), got " + std::to_string(v));
  }
}

void CheckRank(double r) {
  if (!(r > 0.0 && r <= 1.0)) {
    throw Error(ErrorCode::kOutOfRange, "OOD rank must lie in (0, 1], got " + std::to_string(r));
  }
}

}  // namespace

RankNormalizer RankNormalizer::Calibration(std::vector<double> reference) {
  RankNormalizer n;
  n.mode = RankMode::kCalibration;
  std::sort(reference.begin(), reference.end());
  n.reference_scores = std::move(reference);
  return n;
}

std::vector<double> RankNormalize(std::span<const double> scores, const RankNormalizer& normalizer) {
  if (scores.empty()) throw Error(ErrorCode::kEmptyInput, "nothing to rank-normalize");
  for (double s : scores) {
    if (std::isnan(s)) throw Error(ErrorCode::kNonFiniteInput, "NaN score");
  }
  std::vector<double> out(scores.size());
  if (normalizer.mode == RankMode::kBatch) {
    const auto ranks = AverageRanks(scores);
    const double denom = static_cast<double>(scores.size() + 1);
    for (size_t i = 0; i < scores.size(); ++i) out[i] = ranks[i] / denom;
    return out;
  }
  const auto& ref = normalizer.reference_scores;
  if (ref.empty()) throw Error(ErrorCode::kEmptyInput, "calibration reference is empty");
  const double denom = static_cast<double>(ref.size() + 1);
  for (size_t i = 0; i < scores.size(); ++i) {
    const auto lo = std::lower_bound(ref.begin(), ref.end(), scores[i]);
    const auto hi = std::upper_bound(lo, ref.end(), scores[i]);
    const double below = static_cast<double>(lo - ref.begin());
    const double equal = static_cast<double>(hi - lo);
    out[i] = (1.0 + below + 0.5 * equal) / denom;
  }
  return out;
}

HybridWeights HboWeights(double ood_rank) {
  CheckRank(ood_rank);
  HybridWeights w;
  w.w_usv = ood_rank <= 0.5 ? ood_rank + 0.5 : 1.0;
  // w_usv is in [0.5, 1], so the subtraction is exact and the pair sums to 1.
  w.w_sv = 1.0 - w.w_usv;
  return w;
}

double HboScore(double uq_sv, double uq_usv, double ood_rank) {
  CheckOpenUnit(uq_sv, "supervised score");
  CheckOpenUnit(uq_usv, "unsupervised score");
  const HybridWeights w = HboWeights(ood_rank);
  return w.w_sv * uq_sv + w.w_usv * uq_usv;
}

double HuqScore(double uq_usv, double uq_density, double ood_rank, double threshold) {
  CheckOpenUnit(uq_usv, "unsupervised score");
  CheckOpenUnit(uq_density, "density score");
  CheckRank(ood_rank);
  if (ood_rank <= threshold) return uq_usv;
  return 0.5 * (uq_usv + uq_density);
}

Eigen::VectorXd SatmdMspFeatures(const Eigen::VectorXd& density_vec, double msp) {
  if (!density_vec.allFinite() || !std::isfinite(msp)) {
    throw Error(ErrorCode::kNonFiniteInput, "density features or MSP not finite");
  }
  Eigen::VectorXd out(density_vec.size() + 1);
  out << density_vec, msp;
  return out;
}

}  // namespace uqp
