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

#include <span>
#include <vector>

#include <Eigen/Dense>

namespace uqp {

// Weights of the supervised and unsupervised arms; w_sv + w_usv == 1.
struct HybridWeights {
  double w_sv = 0.5;
  double w_usv = 0.5;
};

enum class RankMode { kBatch, kCalibration };

struct RankNormalizer {
  RankMode mode = RankMode::kBatch;
  std::vector<double> reference_scores;  // sorted; calibration mode only

  static RankNormalizer Batch() { return {}; }
  static RankNormalizer Calibration(std::vector<double> reference);
};

// Maps scores into (0, 1) preserving order.
//   batch:        average rank / (N + 1)
//   calibration:  (1 + #(ref < s) + 0.5 * #(ref == s)) / (|ref| + 1)
std::vector<double> RankNormalize(std::span<const double> scores,
                                  const RankNormalizer& normalizer);

// Back-off weights driven by the OOD rank R in (0, 1]:
//   w_usv = R + 0.5 if R <= 0.5, else 1;  w_sv = 1 - w_usv.
HybridWeights HboWeights(double ood_rank);

// w_sv * uq_sv + w_usv * uq_usv for rank-normalized inputs in (0, 1).
double HboScore(double uq_sv, double uq_usv, double ood_rank);

// In-distribution (R <= threshold) keeps the unsupervised score; beyond the
// threshold it backs off to the mean of the unsupervised and density scores.
double HuqScore(double uq_usv, double uq_density, double ood_rank, double threshold = 0.5);

// [density_vec ; msp]
Eigen::VectorXd SatmdMspFeatures(const Eigen::VectorXd& density_vec, double msp);

}  // namespace uqp
