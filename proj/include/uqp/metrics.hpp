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

namespace uqp {

// 1-based ranks in ascending order; tied values share the average rank.
std::vector<double> AverageRanks(std::span<const double> values);

struct RejectionCurve {
  // retained_means[k] = expected mean correctness after rejecting the k most
  // uncertain instances, k = 0..N. The k = N entry repeats k = N-1.
  std::vector<double> retained_means;
  // Mean of retained_means[0..N-1].
  double auc = 0.0;
};

// Ties in `uncertainty` are resolved by the closed-form expectation over
// uniformly random orderings of the tied block.
RejectionCurve ComputeRejectionCurve(std::span<const double> uncertainty,
                                     std::span<const double> correctness);

// Prediction-rejection ratio: (AUC_unc - AUC_rnd) / (AUC_oracle - AUC_rnd).
// Negative values are returned as-is.
double PredictionRejectionRatio(std::span<const double> uncertainty,
                                std::span<const double> correctness);

double SpearmanCorrelation(std::span<const double> a, std::span<const double> b);
double PearsonCorrelation(std::span<const double> a, std::span<const double> b);

}  // namespace uqp
