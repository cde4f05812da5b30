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
#include <string_view>

#include <Eigen/Dense>

namespace uqp {

enum class AggregationVariant {
  kMeanResponse,
  kLastResponse,
  kRandomResponse,
  kMeanAll,
  kMeanContext,
  kLastContext,
};

std::string_view ToString(AggregationVariant v);
AggregationVariant ParseAggregationVariant(std::string_view s);

struct AggregationStrategy {
  AggregationVariant variant = AggregationVariant::kMeanResponse;
  uint64_t seed = 0;  // only read by kRandomResponse
};

// Collapses a [T, D] token matrix (context rows first, then response rows)
// into one D-vector. `instance_id` keys the random_response pick so that
// picks are reproducible per instance yet uncorrelated across instances.
// Throws EmptyRange when the named token range is empty.
Eigen::VectorXd Aggregate(const Eigen::MatrixXd& tokens, int64_t context_len,
                          const AggregationStrategy& strategy,
                          std::string_view instance_id = {});

// Row index (into `tokens`) chosen by kRandomResponse.
int64_t RandomResponseIndex(int64_t context_len, int64_t response_len, uint64_t seed,
                            std::string_view instance_id);

}  // namespace uqp
