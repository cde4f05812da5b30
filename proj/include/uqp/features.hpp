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

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "uqp/aggregation.hpp"
#include "uqp/feature_store.hpp"

namespace uqp {

// Which tensor feeds a probe. `layer` is an index, or absent together with
// `mid_layer` to pick the middle of the layers the record carries.
struct FeatureSelector {
  FeatureKind kind = FeatureKind::kHidden;
  std::optional<int> layer;
  bool mid_layer = false;

  // "hidden:16", "hidden:mid", "lookback:3", "token_logprob".
  static FeatureSelector Parse(std::string_view text);
  std::string ToString() const;
  // Concrete layer for `record` (nullopt for token_logprob).
  std::optional<int> Resolve(const FeatureRecord& record) const;
};

// Aggregates one tensor of one record. Response-scoped tensors have no
// context rows, so context variants on them raise EmptyRange.
Eigen::VectorXd AggregatedFeature(const FeatureStore& store, const FeatureRecord& record,
                                  FeatureKind kind, std::optional<int> layer,
                                  const AggregationStrategy& strategy);

// One aggregated row per record.
Eigen::MatrixXd AggregatedMatrix(const FeatureStore& store,
                                 const std::vector<const FeatureRecord*>& records,
                                 const FeatureSelector& selector,
                                 const AggregationStrategy& strategy);

std::vector<double> TokenLogprobs(const FeatureStore& store, const FeatureRecord& record);

// Per-token response features for the sequence probe: attn_prev and
// attn_prev2 summaries of every layer followed by the token log-prob.
Eigen::MatrixXd UheadSequence(const FeatureStore& store, const FeatureRecord& record);

// Mean lookback ratio over response tokens, concatenated across layers.
Eigen::VectorXd LookbackFeatures(const FeatureStore& store, const FeatureRecord& record);

}  // namespace uqp
