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

#include "uqp/aggregation.hpp"

#include <string>

#include "uqp/error.hpp"
#include "uqp/util.hpp"

namespace uqp {
namespace {

constexpr std::pair<std::string_view, AggregationVariant> kNames[] = {
    {"mean_response", AggregationVariant::kMeanResponse},
    {"last_response", AggregationVariant::kLastResponse},
    {"random_response", AggregationVariant::kRandomResponse},
    {"mean_all", AggregationVariant::kMeanAll},
    {"mean_context", AggregationVariant::kMeanContext},
    {"last_context", AggregationVariant::kLastContext},
};

}  // namespace

std::string_view ToString(AggregationVariant v) {
  for (const auto& [name, value] : kNames) {
    if (value == v) return name;
  }
  return "?";
}

AggregationVariant ParseAggregationVariant(std::string_view s) {
  for (const auto& [name, value] : kNames) {
    if (name == s) return value;
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown aggregation '" + std::string(s) + "'");
}

int64_t RandomResponseIndex(int64_t context_len, int64_t response_len, uint64_t seed,
                            std::string_view instance_id) {
  Rng rng(DeriveSeed(seed, instance_id));
  return context_len + static_cast<int64_t>(rng.Index(static_cast<uint64_t>(response_len)));
}

Eigen::VectorXd Aggregate(const Eigen::MatrixXd& tokens, int64_t context_len,
                          const AggregationStrategy& strategy, std::string_view instance_id) {
  const int64_t total = tokens.rows();
  if (total < 1) throw Error(ErrorCode::kEmptyRange, "no token rows");
  if (context_len < 0 || context_len > total) {
    throw Error(ErrorCode::kDimensionMismatch, "context_len outside token range");
  }
  const int64_t response_len = total - context_len;

  auto need = [](int64_t n, std::string_view what) {
    if (n < 1) throw Error(ErrorCode::kEmptyRange, "empty " + std::string(what) + " range");
  };
  auto mean_rows = [&](int64_t begin, int64_t count) -> Eigen::VectorXd {
    return tokens.middleRows(begin, count).colwise().mean().transpose();
  };

  switch (strategy.variant) {
    case AggregationVariant::kMeanResponse:
      need(response_len, "response");
      return mean_rows(context_len, response_len);
    case AggregationVariant::kLastResponse:
      need(response_len, "response");
      return tokens.row(total - 1).transpose();
    case AggregationVariant::kRandomResponse:
      need(response_len, "response");
      return tokens.row(RandomResponseIndex(context_len, response_len, strategy.seed, instance_id))
          .transpose();
    case AggregationVariant::kMeanAll:
      return mean_rows(0, total);
    case AggregationVariant::kMeanContext:
      need(context_len, "context");
      return mean_rows(0, context_len);
    case AggregationVariant::kLastContext:
      need(context_len, "context");
      return tokens.row(context_len - 1).transpose();
  }
  throw Error(ErrorCode::kInvalidArgument, "unhandled aggregation variant");
}

}  // namespace uqp
