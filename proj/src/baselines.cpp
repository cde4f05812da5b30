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

#include "uqp/baselines.hpp"

#include <cmath>

#include "uqp/error.hpp"

namespace uqp {
namespace {

double CheckedSum(std::span<const double> lp) {
  if (lp.empty()) throw Error(ErrorCode::kEmptySequence, "no token log-probs");
  double sum = 0.0;
  for (double v : lp) {
    if (!std::isfinite(v)) throw Error(ErrorCode::kNonFiniteInput, "non-finite token log-prob");
    if (v > 0.0) throw Error(ErrorCode::kOutOfRange, "token log-prob above zero");
    sum += v;
  }
  return sum;
}

}  // namespace

double MspUncertainty(std::span<const double> token_logprobs) {
  return 0.0 - CheckedSum(token_logprobs);
}

double PerplexityUncertainty(std::span<const double> token_logprobs) {
  const double sum = CheckedSum(token_logprobs);
  return std::exp(-sum / static_cast<double>(token_logprobs.size()));
}

}  // namespace uqp
