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

namespace uqp {

// Unsupervised estimators over natural-log probabilities of the generated
// response tokens. Only token log-probs are consumed here.

// Negative log of the sequence probability, -sum(log p). Rank-equivalent to
// 1 - prod(p) without underflow on long responses.
double MspUncertainty(std::span<const double> token_logprobs);

// exp(-mean(log p)).
double PerplexityUncertainty(std::span<const double> token_logprobs);

}  // namespace uqp
