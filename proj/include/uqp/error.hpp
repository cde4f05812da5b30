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

#include <stdexcept>
#include <string>
#include <string_view>

namespace uqp {

enum class ErrorCode {
  kInvalidArgument,
  kIoError,
  // Feature store.
  kMissingFile,
  kChecksumMismatch,
  kMalformedManifest,
  kDuplicateId,
  kShapeMismatch,
  kUnknownId,
  kMissingFeature,
  // Numerics.
  kEmptyRange,
  kDimensionMismatch,
  kDegenerateTarget,
  kNonFiniteLoss,
  kRankDeficient,
  kTooFewSamples,
  kMissingLayerStats,
  kEmptyReference,
  kEmptySequence,
  kNonFiniteInput,
  kOutOfRange,
  kEmptyInput,
  kLengthMismatch,
  kTooFewInstances,
  kDegenerateCorrectness,
  kDegenerateInput,
  kNoConvergence,
  kEmptyGroup,
  // Experiment configuration.
  kBadComposition,
  kEvalLeak,
  kUnknownMethod,
  kInsufficientData,
};

std::string_view ErrorCodeName(ErrorCode code);

// Every failure raised by the library carries one of the codes above so that
// callers (tests, the matrix runner) can branch on the kind of failure.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(ErrorCodeName(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace uqp
