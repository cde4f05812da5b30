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

#include "uqp/util.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <numbers>

#include "uqp/error.hpp"

namespace uqp {

std::string_view ErrorCodeName(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kIoError: return "IoError";
    case ErrorCode::kMissingFile: return "MissingFile";
    case ErrorCode::kChecksumMismatch: return "ChecksumMismatch";
    case ErrorCode::kMalformedManifest: return "MalformedManifest";
    case ErrorCode::kDuplicateId: return "DuplicateId";
    case ErrorCode::kShapeMismatch: return "ShapeMismatch";
    case ErrorCode::kUnknownId: return "UnknownId";
    case ErrorCode::kMissingFeature: return "MissingFeature";
    case ErrorCode::kEmptyRange: return "EmptyRange";
    case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
    case ErrorCode::kDegenerateTarget: return "DegenerateTarget";
    case ErrorCode::kNonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::kRankDeficient: return "RankDeficient";
    case ErrorCode::kTooFewSamples: return "TooFewSamples";
    case ErrorCode::kMissingLayerStats: return "MissingLayerStats";
    case ErrorCode::kEmptyReference: return "EmptyReference";
    case ErrorCode::kEmptySequence: return "EmptySequence";
    case ErrorCode::kNonFiniteInput: return "NonFiniteInput";
    case ErrorCode::kOutOfRange: return "OutOfRange";
    case ErrorCode::kEmptyInput: return "EmptyInput";
    case ErrorCode::kLengthMismatch: return "LengthMismatch";
    case ErrorCode::kTooFewInstances: return "TooFewInstances";
    case ErrorCode::kDegenerateCorrectness: return "DegenerateCorrectness";
    case ErrorCode::kDegenerateInput: return "DegenerateInput";
    case ErrorCode::kNoConvergence: return "NoConvergence";
    case ErrorCode::kEmptyGroup: return "EmptyGroup";
    case ErrorCode::kBadComposition: return "BadComposition";
    case ErrorCode::kEvalLeak: return "EvalLeak";
    case ErrorCode::kUnknownMethod: return "UnknownMethod";
    case ErrorCode::kInsufficientData: return "InsufficientData";
  }
  return "Unknown";
}

uint64_t HashString(std::string_view text) {
  Fnv1a64 h;
  h.Update(text);
  return h.digest();
}

uint64_t Mix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

uint64_t DeriveSeed(uint64_t seed, uint64_t stream) {
  return Mix64(Mix64(seed) ^ (stream * 0xd1342543de82ef95ULL + 1));
}

uint64_t DeriveSeed(uint64_t seed, std::string_view key) {
  return DeriveSeed(seed, HashString(key));
}

Rng::Rng(uint64_t seed) {
  uint64_t x = seed;
  for (auto& s : s_) {
    x = Mix64(x);
    s = x;
  }
  if ((s_[0] | s_[1] | s_[2] | s_[3]) == 0) s_[0] = 1;
}

uint64_t Rng::NextU64() {
  const uint64_t result = std::rotl(s_[1] * 5, 7) * 9;
  const uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = std::rotl(s_[3], 45);
  return result;
}

double Rng::Uniform() {
  return static_cast<double>(NextU64() >> 11) * 0x1.0p-53;
}

uint64_t Rng::Index(uint64_t n) {
  if (n == 0) throw Error(ErrorCode::kInvalidArgument, "Rng::Index(0)");
  // Rejection on the top of the range removes modulo bias.
  const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  uint64_t x;
  do {
    x = NextU64();
  } while (x >= limit);
  return x % n;
}

double Rng::Normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1;
  do {
    u1 = Uniform();
  } while (u1 <= 0.0);
  const double u2 = Uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare_ = radius * std::sin(angle);
  has_spare_ = true;
  return radius * std::cos(angle);
}

void AppendFloat32LE(std::vector<std::byte>& out, float value) {
  uint32_t bits = std::bit_cast<uint32_t>(value);
  for (int i = 0; i < 4; ++i) {
    out.push_back(static_cast<std::byte>(bits & 0xffu));
    bits >>= 8;
  }
}

float ReadFloat32LE(const std::byte* data) {
  uint32_t bits = 0;
  for (int i = 3; i >= 0; --i) {
    bits = (bits << 8) | static_cast<uint32_t>(data[i]);
  }
  return std::bit_cast<float>(bits);
}

void AppendUint64LE(std::vector<std::byte>& out, uint64_t value) {
  for (int i = 0; i < 8; ++i) {
    out.push_back(static_cast<std::byte>(value & 0xffu));
    value >>= 8;
  }
}

uint64_t ReadUint64LE(const std::byte* data) {
  uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | static_cast<uint64_t>(data[i]);
  return v;
}

std::string HexU64(uint64_t value) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[i] = kDigits[value & 0xf];
    value >>= 4;
  }
  return out;
}

uint64_t ParseHexU64(std::string_view text) {
  if (text.size() != 16) {
    throw Error(ErrorCode::kInvalidArgument, "expected 16 hex digits");
  }
  uint64_t v = 0;
  for (char c : text) {
    int d;
    if (c >= '0' && c <= '9') d = c - '0';
    else if (c >= 'a' && c <= 'f') d = c - 'a' + 10;
    else if (c >= 'A' && c <= 'F') d = c - 'A' + 10;
    else throw Error(ErrorCode::kInvalidArgument, "bad hex digit");
    v = (v << 4) | static_cast<uint64_t>(d);
  }
  return v;
}

}  // namespace uqp
