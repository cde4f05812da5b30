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

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace uqp {

// Streaming 64-bit FNV-1a. The running state is the hash of everything fed
// so far, so appending bytes to a hashed file only needs the stored state.
class Fnv1a64 {
 public:
  static constexpr uint64_t kOffsetBasis = 0xcbf29ce484222325ULL;
  static constexpr uint64_t kPrime = 0x100000001b3ULL;

  Fnv1a64() = default;
  explicit Fnv1a64(uint64_t state) : state_(state) {}

  void Update(std::span<const std::byte> bytes) {
    for (std::byte b : bytes) {
      state_ ^= static_cast<uint64_t>(b);
      state_ *= kPrime;
    }
  }
  void Update(std::string_view text) {
    Update(std::as_bytes(std::span(text.data(), text.size())));
  }

  uint64_t digest() const { return state_; }

 private:
  uint64_t state_ = kOffsetBasis;
};

uint64_t HashString(std::string_view text);

// SplitMix64 finalizer; used to derive independent seeds from (seed, key).
uint64_t Mix64(uint64_t x);
uint64_t DeriveSeed(uint64_t seed, uint64_t stream);
uint64_t DeriveSeed(uint64_t seed, std::string_view key);

// Small deterministic generator (xoshiro256**) with hand-written
// distributions so that streams are identical across standard libraries.
class Rng {
 public:
  explicit Rng(uint64_t seed);

  uint64_t NextU64();
  // Uniform in [0, 1).
  double Uniform();
  double Uniform(double lo, double hi) { return lo + (hi - lo) * Uniform(); }
  // Unbiased integer in [0, n).
  uint64_t Index(uint64_t n);
  double Normal();

  template <typename T>
  void Shuffle(std::vector<T>& items) {
    for (size_t i = items.size(); i > 1; --i) {
      const size_t j = static_cast<size_t>(Index(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  uint64_t s_[4];
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Little-endian float32 encoding, independent of host byte order.
void AppendFloat32LE(std::vector<std::byte>& out, float value);
float ReadFloat32LE(const std::byte* data);
void AppendUint64LE(std::vector<std::byte>& out, uint64_t value);
uint64_t ReadUint64LE(const std::byte* data);

std::string HexU64(uint64_t value);
uint64_t ParseHexU64(std::string_view text);

}  // namespace uqp
