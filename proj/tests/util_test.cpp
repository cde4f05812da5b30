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

#include <set>

#include <gtest/gtest.h>

#include "uqp/error.hpp"
#include "uqp/util.hpp"

namespace uqp {
namespace {

TEST(Fnv1a64Test, KnownVectors) {
  EXPECT_EQ(HashString(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(HashString("a"), 0xaf63dc4c8601ec8cULL);
  EXPECT_EQ(HashString("foobar"), 0x85944171f73967e8ULL);
}

TEST(Fnv1a64Test, StreamingMatchesOneShot) {
  Fnv1a64 h;
  h.Update("foo");
  Fnv1a64 resumed(h.digest());
  resumed.Update("bar");
  EXPECT_EQ(resumed.digest(), HashString("foobar"));
}

TEST(RngTest, SameSeedSameStream) {
  Rng a(42), b(42), c(43);
  bool differs = false;
  for (int i = 0; i < 100; ++i) {
    const uint64_t x = a.NextU64();
    EXPECT_EQ(x, b.NextU64());
    differs = differs || x != c.NextU64();
  }
  EXPECT_TRUE(differs);
}

TEST(RngTest, UniformAndIndexRanges) {
  Rng rng(7);
  std::set<uint64_t> seen;
  for (int i = 0; i < 10000; ++i) {
    const double u = rng.Uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    const uint64_t k = rng.Index(5);
    ASSERT_LT(k, 5u);
    seen.insert(k);
  }
  EXPECT_EQ(seen.size(), 5u);
}

TEST(RngTest, NormalMoments) {
  Rng rng(11);
  double s = 0.0, s2 = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double z = rng.Normal();
    s += z;
    s2 += z * z;
  }
  EXPECT_NEAR(s / n, 0.0, 0.01);
  EXPECT_NEAR(s2 / n, 1.0, 0.02);
}

TEST(RngTest, ShuffleIsPermutation) {
  Rng rng(3);
  std::vector<int> v{0, 1, 2, 3, 4, 5, 6, 7};
  rng.Shuffle(v);
  std::multiset<int> m(v.begin(), v.end());
  EXPECT_EQ(m, (std::multiset<int>{0, 1, 2, 3, 4, 5, 6, 7}));
}

TEST(DeriveSeedTest, KeysSeparateStreams) {
  EXPECT_EQ(DeriveSeed(1, "split"), DeriveSeed(1, "split"));
  EXPECT_NE(DeriveSeed(1, "split"), DeriveSeed(1, "init"));
  EXPECT_NE(DeriveSeed(1, "split"), DeriveSeed(2, "split"));
  EXPECT_NE(DeriveSeed(1, uint64_t{0}), DeriveSeed(1, uint64_t{1}));
}

TEST(EncodingTest, LittleEndianLayout) {
  std::vector<std::byte> out;
  AppendUint64LE(out, 0x0102030405060708ULL);
  ASSERT_EQ(out.size(), 8u);
  EXPECT_EQ(out[0], std::byte{0x08});
  EXPECT_EQ(out[7], std::byte{0x01});
  EXPECT_EQ(ReadUint64LE(out.data()), 0x0102030405060708ULL);
  out.clear();
  AppendFloat32LE(out, 1.0f);
  EXPECT_EQ(out[3], std::byte{0x3f});
  EXPECT_EQ(out[2], std::byte{0x80});
  EXPECT_EQ(ReadFloat32LE(out.data()), 1.0f);
}

TEST(EncodingTest, HexRoundTrip) {
  EXPECT_EQ(HexU64(0xdeadbeefULL), "00000000deadbeef");
  EXPECT_EQ(ParseHexU64("00000000deadbeef"), 0xdeadbeefULL);
  EXPECT_THROW(ParseHexU64("xyz"), Error);
  EXPECT_THROW(ParseHexU64("000000000000000g"), Error);
}

TEST(ErrorTest, MessageCarriesCodeName) {
  const Error e(ErrorCode::kEvalLeak, "d1 in training");
  EXPECT_EQ(e.code(), ErrorCode::kEvalLeak);
  EXPECT_STREQ(e.what(), "EvalLeak: d1 in training");
}

}  // namespace
}  // namespace uqp
