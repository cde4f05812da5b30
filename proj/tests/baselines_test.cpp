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

#include <cmath>

#include <gtest/gtest.h>

#include "uqp/baselines.hpp"
#include "uqp/error.hpp"
#include "uqp/util.hpp"

namespace uqp {
namespace {

TEST(BaselinesTest, HandValues) {
  const std::vector<double> lp{std::log(0.5), std::log(0.25)};
  EXPECT_NEAR(MspUncertainty(lp), -std::log(0.125), 1e-15);
  EXPECT_NEAR(PerplexityUncertainty(lp), std::pow(0.125, -0.5), 1e-12);
}

TEST(BaselinesTest, MspGrowsWithEveryUncertainToken) {
  Rng rng(1);
  std::vector<double> lp;
  double prev = -1.0;
  for (int i = 0; i < 200; ++i) {
    lp.push_back(std::log(rng.Uniform(1e-6, 0.999)));
    const double now = MspUncertainty(lp);
    EXPECT_GT(now, prev);
    prev = now;
  }
  EXPECT_TRUE(std::isfinite(prev));
}

TEST(BaselinesTest, PerplexityIgnoresRepetition) {
  for (double p : {0.1, 0.5, 0.9}) {
    const double one = PerplexityUncertainty(std::vector<double>{std::log(p)});
    for (size_t n : {2u, 7u, 40u}) {
      const std::vector<double> lp(n, std::log(p));
      EXPECT_NEAR(PerplexityUncertainty(lp), one, 1e-12);
    }
  }
}

TEST(BaselinesTest, LongResponsesDoNotUnderflow) {
  const std::vector<double> lp(5000, std::log(0.01));
  EXPECT_NEAR(MspUncertainty(lp), 5000 * -std::log(0.01), 1e-6);
}

TEST(BaselinesTest, Errors) {
  const std::vector<double> empty;
  const std::vector<double> bad{-0.1, NAN};
  for (auto f : {&MspUncertainty, &PerplexityUncertainty}) {
    try {
      f(empty);
      ADD_FAILURE();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::kEmptySequence);
    }
  }
  try {
    MspUncertainty(bad);
    ADD_FAILURE();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNonFiniteInput);
  }
}

}  // namespace
}  // namespace uqp
