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
#include <numbers>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "test_helpers.hpp"
#include "uqp/error.hpp"
#include "uqp/features.hpp"
#include "uqp/metrics.hpp"
#include "uqp/probes.hpp"
#include "uqp/synth.hpp"

namespace uqp {
namespace {

SynthScenario SmallScenario(uint64_t seed) {
  SynthScenario s;
  s.n_datasets = 3;
  s.n_per_dataset = 200;
  s.dims = 16;
  s.n_layers = 3;
  s.seed = seed;
  s.prob_signal_corr = 0.9;
  return s;
}

TEST(SynthTest, LayoutAndMetadata) {
  testing::TempDir dir;
  auto s = SmallScenario(1);
  s.n_per_dataset = 20;
  const auto store = GenerateCorpus(s, dir / "c");
  EXPECT_EQ(store.datasets(), (std::vector<std::string>{"d0", "d1", "d2"}));
  const auto& r = store.record("d1-00013");
  EXPECT_EQ(r.task, Task::kQa);
  EXPECT_EQ(store.record("d2-00000").task, Task::kSummarisation);
  EXPECT_EQ(r.split, Split::kTest);
  EXPECT_EQ(store.record("d1-00011").split, Split::kTrain);
  EXPECT_EQ(r.form, Form::kShort);
  EXPECT_GE(r.n_response_tokens, 3);
  EXPECT_LE(r.n_response_tokens, 6);
  EXPECT_GE(r.n_context_tokens, 2);
  EXPECT_LE(r.n_context_tokens, 4);
  EXPECT_EQ(r.Layers(FeatureKind::kHidden), (std::vector<int>{0, 1, 2}));
  EXPECT_EQ(r.Find(FeatureKind::kHidden, 0)->scope, TokenScope::kFull);
  EXPECT_EQ(r.Find(FeatureKind::kLookback, 2)->scope, TokenScope::kResponse);
  for (const auto& rec : store.records()) {
    ASSERT_TRUE(rec.correctness.has_value());
    for (double lp : TokenLogprobs(store, rec)) EXPECT_LE(lp, 0.0);
    const auto a = store.ReadMatrix(rec.instance_id, FeatureKind::kAttnPrev, 1);
    EXPECT_EQ(a.cols(), s.attn_heads);
    EXPECT_GT(a.minCoeff(), 0.0);
    EXPECT_LT(a.maxCoeff(), 1.0);
  }
}

TEST(SynthTest, LongFormResponses) {
  testing::TempDir dir;
  auto s = SmallScenario(2);
  s.prob_signal_corr = 0.1;
  s.n_per_dataset = 10;
  const auto store = GenerateCorpus(s, dir / "c");
  for (const auto& r : store.records()) {
    EXPECT_EQ(r.form, Form::kLong);
    EXPECT_GE(r.n_response_tokens, 20);
    EXPECT_LE(r.n_response_tokens, 60);
  }
}

TEST(SynthTest, ByteIdenticalForFixedScenario) {
  testing::TempDir dir;
  auto s = SmallScenario(3);
  s.n_per_dataset = 30;
  GenerateCorpus(s, dir / "a");
  GenerateCorpus(s, dir / "b");
  for (const char* f : {"manifest.jsonl", "tensors.bin"}) {
    EXPECT_EQ(testing::ReadFile(dir / "a" / f), testing::ReadFile(dir / "b" / f)) << f;
  }
  s.seed = 4;
  GenerateCorpus(s, dir / "c");
  EXPECT_NE(testing::ReadFile(dir / "a/tensors.bin"), testing::ReadFile(dir / "c/tensors.bin"));
  EXPECT_THROW(GenerateCorpus(s, dir / "c"), Error);
}

TEST(SynthTest, Validation) {
  SynthScenario s;
  EXPECT_NO_THROW(s.Validate());
  s.dims = 3;
  EXPECT_THROW(s.Validate(), Error);
  s = SynthScenario{};
  s.n_per_dataset = 0;
  EXPECT_THROW(s.Validate(), Error);
  s = SynthScenario{};
  s.shift_angle = 2.0;
  EXPECT_THROW(s.Validate(), Error);
  s = SynthScenario{};
  s.dataset_names = {"a", "b"};
  EXPECT_THROW(s.Validate(), Error);
}

TEST(SynthTest, JsonRoundTrip) {
  SynthScenario s;
  s.shift_angle = 0.5;
  s.dataset_names = {"a", "b", "c", "d", "e"};
  s.seed = 99;
  EXPECT_EQ(ToJson(SynthScenarioFromJson(ToJson(s))), ToJson(s));
  EXPECT_EQ(s.DatasetName(2), "c");
  EXPECT_EQ(SynthScenarioFromJson({{"dims", 8}}).dims, 8);
}

TEST(SynthTest, CorrectnessIsBeta22InEveryDataset) {
  testing::TempDir dir;
  auto s = SmallScenario(5);
  s.shift_angle = std::numbers::pi / 2;
  s.n_per_dataset = 1000;
  s.n_layers = 1;
  const auto store = GenerateCorpus(s, dir / "c");
  for (const auto& ds : store.datasets()) {
    std::vector<double> q;
    for (const auto* r : store.ByDataset(ds)) q.push_back(*r->correctness);
    const double d = oracle::KsStatistic(q, [](double x) { return x * x * (3.0 - 2.0 * x); });
    EXPECT_GT(oracle::KsPValue(d, q.size()), 0.01) << ds;
  }
}

// Linear probe on the middle hidden layer, trained on d0 and scored on the
// other datasets' test splits.
double TransferPrr(double angle, uint64_t seed, const std::filesystem::path& dir) {
  auto s = SmallScenario(seed);
  s.shift_angle = angle;
  s.n_per_dataset = 500;
  const auto store = GenerateCorpus(s, dir);
  const auto sel = FeatureSelector::Parse("hidden:mid");
  std::vector<const FeatureRecord*> train;
  for (const auto* r : store.ByDataset("d0")) {
    if (r->split == Split::kTrain) train.push_back(r);
  }
  std::vector<double> y;
  for (const auto* r : train) y.push_back(*r->correctness);
  ProbeSpec spec;
  spec.arch = ProbeArch::kLinear;
  spec.lr = 1e-2;
  spec.epochs = 100;
  spec.seed = seed;
  const auto model = FitProbe(spec, AggregatedMatrix(store, train, sel, {}), y);
  double total = 0.0;
  for (const char* ds : {"d1", "d2"}) {
    std::vector<const FeatureRecord*> test;
    for (const auto* r : store.ByDataset(ds)) {
      if (r->split == Split::kTest) test.push_back(r);
    }
    std::vector<double> q;
    for (const auto* r : test) q.push_back(*r->correctness);
    total += PredictionRejectionRatio(model.PredictUncertainty(AggregatedMatrix(store, test, sel, {})), q);
  }
  return total / 2.0;
}

TEST(SynthTest, OodPrrDegradesWithShiftAngle) {
  testing::TempDir dir;
  const double pi = std::numbers::pi;
  double prev = 2.0;
  double id_like = 0.0;
  for (double angle : {0.0, pi / 8, pi / 4, pi / 2}) {
    double mean = 0.0;
    for (uint64_t seed = 0; seed < 10; ++seed) {
      const auto sub = dir / ("a" + std::to_string(angle) + "-" + std::to_string(seed));
      mean += TransferPrr(angle, seed, sub) / 10.0;
      std::filesystem::remove_all(sub);
    }
    EXPECT_LE(mean, prev) << "angle " << angle;
    if (angle == 0.0) id_like = mean;
    prev = mean;
  }
  EXPECT_GT(id_like, 0.5);
  EXPECT_LT(prev, 0.2);
}

TEST(FeatureSelectorTest, ParseAndResolve) {
  const auto a = FeatureSelector::Parse("hidden:16");
  EXPECT_EQ(a.kind, FeatureKind::kHidden);
  EXPECT_EQ(a.layer, 16);
  EXPECT_EQ(a.ToString(), "hidden:16");
  const auto m = FeatureSelector::Parse("hidden:mid");
  EXPECT_TRUE(m.mid_layer);
  EXPECT_EQ(FeatureSelector::Parse("hidden").ToString(), m.ToString());
  EXPECT_EQ(FeatureSelector::Parse("token_logprob").kind, FeatureKind::kTokenLogprob);
  EXPECT_THROW(FeatureSelector::Parse("hidden:x"), Error);
  EXPECT_THROW(FeatureSelector::Parse("token_logprob:2"), Error);
  EXPECT_THROW(FeatureSelector::Parse("pixels:1"), Error);

  FeatureRecord r;
  for (int l : {0, 4, 8, 12}) r.features.push_back({FeatureKind::kHidden, l, TokenScope::kFull, {1, 1}, 0, 4});
  EXPECT_EQ(m.Resolve(r), 8);
  EXPECT_EQ(a.Resolve(r), 16);
}

TEST(FeaturesTest, ScopesAndSequences) {
  testing::TempDir dir;
  auto s = SmallScenario(6);
  s.n_per_dataset = 5;
  const auto store = GenerateCorpus(s, dir / "c");
  const auto& r = store.record("d0-00002");
  const auto h = store.ReadMatrix(r.instance_id, FeatureKind::kHidden, 1);
  const auto full = AggregatedFeature(store, r, FeatureKind::kHidden, 1, {AggregationVariant::kLastContext, 0});
  EXPECT_EQ(full, h.row(r.n_context_tokens - 1).transpose());
  const auto resp = AggregatedFeature(store, r, FeatureKind::kAttnPrev, 1, {AggregationVariant::kMeanResponse, 0});
  EXPECT_TRUE(resp.isApprox(store.ReadMatrix(r.instance_id, FeatureKind::kAttnPrev, 1).colwise().mean().transpose()));
  EXPECT_THROW(AggregatedFeature(store, r, FeatureKind::kAttnPrev, 1, {AggregationVariant::kMeanContext, 0}), Error);

  const auto u = UheadSequence(store, r);
  EXPECT_EQ(u.rows(), r.n_response_tokens);
  EXPECT_EQ(u.cols(), 2 * s.n_layers * s.attn_heads + 1);
  const auto lp = TokenLogprobs(store, r);
  for (Eigen::Index t = 0; t < u.rows(); ++t) EXPECT_EQ(u(t, u.cols() - 1), lp[static_cast<size_t>(t)]);
  EXPECT_EQ(LookbackFeatures(store, r).size(), s.n_layers * s.attn_heads);

  std::vector<const FeatureRecord*> recs;
  for (const auto& x : store.records()) recs.push_back(&x);
  const auto mat = AggregatedMatrix(store, recs, FeatureSelector::Parse("hidden:0"), {});
  EXPECT_EQ(mat.rows(), static_cast<Eigen::Index>(recs.size()));
  EXPECT_EQ(mat.cols(), s.dims);
}

}  // namespace
}  // namespace uqp
