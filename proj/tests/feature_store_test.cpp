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

#include <atomic>
#include <functional>
#include <thread>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "test_helpers.hpp"
#include "uqp/error.hpp"
#include "uqp/feature_store.hpp"

namespace uqp {
namespace {

using testing::RandomRecord;
using testing::TempDir;

ErrorCode CodeOf(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorCode::kInvalidArgument;
}

TEST(FeatureStoreTest, RoundTripIsBitExact) {
  TempDir dir;
  Rng rng(1);
  std::vector<testing::RecordWithTensors> written;
  {
    auto store = FeatureStore::Create(dir.path());
    for (int i = 0; i < 200; ++i) {
      written.push_back(RandomRecord(rng, "r" + std::to_string(i), i % 2 ? "a" : "b"));
      store.Append(written.back().record, written.back().tensors);
    }
  }
  const auto store = FeatureStore::Open(dir.path());
  ASSERT_EQ(store.records().size(), written.size());
  for (const auto& w : written) {
    const auto& r = store.record(w.record.instance_id);
    EXPECT_EQ(r.dataset, w.record.dataset);
    EXPECT_EQ(r.n_context_tokens, w.record.n_context_tokens);
    EXPECT_EQ(r.correctness, w.record.correctness);
    for (size_t k = 0; k < w.record.features.size(); ++k) {
      const auto& e = w.record.features[k];
      const Tensor t = store.Read(r.instance_id, e.kind, e.layer);
      EXPECT_EQ(t.shape, w.tensors[k].shape);
      EXPECT_TRUE(testing::BitEqual(t.data, w.tensors[k].data)) << r.instance_id;
    }
  }
}

TEST(FeatureStoreTest, ReopenAppendsAreVisible) {
  TempDir dir;
  Rng rng(2);
  {
    auto store = FeatureStore::Create(dir.path());
    for (int i = 0; i < 3; ++i) {
      auto w = RandomRecord(rng, "a" + std::to_string(i), "a");
      store.Append(w.record, w.tensors);
    }
  }
  {
    auto store = FeatureStore::Open(dir.path());
    for (int i = 0; i < 4; ++i) {
      auto w = RandomRecord(rng, "b" + std::to_string(i), "b");
      store.Append(w.record, w.tensors);
    }
    EXPECT_EQ(store.records().size(), 7u);
  }
  const auto store = FeatureStore::Open(dir.path());
  EXPECT_EQ(store.records().size(), 7u);
  EXPECT_EQ(store.ByDataset("b").size(), 4u);
  EXPECT_EQ(store.datasets(), (std::vector<std::string>{"a", "b"}));
}

TEST(FeatureStoreTest, BlobStartsWithMagic) {
  TempDir dir;
  FeatureStore::Create(dir.path());
  EXPECT_EQ(testing::ReadFile(dir / "tensors.bin"), "UQFSBIN1");
  EXPECT_NO_THROW(FeatureStore::Open(dir.path()));
}

TEST(FeatureStoreTest, AppendErrors) {
  TempDir dir;
  Rng rng(3);
  auto store = FeatureStore::Create(dir.path());
  auto w = RandomRecord(rng, "x", "a");
  store.Append(w.record, w.tensors);
  EXPECT_EQ(CodeOf([&] { store.Append(w.record, w.tensors); }), ErrorCode::kDuplicateId);

  auto bad = RandomRecord(rng, "y", "a");
  bad.tensors[0].data.pop_back();
  EXPECT_EQ(CodeOf([&] { store.Append(bad.record, bad.tensors); }), ErrorCode::kShapeMismatch);

  auto wrong_rows = RandomRecord(rng, "z", "a");
  wrong_rows.record.features[2].shape[0] += 1;
  wrong_rows.tensors[2].shape[0] += 1;
  wrong_rows.tensors[2].data.resize(wrong_rows.tensors[2].data.size() + 2);
  EXPECT_EQ(CodeOf([&] { store.Append(wrong_rows.record, wrong_rows.tensors); }),
            ErrorCode::kShapeMismatch);
  EXPECT_EQ(store.records().size(), 1u);
}

TEST(FeatureStoreTest, ReadErrors) {
  TempDir dir;
  Rng rng(4);
  auto store = FeatureStore::Create(dir.path());
  auto w = RandomRecord(rng, "x", "a");
  store.Append(w.record, w.tensors);
  EXPECT_EQ(CodeOf([&] { store.Read("nope", FeatureKind::kHidden, 0); }), ErrorCode::kUnknownId);
  EXPECT_EQ(CodeOf([&] { store.Read("x", FeatureKind::kHidden, 7); }), ErrorCode::kMissingFeature);
  EXPECT_EQ(CodeOf([&] { store.Read("x", FeatureKind::kLookback, 0); }), ErrorCode::kMissingFeature);
}

TEST(FeatureStoreTest, OpenErrors) {
  TempDir dir;
  EXPECT_EQ(CodeOf([&] { FeatureStore::Open(dir.path()); }), ErrorCode::kMissingFile);
  FeatureStore::Create(dir.path());
  EXPECT_EQ(CodeOf([&] { FeatureStore::Create(dir.path()); }), ErrorCode::kIoError);
  std::filesystem::remove(dir / "tensors.bin");
  EXPECT_EQ(CodeOf([&] { FeatureStore::Open(dir.path()); }), ErrorCode::kMissingFile);
}

TEST(FeatureStoreTest, MalformedLineIsReported) {
  TempDir dir;
  Rng rng(5);
  {
    auto store = FeatureStore::Create(dir.path());
    for (int i = 0; i < 3; ++i) {
      auto w = RandomRecord(rng, "r" + std::to_string(i), "a");
      store.Append(w.record, w.tensors);
    }
  }
  // Rewrite the third line with a broken record and fix up the checksum so
  // only the content check can object.
  std::string m = testing::ReadFile(dir / "manifest.jsonl");
  std::vector<std::string> lines;
  size_t pos = 0;
  while (pos < m.size()) {
    const size_t nl = m.find('\n', pos);
    lines.push_back(m.substr(pos, nl - pos));
    pos = nl + 1;
  }
  auto rec = nlohmann::json::parse(lines[2]);
  rec["n_response_tokens"] = 0;
  lines[2] = rec.dump();
  std::string body;
  for (size_t i = 1; i < lines.size(); ++i) body += lines[i] + "\n";
  const std::string fixed = lines[0].substr(0, lines[0].find("\"manifest_checksum\"")) +
                            "\"manifest_checksum\":\"" + HexU64(HashString(body)) + "\"}";
  testing::WriteFile(dir / "manifest.jsonl", fixed + "\n" + body);
  try {
    FeatureStore::Open(dir.path());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kMalformedManifest);
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
}

TEST(FeatureStoreTest, EverySingleByteCorruptionIsDetected) {
  TempDir dir;
  Rng rng(6);
  {
    auto store = FeatureStore::Create(dir.path());
    for (int i = 0; i < 2; ++i) {
      auto w = RandomRecord(rng, "r" + std::to_string(i), "a");
      store.Append(w.record, w.tensors);
    }
  }
  for (const char* name : {"manifest.jsonl", "tensors.bin"}) {
    const auto path = dir / name;
    const std::string original = testing::ReadFile(path);
    for (size_t i = 0; i < original.size(); ++i) {
      std::string bad = original;
      bad[i] = static_cast<char>(bad[i] ^ static_cast<char>(1 + rng.Index(255)));
      testing::WriteFile(path, bad);
      bool detected = false;
      try {
        FeatureStore::Open(dir.path());
      } catch (const Error& e) {
        detected = e.code() == ErrorCode::kChecksumMismatch ||
                   e.code() == ErrorCode::kMalformedManifest;
      }
      EXPECT_TRUE(detected) << name << " byte " << i;
    }
    testing::WriteFile(path, original);
  }
  EXPECT_NO_THROW(FeatureStore::Open(dir.path()));
}

TEST(FeatureStoreTest, ValidateRecordInvariants) {
  Rng rng(7);
  auto w = RandomRecord(rng, "x", "a");
  for (auto& e : w.record.features) {
    size_t n = 1;
    for (auto s : e.shape) n *= static_cast<size_t>(s);
    e.length_bytes = 4 * n;
  }
  EXPECT_NO_THROW(ValidateRecord(w.record));
  auto r = w.record;
  r.correctness = 1.5;
  EXPECT_THROW(ValidateRecord(r), Error);
  r = w.record;
  r.features[0].layer.reset();
  EXPECT_THROW(ValidateRecord(r), Error);
  r = w.record;
  r.features[3].layer = 1;
  EXPECT_THROW(ValidateRecord(r), Error);
  r = w.record;
  r.features[1].length_bytes += 4;
  EXPECT_THROW(ValidateRecord(r), Error);
}

TEST(FeatureStoreTest, ConcurrentReaders) {
  TempDir dir;
  Rng rng(8);
  std::vector<testing::RecordWithTensors> written;
  {
    auto store = FeatureStore::Create(dir.path());
    for (int i = 0; i < 50; ++i) {
      written.push_back(RandomRecord(rng, "r" + std::to_string(i), "a"));
      store.Append(written.back().record, written.back().tensors);
    }
  }
  const auto store = FeatureStore::Open(dir.path());
  std::atomic<int> mismatches{0};
  std::vector<std::thread> threads;
  for (int t = 0; t < 4; ++t) {
    threads.emplace_back([&] {
      for (int rep = 0; rep < 20; ++rep) {
        for (const auto& w : written) {
          const Tensor x = store.Read(w.record.instance_id, FeatureKind::kHidden, 3);
          if (!testing::BitEqual(x.data, w.tensors[1].data)) ++mismatches;
        }
      }
    });
  }
  for (auto& t : threads) t.join();
  EXPECT_EQ(mismatches.load(), 0);
}

TEST(FeatureStoreTest, ReadMatrixPromotes) {
  TempDir dir;
  Rng rng(9);
  auto store = FeatureStore::Create(dir.path());
  auto w = RandomRecord(rng, "x", "a");
  store.Append(w.record, w.tensors);
  const auto m = store.ReadMatrix("x", FeatureKind::kTokenLogprob, std::nullopt);
  ASSERT_EQ(m.cols(), 1);
  ASSERT_EQ(m.rows(), w.record.n_response_tokens);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    EXPECT_EQ(m(i, 0), static_cast<double>(w.tensors[3].data[static_cast<size_t>(i)]));
  }
}

}  // namespace
}  // namespace uqp
