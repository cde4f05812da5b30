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

#include "uqp/features.hpp"

#include <charconv>

#include "uqp/error.hpp"

namespace uqp {

FeatureSelector FeatureSelector::Parse(std::string_view text) {
  FeatureSelector sel;
  const auto colon = text.find(':');
  sel.kind = ParseFeatureKind(text.substr(0, colon));
  if (colon == std::string_view::npos) {
    if (sel.kind != FeatureKind::kTokenLogprob) sel.mid_layer = true;
    return sel;
  }
  const std::string_view layer = text.substr(colon + 1);
  if (sel.kind == FeatureKind::kTokenLogprob) {
    throw Error(ErrorCode::kInvalidArgument, "token_logprob has no layer");
  }
  if (layer == "mid") {
    sel.mid_layer = true;
    return sel;
  }
  int v = 0;
  const auto [ptr, ec] = std::from_chars(layer.data(), layer.data() + layer.size(), v);
  if (ec != std::errc() || ptr != layer.data() + layer.size() || v < 0) {
    throw Error(ErrorCode::kInvalidArgument, "bad layer in feature '" + std::string(text) + "'");
  }
  sel.layer = v;
  return sel;
}

std::string FeatureSelector::ToString() const {
  std::string out(uqp::ToString(kind));
  if (kind == FeatureKind::kTokenLogprob) return out;
  return out + ":" + (layer ? std::to_string(*layer) : std::string("mid"));
}

std::optional<int> FeatureSelector::Resolve(const FeatureRecord& record) const {
  if (kind == FeatureKind::kTokenLogprob) return std::nullopt;
  if (layer) return layer;
  const std::vector<int> layers = record.Layers(kind);
  if (layers.empty()) {
    throw Error(ErrorCode::kMissingFeature, record.instance_id + " has no " +
                                                std::string(uqp::ToString(kind)) + " layers");
  }
  return layers[layers.size() / 2];
}

Eigen::VectorXd AggregatedFeature(const FeatureStore& store, const FeatureRecord& record,
                                  FeatureKind kind, std::optional<int> layer,
                                  const AggregationStrategy& strategy) {
  const FeatureEntry* entry = record.Find(kind, layer);
  if (entry == nullptr) {
    throw Error(ErrorCode::kMissingFeature,
                record.instance_id + " lacks " + std::string(ToString(kind)) +
                    (layer ? " layer " + std::to_string(*layer) : std::string()));
  }
  const Eigen::MatrixXd m = store.ReadMatrix(record.instance_id, kind, layer);
  const int64_t ctx = entry->scope == TokenScope::kFull ? record.n_context_tokens : 0;
  return Aggregate(m, ctx, strategy, record.instance_id);
}

Eigen::MatrixXd AggregatedMatrix(const FeatureStore& store,
                                 const std::vector<const FeatureRecord*>& records,
                                 const FeatureSelector& selector,
                                 const AggregationStrategy& strategy) {
  Eigen::MatrixXd out;
  for (size_t i = 0; i < records.size(); ++i) {
    const Eigen::VectorXd v = AggregatedFeature(store, *records[i], selector.kind,
                                                selector.Resolve(*records[i]), strategy);
    if (i == 0) out.resize(static_cast<Eigen::Index>(records.size()), v.size());
    if (v.size() != out.cols()) {
      throw Error(ErrorCode::kDimensionMismatch, records[i]->instance_id + " has feature width " +
                                                     std::to_string(v.size()));
    }
    out.row(static_cast<Eigen::Index>(i)) = v.transpose();
  }
  return out;
}

std::vector<double> TokenLogprobs(const FeatureStore& store, const FeatureRecord& record) {
  const Eigen::MatrixXd m = store.ReadMatrix(record.instance_id, FeatureKind::kTokenLogprob, std::nullopt);
  return std::vector<double>(m.data(), m.data() + m.size());
}

Eigen::MatrixXd UheadSequence(const FeatureStore& store, const FeatureRecord& record) {
  std::vector<Eigen::MatrixXd> parts;
  Eigen::Index width = 0;
  for (FeatureKind kind : {FeatureKind::kAttnPrev, FeatureKind::kAttnPrev2}) {
    for (int l : record.Layers(kind)) {
      const FeatureEntry* e = record.Find(kind, l);
      Eigen::MatrixXd m = store.ReadMatrix(record.instance_id, kind, l);
      if (e->scope == TokenScope::kFull) m = m.bottomRows(record.n_response_tokens).eval();
      width += m.cols();
      parts.push_back(std::move(m));
    }
  }
  parts.push_back(store.ReadMatrix(record.instance_id, FeatureKind::kTokenLogprob, std::nullopt));
  width += 1;
  Eigen::MatrixXd out(record.n_response_tokens, width);
  Eigen::Index c = 0;
  for (const auto& p : parts) {
    out.middleCols(c, p.cols()) = p;
    c += p.cols();
  }
  return out;
}

Eigen::VectorXd LookbackFeatures(const FeatureStore& store, const FeatureRecord& record) {
  const std::vector<int> layers = record.Layers(FeatureKind::kLookback);
  if (layers.empty()) throw Error(ErrorCode::kMissingFeature, record.instance_id + " has no lookback features");
  std::vector<Eigen::VectorXd> per_layer;
  Eigen::Index width = 0;
  for (int l : layers) {
    per_layer.push_back(AggregatedFeature(store, record, FeatureKind::kLookback, l,
                                          {AggregationVariant::kMeanResponse, 0}));
    width += per_layer.back().size();
  }
  Eigen::VectorXd out(width);
  Eigen::Index c = 0;
  for (const auto& v : per_layer) {
    out.segment(c, v.size()) = v;
    c += v.size();
  }
  return out;
}

}  // namespace uqp
