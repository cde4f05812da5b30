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

#include "uqp/density.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "uqp/container.hpp"
#include "uqp/error.hpp"

namespace uqp {

GaussianStats::GaussianStats(Eigen::VectorXd mean, Eigen::MatrixXd covariance,
                             double shrinkage_lambda, int64_t n_fit)
    : mean_(std::move(mean)),
      covariance_(std::move(covariance)),
      shrinkage_lambda_(shrinkage_lambda),
      n_fit_(n_fit) {
  if (covariance_.rows() != mean_.size() || covariance_.cols() != mean_.size()) {
    throw Error(ErrorCode::kDimensionMismatch, "covariance does not match mean");
  }
  Eigen::LLT<Eigen::MatrixXd> llt(covariance_);
  if (llt.info() != Eigen::Success) {
    throw Error(ErrorCode::kRankDeficient, "covariance is not positive definite");
  }
  chol_lower_ = llt.matrixL();
  precision_ = llt.solve(Eigen::MatrixXd::Identity(mean_.size(), mean_.size()));
}

double GaussianStats::SquaredDistance(const Eigen::VectorXd& x) const {
  if (x.size() != mean_.size()) {
    throw Error(ErrorCode::kDimensionMismatch, "query has dimension " + std::to_string(x.size()) +
                                                   ", stats have " + std::to_string(mean_.size()));
  }
  const Eigen::VectorXd y =
      chol_lower_.triangularView<Eigen::Lower>().solve(x - mean_);
  return y.squaredNorm();
}

GaussianStats FitGaussian(const Eigen::MatrixXd& samples) {
  const Eigen::Index n = samples.rows();
  const Eigen::Index d = samples.cols();
  if (n < 2) throw Error(ErrorCode::kTooFewSamples, "need at least 2 samples, got " + std::to_string(n));
  if (d < 1) throw Error(ErrorCode::kDimensionMismatch, "zero-dimensional samples");
  Eigen::VectorXd mean = samples.colwise().mean().transpose();
  const Eigen::MatrixXd centered = samples.rowwise() - mean.transpose();
  Eigen::MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(n - 1);
  cov = 0.5 * (cov + cov.transpose());
  const double trace = cov.trace();
  const double lambda = trace > 0.0 ? 1e-3 * trace / static_cast<double>(d) : 1e-6;
  cov.diagonal().array() += lambda;
  return GaussianStats(std::move(mean), std::move(cov), lambda, n);
}

double Mahalanobis(const GaussianStats& stats, const Eigen::VectorXd& x) {
  return std::sqrt(stats.SquaredDistance(x));
}

double RelativeMahalanobis(const GaussianStats& stats, const GaussianStats& background,
                           const Eigen::VectorXd& x) {
  return stats.SquaredDistance(x) - background.SquaredDistance(x);
}

void SaveGaussian(const std::filesystem::path& path, const GaussianStats& stats) {
  const auto d = stats.dim();
  nlohmann::json header = {{"format", "uqp-gaussian-1"},
                           {"dim", d},
                           {"shrinkage_lambda", stats.shrinkage_lambda()},
                           {"n_fit", stats.n_fit()}};
  NamedArray mean{"mean", {d}, std::vector<double>(stats.mean().data(), stats.mean().data() + d)};
  NamedArray cov{"covariance", {d, d}, std::vector<double>(static_cast<size_t>(d * d))};
  for (Eigen::Index i = 0; i < d; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) cov.values[static_cast<size_t>(i * d + j)] = stats.covariance()(i, j);
  }
  WriteContainer(path, header, {mean, cov});
}

GaussianStats LoadGaussian(const std::filesystem::path& path) {
  const Container c = ReadContainer(path);
  if (c.header.value("format", std::string()) != "uqp-gaussian-1") {
    throw Error(ErrorCode::kMalformedManifest, path.string() + ": not a Gaussian stats file");
  }
  const auto d = c.header.at("dim").get<Eigen::Index>();
  const auto& m = c.at("mean").values;
  const auto& cv = c.at("covariance").values;
  if (static_cast<Eigen::Index>(m.size()) != d || static_cast<Eigen::Index>(cv.size()) != d * d) {
    throw Error(ErrorCode::kMalformedManifest, path.string() + ": array sizes disagree with dim");
  }
  Eigen::VectorXd mean = Eigen::Map<const Eigen::VectorXd>(m.data(), d);
  Eigen::MatrixXd cov(d, d);
  for (Eigen::Index i = 0; i < d; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) cov(i, j) = cv[static_cast<size_t>(i * d + j)];
  }
  return GaussianStats(std::move(mean), std::move(cov), c.header.at("shrinkage_lambda").get<double>(),
                       c.header.at("n_fit").get<int64_t>());
}

OodRankReference BuildOodReference(const Eigen::MatrixXd& train) {
  const Eigen::Index n = train.rows();
  if (n < 4) throw Error(ErrorCode::kTooFewSamples, "OOD reference needs at least 4 training rows");
  const Eigen::Index half = n / 2;
  OodRankReference ref;
  ref.half_fit_stats = FitGaussian(train.topRows(half));
  ref.reference_mds.reserve(static_cast<size_t>(n - half));
  for (Eigen::Index i = half; i < n; ++i) {
    ref.reference_mds.push_back(Mahalanobis(ref.half_fit_stats, train.row(i).transpose()));
  }
  std::sort(ref.reference_mds.begin(), ref.reference_mds.end());
  ref.full_fit_stats = FitGaussian(train);
  return ref;
}

double OodRank(const OodRankReference& ref, const Eigen::VectorXd& x) {
  if (ref.reference_mds.empty()) throw Error(ErrorCode::kEmptyReference, "no reference distances");
  const double d = Mahalanobis(ref.full_fit_stats, x);
  const auto smaller = std::lower_bound(ref.reference_mds.begin(), ref.reference_mds.end(), d) -
                       ref.reference_mds.begin();
  const double r = 1.0 + static_cast<double>(smaller);
  return r / static_cast<double>(ref.reference_mds.size() + 1);
}

LayerDensity LayerDensity::Fit(const std::map<int, Eigen::MatrixXd>& train_by_layer,
                               const std::map<int, Eigen::MatrixXd>& background_by_layer) {
  LayerDensity out;
  for (const auto& [layer, samples] : train_by_layer) out.stats_.emplace(layer, FitGaussian(samples));
  for (const auto& [layer, samples] : background_by_layer) {
    if (!out.stats_.count(layer)) {
      throw Error(ErrorCode::kMissingLayerStats, "background layer " + std::to_string(layer) +
                                                     " has no matching training stats");
    }
    out.background_.emplace(layer, FitGaussian(samples));
  }
  return out;
}

Eigen::VectorXd LayerDensity::Features(const std::map<int, Eigen::VectorXd>& x_by_layer,
                                       bool relative) const {
  for (const auto& [layer, x] : x_by_layer) {
    if (!stats_.count(layer)) {
      throw Error(ErrorCode::kMissingLayerStats, "no stats fitted for layer " + std::to_string(layer));
    }
  }
  Eigen::VectorXd out(static_cast<Eigen::Index>(stats_.size()));
  Eigen::Index i = 0;
  for (const auto& [layer, stats] : stats_) {
    auto it = x_by_layer.find(layer);
    if (it == x_by_layer.end()) {
      throw Error(ErrorCode::kMissingLayerStats, "query lacks layer " + std::to_string(layer));
    }
    if (relative) {
      auto bg = background_.find(layer);
      if (bg == background_.end()) {
        throw Error(ErrorCode::kMissingLayerStats, "no background stats for layer " + std::to_string(layer));
      }
      out(i++) = RelativeMahalanobis(stats, bg->second, it->second);
    } else {
      out(i++) = Mahalanobis(stats, it->second);
    }
  }
  return out;
}

std::vector<int> LayerDensity::layers() const {
  std::vector<int> out;
  for (const auto& [layer, s] : stats_) out.push_back(layer);
  return out;
}

const GaussianStats& LayerDensity::stats(int layer) const {
  auto it = stats_.find(layer);
  if (it == stats_.end()) throw Error(ErrorCode::kMissingLayerStats, "layer " + std::to_string(layer));
  return it->second;
}

}  // namespace uqp
