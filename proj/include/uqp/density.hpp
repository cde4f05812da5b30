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

#include <cstdint>
#include <filesystem>
#include <map>
#include <vector>

#include <Eigen/Dense>

namespace uqp {

// Mean and shrunk covariance, Sigma = S + lambda * I with
// lambda = 1e-3 * trace(S) / D (1e-6 when the trace is zero). The Cholesky
// factor and precision are cached at construction.
class GaussianStats {
 public:
  GaussianStats() = default;
  // `covariance` must already include the shrinkage term.
  GaussianStats(Eigen::VectorXd mean, Eigen::MatrixXd covariance, double shrinkage_lambda,
                int64_t n_fit);

  const Eigen::VectorXd& mean() const { return mean_; }
  const Eigen::MatrixXd& covariance() const { return covariance_; }
  const Eigen::MatrixXd& precision() const { return precision_; }
  double shrinkage_lambda() const { return shrinkage_lambda_; }
  int64_t n_fit() const { return n_fit_; }
  Eigen::Index dim() const { return mean_.size(); }

  // Squared Mahalanobis distance via the Cholesky factor.
  double SquaredDistance(const Eigen::VectorXd& x) const;

 private:
  Eigen::VectorXd mean_;
  Eigen::MatrixXd covariance_;
  Eigen::MatrixXd precision_;
  Eigen::MatrixXd chol_lower_;
  double shrinkage_lambda_ = 0.0;
  int64_t n_fit_ = 0;
};

// Rows of `samples` are observations. Requires at least two rows.
GaussianStats FitGaussian(const Eigen::MatrixXd& samples);

double Mahalanobis(const GaussianStats& stats, const Eigen::VectorXd& x);
// MD(stats, x)^2 - MD(background, x)^2; may be negative.
double RelativeMahalanobis(const GaussianStats& stats, const GaussianStats& background,
                           const Eigen::VectorXd& x);

void SaveGaussian(const std::filesystem::path& path, const GaussianStats& stats);
GaussianStats LoadGaussian(const std::filesystem::path& path);

// Reference distances for the OOD rank: a Gaussian fit on the first half of
// the training rows scores the second half; queries are scored against a
// Gaussian fit on all rows.
struct OodRankReference {
  GaussianStats half_fit_stats;
  std::vector<double> reference_mds;  // ascending
  GaussianStats full_fit_stats;
};

OodRankReference BuildOodReference(const Eigen::MatrixXd& train);

// R = r / (N + 1), r = 1 + #(reference < d), N = |reference|, where d is the
// query's distance under the full fit. Equal references count as not smaller.
double OodRank(const OodRankReference& ref, const Eigen::VectorXd& x);

// Per-layer Gaussians backing SATMD / SATRMD features. Layer order is the
// ascending layer index.
class LayerDensity {
 public:
  // `background` may be empty when only absolute distances are needed.
  static LayerDensity Fit(const std::map<int, Eigen::MatrixXd>& train_by_layer,
                          const std::map<int, Eigen::MatrixXd>& background_by_layer = {});

  // Component l is MD (or RMD when `relative`) at the l-th fitted layer.
  Eigen::VectorXd Features(const std::map<int, Eigen::VectorXd>& x_by_layer, bool relative) const;

  std::vector<int> layers() const;
  const GaussianStats& stats(int layer) const;
  bool has_background() const { return !background_.empty(); }

 private:
  std::map<int, GaussianStats> stats_;
  std::map<int, GaussianStats> background_;
};

}  // namespace uqp
