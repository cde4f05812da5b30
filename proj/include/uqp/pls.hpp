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

#include <span>
#include <vector>

#include <Eigen/Dense>

namespace uqp {

// Two-component PLS1 regression fit by NIPALS with deflation. Targets are
// replaced by (average rank - 0.5) / N before fitting, which makes the model
// unchanged when every row is duplicated.
struct PlsModel {
  Eigen::RowVectorXd x_mean;
  Eigen::MatrixXd weights;   // [D, 2]
  Eigen::MatrixXd loadings;  // [D, 2]
  Eigen::Vector2d y_loadings;
  double y_mean = 0.0;
  Eigen::MatrixXd rotation;      // weights * (loadings^T weights)^-1
  Eigen::MatrixXd train_scores;  // [N, 2]
  double train_spearman = 0.0;
};

inline constexpr double kPlsTolerance = 1e-10;
inline constexpr int kPlsMaxIterations = 500;

// Throws TooFewSamples (N < 10), DegenerateTarget, NoConvergence,
// RankDeficient.
PlsModel FitPls2(const Eigen::MatrixXd& x, std::span<const double> y);

// [M, 2] scores, (x - x_mean) * rotation.
Eigen::MatrixXd ProjectPls(const PlsModel& model, const Eigen::MatrixXd& x);

// Fitted target in rank-normalized units.
std::vector<double> PredictPls(const PlsModel& model, const Eigen::MatrixXd& x);

struct GridBounds {
  double x_min = 0.0, x_max = 1.0, y_min = 0.0, y_max = 1.0;
  int nx = 64, ny = 64;

  double cell_w() const { return (x_max - x_min) / nx; }
  double cell_h() const { return (y_max - y_min) / ny; }
  double cx(int i) const { return x_min + (i + 0.5) * cell_w(); }
  double cy(int j) const { return y_min + (j + 0.5) * cell_h(); }
};

// Data extent padded by 10% per side.
GridBounds BoundsFor(const Eigen::MatrixXd& scores, int nx = 64, int ny = 64);

struct KdeGrids {
  GridBounds bounds;
  // density(j, i) at cell center (cx(i), cy(j)); sum * cell area == 1.
  Eigen::MatrixXd in_group;
  Eigen::MatrixXd out_group;
};

// Gaussian KDE per group with bandwidth matrix n^(-1/3) * covariance (Scott)
// plus diag(cell_w^2, cell_h^2) so single points stay resolvable. Throws
// EmptyGroup when either group is empty.
KdeGrids KdeGrid(const Eigen::MatrixXd& scores, const std::vector<bool>& group_mask,
                 const GridBounds& bounds);

Eigen::MatrixXd KdeDensity(const Eigen::MatrixXd& points, const GridBounds& bounds);

}  // namespace uqp
