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

#include "uqp/pls.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "uqp/error.hpp"
#include "uqp/metrics.hpp"

namespace uqp {
namespace {

// Dominant right singular direction of `x`, used when the residual target
// carries no covariance with the residual inputs.
Eigen::VectorXd DominantAxis(const Eigen::MatrixXd& x) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(x.transpose() * x);
  const Eigen::Index top = x.cols() - 1;
  if (eig.info() != Eigen::Success || !(eig.eigenvalues()(top) > 0.0)) {
    throw Error(ErrorCode::kRankDeficient, "inputs are exhausted before the second PLS component");
  }
  return eig.eigenvectors().col(top);
}

}  // namespace

PlsModel FitPls2(const Eigen::MatrixXd& x, std::span<const double> y) {
  const Eigen::Index n = x.rows();
  const Eigen::Index d = x.cols();
  if (static_cast<size_t>(n) != y.size()) {
    throw Error(ErrorCode::kLengthMismatch, "X has " + std::to_string(n) + " rows, y has " +
                                                std::to_string(y.size()));
  }
  if (n < 10) throw Error(ErrorCode::kTooFewSamples, "PLS needs at least 10 rows");
  if (d < 1) throw Error(ErrorCode::kDimensionMismatch, "zero-width inputs");
  if (!x.allFinite()) throw Error(ErrorCode::kNonFiniteInput, "non-finite PLS input");
  if (std::all_of(y.begin(), y.end(), [&](double v) { return v == y[0]; })) {
    throw Error(ErrorCode::kDegenerateTarget, "constant PLS target");
  }

  const std::vector<double> ranks = AverageRanks(y);
  Eigen::VectorXd yr(n);
  for (Eigen::Index i = 0; i < n; ++i) yr(i) = (ranks[static_cast<size_t>(i)] - 0.5) / static_cast<double>(n);

  PlsModel m;
  m.x_mean = x.colwise().mean();
  m.y_mean = yr.mean();
  Eigen::MatrixXd xa = x.rowwise() - m.x_mean;
  Eigen::VectorXd ya = yr.array() - m.y_mean;
  m.weights.resize(d, 2);
  m.loadings.resize(d, 2);
  m.train_scores.resize(n, 2);

  for (int a = 0; a < 2; ++a) {
    Eigen::VectorXd w = xa.transpose() * ya;
    const double scale = xa.norm() * ya.norm();
    if (!(w.norm() > 1e-14 * scale)) {
      w = DominantAxis(xa);
    } else {
      w.normalize();
      bool converged = false;
      for (int it = 0; it < kPlsMaxIterations; ++it) {
        const Eigen::VectorXd t = xa * w;
        const double c = ya.dot(t) / t.squaredNorm();
        const Eigen::VectorXd u = ya / c;
        Eigen::VectorXd w_new = xa.transpose() * u;
        w_new.normalize();
        const double delta = (w_new - w).norm();
        w = std::move(w_new);
        if (delta < kPlsTolerance) {
          converged = true;
          break;
        }
      }
      if (!converged) throw Error(ErrorCode::kNoConvergence, "NIPALS did not converge");
    }
    const Eigen::VectorXd t = xa * w;
    const double tt = t.squaredNorm();
    if (!(tt > 0.0)) throw Error(ErrorCode::kRankDeficient, "zero PLS score vector");
    const Eigen::VectorXd p = xa.transpose() * t / tt;
    const double c = ya.dot(t) / tt;
    xa -= t * p.transpose();
    ya -= c * t;
    m.weights.col(a) = w;
    m.loadings.col(a) = p;
    m.y_loadings(a) = c;
    m.train_scores.col(a) = t;
  }
  m.rotation = m.weights * (m.loadings.transpose() * m.weights).inverse();

  const Eigen::VectorXd fitted = (m.train_scores * m.y_loadings).array() + m.y_mean;
  m.train_spearman = SpearmanCorrelation(std::span<const double>(fitted.data(), static_cast<size_t>(n)),
                                         std::span<const double>(yr.data(), static_cast<size_t>(n)));
  return m;
}

Eigen::MatrixXd ProjectPls(const PlsModel& model, const Eigen::MatrixXd& x) {
  if (x.cols() != model.x_mean.size()) {
    throw Error(ErrorCode::kDimensionMismatch, "PLS model expects " + std::to_string(model.x_mean.size()) +
                                                   " columns, got " + std::to_string(x.cols()));
  }
  return (x.rowwise() - model.x_mean) * model.rotation;
}

std::vector<double> PredictPls(const PlsModel& model, const Eigen::MatrixXd& x) {
  const Eigen::VectorXd f = (ProjectPls(model, x) * model.y_loadings).array() + model.y_mean;
  return std::vector<double>(f.data(), f.data() + f.size());
}

GridBounds BoundsFor(const Eigen::MatrixXd& scores, int nx, int ny) {
  GridBounds b;
  b.nx = nx;
  b.ny = ny;
  auto pad = [](double lo, double hi, double& out_lo, double& out_hi) {
    const double span = hi - lo;
    const double margin = span > 0.0 ? 0.1 * span : 1.0;
    out_lo = lo - margin;
    out_hi = hi + margin;
  };
  if (scores.rows() == 0) return b;
  pad(scores.col(0).minCoeff(), scores.col(0).maxCoeff(), b.x_min, b.x_max);
  pad(scores.col(1).minCoeff(), scores.col(1).maxCoeff(), b.y_min, b.y_max);
  return b;
}

Eigen::MatrixXd KdeDensity(const Eigen::MatrixXd& points, const GridBounds& bounds) {
  const Eigen::Index n = points.rows();
  if (n < 1) throw Error(ErrorCode::kEmptyGroup, "KDE of an empty group");
  if (points.cols() != 2) throw Error(ErrorCode::kDimensionMismatch, "KDE expects 2-D points");
  if (bounds.nx < 1 || bounds.ny < 1 || !(bounds.x_max > bounds.x_min) || !(bounds.y_max > bounds.y_min)) {
    throw Error(ErrorCode::kInvalidArgument, "bad KDE grid bounds");
  }
  Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
  if (n >= 2) {
    const Eigen::MatrixXd c = points.rowwise() - points.colwise().mean();
    cov = (c.transpose() * c) / static_cast<double>(n - 1);
  }
  const double factor = std::pow(static_cast<double>(n), -1.0 / 3.0);
  Eigen::Matrix2d h = factor * cov;
  h(0, 0) += bounds.cell_w() * bounds.cell_w();
  h(1, 1) += bounds.cell_h() * bounds.cell_h();
  const Eigen::Matrix2d hinv = h.inverse();

  Eigen::MatrixXd grid(bounds.ny, bounds.nx);
  for (int j = 0; j < bounds.ny; ++j) {
    for (int i = 0; i < bounds.nx; ++i) {
      const Eigen::RowVector2d g(bounds.cx(i), bounds.cy(j));
      double acc = 0.0;
      for (Eigen::Index p = 0; p < n; ++p) {
        const Eigen::RowVector2d dlt = g - points.row(p);
        acc += std::exp(-0.5 * (dlt * hinv * dlt.transpose())(0, 0));
      }
      grid(j, i) = acc;
    }
  }
  const double mass = grid.sum() * bounds.cell_w() * bounds.cell_h();
  if (!(mass > 0.0)) throw Error(ErrorCode::kInvalidArgument, "KDE mass vanished on the grid");
  return grid / mass;
}

KdeGrids KdeGrid(const Eigen::MatrixXd& scores, const std::vector<bool>& group_mask,
                 const GridBounds& bounds) {
  if (static_cast<size_t>(scores.rows()) != group_mask.size()) {
    throw Error(ErrorCode::kLengthMismatch, "group mask length does not match scores");
  }
  std::vector<Eigen::Index> in, out;
  for (size_t i = 0; i < group_mask.size(); ++i) {
    (group_mask[i] ? in : out).push_back(static_cast<Eigen::Index>(i));
  }
  if (in.empty() || out.empty()) throw Error(ErrorCode::kEmptyGroup, "both KDE groups must be non-empty");
  KdeGrids g;
  g.bounds = bounds;
  g.in_group = KdeDensity(scores(in, Eigen::all), bounds);
  g.out_group = KdeDensity(scores(out, Eigen::all), bounds);
  return g;
}

}  // namespace uqp
