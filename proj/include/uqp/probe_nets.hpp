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

#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "uqp/util.hpp"

namespace uqp::nets {

enum class BlockRole { kWeight, kBias, kGain };

struct ParamBlock {
  std::string name;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  size_t offset = 0;
  BlockRole role = BlockRole::kWeight;
  size_t size() const { return static_cast<size_t>(rows * cols); }
};

// Describes how named matrices are packed (column-major) into the flat
// parameter vector.
class ParamLayout {
 public:
  size_t Add(std::string name, Eigen::Index rows, Eigen::Index cols, BlockRole role);
  const ParamBlock& block(size_t index) const { return blocks_[index]; }
  const std::vector<ParamBlock>& blocks() const { return blocks_; }
  size_t size() const { return size_; }

 private:
  std::vector<ParamBlock> blocks_;
  size_t size_ = 0;
};

// Training inputs: either aggregated rows (one sample per row) or one
// [T, D] token matrix per sample.
struct Inputs {
  const Eigen::MatrixXd* rows = nullptr;
  const std::vector<Eigen::MatrixXd>* sequences = nullptr;

  size_t count() const;
};

// A scalar regressor over a flat parameter vector. The loss is the mean
// squared error over the selected samples.
class Network {
 public:
  virtual ~Network() = default;

  const ParamLayout& layout() const { return layout_; }
  size_t num_params() const { return layout_.size(); }

  // Glorot-uniform weights, zero biases, unit gains.
  void Init(std::span<double> params, Rng& rng) const;

  virtual double Predict(std::span<const double> params, const Inputs& inputs,
                         size_t sample) const = 0;

  // Returns the batch loss and overwrites `grad` with its gradient.
  virtual double LossAndGradient(std::span<const double> params, const Inputs& inputs,
                                 std::span<const size_t> batch, std::span<const double> targets,
                                 std::span<double> grad) const = 0;

  double Loss(std::span<const double> params, const Inputs& inputs,
              std::span<const size_t> batch, std::span<const double> targets) const;

 protected:
  ParamLayout layout_;
};

// Fully connected ReLU network with a linear scalar output. No hidden
// layers gives plain linear regression.
class MlpNetwork final : public Network {
 public:
  MlpNetwork(Eigen::Index input_dim, const std::vector<int>& hidden);

  double Predict(std::span<const double> params, const Inputs& inputs,
                 size_t sample) const override;
  double LossAndGradient(std::span<const double> params, const Inputs& inputs,
                         std::span<const size_t> batch, std::span<const double> targets,
                         std::span<double> grad) const override;

 private:
  std::vector<size_t> weights_;
  std::vector<size_t> biases_;
};

struct TransformerShape {
  Eigen::Index input_dim = 0;
  int d_model = 64;
  int heads = 4;
  int layers = 1;
  int ffn = 128;
};

// Token-sequence regressor: linear embedding, sinusoidal positions,
// post-LN encoder layers (multi-head self-attention + ReLU FFN), mean
// pooling over tokens and a linear scalar head.
class TransformerNetwork final : public Network {
 public:
  explicit TransformerNetwork(const TransformerShape& shape);

  double Predict(std::span<const double> params, const Inputs& inputs,
                 size_t sample) const override;
  double LossAndGradient(std::span<const double> params, const Inputs& inputs,
                         std::span<const size_t> batch, std::span<const double> targets,
                         std::span<double> grad) const override;

 private:
  struct LayerIds {
    size_t wq, bq, wk, bk, wv, bv, wo, bo, ln1_g, ln1_b, w1, b1, w2, b2, ln2_g, ln2_b;
  };
  struct SampleCache;

  double Forward(std::span<const double> params, const Eigen::MatrixXd& x,
                 SampleCache* cache) const;
  void Backward(std::span<const double> params, const Eigen::MatrixXd& x,
                const SampleCache& cache, double dpred, std::span<double> grad) const;

  TransformerShape shape_;
  size_t embed_w_ = 0, embed_b_ = 0, head_w_ = 0, head_b_ = 0;
  std::vector<LayerIds> layer_ids_;
};

Eigen::MatrixXd SinusoidalPositions(Eigen::Index tokens, int d_model);

}  // namespace uqp::nets
