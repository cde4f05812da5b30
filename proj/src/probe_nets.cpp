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

#include "uqp/probe_nets.hpp"

#include <cmath>
#include <string>

#include "uqp/error.hpp"

namespace uqp::nets {
namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::RowVectorXd;
using CMap = Eigen::Map<const MatrixXd>;
using MMap = Eigen::Map<MatrixXd>;

constexpr double kLayerNormEps = 1e-5;

CMap View(std::span<const double> params, const ParamBlock& b) {
  return CMap(params.data() + b.offset, b.rows, b.cols);
}

MMap View(std::span<double> params, const ParamBlock& b) {
  return MMap(params.data() + b.offset, b.rows, b.cols);
}

// Bias/gain blocks are stored as 1 x n rows.
RowVectorXd Row(std::span<const double> params, const ParamBlock& b) {
  return View(params, b).row(0);
}

struct LayerNormCache {
  MatrixXd xhat;
  Eigen::VectorXd inv_std;
};

MatrixXd LayerNormForward(const MatrixXd& x, const RowVectorXd& gain, const RowVectorXd& bias,
                          LayerNormCache* cache) {
  const Index n = x.cols();
  const Eigen::VectorXd mean = x.rowwise().mean();
  MatrixXd centered = x.colwise() - mean;
  const Eigen::VectorXd var = centered.array().square().rowwise().sum() / static_cast<double>(n);
  const Eigen::VectorXd inv_std = (var.array() + kLayerNormEps).rsqrt();
  MatrixXd xhat = centered.array().colwise() * inv_std.array();
  MatrixXd out = (xhat.array().rowwise() * gain.array()).rowwise() + bias.array();
  if (cache != nullptr) {
    cache->xhat = std::move(xhat);
    cache->inv_std = inv_std;
  }
  return out;
}

// Returns d(input); accumulates gain/bias gradients.
MatrixXd LayerNormBackward(const MatrixXd& dout, const LayerNormCache& cache,
                           const RowVectorXd& gain, MMap dgain, MMap dbias) {
  const double n = static_cast<double>(dout.cols());
  dgain.row(0) += (dout.array() * cache.xhat.array()).colwise().sum().matrix();
  dbias.row(0) += dout.colwise().sum();
  const MatrixXd dxhat = dout.array().rowwise() * gain.array();
  const Eigen::VectorXd mean_dxhat = dxhat.rowwise().sum() / n;
  const Eigen::VectorXd mean_dxhat_xhat = (dxhat.array() * cache.xhat.array()).rowwise().sum().matrix() / n;
  MatrixXd dx = dxhat;
  dx.colwise() -= mean_dxhat;
  dx -= (cache.xhat.array().colwise() * mean_dxhat_xhat.array()).matrix();
  return dx.array().colwise() * cache.inv_std.array();
}

void SoftmaxRows(MatrixXd& m) {
  for (Index i = 0; i < m.rows(); ++i) {
    const double mx = m.row(i).maxCoeff();
    m.row(i) = (m.row(i).array() - mx).exp();
    m.row(i) /= m.row(i).sum();
  }
}

}  // namespace

size_t ParamLayout::Add(std::string name, Index rows, Index cols, BlockRole role) {
  ParamBlock b{std::move(name), rows, cols, size_, role};
  size_ += b.size();
  blocks_.push_back(std::move(b));
  return blocks_.size() - 1;
}

size_t Inputs::count() const {
  if (rows != nullptr) return static_cast<size_t>(rows->rows());
  if (sequences != nullptr) return sequences->size();
  return 0;
}

void Network::Init(std::span<double> params, Rng& rng) const {
  if (params.size() != layout_.size()) {
    throw Error(ErrorCode::kDimensionMismatch, "parameter vector does not match layout");
  }
  for (const auto& b : layout_.blocks()) {
    auto view = View(params, b);
    switch (b.role) {
      case BlockRole::kWeight: {
        const double limit = std::sqrt(6.0 / static_cast<double>(b.rows + b.cols));
        // Column-major fill keeps the draw order tied to the flat layout.
        for (size_t i = 0; i < b.size(); ++i) params[b.offset + i] = rng.Uniform(-limit, limit);
        break;
      }
      case BlockRole::kBias:
        view.setZero();
        break;
      case BlockRole::kGain:
        view.setOnes();
        break;
    }
  }
}

double Network::Loss(std::span<const double> params, const Inputs& inputs,
                     std::span<const size_t> batch, std::span<const double> targets) const {
  double loss = 0.0;
  for (size_t s : batch) {
    const double e = Predict(params, inputs, s) - targets[s];
    loss += e * e;
  }
  return loss / static_cast<double>(batch.size());
}

// ---------------------------------------------------------------------------
// MLP

MlpNetwork::MlpNetwork(Index input_dim, const std::vector<int>& hidden) {
  Index fan_in = input_dim;
  for (size_t i = 0; i < hidden.size(); ++i) {
    if (hidden[i] < 1) throw Error(ErrorCode::kInvalidArgument, "MLP widths must be positive");
    weights_.push_back(layout_.Add("dense" + std::to_string(i) + ".w", fan_in, hidden[i], BlockRole::kWeight));
    biases_.push_back(layout_.Add("dense" + std::to_string(i) + ".b", 1, hidden[i], BlockRole::kBias));
    fan_in = hidden[i];
  }
  weights_.push_back(layout_.Add("out.w", fan_in, 1, BlockRole::kWeight));
  biases_.push_back(layout_.Add("out.b", 1, 1, BlockRole::kBias));
}

double MlpNetwork::Predict(std::span<const double> params, const Inputs& inputs,
                           size_t sample) const {
  if (inputs.rows == nullptr) throw Error(ErrorCode::kInvalidArgument, "MLP expects row inputs");
  RowVectorXd a = inputs.rows->row(static_cast<Index>(sample));
  const size_t n = weights_.size();
  for (size_t i = 0; i < n; ++i) {
    RowVectorXd z = a * View(params, layout_.block(weights_[i])) + Row(params, layout_.block(biases_[i]));
    a = (i + 1 < n) ? RowVectorXd(z.cwiseMax(0.0)) : z;
  }
  return a(0);
}

double MlpNetwork::LossAndGradient(std::span<const double> params, const Inputs& inputs,
                                   std::span<const size_t> batch, std::span<const double> targets,
                                   std::span<double> grad) const {
  if (inputs.rows == nullptr) throw Error(ErrorCode::kInvalidArgument, "MLP expects row inputs");
  const Index bsz = static_cast<Index>(batch.size());
  const MatrixXd& x = *inputs.rows;
  MatrixXd a0(bsz, x.cols());
  Eigen::VectorXd t(bsz);
  for (Index i = 0; i < bsz; ++i) {
    a0.row(i) = x.row(static_cast<Index>(batch[static_cast<size_t>(i)]));
    t(i) = targets[batch[static_cast<size_t>(i)]];
  }

  const size_t n = weights_.size();
  std::vector<MatrixXd> acts{a0};
  std::vector<MatrixXd> pre;
  for (size_t i = 0; i < n; ++i) {
    MatrixXd z = acts.back() * View(params, layout_.block(weights_[i]));
    z.rowwise() += Row(params, layout_.block(biases_[i]));
    if (i + 1 < n) {
      acts.push_back(z.cwiseMax(0.0));
      pre.push_back(std::move(z));
    } else {
      acts.push_back(std::move(z));
    }
  }
  const Eigen::VectorXd err = acts.back().col(0) - t;
  const double loss = err.squaredNorm() / static_cast<double>(bsz);

  std::fill(grad.begin(), grad.end(), 0.0);
  MatrixXd delta = (2.0 / static_cast<double>(bsz)) * err;
  for (size_t i = n; i-- > 0;) {
    const auto& wb = layout_.block(weights_[i]);
    View(grad, wb) = acts[i].transpose() * delta;
    View(grad, layout_.block(biases_[i])).row(0) = delta.colwise().sum();
    if (i > 0) {
      MatrixXd da = delta * View(params, wb).transpose();
      delta = (pre[i - 1].array() > 0.0).select(da, 0.0);
    }
  }
  return loss;
}

// ---------------------------------------------------------------------------
// Transformer

MatrixXd SinusoidalPositions(Index tokens, int d_model) {
  MatrixXd pe(tokens, d_model);
  for (Index pos = 0; pos < tokens; ++pos) {
    for (int i = 0; i < d_model; ++i) {
      const double rate = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / d_model);
      const double angle = static_cast<double>(pos) * rate;
      pe(pos, i) = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  }
  return pe;
}

struct TransformerNetwork::SampleCache {
  struct Layer {
    MatrixXd input, q, k, v, concat, r1_norm, f1, g, out;
    std::vector<MatrixXd> probs;
    LayerNormCache ln1, ln2;
  };
  std::vector<Layer> layers;
  RowVectorXd pooled;
};

TransformerNetwork::TransformerNetwork(const TransformerShape& shape) : shape_(shape) {
  if (shape.d_model < 1 || shape.heads < 1 || shape.d_model % shape.heads != 0) {
    throw Error(ErrorCode::kInvalidArgument, "tf_heads must divide tf_dmodel");
  }
  if (shape.layers < 1 || shape.ffn < 1) {
    throw Error(ErrorCode::kInvalidArgument, "transformer needs >= 1 layer and a positive FFN width");
  }
  const Index dm = shape.d_model;
  embed_w_ = layout_.Add("embed.w", shape.input_dim, dm, BlockRole::kWeight);
  embed_b_ = layout_.Add("embed.b", 1, dm, BlockRole::kBias);
  for (int l = 0; l < shape.layers; ++l) {
    const std::string p = "layer" + std::to_string(l) + ".";
    LayerIds ids{};
    ids.wq = layout_.Add(p + "wq", dm, dm, BlockRole::kWeight);
    ids.bq = layout_.Add(p + "bq", 1, dm, BlockRole::kBias);
    ids.wk = layout_.Add(p + "wk", dm, dm, BlockRole::kWeight);
    ids.bk = layout_.Add(p + "bk", 1, dm, BlockRole::kBias);
    ids.wv = layout_.Add(p + "wv", dm, dm, BlockRole::kWeight);
    ids.bv = layout_.Add(p + "bv", 1, dm, BlockRole::kBias);
    ids.wo = layout_.Add(p + "wo", dm, dm, BlockRole::kWeight);
    ids.bo = layout_.Add(p + "bo", 1, dm, BlockRole::kBias);
    ids.ln1_g = layout_.Add(p + "ln1.g", 1, dm, BlockRole::kGain);
    ids.ln1_b = layout_.Add(p + "ln1.b", 1, dm, BlockRole::kBias);
    ids.w1 = layout_.Add(p + "ffn.w1", dm, shape.ffn, BlockRole::kWeight);
    ids.b1 = layout_.Add(p + "ffn.b1", 1, shape.ffn, BlockRole::kBias);
    ids.w2 = layout_.Add(p + "ffn.w2", shape.ffn, dm, BlockRole::kWeight);
    ids.b2 = layout_.Add(p + "ffn.b2", 1, dm, BlockRole::kBias);
    ids.ln2_g = layout_.Add(p + "ln2.g", 1, dm, BlockRole::kGain);
    ids.ln2_b = layout_.Add(p + "ln2.b", 1, dm, BlockRole::kBias);
    layer_ids_.push_back(ids);
  }
  head_w_ = layout_.Add("head.w", dm, 1, BlockRole::kWeight);
  head_b_ = layout_.Add("head.b", 1, 1, BlockRole::kBias);
}

double TransformerNetwork::Forward(std::span<const double> params, const MatrixXd& x,
                                   SampleCache* cache) const {
  if (x.cols() != shape_.input_dim || x.rows() < 1) {
    throw Error(ErrorCode::kDimensionMismatch, "token matrix does not match transformer input");
  }
  const auto& L = layout_;
  const Index tokens = x.rows();
  const int heads = shape_.heads;
  const Index dk = shape_.d_model / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dk));

  MatrixXd h = x * View(params, L.block(embed_w_));
  h.rowwise() += Row(params, L.block(embed_b_));
  h += SinusoidalPositions(tokens, shape_.d_model);

  if (cache != nullptr) cache->layers.resize(layer_ids_.size());
  for (size_t l = 0; l < layer_ids_.size(); ++l) {
    const LayerIds& id = layer_ids_[l];
    auto project = [&](size_t w, size_t b) {
      MatrixXd m = h * View(params, L.block(w));
      m.rowwise() += Row(params, L.block(b));
      return m;
    };
    MatrixXd q = project(id.wq, id.bq);
    MatrixXd k = project(id.wk, id.bk);
    MatrixXd v = project(id.wv, id.bv);
    MatrixXd concat(tokens, shape_.d_model);
    std::vector<MatrixXd> probs(static_cast<size_t>(heads));
    for (int hd = 0; hd < heads; ++hd) {
      const Index c0 = hd * dk;
      MatrixXd scores = scale * q.middleCols(c0, dk) * k.middleCols(c0, dk).transpose();
      SoftmaxRows(scores);
      concat.middleCols(c0, dk) = scores * v.middleCols(c0, dk);
      probs[static_cast<size_t>(hd)] = std::move(scores);
    }
    MatrixXd attn = concat * View(params, L.block(id.wo));
    attn.rowwise() += Row(params, L.block(id.bo));

    LayerNormCache ln1, ln2;
    MatrixXd n1 = LayerNormForward(h + attn, Row(params, L.block(id.ln1_g)),
                                   Row(params, L.block(id.ln1_b)), &ln1);
    MatrixXd f1 = n1 * View(params, L.block(id.w1));
    f1.rowwise() += Row(params, L.block(id.b1));
    MatrixXd g = f1.cwiseMax(0.0);
    MatrixXd f2 = g * View(params, L.block(id.w2));
    f2.rowwise() += Row(params, L.block(id.b2));
    MatrixXd out = LayerNormForward(n1 + f2, Row(params, L.block(id.ln2_g)),
                                    Row(params, L.block(id.ln2_b)), &ln2);
    if (cache != nullptr) {
      auto& c = cache->layers[l];
      c.input = std::move(h);
      c.q = std::move(q);
      c.k = std::move(k);
      c.v = std::move(v);
      c.concat = std::move(concat);
      c.probs = std::move(probs);
      c.r1_norm = n1;
      c.f1 = std::move(f1);
      c.g = std::move(g);
      c.ln1 = std::move(ln1);
      c.ln2 = std::move(ln2);
      c.out = out;
    }
    h = std::move(out);
  }
  const RowVectorXd pooled = h.colwise().mean();
  if (cache != nullptr) cache->pooled = pooled;
  return (pooled * View(params, L.block(head_w_)))(0, 0) + params[L.block(head_b_).offset];
}

void TransformerNetwork::Backward(std::span<const double> params, const MatrixXd& x,
                                  const SampleCache& cache, double dpred,
                                  std::span<double> grad) const {
  const auto& L = layout_;
  const Index tokens = x.rows();
  const int heads = shape_.heads;
  const Index dk = shape_.d_model / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dk));

  View(grad, L.block(head_w_)) += dpred * cache.pooled.transpose();
  grad[L.block(head_b_).offset] += dpred;
  const RowVectorXd dpooled = dpred * View(params, L.block(head_w_)).col(0).transpose();
  MatrixXd dh = dpooled.replicate(tokens, 1) / static_cast<double>(tokens);

  for (size_t l = layer_ids_.size(); l-- > 0;) {
    const LayerIds& id = layer_ids_[l];
    const auto& c = cache.layers[l];

    // out = LN2(n1 + f2)
    const MatrixXd dr2 = LayerNormBackward(dh, c.ln2, Row(params, L.block(id.ln2_g)),
                                           View(grad, L.block(id.ln2_g)),
                                           View(grad, L.block(id.ln2_b)));
    MatrixXd dn1 = dr2;
    View(grad, L.block(id.w2)) += c.g.transpose() * dr2;
    View(grad, L.block(id.b2)).row(0) += dr2.colwise().sum();
    const MatrixXd dg = dr2 * View(params, L.block(id.w2)).transpose();
    const MatrixXd df1 = (c.f1.array() > 0.0).select(dg, 0.0);
    View(grad, L.block(id.w1)) += c.r1_norm.transpose() * df1;
    View(grad, L.block(id.b1)).row(0) += df1.colwise().sum();
    dn1 += df1 * View(params, L.block(id.w1)).transpose();

    // n1 = LN1(input + attn)
    const MatrixXd dr1 = LayerNormBackward(dn1, c.ln1, Row(params, L.block(id.ln1_g)),
                                           View(grad, L.block(id.ln1_g)),
                                           View(grad, L.block(id.ln1_b)));
    MatrixXd dinput = dr1;
    View(grad, L.block(id.wo)) += c.concat.transpose() * dr1;
    View(grad, L.block(id.bo)).row(0) += dr1.colwise().sum();
    const MatrixXd dconcat = dr1 * View(params, L.block(id.wo)).transpose();

    MatrixXd dq(tokens, shape_.d_model), dk_all(tokens, shape_.d_model), dv(tokens, shape_.d_model);
    for (int hd = 0; hd < heads; ++hd) {
      const Index c0 = hd * dk;
      const MatrixXd& p = c.probs[static_cast<size_t>(hd)];
      const MatrixXd dout = dconcat.middleCols(c0, dk);
      const MatrixXd dp = dout * c.v.middleCols(c0, dk).transpose();
      dv.middleCols(c0, dk) = p.transpose() * dout;
      const Eigen::VectorXd row_dot = (dp.array() * p.array()).rowwise().sum();
      const MatrixXd ds = p.array() * (dp.colwise() - row_dot).array();
      dq.middleCols(c0, dk) = scale * ds * c.k.middleCols(c0, dk);
      dk_all.middleCols(c0, dk) = scale * ds.transpose() * c.q.middleCols(c0, dk);
    }
    auto back_proj = [&](const MatrixXd& d, size_t w, size_t b) {
      View(grad, L.block(w)) += c.input.transpose() * d;
      View(grad, L.block(b)).row(0) += d.colwise().sum();
      dinput += d * View(params, L.block(w)).transpose();
    };
    back_proj(dq, id.wq, id.bq);
    back_proj(dk_all, id.wk, id.bk);
    back_proj(dv, id.wv, id.bv);
    dh = std::move(dinput);
  }
  View(grad, L.block(embed_w_)) += x.transpose() * dh;
  View(grad, L.block(embed_b_)).row(0) += dh.colwise().sum();
}

double TransformerNetwork::Predict(std::span<const double> params, const Inputs& inputs,
                                   size_t sample) const {
  if (inputs.sequences == nullptr) {
    throw Error(ErrorCode::kInvalidArgument, "transformer expects token sequences");
  }
  return Forward(params, (*inputs.sequences)[sample], nullptr);
}

double TransformerNetwork::LossAndGradient(std::span<const double> params, const Inputs& inputs,
                                           std::span<const size_t> batch,
                                           std::span<const double> targets,
                                           std::span<double> grad) const {
  if (inputs.sequences == nullptr) {
    throw Error(ErrorCode::kInvalidArgument, "transformer expects token sequences");
  }
  std::fill(grad.begin(), grad.end(), 0.0);
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  double loss = 0.0;
  SampleCache cache;
  for (size_t s : batch) {
    const MatrixXd& x = (*inputs.sequences)[s];
    const double pred = Forward(params, x, &cache);
    const double err = pred - targets[s];
    loss += err * err;
    Backward(params, x, cache, 2.0 * err * inv_b, grad);
  }
  return loss * inv_b;
}

}  // namespace uqp::nets
