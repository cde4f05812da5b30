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
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "uqp/probe_nets.hpp"

namespace uqp {

enum class ProbeArch { kLinear, kLinearPca, kMlp, kSeqTransformer };

std::string_view ToString(ProbeArch arch);
ProbeArch ParseProbeArch(std::string_view s);

struct ProbeSpec {
  ProbeArch arch = ProbeArch::kMlp;
  std::vector<int> mlp_hidden{256, 128, 64};
  int pca_components = 64;
  int tf_layers = 1;
  int tf_heads = 4;
  int tf_dmodel = 64;
  int tf_ffn = 0;  // 0 means 2 * tf_dmodel
  int epochs = 30;
  int batch = 64;
  double lr = 1e-3;
  uint64_t seed = 0;
  double val_fraction = 0.1;
  int patience = 5;

  // Throws InvalidArgument.
  void Validate() const;
  int ffn_width() const { return tf_ffn > 0 ? tf_ffn : 2 * tf_dmodel; }
  bool consumes_sequences() const { return arch == ProbeArch::kSeqTransformer; }
};

// 768-wide transformer with 16 heads for one layer, 4 heads for two.
ProbeSpec WithPaperDims(ProbeSpec spec);

nlohmann::json ToJson(const ProbeSpec& spec);
// Missing fields keep their defaults.
ProbeSpec ProbeSpecFromJson(const nlohmann::json& j);

struct PcaBasis {
  Eigen::RowVectorXd mean;
  Eigen::MatrixXd components;          // [D, k], orthonormal columns
  Eigen::VectorXd explained_variance;  // descending, length k

  Eigen::MatrixXd Project(const Eigen::MatrixXd& x) const;
  Eigen::MatrixXd Reconstruct(const Eigen::MatrixXd& scores) const;
};

// Principal axes of the sample covariance (N - 1 normalization). Component
// signs are fixed so the largest-magnitude loading is positive. Throws
// RankDeficient when k exceeds min(N - 1, D) or the data rank.
PcaBasis FitPca(const Eigen::MatrixXd& x, int k);

// A trained probe. Inputs are optionally PCA-projected, then standardized
// per column; the network regresses rank-normalized correctness.
class ProbeModel {
 public:
  const ProbeSpec& spec() const { return spec_; }
  Eigen::Index input_dim() const { return input_dim_; }
  const std::vector<double>& parameters() const { return params_; }
  const nets::Network& network() const { return *network_; }
  const std::optional<PcaBasis>& pca() const { return pca_; }
  const std::vector<double>& target_calibration() const { return target_calibration_; }
  const std::string& input_kind() const { return input_kind_; }
  void set_input_kind(std::string kind) { input_kind_ = std::move(kind); }
  int epochs_run() const { return epochs_run_; }

  // Network output in rank-normalized correctness space.
  double PredictCorrectness(const Eigen::VectorXd& row) const;
  double PredictCorrectnessSequence(const Eigen::MatrixXd& tokens) const;

  // 1 - predicted correctness, clamped to [-1, 2]; higher is more uncertain.
  double PredictUncertainty(const Eigen::VectorXd& row) const;
  double PredictUncertaintySequence(const Eigen::MatrixXd& tokens) const;
  std::vector<double> PredictUncertainty(const Eigen::MatrixXd& rows) const;
  std::vector<double> PredictUncertainty(const std::vector<Eigen::MatrixXd>& sequences) const;

 private:
  friend ProbeModel FitProbeImpl(const ProbeSpec&, const Eigen::MatrixXd*,
                                 const std::vector<Eigen::MatrixXd>*, std::span<const double>);
  friend void SaveProbe(const std::filesystem::path&, const ProbeModel&);
  friend ProbeModel LoadProbe(const std::filesystem::path&);

  Eigen::MatrixXd Prepare(const Eigen::MatrixXd& x) const;
  void BuildNetwork();

  ProbeSpec spec_;
  Eigen::Index input_dim_ = 0;
  std::shared_ptr<const nets::Network> network_;
  std::vector<double> params_;
  std::optional<PcaBasis> pca_;
  Eigen::RowVectorXd input_mean_;
  Eigen::RowVectorXd input_scale_;
  std::vector<double> target_calibration_;
  std::string input_kind_;
  int epochs_run_ = 0;
};

// Row inputs for linear / linear_pca / mlp. Requires N >= 20 and
// non-constant targets.
ProbeModel FitProbe(const ProbeSpec& spec, const Eigen::MatrixXd& inputs,
                    std::span<const double> targets);
// [T, D] token sequences for seq_transformer.
ProbeModel FitProbe(const ProbeSpec& spec, const std::vector<Eigen::MatrixXd>& sequences,
                    std::span<const double> targets);

void SaveProbe(const std::filesystem::path& path, const ProbeModel& model);
ProbeModel LoadProbe(const std::filesystem::path& path);

}  // namespace uqp
