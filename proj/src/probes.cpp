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

#include "uqp/probes.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "uqp/container.hpp"
#include "uqp/error.hpp"
#include "uqp/hybrid.hpp"
#include "uqp/util.hpp"

namespace uqp {
namespace {

constexpr double kAdamBeta1 = 0.9;
constexpr double kAdamBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;
constexpr int kMinSamples = 20;

void CheckFinite(const Eigen::MatrixXd& x, const char* what) {
  if (!x.allFinite()) throw Error(ErrorCode::kNonFiniteInput, std::string(what) + " contains non-finite values");
}

class Adam {
 public:
  Adam(size_t n, double lr) : lr_(lr), m_(n, 0.0), v_(n, 0.0) {}

  void Step(std::vector<double>& params, const std::vector<double>& grad) {
    ++t_;
    const double c1 = 1.0 - std::pow(kAdamBeta1, t_);
    const double c2 = 1.0 - std::pow(kAdamBeta2, t_);
    for (size_t i = 0; i < params.size(); ++i) {
      m_[i] = kAdamBeta1 * m_[i] + (1.0 - kAdamBeta1) * grad[i];
      v_[i] = kAdamBeta2 * v_[i] + (1.0 - kAdamBeta2) * grad[i] * grad[i];
      params[i] -= lr_ * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + kAdamEps);
    }
  }

 private:
  double lr_;
  int t_ = 0;
  std::vector<double> m_, v_;
};

std::vector<double> ToVector(const Eigen::MatrixXd& m) {
  return std::vector<double>(m.data(), m.data() + m.size());
}

// Row-major flattening for persisted matrices.
NamedArray MatrixArray(std::string name, const Eigen::MatrixXd& m) {
  NamedArray a{std::move(name), {m.rows(), m.cols()}, {}};
  a.values.reserve(static_cast<size_t>(m.size()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) a.values.push_back(m(i, j));
  }
  return a;
}

Eigen::MatrixXd ArrayMatrix(const NamedArray& a) {
  if (a.shape.size() != 2) throw Error(ErrorCode::kMalformedManifest, a.name + ": expected a matrix");
  Eigen::MatrixXd m(a.shape[0], a.shape[1]);
  size_t k = 0;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = a.values[k++];
  }
  return m;
}

}  // namespace

std::string_view ToString(ProbeArch arch) {
  switch (arch) {
    case ProbeArch::kLinear: return "linear";
    case ProbeArch::kLinearPca: return "linear_pca";
    case ProbeArch::kMlp: return "mlp";
    case ProbeArch::kSeqTransformer: return "seq_transformer";
  }
  return "?";
}

ProbeArch ParseProbeArch(std::string_view s) {
  if (s == "linear") return ProbeArch::kLinear;
  if (s == "linear_pca") return ProbeArch::kLinearPca;
  if (s == "mlp") return ProbeArch::kMlp;
  if (s == "seq_transformer") return ProbeArch::kSeqTransformer;
  throw Error(ErrorCode::kInvalidArgument, "unknown probe arch '" + std::string(s) + "'");
}

void ProbeSpec::Validate() const {
  auto fail = [](const std::string& msg) { throw Error(ErrorCode::kInvalidArgument, msg); };
  if (arch == ProbeArch::kMlp) {
    if (mlp_hidden.empty()) fail("mlp_hidden must be non-empty for mlp");
    for (int w : mlp_hidden) {
      if (w < 1) fail("mlp_hidden widths must be positive");
    }
  }
  if (arch == ProbeArch::kLinearPca && pca_components < 1) fail("pca_components must be >= 1");
  if (arch == ProbeArch::kSeqTransformer) {
    if (tf_layers != 1 && tf_layers != 2) fail("tf_layers must be 1 or 2");
    if (tf_heads < 1 || tf_dmodel < 1 || tf_dmodel % tf_heads != 0) fail("tf_heads must divide tf_dmodel");
  }
  if (epochs < 1) fail("epochs must be >= 1");
  if (batch < 1) fail("batch must be >= 1");
  if (!(lr > 0.0) || !std::isfinite(lr)) fail("lr must be positive");
  if (!(val_fraction >= 0.0 && val_fraction < 0.5)) fail("val_fraction must lie in [0, 0.5)");
  if (patience < 1) fail("patience must be >= 1");
}

ProbeSpec WithPaperDims(ProbeSpec spec) {
  spec.tf_dmodel = 768;
  spec.tf_heads = spec.tf_layers == 1 ? 16 : 4;
  spec.tf_ffn = 0;
  return spec;
}

nlohmann::json ToJson(const ProbeSpec& s) {
  return {{"arch", ToString(s.arch)},         {"mlp_hidden", s.mlp_hidden},
          {"pca_components", s.pca_components}, {"tf_layers", s.tf_layers},
          {"tf_heads", s.tf_heads},           {"tf_dmodel", s.tf_dmodel},
          {"tf_ffn", s.tf_ffn},               {"epochs", s.epochs},
          {"batch", s.batch},                 {"lr", s.lr},
          {"seed", s.seed},                   {"val_fraction", s.val_fraction},
          {"patience", s.patience}};
}

ProbeSpec ProbeSpecFromJson(const nlohmann::json& j) {
  if (!j.is_object()) throw Error(ErrorCode::kInvalidArgument, "probe spec must be a JSON object");
  ProbeSpec s;
  try {
    if (j.contains("arch")) s.arch = ParseProbeArch(j.at("arch").get<std::string>());
    s.mlp_hidden = j.value("mlp_hidden", s.mlp_hidden);
    s.pca_components = j.value("pca_components", s.pca_components);
    s.tf_layers = j.value("tf_layers", s.tf_layers);
    s.tf_heads = j.value("tf_heads", s.tf_heads);
    s.tf_dmodel = j.value("tf_dmodel", s.tf_dmodel);
    s.tf_ffn = j.value("tf_ffn", s.tf_ffn);
    s.epochs = j.value("epochs", s.epochs);
    s.batch = j.value("batch", s.batch);
    s.lr = j.value("lr", s.lr);
    s.seed = j.value("seed", s.seed);
    s.val_fraction = j.value("val_fraction", s.val_fraction);
    s.patience = j.value("patience", s.patience);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, std::string("probe spec: ") + e.what());
  }
  s.Validate();
  return s;
}

// ---------------------------------------------------------------------------
// PCA

Eigen::MatrixXd PcaBasis::Project(const Eigen::MatrixXd& x) const {
  if (x.cols() != components.rows()) {
    throw Error(ErrorCode::kDimensionMismatch, "PCA input has " + std::to_string(x.cols()) +
                                                   " columns, basis expects " +
                                                   std::to_string(components.rows()));
  }
  return (x.rowwise() - mean) * components;
}

Eigen::MatrixXd PcaBasis::Reconstruct(const Eigen::MatrixXd& scores) const {
  return (scores * components.transpose()).rowwise() + mean;
}

PcaBasis FitPca(const Eigen::MatrixXd& x, int k) {
  const Eigen::Index n = x.rows();
  const Eigen::Index d = x.cols();
  if (k < 1 || k > std::min<Eigen::Index>(n - 1, d)) {
    throw Error(ErrorCode::kRankDeficient, "k=" + std::to_string(k) + " exceeds min(N-1, D)");
  }
  CheckFinite(x, "PCA input");
  PcaBasis basis;
  basis.mean = x.colwise().mean();
  const Eigen::MatrixXd centered = x.rowwise() - basis.mean;
  const Eigen::MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(n - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  if (eig.info() != Eigen::Success) throw Error(ErrorCode::kNoConvergence, "eigensolver failed");
  const Eigen::VectorXd& values = eig.eigenvalues();  // ascending
  const double top = std::max(values(d - 1), 0.0);
  const double floor = std::max(1e-12 * top, 1e-300);
  basis.components.resize(d, k);
  basis.explained_variance.resize(k);
  for (int c = 0; c < k; ++c) {
    const Eigen::Index src = d - 1 - c;
    if (values(src) <= floor) {
      throw Error(ErrorCode::kRankDeficient, "k=" + std::to_string(k) + " exceeds the data rank");
    }
    Eigen::VectorXd v = eig.eigenvectors().col(src);
    Eigen::Index arg;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0.0) v = -v;
    basis.components.col(c) = v;
    basis.explained_variance(c) = values(src);
  }
  return basis;
}

// ---------------------------------------------------------------------------
// ProbeModel

void ProbeModel::BuildNetwork() {
  const Eigen::Index width = pca_ ? pca_->components.cols() : input_dim_;
  switch (spec_.arch) {
    case ProbeArch::kLinear:
    case ProbeArch::kLinearPca:
      network_ = std::make_shared<nets::MlpNetwork>(width, std::vector<int>{});
      break;
    case ProbeArch::kMlp:
      network_ = std::make_shared<nets::MlpNetwork>(width, spec_.mlp_hidden);
      break;
    case ProbeArch::kSeqTransformer: {
      nets::TransformerShape shape;
      shape.input_dim = width;
      shape.d_model = spec_.tf_dmodel;
      shape.heads = spec_.tf_heads;
      shape.layers = spec_.tf_layers;
      shape.ffn = spec_.ffn_width();
      network_ = std::make_shared<nets::TransformerNetwork>(shape);
      break;
    }
  }
}

Eigen::MatrixXd ProbeModel::Prepare(const Eigen::MatrixXd& x) const {
  if (x.cols() != input_dim_) {
    throw Error(ErrorCode::kDimensionMismatch, "probe expects " + std::to_string(input_dim_) +
                                                   " features, got " + std::to_string(x.cols()));
  }
  Eigen::MatrixXd z = pca_ ? pca_->Project(x) : x;
  z = (z.rowwise() - input_mean_).array().rowwise() / input_scale_.array();
  return z;
}

double ProbeModel::PredictCorrectness(const Eigen::VectorXd& row) const {
  if (spec_.consumes_sequences()) {
    throw Error(ErrorCode::kInvalidArgument, "seq_transformer probes take token sequences");
  }
  const Eigen::MatrixXd x = Prepare(row.transpose());
  return network_->Predict(params_, nets::Inputs{&x, nullptr}, 0);
}

double ProbeModel::PredictCorrectnessSequence(const Eigen::MatrixXd& tokens) const {
  if (!spec_.consumes_sequences()) {
    throw Error(ErrorCode::kInvalidArgument, "only seq_transformer probes take token sequences");
  }
  if (tokens.rows() < 1) throw Error(ErrorCode::kEmptySequence, "empty token sequence");
  const std::vector<Eigen::MatrixXd> seq{Prepare(tokens)};
  return network_->Predict(params_, nets::Inputs{nullptr, &seq}, 0);
}

namespace {
double ToUncertainty(double predicted) {
  double u = 1.0 - predicted;
  if (std::isnan(u)) u = 2.0;
  return std::clamp(u, -1.0, 2.0);
}
}  // namespace

double ProbeModel::PredictUncertainty(const Eigen::VectorXd& row) const {
  return ToUncertainty(PredictCorrectness(row));
}

double ProbeModel::PredictUncertaintySequence(const Eigen::MatrixXd& tokens) const {
  return ToUncertainty(PredictCorrectnessSequence(tokens));
}

std::vector<double> ProbeModel::PredictUncertainty(const Eigen::MatrixXd& rows) const {
  if (spec_.consumes_sequences()) {
    throw Error(ErrorCode::kInvalidArgument, "seq_transformer probes take token sequences");
  }
  const Eigen::MatrixXd x = Prepare(rows);
  const nets::Inputs in{&x, nullptr};
  std::vector<double> out(static_cast<size_t>(x.rows()));
  for (size_t i = 0; i < out.size(); ++i) out[i] = ToUncertainty(network_->Predict(params_, in, i));
  return out;
}

std::vector<double> ProbeModel::PredictUncertainty(
    const std::vector<Eigen::MatrixXd>& sequences) const {
  std::vector<double> out;
  out.reserve(sequences.size());
  for (const auto& s : sequences) out.push_back(PredictUncertaintySequence(s));
  return out;
}

// ---------------------------------------------------------------------------
// Training

ProbeModel FitProbeImpl(const ProbeSpec& spec, const Eigen::MatrixXd* rows,
                        const std::vector<Eigen::MatrixXd>* sequences,
                        std::span<const double> targets) {
  spec.Validate();
  const size_t n = rows != nullptr ? static_cast<size_t>(rows->rows()) : sequences->size();
  if (targets.size() != n) {
    throw Error(ErrorCode::kLengthMismatch, std::to_string(n) + " inputs but " +
                                                std::to_string(targets.size()) + " targets");
  }
  if (n < static_cast<size_t>(kMinSamples)) {
    throw Error(ErrorCode::kTooFewSamples, "need at least 20 samples, got " + std::to_string(n));
  }
  for (double t : targets) {
    if (!std::isfinite(t)) throw Error(ErrorCode::kNonFiniteInput, "non-finite target");
  }
  if (std::all_of(targets.begin(), targets.end(), [&](double t) { return t == targets[0]; })) {
    throw Error(ErrorCode::kDegenerateTarget, "all targets are equal");
  }

  ProbeModel model;
  model.spec_ = spec;
  model.target_calibration_.assign(targets.begin(), targets.end());
  std::sort(model.target_calibration_.begin(), model.target_calibration_.end());

  // Stack everything the standardizer and PCA need to see.
  Eigen::MatrixXd stacked;
  if (rows != nullptr) {
    stacked = *rows;
  } else {
    Eigen::Index total = 0;
    const Eigen::Index d = sequences->front().cols();
    for (const auto& s : *sequences) {
      if (s.rows() < 1) throw Error(ErrorCode::kEmptySequence, "empty token sequence");
      if (s.cols() != d) throw Error(ErrorCode::kDimensionMismatch, "token sequences differ in width");
      total += s.rows();
    }
    stacked.resize(total, d);
    Eigen::Index r = 0;
    for (const auto& s : *sequences) {
      stacked.middleRows(r, s.rows()) = s;
      r += s.rows();
    }
  }
  if (stacked.cols() < 1) throw Error(ErrorCode::kDimensionMismatch, "zero-width inputs");
  CheckFinite(stacked, "probe inputs");
  model.input_dim_ = stacked.cols();

  if (spec.arch == ProbeArch::kLinearPca) {
    const Eigen::Index k_max = std::min<Eigen::Index>(stacked.cols(), stacked.rows() - 1);
    const int k = static_cast<int>(std::min<Eigen::Index>(spec.pca_components, k_max));
    model.pca_ = FitPca(stacked, k);
    stacked = model.pca_->Project(stacked);
  }
  model.input_mean_ = stacked.colwise().mean();
  const Eigen::RowVectorXd var =
      (stacked.rowwise() - model.input_mean_).array().square().colwise().mean();
  model.input_scale_ = var.array().sqrt().unaryExpr([](double s) { return s > 1e-12 ? s : 1.0; });
  model.BuildNetwork();

  // Prepared inputs.
  Eigen::MatrixXd x_rows;
  std::vector<Eigen::MatrixXd> x_seqs;
  nets::Inputs inputs;
  if (rows != nullptr) {
    x_rows = model.Prepare(*rows);
    inputs.rows = &x_rows;
  } else {
    x_seqs.reserve(n);
    for (const auto& s : *sequences) x_seqs.push_back(model.Prepare(s));
    inputs.sequences = &x_seqs;
  }

  const std::vector<double> y = RankNormalize(targets, RankNormalizer::Batch());

  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  Rng split_rng(DeriveSeed(spec.seed, "split"));
  split_rng.Shuffle(order);
  size_t n_val = static_cast<size_t>(std::llround(spec.val_fraction * static_cast<double>(n)));
  if (spec.val_fraction > 0.0) n_val = std::max<size_t>(n_val, 1);
  std::vector<size_t> val(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<size_t> train(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
  std::sort(val.begin(), val.end());
  std::sort(train.begin(), train.end());

  const nets::Network& net = *model.network_;
  std::vector<double> params(net.num_params());
  Rng init_rng(DeriveSeed(spec.seed, "init"));
  net.Init(params, init_rng);
  Rng shuffle_rng(DeriveSeed(spec.seed, "shuffle"));

  Adam adam(params.size(), spec.lr);
  std::vector<double> grad(params.size());
  std::vector<double> best = params;
  double best_val = val.empty() ? 0.0 : net.Loss(params, inputs, val, y);
  int stale = 0;
  int epoch = 0;
  const size_t bsz = static_cast<size_t>(spec.batch);
  for (epoch = 1; epoch <= spec.epochs; ++epoch) {
    shuffle_rng.Shuffle(train);
    for (size_t start = 0; start < train.size(); start += bsz) {
      const size_t len = std::min(bsz, train.size() - start);
      const std::span<const size_t> batch(train.data() + start, len);
      const double loss = net.LossAndGradient(params, inputs, batch, y, grad);
      if (!std::isfinite(loss)) {
        throw Error(ErrorCode::kNonFiniteLoss, "loss became non-finite in epoch " + std::to_string(epoch));
      }
      adam.Step(params, grad);
    }
    if (val.empty()) continue;
    const double v = net.Loss(params, inputs, val, y);
    if (!std::isfinite(v)) {
      throw Error(ErrorCode::kNonFiniteLoss, "validation loss became non-finite in epoch " + std::to_string(epoch));
    }
    if (v < best_val) {
      best_val = v;
      best = params;
      stale = 0;
    } else if (++stale >= spec.patience) {
      break;
    }
  }
  model.epochs_run_ = std::min(epoch, spec.epochs);
  model.params_ = val.empty() ? params : best;
  return model;
}

ProbeModel FitProbe(const ProbeSpec& spec, const Eigen::MatrixXd& inputs,
                    std::span<const double> targets) {
  if (spec.consumes_sequences()) {
    throw Error(ErrorCode::kInvalidArgument, "seq_transformer probes take token sequences");
  }
  return FitProbeImpl(spec, &inputs, nullptr, targets);
}

ProbeModel FitProbe(const ProbeSpec& spec, const std::vector<Eigen::MatrixXd>& sequences,
                    std::span<const double> targets) {
  if (!spec.consumes_sequences()) {
    throw Error(ErrorCode::kInvalidArgument, "only seq_transformer probes take token sequences");
  }
  if (sequences.empty()) throw Error(ErrorCode::kTooFewSamples, "no sequences");
  return FitProbeImpl(spec, nullptr, &sequences, targets);
}

// ---------------------------------------------------------------------------
// Persistence

void SaveProbe(const std::filesystem::path& path, const ProbeModel& model) {
  nlohmann::json layout = nlohmann::json::array();
  for (const auto& b : model.network().layout().blocks()) {
    layout.push_back({{"name", b.name}, {"rows", b.rows}, {"cols", b.cols}, {"offset", b.offset}});
  }
  nlohmann::json header = {{"format", "uqp-probe-1"},
                           {"spec", ToJson(model.spec_)},
                           {"input_dim", model.input_dim_},
                           {"input_kind", model.input_kind_},
                           {"epochs_run", model.epochs_run_},
                           {"layout", layout}};
  const auto n_params = static_cast<int64_t>(model.params_.size());
  std::vector<NamedArray> arrays{
      {"parameters", {n_params}, model.params_},
      {"input_mean", {model.input_mean_.size()}, ToVector(model.input_mean_)},
      {"input_scale", {model.input_scale_.size()}, ToVector(model.input_scale_)},
      {"target_calibration",
       {static_cast<int64_t>(model.target_calibration_.size())},
       model.target_calibration_}};
  if (model.pca_) {
    arrays.push_back({"pca_mean", {model.pca_->mean.size()}, ToVector(model.pca_->mean)});
    arrays.push_back(MatrixArray("pca_components", model.pca_->components));
    arrays.push_back({"pca_variance",
                      {model.pca_->explained_variance.size()},
                      ToVector(model.pca_->explained_variance)});
  }
  WriteContainer(path, header, arrays);
}

ProbeModel LoadProbe(const std::filesystem::path& path) {
  const Container c = ReadContainer(path);
  if (c.header.value("format", std::string()) != "uqp-probe-1") {
    throw Error(ErrorCode::kMalformedManifest, path.string() + ": not a probe file");
  }
  ProbeModel model;
  try {
    model.spec_ = ProbeSpecFromJson(c.header.at("spec"));
    model.input_dim_ = c.header.at("input_dim").get<Eigen::Index>();
    model.input_kind_ = c.header.value("input_kind", std::string());
    model.epochs_run_ = c.header.value("epochs_run", 0);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kMalformedManifest, path.string() + ": " + e.what());
  }
  auto row = [&](const std::string& name) {
    const auto& v = c.at(name).values;
    return Eigen::RowVectorXd(Eigen::Map<const Eigen::RowVectorXd>(v.data(), static_cast<Eigen::Index>(v.size())));
  };
  model.input_mean_ = row("input_mean");
  model.input_scale_ = row("input_scale");
  model.target_calibration_ = c.at("target_calibration").values;
  if (c.arrays.count("pca_components") != 0) {
    PcaBasis basis;
    basis.mean = row("pca_mean");
    basis.components = ArrayMatrix(c.at("pca_components"));
    basis.explained_variance = row("pca_variance").transpose();
    model.pca_ = std::move(basis);
  }
  model.BuildNetwork();
  model.params_ = c.at("parameters").values;
  if (model.params_.size() != model.network_->num_params()) {
    throw Error(ErrorCode::kMalformedManifest, path.string() + ": parameter count does not match layout");
  }
  const Eigen::Index width = model.pca_ ? model.pca_->components.cols() : model.input_dim_;
  if (model.input_mean_.size() != width || model.input_scale_.size() != width) {
    throw Error(ErrorCode::kMalformedManifest, path.string() + ": standardizer size mismatch");
  }
  return model;
}

}  // namespace uqp
