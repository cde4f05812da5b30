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

#include "uqp/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include <Eigen/Dense>

#include "uqp/error.hpp"
#include "uqp/util.hpp"

namespace uqp {
namespace {

// Standard deviation of Beta(2, 2).
const double kBetaSd = std::sqrt(1.0 / 20.0);

double Sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Median of three uniforms is Beta(2, 2).
double DrawBeta22(Rng& rng) {
  double u[3] = {rng.Uniform(), rng.Uniform(), rng.Uniform()};
  std::sort(u, u + 3);
  return u[1];
}

Eigen::MatrixXd GaussianMatrix(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = rng.Normal();
  }
  return m;
}

// First `cols` columns of a Haar-distributed orthogonal matrix.
Eigen::MatrixXd RandomOrthonormal(Rng& rng, Eigen::Index dim, Eigen::Index cols) {
  const Eigen::MatrixXd g = GaussianMatrix(rng, dim, dim);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(dim, dim);
  const Eigen::MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < dim; ++j) {
    if (r(j, j) < 0.0) q.col(j) = -q.col(j);
  }
  return q.leftCols(cols);
}

struct Geometry {
  std::vector<Eigen::VectorXd> signal_dirs;  // per dataset, unit
  std::vector<Eigen::VectorXd> offsets;      // per dataset
  std::vector<Eigen::MatrixXd> layer_rot;    // per layer, orthogonal
  std::vector<double> layer_gain;
  std::vector<Eigen::VectorXd> head_dirs;    // attention head sensitivity per layer, [H]
};

Geometry BuildGeometry(const SynthScenario& s) {
  Rng rng(DeriveSeed(s.seed, "geometry"));
  Geometry g;
  const Eigen::Index d = s.dims;
  const Eigen::MatrixXd axes = RandomOrthonormal(rng, d, s.n_datasets);
  const double c = std::cos(s.shift_angle);
  const double sn = std::sin(s.shift_angle);
  g.signal_dirs.push_back(axes.col(0));
  for (int k = 1; k < s.n_datasets; ++k) {
    Eigen::VectorXd u = c * g.signal_dirs.back() + sn * axes.col(k);
    g.signal_dirs.push_back(u.normalized());
  }
  for (int k = 0; k < s.n_datasets; ++k) {
    Eigen::VectorXd m(d);
    for (Eigen::Index i = 0; i < d; ++i) m(i) = rng.Normal();
    const double angle = std::min(s.shift_angle * k, std::numbers::pi / 2.0);
    g.offsets.push_back(std::sin(angle) * s.mean_shift * m.normalized());
  }
  for (int l = 0; l < s.n_layers; ++l) {
    g.layer_rot.push_back(RandomOrthonormal(rng, d, d));
    g.layer_gain.push_back(0.4 + 0.6 * std::sin(std::numbers::pi * (l + 0.5) / s.n_layers));
    Eigen::VectorXd h(s.attn_heads);
    for (int i = 0; i < s.attn_heads; ++i) h(i) = rng.Normal();
    g.head_dirs.push_back(h);
  }
  return g;
}

int DrawInRange(Rng& rng, int lo, int hi) {
  return lo + static_cast<int>(rng.Index(static_cast<uint64_t>(hi - lo + 1)));
}

Tensor ToTensor(const Eigen::MatrixXd& m) {
  Tensor t;
  t.shape = {m.rows(), m.cols()};
  t.data.reserve(static_cast<size_t>(m.size()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) t.data.push_back(static_cast<float>(m(i, j)));
  }
  return t;
}

}  // namespace

void SynthScenario::Validate() const {
  auto fail = [](const std::string& msg) { throw Error(ErrorCode::kInvalidArgument, msg); };
  if (n_datasets < 1 || n_per_dataset < 1 || dims < 1 || n_layers < 1 || attn_heads < 1) {
    fail("synth counts must be >= 1");
  }
  if (dims < n_datasets) fail("dims must be >= n_datasets");
  if (!(shift_angle >= 0.0 && shift_angle <= std::numbers::pi / 2.0 + 1e-12)) {
    fail("shift_angle must lie in [0, pi/2]");
  }
  if (!(signal_to_noise > 0.0)) fail("signal_to_noise must be positive");
  if (!(prob_signal_corr >= 0.0 && prob_signal_corr <= 1.0)) fail("prob_signal_corr must lie in [0, 1]");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) fail("train_fraction must lie in (0, 1)");
  if (context_min < 1 || context_max < context_min) fail("bad context length range");
  if (short_response_min < 1 || short_response_max < short_response_min) fail("bad short response range");
  if (long_response_min < 1 || long_response_max < long_response_min) fail("bad long response range");
  if (!(token_signal_spread >= 0.0 && token_signal_spread <= 1.0)) fail("token_signal_spread must lie in [0, 1]");
  if (!dataset_names.empty() && static_cast<int>(dataset_names.size()) != n_datasets) {
    fail("dataset_names must list n_datasets names");
  }
}

std::string SynthScenario::DatasetName(int k) const {
  if (!dataset_names.empty()) return dataset_names[static_cast<size_t>(k)];
  return "d" + std::to_string(k);
}

Task SynthScenario::DatasetTask(int k) const {
  return k < (n_datasets + 1) / 2 ? Task::kQa : Task::kSummarisation;
}

nlohmann::json ToJson(const SynthScenario& s) {
  return {{"n_datasets", s.n_datasets},
          {"n_per_dataset", s.n_per_dataset},
          {"dims", s.dims},
          {"n_layers", s.n_layers},
          {"shift_angle", s.shift_angle},
          {"signal_to_noise", s.signal_to_noise},
          {"prob_signal_corr", s.prob_signal_corr},
          {"seed", s.seed},
          {"train_fraction", s.train_fraction},
          {"context_min", s.context_min},
          {"context_max", s.context_max},
          {"short_response_min", s.short_response_min},
          {"short_response_max", s.short_response_max},
          {"long_response_min", s.long_response_min},
          {"long_response_max", s.long_response_max},
          {"token_signal_spread", s.token_signal_spread},
          {"ctx_signal", s.ctx_signal},
          {"mean_shift", s.mean_shift},
          {"attn_heads", s.attn_heads},
          {"dataset_names", s.dataset_names}};
}

SynthScenario SynthScenarioFromJson(const nlohmann::json& j) {
  if (!j.is_object()) throw Error(ErrorCode::kInvalidArgument, "scenario must be a JSON object");
  SynthScenario s;
  try {
    s.n_datasets = j.value("n_datasets", s.n_datasets);
    s.n_per_dataset = j.value("n_per_dataset", s.n_per_dataset);
    s.dims = j.value("dims", s.dims);
    s.n_layers = j.value("n_layers", s.n_layers);
    s.shift_angle = j.value("shift_angle", s.shift_angle);
    s.signal_to_noise = j.value("signal_to_noise", s.signal_to_noise);
    s.prob_signal_corr = j.value("prob_signal_corr", s.prob_signal_corr);
    s.seed = j.value("seed", s.seed);
    s.train_fraction = j.value("train_fraction", s.train_fraction);
    s.context_min = j.value("context_min", s.context_min);
    s.context_max = j.value("context_max", s.context_max);
    s.short_response_min = j.value("short_response_min", s.short_response_min);
    s.short_response_max = j.value("short_response_max", s.short_response_max);
    s.long_response_min = j.value("long_response_min", s.long_response_min);
    s.long_response_max = j.value("long_response_max", s.long_response_max);
    s.token_signal_spread = j.value("token_signal_spread", s.token_signal_spread);
    s.ctx_signal = j.value("ctx_signal", s.ctx_signal);
    s.mean_shift = j.value("mean_shift", s.mean_shift);
    s.attn_heads = j.value("attn_heads", s.attn_heads);
    s.dataset_names = j.value("dataset_names", s.dataset_names);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, std::string("scenario: ") + e.what());
  }
  s.Validate();
  return s;
}

FeatureStore GenerateCorpus(const SynthScenario& s, const std::filesystem::path& out) {
  s.Validate();
  const Geometry geo = BuildGeometry(s);
  FeatureStore store = FeatureStore::Create(out);
  const Eigen::Index d = s.dims;
  const double noise = 1.0 / s.signal_to_noise;
  const double rho = s.prob_signal_corr;
  const Form form = s.form();
  const int resp_lo = form == Form::kShort ? s.short_response_min : s.long_response_min;
  const int resp_hi = form == Form::kShort ? s.short_response_max : s.long_response_max;
  const int n_train = std::clamp(
      static_cast<int>(std::lround(s.train_fraction * s.n_per_dataset)), 0, s.n_per_dataset);

  for (int k = 0; k < s.n_datasets; ++k) {
    const std::string name = s.DatasetName(k);
    for (int i = 0; i < s.n_per_dataset; ++i) {
      char id[32];
      std::snprintf(id, sizeof(id), "-%05d", i);
      Rng rng(DeriveSeed(s.seed, name + id));

      FeatureRecord rec;
      rec.instance_id = name + id;
      rec.dataset = name;
      rec.task = s.DatasetTask(k);
      rec.form = form;
      rec.split = i < n_train ? Split::kTrain : Split::kTest;
      const double q = DrawBeta22(rng);
      rec.correctness = q;
      const double z = (q - 0.5) / kBetaSd;
      const int n_ctx = DrawInRange(rng, s.context_min, s.context_max);
      const int n_resp = DrawInRange(rng, resp_lo, resp_hi);
      rec.n_context_tokens = n_ctx;
      rec.n_response_tokens = n_resp;
      const int n_tok = n_ctx + n_resp;

      std::vector<double> token_gain(static_cast<size_t>(n_tok), 0.0);
      token_gain[static_cast<size_t>(n_ctx - 1)] = s.ctx_signal;
      for (int t = n_ctx; t < n_tok; ++t) {
        token_gain[static_cast<size_t>(t)] =
            rng.Uniform(1.0 - s.token_signal_spread, 1.0 + s.token_signal_spread);
      }

      std::vector<Tensor> tensors;
      for (int l = 0; l < s.n_layers; ++l) {
        const Eigen::VectorXd dir = geo.layer_rot[l] * geo.signal_dirs[k];
        const Eigen::VectorXd offset = geo.layer_rot[l] * geo.offsets[k];
        const double gain = geo.layer_gain[l];
        Eigen::MatrixXd h(n_tok, d);
        for (int t = 0; t < n_tok; ++t) {
          for (Eigen::Index c = 0; c < d; ++c) h(t, c) = noise * rng.Normal();
          h.row(t) += (offset + token_gain[static_cast<size_t>(t)] * gain * z * dir).transpose();
        }
        rec.features.push_back({FeatureKind::kHidden, l, TokenScope::kFull, {n_tok, d}, 0, 0});
        tensors.push_back(ToTensor(h));
      }
      const FeatureKind attn_kinds[] = {FeatureKind::kAttnPrev, FeatureKind::kAttnPrev2,
                                        FeatureKind::kLookback};
      for (int l = 0; l < s.n_layers; ++l) {
        const double weak = 0.3 * geo.layer_gain[l];
        for (int a = 0; a < 3; ++a) {
          const double base = a == 2 ? -0.5 : 0.5 - 0.5 * a;
          Eigen::MatrixXd m(n_resp, s.attn_heads);
          for (int t = 0; t < n_resp; ++t) {
            for (int hd = 0; hd < s.attn_heads; ++hd) {
              const double sign = a == 2 ? 1.0 : geo.head_dirs[l](hd);
              m(t, hd) = Sigmoid(base + weak * sign * z + 0.5 * rng.Normal());
            }
          }
          rec.features.push_back({attn_kinds[a], l, TokenScope::kResponse, {n_resp, s.attn_heads}, 0, 0});
          tensors.push_back(ToTensor(m));
        }
      }
      const double zl = rho * z + std::sqrt(1.0 - rho * rho) * rng.Normal();
      const double m = std::exp(std::log(0.3) - 0.7 * zl);
      Tensor lp;
      lp.shape = {n_resp};
      for (int t = 0; t < n_resp; ++t) {
        lp.data.push_back(static_cast<float>(-m * std::exp(0.5 * rng.Normal())));
      }
      rec.features.push_back({FeatureKind::kTokenLogprob, std::nullopt, TokenScope::kResponse, {n_resp}, 0, 0});
      tensors.push_back(std::move(lp));
      store.Append(std::move(rec), tensors);
    }
  }
  return store;
}

}  // namespace uqp
