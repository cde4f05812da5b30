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

// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <numbers>
#include <numeric>
#include <string>

#include "oracles.hpp"
#include "test_helpers.hpp"
#include "uqp/density.hpp"
#include "uqp/error.hpp"
#include "uqp/feature_store.hpp"
#include "uqp/features.hpp"
#include "uqp/hybrid.hpp"
#include "uqp/metrics.hpp"
#include "uqp/pls.hpp"
#include "uqp/probe_nets.hpp"
#include "uqp/probes.hpp"
#include "uqp/runner.hpp"
#include "uqp/synth.hpp"
#include "uqp/util.hpp"

namespace uqp {
namespace {

struct Verdict {
  bool ok = true;
  std::string detail;
};

std::string Fmt(const char* fmt, double a, double b = 0.0, double c = 0.0, double d = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), fmt, a, b, c, d);
  return buf;
}

Eigen::MatrixXd Gaussian(Rng& rng, Eigen::Index n, Eigen::Index d) {
  Eigen::MatrixXd x(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) x(i, j) = rng.Normal();
  }
  return x;
}

Eigen::MatrixXd Mixed(Rng& rng, Eigen::Index n, Eigen::Index d) {
  const Eigen::MatrixXd a = Gaussian(rng, d, d) + 0.5 * Eigen::MatrixXd::Identity(d, d);
  Eigen::RowVectorXd shift(d);
  for (Eigen::Index j = 0; j < d; ++j) shift(j) = rng.Uniform(-5, 5);
  return (Gaussian(rng, n, d) * a).rowwise() + shift;
}

Verdict MetricExactness() {
  Rng rng(1);
  std::vector<double> q(500), u(500);
  for (auto& x : q) x = rng.Uniform();
  for (auto& x : u) x = rng.Normal();
  std::vector<double> oracle_u(q.size()), constant(q.size(), 0.3);
  for (size_t i = 0; i < q.size(); ++i) oracle_u[i] = 1.0 - q[i];
  const double p_oracle = PredictionRejectionRatio(oracle_u, q);
  const double p_const = PredictionRejectionRatio(constant, q);
  Verdict v;
  v.ok = std::abs(p_oracle - 1.0) <= 1e-9 && std::abs(p_const) <= 1e-9;
  const double base = PredictionRejectionRatio(u, q);
  int equal = 0;
  for (int t = 0; t < 20; ++t) {
    const double a = rng.Uniform(0.1, 5.0), b = rng.Uniform(-3.0, 3.0);
    std::vector<double> f(u.size());
    for (size_t i = 0; i < u.size(); ++i) {
      switch (t % 4) {
        case 0: f[i] = a * u[i] + b; break;
        case 1: f[i] = std::exp(a * 0.2 * u[i]); break;
        case 2: f[i] = u[i] * u[i] * u[i] + b; break;
        default: f[i] = std::atan(u[i] / a); break;
      }
    }
    equal += PredictionRejectionRatio(f, q) == base;
  }
  v.ok = v.ok && equal == 20;
  v.detail = Fmt("oracle %.12f, constant %.1e, %g/20 transforms bit-equal", p_oracle, p_const, equal);
  return v;
}

Verdict RejectionCurveOracle() {
  Rng rng(2);
  double worst = 0.0;
  int cases = 0;
  for (size_t n = 2; n <= 7; ++n) {
    for (int trial = 0; trial < 40; ++trial) {
      std::vector<double> u(n), q(n);
      for (auto& x : u) x = static_cast<double>(rng.Index(trial % 2 ? 3 : n));
      for (auto& x : q) x = rng.Uniform();
      const auto curve = ComputeRejectionCurve(u, q);
      const auto expect = oracle::RejectionCurveByEnumeration(u, q);
      for (size_t k = 0; k <= n; ++k) worst = std::max(worst, std::abs(curve.retained_means[k] - expect[k]));
      ++cases;
    }
  }
  return {worst <= 1e-12, Fmt("%g cases N<=7, max deviation %.2e (tol 1e-12)", cases, worst)};
}

Verdict MahalanobisOracle() {
  Rng rng(3);
  double worst_md = 0.0, worst_rmd = 0.0;
  for (int t = 0; t < 1000; ++t) {
    const auto d = static_cast<Eigen::Index>(1 + rng.Index(8));
    const auto n = d + 2 + static_cast<Eigen::Index>(rng.Index(40));
    const auto a = Mixed(rng, n, d), b = Mixed(rng, n, d);
    const auto ga = oracle::FitExplicit(a), gb = oracle::FitExplicit(b);
    const auto sa = FitGaussian(a), sb = FitGaussian(b);
    const Eigen::VectorXd x = Mixed(rng, 1, d).row(0).transpose();
    worst_md = std::max(worst_md, std::abs(Mahalanobis(sa, x) - std::sqrt(oracle::QuadForm(ga, x))));
    worst_rmd = std::max(worst_rmd, std::abs(RelativeMahalanobis(sa, sb, x) -
                                             oracle::QuadFormDifference(ga, gb, x)));
  }
  return {worst_md <= 1e-8 && worst_rmd <= 1e-8,
          Fmt("1000 cases D<=8, md %.2e, rmd %.2e (tol 1e-8)", worst_md, worst_rmd)};
}

Verdict HboContract() {
  bool grid = true;
  for (int i = 0; i <= 100; ++i) {
    const double r = (i + 1) / 101.0;
    const auto w = HboWeights(r);
    const double usv = r <= 0.5 ? r + 0.5 : 1.0;
    grid = grid && w.w_usv == usv && w.w_sv == 1.0 - usv;
  }
  Rng rng(4);
  bool backoff = true;
  for (int t = 0; t < 50; ++t) {
    const size_t n = 60;
    std::vector<double> sv(n), msp(n), q(n), r(n);
    for (size_t i = 0; i < n; ++i) {
      sv[i] = rng.Uniform();
      msp[i] = rng.Normal();
      q[i] = rng.Uniform();
      r[i] = rng.Uniform(0.5 + 1e-9, 1.0);
    }
    const auto sv_n = RankNormalize(sv, RankNormalizer::Batch());
    const auto msp_n = RankNormalize(msp, RankNormalizer::Batch());
    std::vector<double> hbo(n);
    for (size_t i = 0; i < n; ++i) hbo[i] = HboScore(sv_n[i], msp_n[i], r[i]);
    backoff = backoff && PredictionRejectionRatio(hbo, q) == PredictionRejectionRatio(msp, q);
  }
  const auto w0 = HboWeights(1e-12);
  const double even = std::max(std::abs(w0.w_sv - 0.5), std::abs(w0.w_usv - 0.5));
  return {grid && backoff && even <= 1e-12,
          std::string(grid ? "grid exact" : "grid off") + ", " + (backoff ? "R>0.5 PRR equal" : "R>0.5 PRR differs") +
              Fmt(", R=1e-12 weights within %.1e of 0.5", even)};
}

Verdict OodRankCalibration() {
  Rng rng(5);
  const Eigen::Index d = 4;
  const auto ref = BuildOodReference(Gaussian(rng, 100000, d));
  std::vector<double> r;
  for (int i = 0; i < 10000; ++i) r.push_back(OodRank(ref, Gaussian(rng, 1, d).row(0).transpose()));
  const double ks = oracle::KsStatistic(r, [](double x) { return std::clamp(x, 0.0, 1.0); });
  const double p = oracle::KsPValue(ks, r.size());
  return {p > 0.01, Fmt("KS D=%.4f p=%.3f on 1e4 draws (need p>0.01)", ks, p)};
}

double GradientError(const nets::Network& net, const nets::Inputs& in, Rng& rng) {
  std::vector<double> params(net.num_params());
  net.Init(params, rng);
  for (auto& p : params) p += 0.1 * rng.Normal();
  std::vector<size_t> batch(in.count());
  std::iota(batch.begin(), batch.end(), size_t{0});
  std::vector<double> targets(in.count());
  for (auto& t : targets) t = rng.Uniform();
  std::vector<double> grad(params.size());
  net.LossAndGradient(params, in, batch, targets, grad);
  const auto numeric = oracle::NumericGradient(
      [&](const std::vector<double>& p) { return net.Loss(p, in, batch, targets); }, params, 1e-5);
  double worst = 0.0;
  for (size_t i = 0; i < params.size(); ++i) {
    const double denom = std::abs(grad[i]) + std::abs(numeric[i]);
    if (denom < 1e-8) continue;
    worst = std::max(worst, std::abs(grad[i] - numeric[i]) / denom);
  }
  return worst;
}

Verdict ProbeSoundness() {
  Rng rng(6);
  const auto x = Gaussian(rng, 12, 6);
  std::vector<Eigen::MatrixXd> seqs;
  for (int i = 0; i < 10; ++i) seqs.push_back(Gaussian(rng, 1 + i % 5, 3));
  const double e_lin = GradientError(nets::MlpNetwork(6, {}), {&x, nullptr}, rng);
  const double e_mlp = GradientError(nets::MlpNetwork(6, {8, 6, 4}), {&x, nullptr}, rng);
  double e_tf = 0.0;
  for (int layers : {1, 2}) {
    e_tf = std::max(e_tf, GradientError(nets::TransformerNetwork({3, 8, 2, layers, 12}), {nullptr, &seqs}, rng));
  }
  const auto big = Gaussian(rng, 200, 6);
  std::vector<double> y(200);
  for (int i = 0; i < 200; ++i) y[static_cast<size_t>(i)] = 1.0 / (1.0 + std::exp(-big.row(i).sum()));
  bool same = true;
  for (auto arch : {ProbeArch::kLinear, ProbeArch::kLinearPca, ProbeArch::kMlp}) {
    ProbeSpec s;
    s.arch = arch;
    s.mlp_hidden = {16, 8};
    s.pca_components = 4;
    s.epochs = 10;
    s.seed = 3;
    same = same && FitProbe(s, big, y).parameters() == FitProbe(s, big, y).parameters();
  }
  ProbeSpec ts;
  ts.arch = ProbeArch::kSeqTransformer;
  ts.tf_dmodel = 8;
  ts.tf_heads = 2;
  ts.epochs = 3;
  std::vector<Eigen::MatrixXd> train_seqs;
  std::vector<double> ys;
  for (int i = 0; i < 40; ++i) {
    train_seqs.push_back(Gaussian(rng, 1 + i % 6, 3));
    ys.push_back(1.0 / (1.0 + std::exp(-train_seqs.back().col(0).mean())));
  }
  same = same && FitProbe(ts, train_seqs, ys).parameters() == FitProbe(ts, train_seqs, ys).parameters();
  const double worst = std::max({e_lin, e_mlp, e_tf});
  return {worst < 1e-4 && same, Fmt("relative grad error linear %.1e mlp %.1e transformer %.1e (tol 1e-4), ", e_lin,
                                    e_mlp, e_tf) +
                                    std::string(same ? "fixed-seed fits identical" : "fixed-seed fits differ")};
}

Verdict SyntheticRobustness(const testing::TempDir& root) {
  std::map<std::string, std::vector<double>> acc;
  for (double rho : {0.9, 0.1}) {
    for (uint64_t seed = 0; seed < 10; ++seed) {
      SynthScenario s;
      s.dims = 32;
      s.n_datasets = 5;
      s.n_per_dataset = 500;
      s.shift_angle = std::numbers::pi / 4;
      s.prob_signal_corr = rho;
      s.seed = seed;
      const auto dir = root / ("synth-" + std::to_string(rho) + "-" + std::to_string(seed));
      GenerateCorpus(s, dir);
      const auto stores = StoreSet::Open({dir.string()});
      std::vector<ExperimentConfig> cells;
      if (rho > 0.5) {
        nlohmann::json cfg = {{"stores", {dir.string()}},
                              {"train_budget", 240},
                              {"seeds", {seed}},
                              {"matrix", {{"settings", {"ID", "LOO", "DiffTask"}}, {"methods", {"saplma", "msp"}}}}};
        cells = ExpandConfig(cfg, stores->inventory());
        cfg["aggregation"] = "last_context";
        cfg["matrix"]["settings"] = {"LOO", "DiffTask"};
        cfg["matrix"]["methods"] = {"saplma"};
        for (auto& c : ExpandConfig(cfg, stores->inventory())) cells.push_back(std::move(c));
      } else {
        const nlohmann::json cfg = {{"stores", {dir.string()}},
                                    {"train_budget", 240},
                                    {"seeds", {seed}},
                                    {"matrix", {{"settings", {"ID"}}, {"methods", {"msp"}}}}};
        cells = ExpandConfig(cfg, stores->inventory());
      }
      const auto results = RunMatrix(cells, *stores, {"", 1});
      for (size_t i = 0; i < results.size(); ++i) {
        const auto& r = results[i];
        if (!r.ok) return {false, r.method + " " + r.setting + " failed: " + r.error};
        std::string key = r.method;
        if (r.method == "msp") {
          key += rho > 0.5 ? "/short" : "/long";
        } else {
          key += std::string("/") + std::string(ToString(cells[i].aggregation.variant)) +
                 (r.setting == "ID" ? "/ID" : "/" + r.setting);
        }
        acc[key].push_back(r.prr);
      }
      std::filesystem::remove_all(dir);
    }
  }
  auto mean = [&](const std::string& k) {
    const auto& v = acc.at(k);
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  };
  const double id = mean("saplma/mean_response/ID");
  const double loo = mean("saplma/mean_response/LOO");
  const double diff = mean("saplma/mean_response/DiffTask");
  const double ood_mean = (loo + diff) / 2.0;
  const double ood_last = (mean("saplma/last_context/LOO") + mean("saplma/last_context/DiffTask")) / 2.0;
  const double msp_short = mean("msp/short");
  const double msp_long = mean("msp/long");
  const bool a = id - loo >= 0.05 && loo - diff >= 0.05;
  const bool b = ood_mean - ood_last >= 0.05;
  const bool c = msp_short >= 0.5 && msp_long <= 0.1;
  return {a && b && c,
          Fmt("(a) ID %.4f LOO %.4f DiffTask %.4f; ", id, loo, diff) +
              Fmt("(b) OOD mean_response %.4f last_context %.4f; ", ood_mean, ood_last) +
              Fmt("(c) MSP rho=0.9 %.4f rho=0.1 %.4f", msp_short, msp_long)};
}

Verdict PlsDiagnostic(const testing::TempDir& root) {
  const int n = 60;
  Eigen::MatrixXd x(n, 2);
  std::vector<double> y(n);
  Rng rng(7);
  for (int i = 0; i < n; ++i) {
    x(i, 0) = i;
    x(i, 1) = rng.Normal();
    y[static_cast<size_t>(i)] = std::exp(0.1 * i);
  }
  const double exact = FitPls2(x, y).train_spearman;
  double train = 0.0, test = 0.0;
  const auto sel = FeatureSelector::Parse("hidden:mid");
  for (uint64_t seed = 0; seed < 10; ++seed) {
    SynthScenario s;
    s.shift_angle = std::numbers::pi / 2;
    s.prob_signal_corr = 0.9;
    s.seed = seed;
    const auto dir = root / ("pls-" + std::to_string(seed));
    const auto store = GenerateCorpus(s, dir);
    std::vector<const FeatureRecord*> tr, te;
    for (const auto* r : store.ByDataset("d0")) {
      if (r->split == Split::kTrain) tr.push_back(r);
    }
    for (const auto* r : store.ByDataset("d3")) {
      if (r->split == Split::kTest) te.push_back(r);
    }
    std::vector<double> ytr, yte;
    for (const auto* r : tr) ytr.push_back(*r->correctness);
    for (const auto* r : te) yte.push_back(*r->correctness);
    const auto m = FitPls2(AggregatedMatrix(store, tr, sel, {}), ytr);
    train += m.train_spearman / 10.0;
    test += SpearmanCorrelation(PredictPls(m, AggregatedMatrix(store, te, sel, {})), yte) / 10.0;
    std::filesystem::remove_all(dir);
  }
  return {std::abs(exact - 1.0) <= 1e-9 && test < 0.2 && train > 0.5,
          Fmt("exact-signal Spearman %.12f; pi/2 shift train %.4f test %.4f", exact, train, test)};
}

Verdict StoreIntegrity(const testing::TempDir& root) {
  Rng rng(8);
  const auto dir = root / "store";
  std::vector<testing::RecordWithTensors> written;
  {
    auto store = FeatureStore::Create(dir);
    for (int i = 0; i < 1000; ++i) {
      written.push_back(testing::RandomRecord(rng, "r" + std::to_string(i), i % 3 ? "a" : "b"));
      store.Append(written.back().record, written.back().tensors);
    }
  }
  int mismatched = 0;
  {
    const auto store = FeatureStore::Open(dir);
    for (const auto& w : written) {
      for (size_t k = 0; k < w.record.features.size(); ++k) {
        const auto& e = w.record.features[k];
        const Tensor t = store.Read(w.record.instance_id, e.kind, e.layer);
        mismatched += t.shape != w.tensors[k].shape || !testing::BitEqual(t.data, w.tensors[k].data);
      }
    }
  }
  auto corrupt_all = [&](const std::filesystem::path& store_dir, bool every_byte, int samples) {
    int missed = 0, tried = 0;
    for (const char* name : {"manifest.jsonl", "tensors.bin"}) {
      const auto path = store_dir / name;
      const std::string original = testing::ReadFile(path);
      const size_t count = every_byte ? original.size() : static_cast<size_t>(samples);
      for (size_t j = 0; j < count; ++j) {
        const size_t i = every_byte ? j : rng.Index(original.size());
        std::string bad = original;
        bad[i] = static_cast<char>(bad[i] ^ static_cast<char>(1 + rng.Index(255)));
        testing::WriteFile(path, bad);
        bool detected = false;
        try {
          FeatureStore::Open(store_dir);
        } catch (const Error& e) {
          detected = e.code() == ErrorCode::kChecksumMismatch || e.code() == ErrorCode::kMalformedManifest;
        }
        missed += !detected;
        ++tried;
      }
      testing::WriteFile(path, original);
    }
    return std::pair{missed, tried};
  };
  const auto small = root / "small";
  {
    auto store = FeatureStore::Create(small);
    for (int i = 0; i < 3; ++i) {
      auto w = testing::RandomRecord(rng, "s" + std::to_string(i), "a");
      store.Append(w.record, w.tensors);
    }
  }
  const auto [missed_small, tried_small] = corrupt_all(small, true, 0);
  const auto [missed_big, tried_big] = corrupt_all(dir, false, 100);
  const int missed = missed_small + missed_big;
  return {mismatched == 0 && missed == 0,
          Fmt("1000 records, %g tensors differ; %g corruptions, %g undetected", mismatched,
              tried_small + tried_big, missed)};
}

}  // namespace
}  // namespace uqp

int main() {
  using uqp::Verdict;
  uqp::testing::TempDir root;
  struct Check {
    const char* name;
    double limit_s;
    std::function<Verdict()> run;
  };
  const std::vector<Check> checks{
      {"metric_exactness", 1, uqp::MetricExactness},
      {"rejection_curve_oracle", 30, uqp::RejectionCurveOracle},
      {"mahalanobis_oracle", 5, uqp::MahalanobisOracle},
      {"hbo_contract", 1, uqp::HboContract},
      {"ood_rank_calibration", 10, uqp::OodRankCalibration},
      {"probe_soundness", 60, uqp::ProbeSoundness},
      {"synthetic_robustness", 900, [&] { return uqp::SyntheticRobustness(root); }},
      {"pls_diagnostic", 120, [&] { return uqp::PlsDiagnostic(root); }},
      {"store_integrity", 10, [&] { return uqp::StoreIntegrity(root); }},
  };
  int failed = 0;
  for (const auto& c : checks) {
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = c.run();
    } catch (const std::exception& e) {
      v = {false, std::string("threw ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool ok = v.ok && secs < c.limit_s;
    failed += !ok;
    std::printf("%s %s: %s; %.2fs (limit %.0fs)\n", ok ? "PASS" : "FAIL", c.name, v.detail.c_str(), secs,
                c.limit_s);
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
