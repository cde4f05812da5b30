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

// uqp: command-line front end for the UQ probe toolkit.
//
//   uqp synth  --config scenario.json --out DIR
//   uqp train  --store DIR --datasets A,B --feature hidden:mid --out model.uqp
//   uqp eval   --store DIR --model model.uqp --dataset C
//   uqp matrix --config cfg.json --out results/
//   uqp report --results results/ --format md
//   uqp pls    --store DIR --train-datasets A,B --eval-dataset C --layer k --out fig.svg

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "uqp/error.hpp"
#include "uqp/features.hpp"
#include "uqp/metrics.hpp"
#include "uqp/plot.hpp"
#include "uqp/pls.hpp"
#include "uqp/probes.hpp"
#include "uqp/report.hpp"
#include "uqp/runner.hpp"
#include "uqp/synth.hpp"
#include "uqp/util.hpp"

namespace {

using nlohmann::json;
using uqp::FeatureRecord;

json ReadJsonFile(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw uqp::Error(uqp::ErrorCode::kMissingFile, "cannot read " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw uqp::Error(uqp::ErrorCode::kInvalidArgument, path + ": " + e.what());
  }
}

std::vector<std::string> SplitList(const std::vector<std::string>& items) {
  std::vector<std::string> out;
  for (const auto& item : items) {
    std::stringstream ss(item);
    std::string part;
    while (std::getline(ss, part, ',')) {
      if (!part.empty()) out.push_back(part);
    }
  }
  return out;
}

std::vector<const FeatureRecord*> Labelled(const uqp::StoreSet& stores, const std::string& dataset,
                                           uqp::Split split) {
  std::vector<const FeatureRecord*> out;
  for (const auto* r : stores.store_for(dataset).ByDataset(dataset)) {
    if (r->split == split && r->correctness) out.push_back(r);
  }
  if (out.empty()) {
    throw uqp::Error(uqp::ErrorCode::kInsufficientData,
                     dataset + " has no labelled " + std::string(uqp::ToString(split)) + " records");
  }
  return out;
}

Eigen::MatrixXd Rows(const uqp::StoreSet& stores, const std::vector<const FeatureRecord*>& recs,
                     const uqp::FeatureSelector& sel, const uqp::AggregationStrategy& agg) {
  Eigen::MatrixXd out;
  for (size_t i = 0; i < recs.size(); ++i) {
    const auto& r = *recs[i];
    const Eigen::VectorXd v = uqp::AggregatedFeature(stores.store_for(r.dataset), r, sel.kind, sel.Resolve(r), agg);
    if (i == 0) out.resize(static_cast<Eigen::Index>(recs.size()), v.size());
    out.row(static_cast<Eigen::Index>(i)) = v.transpose();
  }
  return out;
}

std::vector<Eigen::MatrixXd> Sequences(const uqp::StoreSet& stores, const std::vector<const FeatureRecord*>& recs,
                                       const uqp::FeatureSelector& sel) {
  std::vector<Eigen::MatrixXd> out;
  for (const auto* r : recs) {
    const auto layer = sel.Resolve(*r);
    const uqp::FeatureEntry* e = r->Find(sel.kind, layer);
    if (e == nullptr) throw uqp::Error(uqp::ErrorCode::kMissingFeature, r->instance_id + " lacks " + sel.ToString());
    Eigen::MatrixXd m = stores.store_for(r->dataset).ReadMatrix(r->instance_id, sel.kind, layer);
    if (e->scope == uqp::TokenScope::kFull) m = m.bottomRows(r->n_response_tokens).eval();
    out.push_back(std::move(m));
  }
  return out;
}

std::vector<double> Targets(const std::vector<const FeatureRecord*>& recs) {
  std::vector<double> y;
  for (const auto* r : recs) y.push_back(*r->correctness);
  return y;
}

int RunSynth(const std::string& config, const std::string& out, const std::vector<std::string>& seeds) {
  uqp::SynthScenario s = uqp::SynthScenarioFromJson(ReadJsonFile(config));
  if (!seeds.empty()) s.seed = std::stoull(seeds.front());
  const uqp::FeatureStore store = uqp::GenerateCorpus(s, out);
  std::printf("wrote %zu records to %s (blob %s)\n", store.records().size(), out.c_str(),
              uqp::HexU64(store.blob_checksum()).c_str());
  return 0;
}

struct TrainArgs {
  std::vector<std::string> stores;
  std::vector<std::string> datasets;
  std::string feature = "hidden:mid";
  std::string aggregation = "mean_response";
  std::string probe_file;
  std::string arch;
  uint64_t seed = 0;
  bool paper_dims = false;
  std::string out;
};

int RunTrain(const TrainArgs& a) {
  const auto stores = uqp::StoreSet::Open(SplitList(a.stores));
  uqp::ProbeSpec spec = a.probe_file.empty() ? uqp::ProbeSpec{} : uqp::ProbeSpecFromJson(ReadJsonFile(a.probe_file));
  if (!a.arch.empty()) spec.arch = uqp::ParseProbeArch(a.arch);
  spec.seed = a.seed;
  if (a.paper_dims) spec = uqp::WithPaperDims(spec);
  const auto sel = uqp::FeatureSelector::Parse(a.feature);
  const uqp::AggregationStrategy agg{uqp::ParseAggregationVariant(a.aggregation), a.seed};
  std::vector<const FeatureRecord*> train;
  for (const auto& d : SplitList(a.datasets)) {
    const auto part = Labelled(*stores, d, uqp::Split::kTrain);
    train.insert(train.end(), part.begin(), part.end());
  }
  uqp::ProbeModel model = spec.consumes_sequences()
                              ? uqp::FitProbe(spec, Sequences(*stores, train, sel), Targets(train))
                              : uqp::FitProbe(spec, Rows(*stores, train, sel, agg), Targets(train));
  model.set_input_kind(sel.ToString() + "|" + a.aggregation);
  uqp::SaveProbe(a.out, model);
  std::printf("trained %s on %zu records (%d epochs) -> %s\n", std::string(uqp::ToString(spec.arch)).c_str(),
              train.size(), model.epochs_run(), a.out.c_str());
  return 0;
}

int RunEval(const std::vector<std::string>& store_paths, const std::string& model_path, const std::string& dataset,
            int max_eval) {
  const auto stores = uqp::StoreSet::Open(SplitList(store_paths));
  const uqp::ProbeModel model = uqp::LoadProbe(model_path);
  const std::string& kind = model.input_kind();
  const auto bar = kind.find('|');
  const auto sel = uqp::FeatureSelector::Parse(bar == std::string::npos ? kind : kind.substr(0, bar));
  const uqp::AggregationStrategy agg{
      uqp::ParseAggregationVariant(bar == std::string::npos ? "mean_response" : kind.substr(bar + 1)),
      model.spec().seed};
  auto eval = Labelled(*stores, dataset, uqp::Split::kTest);
  if (max_eval > 0 && eval.size() > static_cast<size_t>(max_eval)) eval.resize(static_cast<size_t>(max_eval));
  const std::vector<double> u = model.spec().consumes_sequences()
                                    ? model.PredictUncertainty(Sequences(*stores, eval, sel))
                                    : model.PredictUncertainty(Rows(*stores, eval, sel, agg));
  const double prr = uqp::PredictionRejectionRatio(u, Targets(eval));
  std::printf("%s\n", json({{"dataset", dataset}, {"prr", prr}, {"n_eval", eval.size()}}).dump().c_str());
  return 0;
}

int RunMatrixCmd(const std::string& config, const std::string& out, int workers) {
  const uqp::LoadedConfig loaded = uqp::LoadConfig(config);
  uqp::RunOptions opt;
  opt.out_dir = out;
  opt.workers = workers;
  const auto results = uqp::RunMatrix(loaded.cells, *loaded.stores, opt);
  size_t failed = 0, cached = 0;
  for (const auto& r : results) {
    if (!r.ok) {
      ++failed;
      std::fprintf(stderr, "cell %s %s/%s/%s seed %llu failed: %s\n", r.fingerprint.c_str(), r.setting.c_str(),
                   r.eval_dataset.c_str(), r.method.c_str(), static_cast<unsigned long long>(r.seed),
                   r.error.c_str());
    }
    if (r.cached) ++cached;
  }
  std::printf("%zu cells, %zu cached, %zu failed\n", results.size(), cached, failed);
  return failed == 0 ? 0 : 1;
}

int RunReport(const std::string& results, const std::string& format, const std::string& out) {
  std::filesystem::path p(results);
  if (std::filesystem::is_directory(p)) p /= "results.jsonl";
  if (!std::filesystem::exists(p)) throw uqp::Error(uqp::ErrorCode::kMissingFile, "no results at " + p.string());
  // A cell may appear more than once after re-runs; keep the latest entry.
  std::vector<uqp::ResultCell> cells;
  std::map<std::string, size_t> latest;
  for (auto& r : uqp::LoadResults(p)) {
    const auto it = latest.find(r.fingerprint);
    if (it != latest.end()) {
      cells[it->second] = std::move(r);
    } else {
      latest[r.fingerprint] = cells.size();
      cells.push_back(std::move(r));
    }
  }
  const auto fmt = uqp::ParseTableFormat(format);
  if (out.empty()) {
    std::fputs(uqp::RenderTable(cells, fmt).c_str(), stdout);
  } else {
    uqp::EmitTable(cells, out, fmt);
  }
  return 0;
}

struct PlsArgs {
  std::vector<std::string> stores;
  std::vector<std::string> train_datasets;
  std::string eval_dataset;
  int layer = -1;
  std::string aggregation = "mean_response";
  std::string format;
  std::string out;
};

int RunPls(const PlsArgs& a) {
  const auto stores = uqp::StoreSet::Open(SplitList(a.stores));
  uqp::FeatureSelector sel;
  sel.kind = uqp::FeatureKind::kHidden;
  if (a.layer >= 0) {
    sel.layer = a.layer;
  } else {
    sel.mid_layer = true;
  }
  const uqp::AggregationStrategy agg{uqp::ParseAggregationVariant(a.aggregation), 0};
  std::vector<const FeatureRecord*> train;
  for (const auto& d : SplitList(a.train_datasets)) {
    const auto part = Labelled(*stores, d, uqp::Split::kTrain);
    train.insert(train.end(), part.begin(), part.end());
  }
  const auto eval = Labelled(*stores, a.eval_dataset, uqp::Split::kTest);
  const uqp::PlsModel model = uqp::FitPls2(Rows(*stores, train, sel, agg), Targets(train));
  const Eigen::MatrixXd x_eval = Rows(*stores, eval, sel, agg);
  const std::vector<double> q = Targets(eval);
  const double test_spearman = uqp::SpearmanCorrelation(uqp::PredictPls(model, x_eval), q);

  uqp::PlotData plot;
  plot.scores = uqp::ProjectPls(model, x_eval);
  plot.correctness = q;
  std::vector<double> sorted = q;
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(sorted.size() / 2), sorted.end());
  const double median = sorted[sorted.size() / 2];
  for (double v : q) plot.group_mask.push_back(v > median);
  plot.grids = uqp::KdeGrid(plot.scores, plot.group_mask, uqp::BoundsFor(plot.scores));
  std::string fmt = a.format;
  if (fmt.empty()) fmt = std::filesystem::path(a.out).extension() == ".csv" ? "csv" : "svg";
  uqp::EmitPlot(plot, a.out, uqp::ParsePlotFormat(fmt));
  std::printf("%s\n", json({{"train_spearman", model.train_spearman},
                            {"test_spearman", test_spearman},
                            {"n_train", train.size()},
                            {"n_eval", eval.size()},
                            {"out", a.out}})
                          .dump()
                          .c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"uqp: uncertainty probes over serialized LLM features"};
  app.require_subcommand(1);

  std::string synth_config, synth_out;
  std::vector<std::string> synth_seed;
  auto* synth = app.add_subcommand("synth", "generate a synthetic feature store");
  synth->add_option("--config", synth_config, "scenario JSON")->required()->check(CLI::ExistingFile);
  synth->add_option("--out", synth_out, "output store directory")->required();
  synth->add_option("--seed", synth_seed, "override the scenario seed");

  TrainArgs targs;
  auto* train = app.add_subcommand("train", "fit a probe on train-split records");
  train->add_option("--store", targs.stores, "store directories (repeatable or comma separated)")->required();
  train->add_option("--datasets", targs.datasets, "training datasets")->required();
  train->add_option("--feature", targs.feature, "feature selector, e.g. hidden:mid");
  train->add_option("--aggregation", targs.aggregation, "token aggregation");
  train->add_option("--probe", targs.probe_file, "probe spec JSON");
  train->add_option("--arch", targs.arch, "linear | linear_pca | mlp | seq_transformer");
  train->add_option("--seed", targs.seed, "training seed");
  train->add_flag("--paper-dims", targs.paper_dims, "768-wide transformer probe");
  train->add_option("--out", targs.out, "model file")->required();

  std::vector<std::string> eval_stores;
  std::string eval_model, eval_dataset;
  int eval_max = 2000;
  auto* eval = app.add_subcommand("eval", "score a dataset's test split with a trained probe");
  eval->add_option("--store", eval_stores, "store directories")->required();
  eval->add_option("--model", eval_model, "model file")->required()->check(CLI::ExistingFile);
  eval->add_option("--dataset", eval_dataset, "evaluation dataset")->required();
  eval->add_option("--max-eval", eval_max, "cap on evaluated records");

  std::string matrix_config, matrix_out;
  int matrix_workers = 0;
  auto* matrix = app.add_subcommand("matrix", "run an experiment matrix");
  matrix->add_option("--config", matrix_config, "experiment config JSON")->required()->check(CLI::ExistingFile);
  matrix->add_option("--out", matrix_out, "results directory")->required();
  matrix->add_option("--workers", matrix_workers, "worker threads (capped by UQP_WORKERS)");

  std::string report_results = "results", report_format = "md", report_out;
  auto* report = app.add_subcommand("report", "tabulate matrix results");
  report->add_option("--results", report_results, "results directory or results.jsonl");
  report->add_option("--format", report_format, "md | csv");
  report->add_option("--out", report_out, "output file (stdout when omitted)");

  PlsArgs pargs;
  auto* pls = app.add_subcommand("pls", "two-component PLS diagnostic plot");
  pls->add_option("--store", pargs.stores, "store directories")->required();
  pls->add_option("--train-datasets", pargs.train_datasets, "datasets to fit on")->required();
  pls->add_option("--eval-dataset", pargs.eval_dataset, "dataset to project")->required();
  pls->add_option("--layer", pargs.layer, "hidden layer (middle when omitted)");
  pls->add_option("--aggregation", pargs.aggregation, "token aggregation");
  pls->add_option("--format", pargs.format, "csv | svg (from the extension when omitted)");
  pls->add_option("--out", pargs.out, "output file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) return RunSynth(synth_config, synth_out, synth_seed);
    if (*train) return RunTrain(targs);
    if (*eval) return RunEval(eval_stores, eval_model, eval_dataset, eval_max);
    if (*matrix) return RunMatrixCmd(matrix_config, matrix_out, matrix_workers);
    if (*report) return RunReport(report_results, report_format, report_out);
    if (*pls) return RunPls(pargs);
  } catch (const uqp::Error& e) {
    std::fprintf(stderr, "uqp: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "uqp: %s\n", e.what());
    return 2;
  }
  return 0;
}
