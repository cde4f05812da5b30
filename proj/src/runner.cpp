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

#include "uqp/runner.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <set>
#include <thread>
#include <unordered_set>

#include "uqp/baselines.hpp"
#include "uqp/density.hpp"
#include "uqp/error.hpp"
#include "uqp/hybrid.hpp"
#include "uqp/metrics.hpp"
#include "uqp/util.hpp"

namespace uqp {
namespace {

using Records = std::vector<const FeatureRecord*>;
using nlohmann::json;

const std::map<Task, std::string> kDefaultSameTaskDonor = {{Task::kQa, "medquad"},
                                                          {Task::kSummarisation, "samsum"}};
const std::map<Task, std::string> kDefaultDiffTaskDonor = {{Task::kQa, "samsum"},
                                                          {Task::kSummarisation, "medquad"}};

[[noreturn]] void Fail(ErrorCode code, const std::string& msg) { throw Error(code, msg); }

std::string CellLabel(const ExperimentConfig& c) {
  return std::string(ToString(c.setting)) + "/" + c.eval_dataset + "/" + c.method;
}

// Equal shares of `budget` over `donors`; the remainder goes one each to the
// first donors.
std::vector<CompositionEntry> EqualShares(const std::vector<std::string>& donors, int budget) {
  std::vector<CompositionEntry> out;
  const int n = static_cast<int>(donors.size());
  for (int i = 0; i < n; ++i) {
    out.push_back({donors[static_cast<size_t>(i)], budget / n + (i < budget % n ? 1 : 0)});
  }
  return out;
}

std::string PickDonor(const Inventory& inv, const std::string& eval, Task want,
                      const std::map<Task, std::string>& preferred) {
  const auto it = preferred.find(inv.at(eval).task);
  if (it != preferred.end()) {
    const auto d = inv.find(it->second);
    if (d != inv.end() && d->first != eval && d->second.task == want) return d->first;
  }
  for (const auto& [name, info] : inv) {
    if (name != eval && info.task == want) return name;
  }
  Fail(ErrorCode::kBadComposition, "no " + std::string(ToString(want)) + " donor for " + eval);
}

std::vector<CompositionEntry> TemplateComposition(const Inventory& inv, const std::string& eval,
                                                  OodSetting setting, int budget,
                                                  const std::map<Task, std::string>& same_pref,
                                                  const std::map<Task, std::string>& diff_pref) {
  const auto ev = inv.find(eval);
  if (ev == inv.end()) Fail(ErrorCode::kBadComposition, "unknown eval dataset '" + eval + "'");
  const Task task = ev->second.task;
  const Task other = task == Task::kQa ? Task::kSummarisation : Task::kQa;
  std::vector<std::string> donors;
  switch (setting) {
    case OodSetting::kId:
      return {{eval, budget}};
    case OodSetting::kLoo:
      for (const auto& [name, info] : inv) {
        if (name != eval) donors.push_back(name);
      }
      break;
    case OodSetting::kDiffTask:
      for (const auto& [name, info] : inv) {
        if (info.task == other) donors.push_back(name);
      }
      break;
    case OodSetting::kOneDSameTask:
      return {{PickDonor(inv, eval, task, same_pref), budget}};
    case OodSetting::kOneDDiffTask:
      return {{PickDonor(inv, eval, other, diff_pref), budget}};
  }
  if (donors.empty()) {
    Fail(ErrorCode::kBadComposition, std::string(ToString(setting)) + " has no donors for " + eval);
  }
  return EqualShares(donors, budget);
}

std::map<Task, std::string> DonorPrefs(const json& j, const char* key,
                                       const std::map<Task, std::string>& defaults) {
  std::map<Task, std::string> out = defaults;
  if (j.contains("one_d_donors") && j.at("one_d_donors").contains(key)) {
    for (const auto& [task, name] : j.at("one_d_donors").at(key).items()) {
      out[ParseTask(task)] = name.get<std::string>();
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Cell execution helpers

template <typename Fn>
Eigen::MatrixXd StackRows(const Records& records, Fn&& row_of) {
  Eigen::MatrixXd out;
  for (size_t i = 0; i < records.size(); ++i) {
    const Eigen::VectorXd v = row_of(*records[i]);
    if (i == 0) out.resize(static_cast<Eigen::Index>(records.size()), v.size());
    if (v.size() != out.cols()) {
      Fail(ErrorCode::kDimensionMismatch, records[i]->instance_id + " has feature width " + std::to_string(v.size()));
    }
    out.row(static_cast<Eigen::Index>(i)) = v.transpose();
  }
  return out;
}

std::vector<double> Correctness(const Records& records) {
  std::vector<double> out;
  out.reserve(records.size());
  for (const auto* r : records) out.push_back(*r->correctness);
  return out;
}

Records Labelled(const FeatureStore& store, std::string_view dataset, Split split) {
  Records out;
  for (const auto* r : store.ByDataset(dataset)) {
    if (r->split == split && r->correctness.has_value()) out.push_back(r);
  }
  return out;
}

// Seeded uniform sample without replacement, kept in store order.
Records SampleWithoutReplacement(Records pool, size_t count, uint64_t seed) {
  if (count >= pool.size()) return pool;
  std::vector<size_t> idx(pool.size());
  for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  Rng rng(seed);
  rng.Shuffle(idx);
  idx.resize(count);
  std::sort(idx.begin(), idx.end());
  Records out;
  for (size_t i : idx) out.push_back(pool[i]);
  return out;
}

class CellContext {
 public:
  CellContext(const ExperimentConfig& cell, const StoreSet& stores, const Records& train, const Records& eval)
      : cell_(cell), stores_(stores), train_(train), eval_(eval) {}

  std::vector<double> Score() {
    const std::string& m = cell_.method;
    if (m == "msp") return Msp(eval_);
    if (m == "perplexity") return Perplexity(eval_);
    if (m == "saplma") return Saplma();
    if (m == "satmd") return DensityProbe(false, false);
    if (m == "satrmd") return DensityProbe(true, false);
    if (m == "satmd_msp") return DensityProbe(false, true);
    if (m == "satrmd_msp") return DensityProbe(true, true);
    if (m == "huq_satmd") return Huq(false);
    if (m == "huq_satrmd") return Huq(true);
    if (m == "hbo") return Hbo();
    if (m == "lookback_lens") return LookbackLens();
    if (m == "uhead") return Uhead();
    Fail(ErrorCode::kUnknownMethod, "unknown method '" + m + "'");
  }

 private:
  const FeatureStore& StoreOf(const FeatureRecord& r) const { return stores_.store_for(r.dataset); }

  std::vector<double> Msp(const Records& rs) const {
    std::vector<double> out;
    for (const auto* r : rs) out.push_back(MspUncertainty(TokenLogprobs(StoreOf(*r), *r)));
    return out;
  }

  std::vector<double> Perplexity(const Records& rs) const {
    std::vector<double> out;
    for (const auto* r : rs) out.push_back(PerplexityUncertainty(TokenLogprobs(StoreOf(*r), *r)));
    return out;
  }

  Eigen::MatrixXd FeatureRows(const Records& rs) const {
    return StackRows(rs, [&](const FeatureRecord& r) {
      return AggregatedFeature(StoreOf(r), r, cell_.feature.kind, cell_.feature.Resolve(r), cell_.aggregation);
    });
  }

  std::vector<Eigen::MatrixXd> FeatureSequences(const Records& rs) const {
    std::vector<Eigen::MatrixXd> out;
    for (const auto* r : rs) {
      const auto layer = cell_.feature.Resolve(*r);
      const FeatureEntry* e = r->Find(cell_.feature.kind, layer);
      if (e == nullptr) Fail(ErrorCode::kMissingFeature, r->instance_id + " lacks " + cell_.feature.ToString());
      Eigen::MatrixXd m = StoreOf(*r).ReadMatrix(r->instance_id, cell_.feature.kind, layer);
      if (e->scope == TokenScope::kFull) m = m.bottomRows(r->n_response_tokens).eval();
      out.push_back(std::move(m));
    }
    return out;
  }

  std::vector<double> SaplmaScores() const {
    const std::vector<double> y = Correctness(train_);
    if (cell_.probe.consumes_sequences()) {
      const ProbeModel model = FitProbe(cell_.probe, FeatureSequences(train_), y);
      return model.PredictUncertainty(FeatureSequences(eval_));
    }
    const ProbeModel model = FitProbe(cell_.probe, FeatureRows(train_), y);
    return model.PredictUncertainty(FeatureRows(eval_));
  }

  std::vector<double> Saplma() { return SaplmaScores(); }

  ProbeSpec LinearSpec() const {
    ProbeSpec s = cell_.probe;
    s.arch = ProbeArch::kLinear;
    return s;
  }

  std::vector<double> DensityScores(bool relative, bool with_msp) const {
    const std::vector<int> layers = train_.front()->Layers(FeatureKind::kHidden);
    if (layers.empty()) Fail(ErrorCode::kMissingFeature, "training records carry no hidden layers");
    const AggregationStrategy ctx{AggregationVariant::kMeanContext, 0};
    auto layer_rows = [&](const Records& rs, int l, const AggregationStrategy& agg) {
      return StackRows(rs, [&](const FeatureRecord& r) {
        return AggregatedFeature(StoreOf(r), r, FeatureKind::kHidden, l, agg);
      });
    };
    std::map<int, Eigen::MatrixXd> train_by_layer, background, eval_by_layer;
    for (int l : layers) {
      train_by_layer[l] = layer_rows(train_, l, cell_.aggregation);
      eval_by_layer[l] = layer_rows(eval_, l, cell_.aggregation);
      if (relative) background[l] = layer_rows(train_, l, ctx);
    }
    const LayerDensity density = LayerDensity::Fit(train_by_layer, background);
    auto features = [&](const std::map<int, Eigen::MatrixXd>& by_layer, const std::vector<double>* msp) {
      const Eigen::Index n = by_layer.begin()->second.rows();
      Eigen::MatrixXd out(n, static_cast<Eigen::Index>(layers.size()) + (msp ? 1 : 0));
      for (Eigen::Index i = 0; i < n; ++i) {
        std::map<int, Eigen::VectorXd> x;
        for (const auto& [l, m] : by_layer) x[l] = m.row(i).transpose();
        Eigen::VectorXd v = density.Features(x, relative);
        if (msp) v = SatmdMspFeatures(v, (*msp)[static_cast<size_t>(i)]);
        out.row(i) = v.transpose();
      }
      return out;
    };
    std::vector<double> msp_train, msp_eval;
    if (with_msp) {
      msp_train = Msp(train_);
      msp_eval = Msp(eval_);
    }
    const Eigen::MatrixXd x_train = features(train_by_layer, with_msp ? &msp_train : nullptr);
    const Eigen::MatrixXd x_eval = features(eval_by_layer, with_msp ? &msp_eval : nullptr);
    const ProbeModel model = FitProbe(LinearSpec(), x_train, Correctness(train_));
    return model.PredictUncertainty(x_eval);
  }

  std::vector<double> DensityProbe(bool relative, bool with_msp) { return DensityScores(relative, with_msp); }

  std::vector<double> OodRanks() const {
    const OodRankReference ref = BuildOodReference(FeatureRows(train_));
    const Eigen::MatrixXd x = FeatureRows(eval_);
    std::vector<double> out;
    for (Eigen::Index i = 0; i < x.rows(); ++i) out.push_back(OodRank(ref, x.row(i).transpose()));
    return out;
  }

  std::vector<double> Huq(bool relative) {
    const auto usv = RankNormalize(Msp(eval_), RankNormalizer::Batch());
    const auto dens = RankNormalize(DensityScores(relative, false), RankNormalizer::Batch());
    const auto r = OodRanks();
    std::vector<double> out;
    for (size_t i = 0; i < usv.size(); ++i) out.push_back(HuqScore(usv[i], dens[i], r[i]));
    return out;
  }

  std::vector<double> Hbo() {
    const auto sv = RankNormalize(SaplmaScores(), RankNormalizer::Batch());
    const auto usv = RankNormalize(Msp(eval_), RankNormalizer::Batch());
    const auto r = OodRanks();
    std::vector<double> out;
    for (size_t i = 0; i < sv.size(); ++i) out.push_back(HboScore(sv[i], usv[i], r[i]));
    return out;
  }

  std::vector<double> LookbackLens() {
    auto rows = [&](const Records& rs) {
      return StackRows(rs, [&](const FeatureRecord& r) { return LookbackFeatures(StoreOf(r), r); });
    };
    const ProbeModel model = FitProbe(LinearSpec(), rows(train_), Correctness(train_));
    return model.PredictUncertainty(rows(eval_));
  }

  std::vector<double> Uhead() {
    ProbeSpec spec = cell_.probe;
    spec.arch = ProbeArch::kSeqTransformer;
    auto seqs = [&](const Records& rs) {
      std::vector<Eigen::MatrixXd> out;
      for (const auto* r : rs) out.push_back(UheadSequence(StoreOf(*r), *r));
      return out;
    };
    const ProbeModel model = FitProbe(spec, seqs(train_), Correctness(train_));
    return model.PredictUncertainty(seqs(eval_));
  }

  const ExperimentConfig& cell_;
  const StoreSet& stores_;
  const Records& train_;
  const Records& eval_;
};

}  // namespace

std::string_view ToString(OodSetting s) {
  switch (s) {
    case OodSetting::kId: return "ID";
    case OodSetting::kLoo: return "LOO";
    case OodSetting::kOneDSameTask: return "OneD_SameTask";
    case OodSetting::kDiffTask: return "DiffTask";
    case OodSetting::kOneDDiffTask: return "OneD_DiffTask";
  }
  return "?";
}

OodSetting ParseOodSetting(std::string_view s) {
  for (OodSetting v : kAllSettings) {
    if (ToString(v) == s) return v;
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown setting '" + std::string(s) + "'");
}

const std::vector<std::string>& KnownMethods() {
  static const std::vector<std::string> kMethods = {
      "msp",        "perplexity", "saplma",    "satmd",     "satrmd",        "satmd_msp",
      "satrmd_msp", "huq_satmd",  "huq_satrmd", "hbo",      "lookback_lens", "uhead"};
  return kMethods;
}

bool IsUnsupervisedMethod(std::string_view method) { return method == "msp" || method == "perplexity"; }

json ToJson(const ExperimentConfig& c) {
  json comp = json::array();
  for (const auto& e : c.train_composition) comp.push_back({{"dataset", e.dataset}, {"count", e.count}});
  return {{"stores", c.store_paths},
          {"eval_dataset", c.eval_dataset},
          {"setting", ToString(c.setting)},
          {"train_composition", comp},
          {"train_budget", c.train_budget},
          {"method", c.method},
          {"feature", c.feature.ToString()},
          {"aggregation", ToString(c.aggregation.variant)},
          {"aggregation_seed", c.aggregation.seed},
          {"probe", ToJson(c.probe)},
          {"seed", c.seed},
          {"max_eval", c.max_eval}};
}

ExperimentConfig ExperimentConfigFromJson(const json& j) {
  ExperimentConfig c;
  try {
    c.store_paths = j.value("stores", std::vector<std::string>{});
    c.eval_dataset = j.at("eval_dataset").get<std::string>();
    c.setting = ParseOodSetting(j.at("setting").get<std::string>());
    for (const auto& e : j.value("train_composition", json::array())) {
      c.train_composition.push_back({e.at("dataset").get<std::string>(), e.at("count").get<int>()});
    }
    c.train_budget = j.value("train_budget", c.train_budget);
    c.method = j.at("method").get<std::string>();
    c.feature = FeatureSelector::Parse(j.value("feature", std::string("hidden:mid")));
    c.aggregation.variant = ParseAggregationVariant(j.value("aggregation", std::string("mean_response")));
    c.aggregation.seed = j.value("aggregation_seed", uint64_t{0});
    if (j.contains("probe")) c.probe = ProbeSpecFromJson(j.at("probe"));
    c.seed = j.value("seed", uint64_t{0});
    c.max_eval = j.value("max_eval", c.max_eval);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, std::string("cell config: ") + e.what());
  }
  return c;
}

void ValidateCell(const ExperimentConfig& cell, const Inventory* inventory) {
  const auto& methods = KnownMethods();
  if (std::find(methods.begin(), methods.end(), cell.method) == methods.end()) {
    Fail(ErrorCode::kUnknownMethod, "unknown method '" + cell.method + "'");
  }
  if (cell.train_budget < 1) Fail(ErrorCode::kBadComposition, "train_budget must be positive");
  if (cell.max_eval < 2) Fail(ErrorCode::kInvalidArgument, "max_eval must be >= 2");
  int64_t total = 0;
  std::set<std::string> seen;
  for (const auto& e : cell.train_composition) {
    if (e.count <= 0) Fail(ErrorCode::kBadComposition, CellLabel(cell) + ": non-positive count for " + e.dataset);
    if (!seen.insert(e.dataset).second) {
      Fail(ErrorCode::kBadComposition, CellLabel(cell) + ": " + e.dataset + " listed twice");
    }
    if (inventory != nullptr && inventory->count(e.dataset) == 0) {
      Fail(ErrorCode::kBadComposition, CellLabel(cell) + ": unknown dataset " + e.dataset);
    }
    total += e.count;
  }
  if (total != cell.train_budget) {
    Fail(ErrorCode::kBadComposition, CellLabel(cell) + ": composition sums to " + std::to_string(total) +
                                         ", budget is " + std::to_string(cell.train_budget));
  }
  if (cell.setting != OodSetting::kId && seen.count(cell.eval_dataset) != 0) {
    Fail(ErrorCode::kEvalLeak, CellLabel(cell) + ": eval dataset is in the training composition");
  }
  if (inventory != nullptr && inventory->count(cell.eval_dataset) == 0) {
    Fail(ErrorCode::kBadComposition, CellLabel(cell) + ": unknown eval dataset");
  }
}

std::vector<ExperimentConfig> ExpandConfig(const json& config, const Inventory& inventory) {
  if (!config.is_object()) Fail(ErrorCode::kInvalidArgument, "config must be a JSON object");
  std::vector<ExperimentConfig> cells;
  try {
    ExperimentConfig base;
    base.store_paths = config.value("stores", std::vector<std::string>{});
    base.train_budget = config.value("train_budget", base.train_budget);
    base.max_eval = config.value("max_eval", base.max_eval);
    base.feature = FeatureSelector::Parse(config.value("feature", std::string("hidden:mid")));
    base.aggregation.variant = ParseAggregationVariant(config.value("aggregation", std::string("mean_response")));
    base.aggregation.seed = config.value("aggregation_seed", uint64_t{0});
    if (config.contains("probe")) base.probe = ProbeSpecFromJson(config.at("probe"));
    if (config.value("paper_dims", false)) base.probe = WithPaperDims(base.probe);
    const auto same_pref = DonorPrefs(config, "same_task", kDefaultSameTaskDonor);
    const auto diff_pref = DonorPrefs(config, "diff_task", kDefaultDiffTaskDonor);
    const std::vector<uint64_t> top_seeds = config.value("seeds", std::vector<uint64_t>{0});

    if (config.contains("matrix")) {
      const json& m = config.at("matrix");
      std::vector<std::string> evals;
      if (m.contains("eval_datasets")) {
        evals = m.at("eval_datasets").get<std::vector<std::string>>();
      } else {
        for (const auto& [name, info] : inventory) {
          if (info.n_test > 0) evals.push_back(name);
        }
      }
      std::vector<OodSetting> settings;
      if (m.contains("settings")) {
        for (const auto& s : m.at("settings")) settings.push_back(ParseOodSetting(s.get<std::string>()));
      } else {
        settings.assign(std::begin(kAllSettings), std::end(kAllSettings));
      }
      const auto methods = m.at("methods").get<std::vector<std::string>>();
      const auto seeds = m.value("seeds", top_seeds);
      for (const auto& ev : evals) {
        for (OodSetting st : settings) {
          const auto comp = TemplateComposition(inventory, ev, st, base.train_budget, same_pref, diff_pref);
          for (const auto& method : methods) {
            for (uint64_t seed : seeds) {
              ExperimentConfig c = base;
              c.eval_dataset = ev;
              c.setting = st;
              c.train_composition = comp;
              c.method = method;
              c.seed = seed;
              c.probe.seed = seed;
              cells.push_back(std::move(c));
            }
          }
        }
      }
    }
    for (const auto& jc : config.value("cells", json::array())) {
      json merged = ToJson(base);
      for (const auto& [k, v] : jc.items()) merged[k] = v;
      ExperimentConfig c = ExperimentConfigFromJson(merged);
      if (!jc.contains("train_composition")) {
        c.train_composition =
            TemplateComposition(inventory, c.eval_dataset, c.setting, c.train_budget, same_pref, diff_pref);
      }
      if (!jc.contains("probe") || !jc.at("probe").contains("seed")) c.probe.seed = c.seed;
      cells.push_back(std::move(c));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, std::string("config: ") + e.what());
  }
  for (const auto& c : cells) ValidateCell(c, &inventory);
  return cells;
}

// ---------------------------------------------------------------------------
// StoreSet

std::shared_ptr<StoreSet> StoreSet::Open(const std::vector<std::string>& paths,
                                         const std::map<std::string, Task>& task_override) {
  if (paths.empty()) Fail(ErrorCode::kInvalidArgument, "no stores given");
  auto set = std::make_shared<StoreSet>();
  Fnv1a64 h;
  for (const auto& p : paths) {
    set->stores_.push_back(FeatureStore::Open(p));
    const FeatureStore& s = set->stores_.back();
    h.Update(HexU64(s.manifest_checksum()));
    h.Update(HexU64(s.blob_checksum()));
    for (const auto& name : s.datasets()) {
      if (!set->owner_.emplace(name, set->stores_.size() - 1).second) {
        Fail(ErrorCode::kInvalidArgument, "dataset '" + name + "' appears in more than one store");
      }
      DatasetInfo info;
      const auto recs = s.ByDataset(name);
      info.task = recs.front()->task;
      info.form = recs.front()->form;
      for (const auto* r : recs) {
        if (!r->correctness) continue;
        (r->split == Split::kTrain ? info.n_train : info.n_test) += 1;
      }
      const auto o = task_override.find(name);
      if (o != task_override.end()) info.task = o->second;
      set->inventory_[name] = info;
    }
  }
  set->checksum_ = h.digest();
  return set;
}

const FeatureStore& StoreSet::store_for(std::string_view dataset) const {
  const auto it = owner_.find(dataset);
  if (it == owner_.end()) Fail(ErrorCode::kBadComposition, "dataset '" + std::string(dataset) + "' not in any store");
  return stores_[it->second];
}

Task StoreSet::task(std::string_view dataset) const {
  const auto it = inventory_.find(std::string(dataset));
  if (it == inventory_.end()) Fail(ErrorCode::kBadComposition, "dataset '" + std::string(dataset) + "' not in any store");
  return it->second.task;
}

LoadedConfig LoadConfig(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) Fail(ErrorCode::kMissingFile, "cannot read config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, path.string() + ": " + e.what());
  }
  std::vector<std::string> stores;
  for (const auto& s : j.value("stores", std::vector<std::string>{})) {
    std::filesystem::path p(s);
    if (p.is_relative()) p = path.parent_path() / p;
    stores.push_back(p.lexically_normal().string());
  }
  j["stores"] = stores;
  std::map<std::string, Task> tasks;
  const json task_map = j.value("tasks", json::object());
  for (const auto& [name, t] : task_map.items()) tasks[name] = ParseTask(t.get<std::string>());
  LoadedConfig out;
  out.stores = StoreSet::Open(stores, tasks);
  out.cells = ExpandConfig(j, out.stores->inventory());
  return out;
}

// ---------------------------------------------------------------------------
// Results

json ToJson(const ResultCell& r) {
  json j = {{"fingerprint", r.fingerprint}, {"config", r.config},   {"eval_dataset", r.eval_dataset},
            {"setting", r.setting},         {"method", r.method},   {"form", r.form},
            {"seed", r.seed},               {"ok", r.ok},           {"n_train", r.n_train},
            {"n_eval", r.n_eval},           {"wall_time", r.wall_time}};
  if (r.ok) {
    j["prr"] = r.prr;
  } else {
    j["error"] = r.error;
  }
  return j;
}

ResultCell ResultCellFromJson(const json& j) {
  ResultCell r;
  try {
    r.fingerprint = j.at("fingerprint").get<std::string>();
    r.config = j.value("config", json::object());
    r.eval_dataset = j.at("eval_dataset").get<std::string>();
    r.setting = j.at("setting").get<std::string>();
    r.method = j.at("method").get<std::string>();
    r.form = j.value("form", std::string("short"));
    r.seed = j.value("seed", uint64_t{0});
    r.ok = j.at("ok").get<bool>();
    r.prr = j.value("prr", 0.0);
    r.error = j.value("error", std::string());
    r.n_train = j.value("n_train", int64_t{0});
    r.n_eval = j.value("n_eval", int64_t{0});
    r.wall_time = j.value("wall_time", 0.0);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kMalformedManifest, std::string("result line: ") + e.what());
  }
  return r;
}

std::string Fingerprint(const ExperimentConfig& cell, const StoreSet& stores) {
  json j = ToJson(cell);
  j.erase("stores");
  Fnv1a64 h;
  h.Update(j.dump());
  h.Update("|");
  h.Update(HexU64(stores.checksum()));
  return HexU64(h.digest());
}

ResultCell RunCell(const ExperimentConfig& cell, const StoreSet& stores) {
  const auto t0 = std::chrono::steady_clock::now();
  ResultCell res;
  res.fingerprint = Fingerprint(cell, stores);
  res.config = ToJson(cell);
  res.eval_dataset = cell.eval_dataset;
  res.setting = std::string(ToString(cell.setting));
  res.method = cell.method;
  res.seed = cell.seed;
  try {
    ValidateCell(cell, &stores.inventory());
    res.form = std::string(ToString(stores.inventory().at(cell.eval_dataset).form));

    const Records eval_pool = Labelled(stores.store_for(cell.eval_dataset), cell.eval_dataset, Split::kTest);
    const Records eval = SampleWithoutReplacement(eval_pool, static_cast<size_t>(cell.max_eval),
                                                  DeriveSeed(cell.seed, "eval:" + cell.eval_dataset));
    if (eval.size() < 2) Fail(ErrorCode::kInsufficientData, cell.eval_dataset + " has fewer than 2 labelled test records");

    Records train;
    if (!IsUnsupervisedMethod(cell.method)) {
      for (const auto& e : cell.train_composition) {
        const Records pool = Labelled(stores.store_for(e.dataset), e.dataset, Split::kTrain);
        if (pool.size() < static_cast<size_t>(e.count)) {
          Fail(ErrorCode::kInsufficientData, e.dataset + " has " + std::to_string(pool.size()) +
                                                 " labelled train records, composition needs " +
                                                 std::to_string(e.count));
        }
        const Records part = SampleWithoutReplacement(pool, static_cast<size_t>(e.count),
                                                      DeriveSeed(cell.seed, "train:" + e.dataset));
        train.insert(train.end(), part.begin(), part.end());
      }
      if (train.size() != static_cast<size_t>(cell.train_budget)) {
        Fail(ErrorCode::kBadComposition, "sampled " + std::to_string(train.size()) + " training records");
      }
      std::unordered_set<std::string> eval_ids;
      for (const auto* r : eval) eval_ids.insert(r->instance_id);
      for (const auto* r : train) {
        if (eval_ids.count(r->instance_id) != 0 ||
            (cell.setting != OodSetting::kId && r->dataset == cell.eval_dataset)) {
          Fail(ErrorCode::kEvalLeak, r->instance_id + " is both trained on and evaluated");
        }
      }
    }

    CellContext ctx(cell, stores, train, eval);
    const std::vector<double> u = ctx.Score();
    res.prr = PredictionRejectionRatio(u, Correctness(eval));
    if (!std::isfinite(res.prr)) Fail(ErrorCode::kNonFiniteInput, "PRR is not finite");
    res.n_train = static_cast<int64_t>(train.size());
    res.n_eval = static_cast<int64_t>(eval.size());
    res.ok = true;
  } catch (const Error& e) {
    res.ok = false;
    res.error = e.what();
  } catch (const std::exception& e) {
    res.ok = false;
    res.error = std::string("Internal: ") + e.what();
  }
  res.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return res;
}

int ResolveWorkers(int requested) {
  int n = requested > 0 ? requested : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  if (const char* env = std::getenv("UQP_WORKERS")) {
    const int cap = std::atoi(env);
    if (cap > 0) n = std::min(n, cap);
  }
  return std::max(n, 1);
}

std::vector<ResultCell> LoadResults(const std::filesystem::path& results_jsonl) {
  std::vector<ResultCell> out;
  std::ifstream in(results_jsonl);
  if (!in) return out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      out.push_back(ResultCellFromJson(json::parse(line)));
    } catch (const json::exception& e) {
      throw Error(ErrorCode::kMalformedManifest, results_jsonl.string() + " line " + std::to_string(line_no) +
                                                     ": " + e.what());
    }
  }
  return out;
}

std::vector<ResultCell> RunMatrix(const std::vector<ExperimentConfig>& cells, const StoreSet& stores,
                                  const RunOptions& options) {
  std::vector<ResultCell> results(cells.size());
  std::map<std::string, ResultCell> cache;
  std::filesystem::path ledger;
  if (!options.out_dir.empty()) {
    std::filesystem::create_directories(options.out_dir);
    ledger = options.out_dir / "results.jsonl";
    for (auto& r : LoadResults(ledger)) {
      if (r.ok) cache[r.fingerprint] = std::move(r);
    }
  }
  std::vector<size_t> pending;
  for (size_t i = 0; i < cells.size(); ++i) {
    const std::string fp = Fingerprint(cells[i], stores);
    const auto it = cache.find(fp);
    if (it != cache.end()) {
      results[i] = it->second;
      results[i].cached = true;
    } else {
      pending.push_back(i);
    }
  }

  std::mutex ledger_mu;
  std::atomic<size_t> next{0};
  auto worker = [&] {
    for (size_t k = next++; k < pending.size(); k = next++) {
      const size_t i = pending[k];
      ResultCell r = RunCell(cells[i], stores);
      if (!ledger.empty()) {
        std::lock_guard<std::mutex> lock(ledger_mu);
        std::ofstream out(ledger, std::ios::app);
        out << ToJson(r).dump() << "\n";
      }
      results[i] = std::move(r);
    }
  };
  const int n_workers = std::min<int>(ResolveWorkers(options.workers), static_cast<int>(std::max<size_t>(pending.size(), 1)));
  if (n_workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    for (int t = 0; t < n_workers; ++t) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
  }
  return results;
}

}  // namespace uqp
