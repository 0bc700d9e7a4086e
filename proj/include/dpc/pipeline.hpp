/* Copyright 2026 The DPC Search Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#ifndef DPC_PIPELINE_HPP_
#define DPC_PIPELINE_HPP_

// The command-line workflow as library calls. Every command reads and writes
// only below `out`:
//
//   out/config.json                 resolved configuration
//   out/dataset/                    gen-data
//   out/cache/                      cache
//   out/search/trials.jsonl         search (plus best.json, best_so_far.csv)
//   out/rerank/                     rerank (fidelity.csv, fidelity.md, best.json)
//   out/cost/                       cost (costs.csv, costs.md)
//   out/analyze/                    analyze (importance.csv, histogram.csv)

#include <filesystem>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "dpc/analysis.hpp"
#include "dpc/backbone.hpp"
#include "dpc/config.hpp"
#include "dpc/dataset.hpp"
#include "dpc/dpct_io.hpp"
#include "dpc/feature_cache.hpp"
#include "dpc/proxy.hpp"
#include "dpc/search.hpp"

namespace dpc {

namespace fs = std::filesystem;

struct Workspace {
  fs::path out;

  fs::path dataset() const { return out / "dataset"; }
  fs::path cache() const { return out / "cache"; }
  fs::path search() const { return out / "search"; }
  fs::path trial_log() const { return search() / "trials.jsonl"; }
  fs::path rerank() const { return out / "rerank"; }
  fs::path cost() const { return out / "cost"; }
  fs::path analyze() const { return out / "analyze"; }
};

inline void write_text(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  write_file_atomic(path, text);
}

inline void persist_config(const RunConfig& cfg, const Workspace& ws) {
  write_text(ws.out / "config.json", to_json(cfg).dump(2) + "\n");
}

inline Genotype read_genotype_file(const fs::path& path) {
  try {
    return decode(read_file(path));
  } catch (const Error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

inline void cmd_gen_data(const RunConfig& cfg, const Workspace& ws) {
  validate_config(cfg);
  persist_config(cfg, ws);
  save_dataset(generate_dataset(cfg.dataset), ws.dataset());
}

inline FeatureCache cmd_cache(const RunConfig& cfg, const Workspace& ws) {
  validate_config(cfg);
  persist_config(cfg, ws);
  const Dataset d = load_dataset(ws.dataset());
  return build_cache(d, make_backbone(cfg.backbone), ws.cache());
}

inline TrialEvaluator proxy_evaluator(const FeatureCache& cache, const TrainConfig& tc) {
  return [&cache, tc](const Genotype& g, std::uint64_t seed) {
    TrainConfig t = tc;
    t.seed = seed;
    const TrainResult r = train_candidate(g, cache, t);
    return TrialOutcome{r.miou, r.wall_ms};
  };
}

// Runs (or resumes) the search recorded in out/search/trials.jsonl.
inline TrialLog cmd_search(const RunConfig& cfg, const Workspace& ws,
                           std::function<void(const TrialRecord&)> on_record = {}) {
  validate_config(cfg);
  persist_config(cfg, ws);
  const FeatureCache cache = load_cache(ws.cache());
  if (cache.dataset_fingerprint != dataset_fingerprint(cfg.dataset) ||
      cache.backbone_fingerprint != make_backbone(cfg.backbone).fingerprint())
    throw StaleCacheError("feature cache in " + ws.cache().string() +
                          " does not match the configuration; rerun the cache command");
  fs::create_directories(ws.search());
  SearchContext ctx;
  ctx.space = cfg.space;
  ctx.search = cfg.search;
  ctx.evaluate = proxy_evaluator(cache, cfg.train);
  ctx.steps = cfg.train.steps;
  ctx.log_path = ws.trial_log();
  ctx.on_record = std::move(on_record);
  TrialLog log = run_search(ctx, read_log(ws.trial_log()));

  const auto top = ranked(log);
  if (!top.empty()) write_text(ws.search() / "best.json", encode(top.front().genotype) + "\n");
  std::ostringstream trace;
  trace << "trial_id,best_proxy_score\n";
  const auto bs = best_so_far(log);
  for (std::size_t i = 0; i < bs.size(); ++i) trace << i << ',' << bs[i] << '\n';
  write_text(ws.search() / "best_so_far.csv", trace.str());
  return log;
}

inline FullEvaluator full_evaluator(const Dataset& dataset, const Backbone& backbone,
                                    const TrainConfig& proxy_tc) {
  const TrainConfig full = full_train_config(proxy_tc);
  return [&dataset, &backbone, full](const Genotype& g, std::uint64_t seed) {
    TrainConfig t = full;
    t.seed = seed;
    return train_full(g, dataset, backbone, t).miou;
  };
}

struct RerankSummary {
  std::vector<TrialRecord> top;
  RerankResult result;
  FidelityReport report;
  std::optional<double> aspp_score;
  std::optional<double> best_score;
};

// Reranks the top-k proxy trials by full training. With `aspp_baseline`, the
// canonical ASPP genotype is trained under the same seed rule for comparison.
inline RerankSummary cmd_rerank(const RunConfig& cfg, const Workspace& ws, int k,
                                bool aspp_baseline = false) {
  validate_config(cfg);
  persist_config(cfg, ws);
  const TrialLog log = read_log(ws.trial_log());
  if (log.empty()) throw DataError("no trial log at " + ws.trial_log().string());
  RerankSummary s;
  s.top = select_top_k(log, k);
  const Dataset dataset = load_dataset(ws.dataset());
  const Backbone backbone = make_backbone(cfg.backbone);
  std::vector<Genotype> genotypes;
  std::vector<double> proxy;
  for (const auto& r : s.top) {
    genotypes.push_back(r.genotype);
    proxy.push_back(r.proxy_score);
  }
  const FullEvaluator eval = full_evaluator(dataset, backbone, cfg.train);
  s.result = rerank(genotypes, eval, cfg.search.seed, cfg.search.parallelism);
  std::vector<double> scores(genotypes.size());
  for (const auto& e : s.result.entries) scores[e.proxy_rank - 1] = e.rerank_score;
  s.best_score = s.result.entries.front().rerank_score;

  fs::create_directories(ws.rerank());
  std::string md;
  if (genotypes.size() >= 2) {
    s.report = fidelity_report(proxy, scores, genotypes);
    write_text(ws.rerank() / "fidelity.csv", s.report.csv());
    md = s.report.markdown();
  } else {
    // A single candidate has no rank correlation.
    s.report.winner_proxy_rank = 1;
    s.report.rows.push_back({genotype_hash(genotypes[0]), proxy[0], scores[0], 1, 1});
    write_text(ws.rerank() / "fidelity.csv", s.report.csv());
    md = "# Proxy fidelity\n\n- Spearman rho: undefined (one candidate)\n"
         "- Rerank winner's proxy rank: 1\n";
  }
  if (aspp_baseline && cfg.space.num_branches == 5) {
    const Genotype aspp = aspp_genotype(cfg.space);
    s.aspp_score = eval(aspp, rerank_seed(cfg.search.seed, aspp));
    std::ostringstream extra;
    extra << "\n## ASPP baseline\n\n- ASPP full-training mIOU: " << *s.aspp_score
          << "\n- Rerank winner mIOU: " << *s.best_score
          << "\n- Gap (winner - ASPP): " << (*s.best_score - *s.aspp_score) << "\n";
    md += extra.str();
  }
  write_text(ws.rerank() / "fidelity.md", md);
  write_text(ws.rerank() / "best.json", encode(s.result.entries.front().genotype) + "\n");
  return s;
}

// Cost table with ASPP as the baseline first row, followed by `genotypes`.
inline std::vector<CostRow> cmd_cost(const std::vector<Genotype>& genotypes,
                                     const Workspace& ws, int in_channels, int filters,
                                     int h, int w) {
  if (in_channels < 1 || filters < 1 || h < 1 || w < 1)
    throw ConfigError("cost: channels and dims must be >= 1");
  std::vector<Genotype> all = {aspp_genotype()};
  all.insert(all.end(), genotypes.begin(), genotypes.end());
  const auto rows = cost_comparison(all, in_channels, filters, h, w);
  std::ostringstream csv, md;
  csv << cost_csv_header() << '\n';
  md << "| genotype | params | madds | params ratio | madds ratio |\n|---|---|---|---|---|\n";
  for (std::size_t i = 0; i < all.size(); ++i) {
    csv << cost_csv_row(all[i], in_channels, filters, h, w) << '\n';
    md << "| " << rows[i].genotype_hash << (i == 0 ? " (ASPP)" : "") << " | "
       << rows[i].cost.params << " | " << rows[i].cost.madds << " | " << rows[i].params_ratio
       << " | " << rows[i].madds_ratio << " |\n";
  }
  write_text(ws.cost() / "costs.csv", csv.str());
  write_text(ws.cost() / "costs.md", md.str());
  return rows;
}

struct AnalyzeSummary {
  std::vector<BranchImportance> importance;
  Histogram histogram;
};

// Trains `g` on the cache (proxy protocol, train.seed) and reports the head's
// per-branch L1 norms plus the proxy score histogram of the trial log.
inline AnalyzeSummary cmd_analyze(const RunConfig& cfg, const Workspace& ws,
                                  const Genotype& g) {
  validate_config(cfg);
  persist_config(cfg, ws);
  const FeatureCache cache = load_cache(ws.cache());
  const TrainResult trained = train_candidate(g, cache, cfg.train);
  AnalyzeSummary s;
  s.importance = branch_l1_norms(trained.cell);
  write_text(ws.analyze() / "importance.csv", importance_csv(s.importance));
  const TrialLog log = read_log(ws.trial_log());
  if (!log.empty()) {
    s.histogram = score_histogram(log, cfg.histogram_bins);
    write_text(ws.analyze() / "histogram.csv", histogram_csv(s.histogram));
  }
  return s;
}

}  // namespace dpc

#endif  // DPC_PIPELINE_HPP_
