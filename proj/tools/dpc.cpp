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
// dpc: command-line front end for the DPC architecture search workflow.
//
//   dpc gen-data --config run.json --out runs/a
//   dpc cache    --config run.json --out runs/a
//   dpc search   --config run.json --out runs/a [--parallelism 4]
//   dpc rerank   --config run.json --out runs/a --k 10 [--aspp-baseline]
//   dpc cost     --out runs/a --genotype data/top1_dpc.json --in-channels 2048
//   dpc analyze  --config run.json --out runs/a [--genotype best.json]

#include <cmath>
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dpc/pipeline.hpp"

namespace {

int run(int argc, char** argv) {
  CLI::App app{"Dense Prediction Cell architecture search"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path, out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<int> parallelism;
  app.add_option("--config", config_path, "JSON run configuration")->check(CLI::ExistingFile);
  app.add_option("--out", out_dir, "Output directory")->required();
  app.add_option("--seed", seed, "Master seed (search.seed and train.seed)");
  app.add_option("--parallelism", parallelism, "Concurrent trials");

  auto* gen = app.add_subcommand("gen-data", "Generate the synthetic dataset");
  auto* cache = app.add_subcommand("cache", "Build the backbone feature cache");
  auto* search = app.add_subcommand("search", "Run (or resume) the proxy search");
  auto* rr = app.add_subcommand("rerank", "Rerank the top proxy trials by full training");
  int k = -1;
  bool aspp_baseline = false;
  rr->add_option("--k", k, "Number of top trials (default search.rerank_k)");
  rr->add_flag("--aspp-baseline", aspp_baseline, "Also fully train ASPP for comparison");
  auto* cost = app.add_subcommand("cost", "Parameter and multiply-add table");
  std::vector<std::string> genotype_files;
  int in_channels = 2048, filters = 256, height = 33, width = 33;
  cost->add_option("--genotype", genotype_files, "Genotype JSON files")->check(CLI::ExistingFile);
  cost->add_option("--in-channels", in_channels, "Backbone channels");
  cost->add_option("--filters", filters, "Filters per branch");
  cost->add_option("--height", height, "Feature map height");
  cost->add_option("--width", width, "Feature map width");
  auto* analyze = app.add_subcommand("analyze", "Branch importance and score histogram");
  std::string analyze_genotype;
  analyze->add_option("--genotype", analyze_genotype,
                      "Genotype to train (default: rerank/best.json, else search/best.json)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(dpc::ExitCode::kConfig);
  }

  dpc::RunConfig cfg = config_path.empty() ? dpc::RunConfig{} : dpc::load_config(config_path);
  if (seed) {
    cfg.search.seed = *seed;
    cfg.train.seed = *seed;
  }
  if (parallelism) cfg.search.parallelism = *parallelism;
  cfg.train.filters = cfg.space.filters;
  dpc::validate_config(cfg);
  const dpc::Workspace ws{out_dir};

  if (*gen) {
    dpc::cmd_gen_data(cfg, ws);
    std::cout << "wrote " << cfg.dataset.num_images << " images to " << ws.dataset() << "\n";
  } else if (*cache) {
    const auto c = dpc::cmd_cache(cfg, ws);
    std::cout << "cached " << c.size() << " feature maps in " << ws.cache() << "\n";
  } else if (*search) {
    const auto log = dpc::cmd_search(cfg, ws, [](const dpc::TrialRecord& r) {
      std::cerr << "trial " << r.trial_id << " " << dpc::origin_name(r.origin) << " "
                << dpc::describe(r.genotype) << " miou=" << r.proxy_score
                << (r.failed ? " FAILED" : "") << "\n";
    });
    std::cout << "search log has " << log.size() << " trials: " << ws.trial_log() << "\n";
  } else if (*rr) {
    const auto s = dpc::cmd_rerank(cfg, ws, k > 0 ? k : cfg.search.rerank_k, aspp_baseline);
    std::cout << "rerank winner proxy rank " << s.result.winner_proxy_rank;
    if (s.result.entries.size() >= 2) {
      std::cout << ", spearman rho ";
      if (std::isnan(s.report.rho))
        std::cout << "undefined";
      else
        std::cout << s.report.rho;
    }
    std::cout << "\n";
  } else if (*cost) {
    std::vector<dpc::Genotype> gs;
    for (const auto& f : genotype_files) gs.push_back(dpc::read_genotype_file(f));
    const auto rows = dpc::cmd_cost(gs, ws, in_channels, filters, height, width);
    for (const auto& r : rows)
      std::cout << r.genotype_hash << " params=" << r.cost.params << " madds=" << r.cost.madds
                << " ratio=" << r.params_ratio << "/" << r.madds_ratio << "\n";
  } else if (*analyze) {
    std::string path = analyze_genotype;
    if (path.empty())
      path = (dpc::fs::exists(ws.rerank() / "best.json") ? ws.rerank() : ws.search()) / "best.json";
    const auto s = dpc::cmd_analyze(cfg, ws, dpc::read_genotype_file(path));
    for (const auto& b : s.importance)
      std::cout << "branch " << b.branch << " (" << b.input << ":" << b.op << ") l1=" << b.l1_norm
                << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const dpc::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(dpc::ExitCode::kData);
  }
}
