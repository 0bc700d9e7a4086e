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

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <set>

#include <gtest/gtest.h>

#include "dpc/dpc.hpp"
#include "test_util.hpp"

namespace dpc {
namespace {

namespace fs = std::filesystem;

int run_cli(const std::string& args) {
  const std::string cmd = std::string(DPC_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string tiny_config() {
  return R"({
  "space": {"filters": 4},
  "dataset": {"num_images": 20, "image_h": 32, "image_w": 32, "seed": 2},
  "backbone": {"out_channels": 4},
  "train": {"steps": 4, "batch_size": 2, "full_steps_multiplier": 1, "eval_batch": 4},
  "search": {"budget": 6, "top_k": 3, "rerank_k": 3, "seed": 5},
  "analysis": {"histogram_bins": 5}
})";
}

fs::path write_config(const fs::path& dir, const std::string& text) {
  fs::create_directories(dir);
  std::ofstream(dir / "config.in.json") << text;
  return dir / "config.in.json";
}

std::set<std::string> tree(const fs::path& root) {
  std::set<std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) out.insert(fs::relative(e.path(), root).string());
  return out;
}

TEST(CliTest, ExitCodes) {
  const auto dir = testutil::scratch_dir("cli_codes");
  const auto bad = write_config(dir / "bad", R"({"search": {"budgett": 1}})");
  EXPECT_EQ(run_cli("--config " + bad.string() + " --out " + (dir / "o").string() + " gen-data"), 2);
  const auto ok = write_config(dir / "ok", tiny_config());
  EXPECT_EQ(run_cli("--config " + ok.string() + " --out " + (dir / "empty").string() + " cache"), 3);
  EXPECT_EQ(run_cli("--out " + (dir / "o").string() + " no-such-command"), 2);
  EXPECT_EQ(run_cli("--out " + (dir / "o").string() + " cost --filters 0"), 2);
  EXPECT_EQ(run_cli("--help"), 0);
}

TEST(CliTest, GenDataIsReproducible) {
  const auto dir = testutil::scratch_dir("cli_gen");
  const auto cfg = write_config(dir, tiny_config());
  ASSERT_EQ(run_cli("--config " + cfg.string() + " --out " + (dir / "a").string() + " gen-data"), 0);
  ASSERT_EQ(run_cli("--config " + cfg.string() + " --out " + (dir / "b").string() + " gen-data"), 0);
  const auto files = tree(dir / "a");
  EXPECT_EQ(files, tree(dir / "b"));
  EXPECT_GT(files.size(), 20u);
  for (const auto& f : files) EXPECT_EQ(testutil::slurp(dir / "a" / f), testutil::slurp(dir / "b" / f)) << f;
}

TEST(CliTest, CostTable) {
  const auto dir = testutil::scratch_dir("cli_cost");
  const std::string top1 = std::string(DPC_DATA_DIR) + "/top1_dpc.json";
  const std::string aspp = std::string(DPC_DATA_DIR) + "/aspp.json";
  ASSERT_EQ(run_cli("--out " + dir.string() + " cost --genotype " + aspp + " --genotype " + top1 +
                    " --in-channels 2048 --filters 256 --height 65 --width 65"),
            0);
  const std::string csv = testutil::slurp(dir / "cost" / "costs.csv");
  std::istringstream lines(csv);
  std::string header, base, self, dpc_row;
  std::getline(lines, header);
  std::getline(lines, base);
  std::getline(lines, self);
  std::getline(lines, dpc_row);
  EXPECT_EQ(header, cost_csv_header());
  EXPECT_EQ(base, cost_csv_row(aspp_genotype(), 2048, 256, 65, 65));
  EXPECT_EQ(self, base);
  EXPECT_EQ(dpc_row, cost_csv_row(decode(testutil::slurp(top1)), 2048, 256, 65, 65));
  EXPECT_TRUE(fs::exists(dir / "cost" / "costs.md"));
}

TEST(CliTest, EndToEndPipelineStaysUnderOut) {
  const auto dir = testutil::scratch_dir("cli_pipeline");
  const auto cfg = write_config(dir / "in", tiny_config());
  const fs::path out = dir / "out";
  const std::string base = "--config " + cfg.string() + " --out " + out.string() + " ";
  ASSERT_EQ(run_cli(base + "gen-data"), 0);
  ASSERT_EQ(run_cli(base + "cache"), 0);
  ASSERT_EQ(run_cli(base + "search"), 0);
  ASSERT_EQ(run_cli(base + "rerank --aspp-baseline"), 0);
  ASSERT_EQ(run_cli(base + "analyze"), 0);

  const TrialLog log = read_log(out / "search" / "trials.jsonl");
  EXPECT_EQ(log.size(), 6u);
  for (const char* f : {"config.json", "search/best.json", "search/best_so_far.csv",
                        "rerank/fidelity.csv", "rerank/fidelity.md", "rerank/best.json",
                        "analyze/importance.csv", "analyze/histogram.csv"})
    EXPECT_TRUE(fs::exists(out / f)) << f;
  EXPECT_EQ(tree(dir / "in"), std::set<std::string>{"config.in.json"});
  const std::string fidelity = testutil::slurp(out / "rerank" / "fidelity.csv");
  EXPECT_EQ(std::count(fidelity.begin(), fidelity.end(), '\n'), 4);
  const std::string hist = testutil::slurp(out / "analyze" / "histogram.csv");
  EXPECT_EQ(std::count(hist.begin(), hist.end(), '\n'), 6);
  EXPECT_EQ(config_from_json(nlohmann::json::parse(testutil::slurp(out / "config.json"))).search.budget, 6);

  // A finished search is a no-op on rerun.
  const std::string before = testutil::slurp(out / "search" / "trials.jsonl");
  ASSERT_EQ(run_cli(base + "search"), 0);
  EXPECT_EQ(testutil::slurp(out / "search" / "trials.jsonl"), before);
}

TEST(CliTest, StaleCacheIsDataError) {
  const auto dir = testutil::scratch_dir("cli_stale");
  const auto cfg = write_config(dir / "in", tiny_config());
  const std::string out = " --out " + (dir / "out").string() + " ";
  ASSERT_EQ(run_cli("--config " + cfg.string() + out + "gen-data"), 0);
  ASSERT_EQ(run_cli("--config " + cfg.string() + out + "cache"), 0);
  std::string changed = tiny_config();
  changed.replace(changed.find("\"seed\": 2"), 9, "\"seed\": 3");
  const auto cfg2 = write_config(dir / "in2", changed);
  EXPECT_EQ(run_cli("--config " + cfg2.string() + out + "search"), 3);
}

}  // namespace
}  // namespace dpc
