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
#ifndef DPC_SEARCH_HPP_
#define DPC_SEARCH_HPP_

// Random search with exploitation around the current best genotypes, the
// JSON Lines trial log, top-k selection, reranking and Spearman's rho.
//
// Sample s draws from its own generator seeded by (master seed, s). With
// probability exploit_prob, and when the pool is non-empty, it mutates one
// field of a genotype picked uniformly from the top_k completed trials at
// sampling time; otherwise it samples uniformly. Records are appended in
// completion order and get dense trial ids in that order.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <limits>
#include <mutex>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "dpc/errors.hpp"
#include "dpc/search_space.hpp"
#include "json.hpp"

namespace dpc {

enum class Origin { kUniform, kNearBest };

inline const char* origin_name(Origin o) {
  return o == Origin::kUniform ? "uniform" : "near_best";
}

struct TrialRecord {
  int trial_id = 0;
  int sample_index = 0;
  Origin origin = Origin::kUniform;
  std::optional<int> parent_id;
  Genotype genotype;
  double proxy_score = 0.0;
  std::uint64_t seed = 0;
  int steps = 0;
  std::int64_t wall_ms = 0;
  bool failed = false;
  bool duplicate = false;
};

using TrialLog = std::vector<TrialRecord>;

struct SearchConfig {
  int budget = 200;
  double exploit_prob = 0.5;
  int top_k = 10;
  int rerank_k = 10;
  std::uint64_t seed = 0;
  int parallelism = 1;
  // Wall times vary run to run; when false the log stores 0 so that logs are
  // byte-reproducible.
  bool log_wall_time = false;
};

inline void validate_config(const SearchConfig& c) {
  if (c.budget < 1) throw ConfigError("search.budget: must be >= 1");
  if (!(c.exploit_prob >= 0.0 && c.exploit_prob <= 1.0))
    throw ConfigError("search.exploit_prob: must be in [0, 1]");
  if (c.top_k < 1) throw ConfigError("search.top_k: must be >= 1");
  if (c.rerank_k < 1) throw ConfigError("search.rerank_k: must be >= 1");
  if (c.rerank_k > c.budget) throw ConfigError("search.rerank_k: must be <= budget");
  if (c.parallelism < 1) throw ConfigError("search.parallelism: must be >= 1");
}

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream,
                                 std::uint64_t tag) {
  return splitmix64(splitmix64(splitmix64(master) ^ stream) ^ tag);
}

inline constexpr std::uint64_t kSampleTag = 1;
inline constexpr std::uint64_t kTrainTag = 2;

// Order-independent seed for reranking a genotype.
inline std::uint64_t rerank_seed(std::uint64_t master, const Genotype& g) {
  return derive_seed(master, fnv1a64(encode(g)), 3);
}

inline std::string to_jsonl(const TrialRecord& r, bool with_wall_time = true) {
  nlohmann::ordered_json j;
  j["trial_id"] = r.trial_id;
  j["sample_index"] = r.sample_index;
  j["origin"] = origin_name(r.origin);
  j["parent_id"] = r.parent_id ? nlohmann::ordered_json(*r.parent_id) : nullptr;
  j["genotype"] = nlohmann::ordered_json::parse(encode(r.genotype));
  j["proxy_score"] = r.proxy_score;
  j["seed"] = r.seed;
  j["steps"] = r.steps;
  j["wall_ms"] = with_wall_time ? r.wall_ms : 0;
  j["failed"] = r.failed;
  j["duplicate"] = r.duplicate;
  return j.dump();
}

inline TrialRecord record_from_json(const nlohmann::json& j) {
  TrialRecord r;
  r.trial_id = j.at("trial_id").get<int>();
  r.sample_index = j.at("sample_index").get<int>();
  const std::string o = j.at("origin").get<std::string>();
  if (o == "uniform")
    r.origin = Origin::kUniform;
  else if (o == "near_best")
    r.origin = Origin::kNearBest;
  else
    throw DataError("trial log: unknown origin \"" + o + "\"");
  if (!j.at("parent_id").is_null()) r.parent_id = j.at("parent_id").get<int>();
  r.genotype = genotype_from_json(j.at("genotype"));
  r.proxy_score = j.at("proxy_score").get<double>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.steps = j.at("steps").get<int>();
  r.wall_ms = j.at("wall_ms").get<std::int64_t>();
  r.failed = j.at("failed").get<bool>();
  r.duplicate = j.value("duplicate", false);
  return r;
}

// Reads a trial log. A final line without its newline (an interrupted write)
// is dropped; any other malformed line is a data error.
inline TrialLog read_log(const std::filesystem::path& path) {
  TrialLog log;
  if (!std::filesystem::exists(path)) return log;
  std::ifstream f(path, std::ios::binary);
  const std::string text((std::istreambuf_iterator<char>(f)), {});
  std::size_t pos = 0;
  int line_no = 0;
  while (pos < text.size()) {
    const std::size_t nl = text.find('\n', pos);
    if (nl == std::string::npos) break;
    ++line_no;
    const std::string line = text.substr(pos, nl - pos);
    pos = nl + 1;
    if (line.empty()) continue;
    try {
      log.push_back(record_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    } catch (const ValidationError& e) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  for (std::size_t i = 0; i < log.size(); ++i)
    if (log[i].trial_id != static_cast<int>(i))
      throw DataError(path.string() + ": trial ids are not dense from 0");
  return log;
}

// Rewrites the log so that it holds exactly `log`; drops any partial tail.
inline void write_log(const std::filesystem::path& path, const TrialLog& log,
                      bool with_wall_time) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot write trial log " + path.string());
  for (const auto& r : log) f << to_jsonl(r, with_wall_time) << '\n';
}

// Usable (non-failed) trials by descending score, ties to the lower trial id.
inline std::vector<TrialRecord> ranked(const TrialLog& log) {
  std::vector<TrialRecord> out;
  for (const auto& r : log)
    if (!r.failed) out.push_back(r);
  std::stable_sort(out.begin(), out.end(), [](const TrialRecord& a, const TrialRecord& b) {
    if (a.proxy_score != b.proxy_score) return a.proxy_score > b.proxy_score;
    return a.trial_id < b.trial_id;
  });
  return out;
}

inline std::vector<TrialRecord> select_top_k(const TrialLog& log, int k) {
  std::vector<TrialRecord> r = ranked(log);
  if (k < 1 || k > static_cast<int>(r.size()))
    throw ArgumentError("select_top_k: k = " + std::to_string(k) + " but only " +
                        std::to_string(r.size()) + " usable trials");
  r.resize(k);
  return r;
}

inline std::vector<double> best_so_far(const TrialLog& log) {
  if (log.empty()) throw ArgumentError("best_so_far: empty log");
  std::vector<TrialRecord> by_id = log;
  std::sort(by_id.begin(), by_id.end(),
            [](const auto& a, const auto& b) { return a.trial_id < b.trial_id; });
  std::vector<double> out;
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& r : by_id) {
    best = std::max(best, r.proxy_score);
    out.push_back(best);
  }
  return out;
}

struct TrialOutcome {
  double score = 0.0;
  std::int64_t wall_ms = 0;
};

// Trains and scores one genotype; throwing NumericalError marks the trial as
// failed.
using TrialEvaluator =
    std::function<TrialOutcome(const Genotype&, std::uint64_t seed)>;

struct SearchContext {
  SearchSpaceConfig space;
  SearchConfig search;
  TrialEvaluator evaluate;
  int steps = 0;  // recorded per trial
  std::optional<std::filesystem::path> log_path;
  // Called after each record is appended (completion order).
  std::function<void(const TrialRecord&)> on_record;
};

namespace detail {

struct PendingTrial {
  int sample_index = 0;
  Origin origin = Origin::kUniform;
  std::optional<int> parent_id;
  Genotype genotype;
  std::uint64_t seed = 0;
};

inline PendingTrial draw_trial(const SearchContext& ctx, const TrialLog& log,
                               int sample_index) {
  Rng rng(derive_seed(ctx.search.seed, static_cast<std::uint64_t>(sample_index),
                      kSampleTag));
  PendingTrial p;
  p.sample_index = sample_index;
  p.seed = derive_seed(ctx.search.seed, static_cast<std::uint64_t>(sample_index), kTrainTag);
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  std::vector<TrialRecord> pool = ranked(log);
  if (static_cast<int>(pool.size()) > ctx.search.top_k) pool.resize(ctx.search.top_k);
  if (!pool.empty() && u < ctx.search.exploit_prob) {
    const auto& parent =
        pool[std::uniform_int_distribution<std::size_t>(0, pool.size() - 1)(rng)];
    p.origin = Origin::kNearBest;
    p.parent_id = parent.trial_id;
    p.genotype = mutate(parent.genotype, rng, ctx.space);
  } else {
    p.genotype = sample_uniform(rng, ctx.space);
  }
  return p;
}

inline TrialRecord run_trial(const SearchContext& ctx, const PendingTrial& p) {
  TrialRecord r;
  r.sample_index = p.sample_index;
  r.origin = p.origin;
  r.parent_id = p.parent_id;
  r.genotype = p.genotype;
  r.seed = p.seed;
  r.steps = ctx.steps;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    const TrialOutcome o = ctx.evaluate(p.genotype, p.seed);
    if (!std::isfinite(o.score)) throw NumericalError("non-finite score");
    r.proxy_score = std::clamp(o.score, 0.0, 1.0);
  } catch (const NumericalError&) {
    r.proxy_score = 0.0;
    r.failed = true;
  }
  r.wall_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                  std::chrono::steady_clock::now() - t0)
                  .count();
  return r;
}

}  // namespace detail

// Runs trials until the log holds `budget` records. `resume` holds records
// from an earlier, interrupted run (trial ids 0..n-1); they are kept as-is.
inline TrialLog run_search(const SearchContext& ctx, TrialLog resume = {}) {
  validate_config(ctx.search);
  if (ctx.space.num_branches < 1) throw ConfigError("space.num_branches: must be >= 1");
  if (!ctx.evaluate) throw ArgumentError("run_search: no evaluator");
  TrialLog log = std::move(resume);
  if (static_cast<int>(log.size()) > ctx.search.budget)
    throw DataError("trial log already holds more than budget records");
  std::set<std::string> seen;
  int next_sample = 0;
  for (const auto& r : log) {
    seen.insert(encode(r.genotype));
    next_sample = std::max(next_sample, r.sample_index + 1);
  }
  if (ctx.log_path) write_log(*ctx.log_path, log, ctx.search.log_wall_time);
  std::ofstream out;
  if (ctx.log_path) {
    out.open(*ctx.log_path, std::ios::binary | std::ios::app);
    if (!out) throw DataError("cannot append to " + ctx.log_path->string());
  }
  auto append = [&](TrialRecord r) {
    r.trial_id = static_cast<int>(log.size());
    r.duplicate = !seen.insert(encode(r.genotype)).second;
    if (out.is_open()) {
      out << to_jsonl(r, ctx.search.log_wall_time) << '\n';
      out.flush();
    }
    log.push_back(r);
    if (ctx.on_record) ctx.on_record(log.back());
  };

  const int budget = ctx.search.budget;
  if (ctx.search.parallelism == 1) {
    while (static_cast<int>(log.size()) < budget)
      append(detail::run_trial(ctx, detail::draw_trial(ctx, log, next_sample++)));
    return log;
  }

  std::mutex mu;
  std::condition_variable cv;
  std::vector<TrialRecord> done;
  std::vector<std::jthread> workers;
  int in_flight = 0;
  while (static_cast<int>(log.size()) < budget) {
    while (in_flight < ctx.search.parallelism &&
           static_cast<int>(log.size()) + in_flight < budget) {
      detail::PendingTrial p = detail::draw_trial(ctx, log, next_sample++);
      ++in_flight;
      workers.emplace_back([&ctx, &mu, &cv, &done, p = std::move(p)] {
        TrialRecord r = detail::run_trial(ctx, p);
        std::lock_guard lock(mu);
        done.push_back(std::move(r));
        cv.notify_one();
      });
    }
    std::vector<TrialRecord> batch;
    {
      std::unique_lock lock(mu);
      cv.wait(lock, [&] { return !done.empty(); });
      batch.swap(done);
    }
    // Trials that finished together are logged in sampling order.
    std::sort(batch.begin(), batch.end(), [](const auto& a, const auto& b) {
      return a.sample_index < b.sample_index;
    });
    for (auto& r : batch) {
      --in_flight;
      append(std::move(r));
    }
  }
  return log;
}

// Pearson correlation of tie-averaged ranks.
inline std::vector<double> average_ranks(const std::vector<double>& xs) {
  std::vector<std::size_t> order(xs.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return xs[a] < xs[b]; });
  std::vector<double> ranks(xs.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && xs[order[j + 1]] == xs[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = avg;
    i = j + 1;
  }
  return ranks;
}

inline double spearman_rho(const std::vector<double>& xs, const std::vector<double>& ys) {
  if (xs.size() != ys.size())
    throw ArgumentError("spearman_rho: lengths differ");
  if (xs.size() < 2) throw ArgumentError("spearman_rho: undefined for fewer than 2 points");
  const auto rx = average_ranks(xs), ry = average_ranks(ys);
  const double n = static_cast<double>(xs.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0)
    throw ArgumentError("spearman_rho: undefined correlation (zero rank variance)");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

struct RerankEntry {
  Genotype genotype;
  int proxy_rank = 0;  // 1-based position in the input list
  double rerank_score = 0.0;
  bool failed = false;
};

struct RerankResult {
  std::vector<RerankEntry> entries;  // by rerank score, descending
  int winner_proxy_rank = 0;
};

using FullEvaluator = std::function<double(const Genotype&, std::uint64_t seed)>;

// Retrains every genotype with `evaluate` under a genotype-derived seed.
// `top` is ordered by proxy score (best first).
inline RerankResult rerank(const std::vector<Genotype>& top, const FullEvaluator& evaluate,
                           std::uint64_t master_seed, int parallelism = 1) {
  if (top.empty()) throw ArgumentError("rerank: empty candidate list");
  std::vector<RerankEntry> entries(top.size());
  auto work = [&](std::size_t i) {
    entries[i].genotype = top[i];
    entries[i].proxy_rank = static_cast<int>(i) + 1;
    try {
      const double s = evaluate(top[i], rerank_seed(master_seed, top[i]));
      if (!std::isfinite(s)) throw NumericalError("non-finite rerank score");
      entries[i].rerank_score = s;
    } catch (const NumericalError&) {
      entries[i].rerank_score = 0.0;
      entries[i].failed = true;
    }
  };
  if (parallelism <= 1) {
    for (std::size_t i = 0; i < top.size(); ++i) work(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (int t = 0; t < parallelism; ++t)
      pool.emplace_back([&] {
        for (std::size_t i; (i = next.fetch_add(1)) < top.size();) work(i);
      });
  }
  RerankResult r;
  r.entries = std::move(entries);
  std::stable_sort(r.entries.begin(), r.entries.end(), [](const auto& a, const auto& b) {
    if (a.rerank_score != b.rerank_score) return a.rerank_score > b.rerank_score;
    return a.proxy_rank < b.proxy_rank;
  });
  r.winner_proxy_rank = r.entries.front().proxy_rank;
  return r;
}

}  // namespace dpc

#endif  // DPC_SEARCH_HPP_
