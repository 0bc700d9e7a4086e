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
#ifndef DPC_ANALYSIS_HPP_
#define DPC_ANALYSIS_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "dpc/cell.hpp"
#include "dpc/errors.hpp"
#include "dpc/search.hpp"
#include "dpc/search_space.hpp"

namespace dpc {

struct BranchImportance {
  int branch = 0;  // 1-based
  int input = 0;
  std::string op;
  double l1_norm = 0.0;
};

// Mean |w| of the classifier-head weights reading each branch's channel block,
// pooled over all output classes.
template <class T>
std::vector<BranchImportance> branch_l1_norms(const ExecutableCell<T>& cell) {
  if (!cell.head.weight.defined()) throw StateError("branch_l1_norms: cell has no head");
  const Shape ws = cell.head.weight.shape();
  const int B = static_cast<int>(cell.branches.size());
  if (ws.c != B * cell.filters)
    throw StateError("branch_l1_norms: head input width " + std::to_string(ws.c) +
                     " does not match " + std::to_string(B) + " x " +
                     std::to_string(cell.filters));
  const auto w = cell.head.weight.data();
  std::vector<BranchImportance> out;
  for (int b = 0; b < B; ++b) {
    double sum = 0.0;
    for (int o = 0; o < ws.n; ++o)
      for (int c = b * cell.filters; c < (b + 1) * cell.filters; ++c)
        sum += std::abs(static_cast<double>(w[o * ws.c + c]));
    out.push_back({b + 1, cell.branches[b].input, describe(cell.branches[b].op),
                   sum / (static_cast<double>(ws.n) * cell.filters)});
  }
  return out;
}

inline std::string importance_csv(const std::vector<BranchImportance>& rows) {
  std::ostringstream s;
  s << "branch_index,input,op,l1_norm\n";
  for (const auto& r : rows) s << r.branch << ',' << r.input << ',' << r.op << ',' << r.l1_norm << '\n';
  return s.str();
}

struct Histogram {
  std::vector<std::int64_t> counts;  // bin b covers [b/bins, (b+1)/bins)
  std::int64_t total() const {
    std::int64_t t = 0;
    for (auto c : counts) t += c;
    return t;
  }
};

// Proxy scores of usable trials over [0, 1]; a score of exactly 1 lands in
// the last bin.
inline Histogram score_histogram(const TrialLog& log, int bins) {
  if (bins < 1) throw ArgumentError("score_histogram: bins must be >= 1");
  if (log.empty()) throw ArgumentError("score_histogram: empty log");
  Histogram h;
  h.counts.assign(bins, 0);
  for (const auto& r : log) {
    if (r.failed) continue;
    int b = static_cast<int>(std::floor(r.proxy_score * bins));
    h.counts[std::clamp(b, 0, bins - 1)]++;
  }
  return h;
}

inline std::string histogram_csv(const Histogram& h) {
  std::ostringstream s;
  const int bins = static_cast<int>(h.counts.size());
  s << "bin,lo,hi,count\n";
  for (int b = 0; b < bins; ++b)
    s << b << ',' << static_cast<double>(b) / bins << ',' << static_cast<double>(b + 1) / bins
      << ',' << h.counts[b] << '\n';
  return s.str();
}

struct FidelityRow {
  std::string genotype_hash;
  double proxy_score = 0.0;
  double rerank_score = 0.0;
  int proxy_rank = 0;
  int rerank_rank = 0;
};

struct FidelityReport {
  double rho = std::numeric_limits<double>::quiet_NaN();  // NaN when undefined
  std::vector<FidelityRow> rows;  // input order
  int winner_proxy_rank = 0;

  std::string csv() const {
    std::ostringstream s;
    s << "genotype_hash,proxy_score,rerank_score,proxy_rank,rerank_rank\n";
    for (const auto& r : rows)
      s << r.genotype_hash << ',' << r.proxy_score << ',' << r.rerank_score << ','
        << r.proxy_rank << ',' << r.rerank_rank << '\n';
    return s.str();
  }

  std::string markdown() const {
    std::ostringstream s;
    s << "# Proxy fidelity\n\n";
    s << "- Spearman rho (proxy vs rerank): ";
    if (std::isnan(rho))
      s << "undefined (constant scores)\n";
    else
      s << rho << "\n";
    s << "- Candidates: " << rows.size() << "\n";
    s << "- Rerank winner's proxy rank: " << winner_proxy_rank << "\n\n";
    s << "| genotype | proxy | rerank | proxy rank | rerank rank |\n";
    s << "|---|---|---|---|---|\n";
    for (const auto& r : rows)
      s << "| " << r.genotype_hash << " | " << r.proxy_score << " | " << r.rerank_score
        << " | " << r.proxy_rank << " | " << r.rerank_rank << " |\n";
    return s.str();
  }
};

namespace detail {

// 1-based rank by descending score; ties keep input order.
inline std::vector<int> descending_ranks(const std::vector<double>& v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return v[a] > v[b]; });
  std::vector<int> rank(v.size());
  for (std::size_t i = 0; i < order.size(); ++i) rank[order[i]] = static_cast<int>(i) + 1;
  return rank;
}

}  // namespace detail

inline FidelityReport fidelity_report(const std::vector<double>& proxy,
                                      const std::vector<double>& rerank_scores,
                                      const std::vector<Genotype>& genotypes) {
  if (proxy.size() != rerank_scores.size() || proxy.size() != genotypes.size())
    throw ArgumentError("fidelity_report: input lists are not aligned");
  FidelityReport rep;
  const auto distinct = [](const std::vector<double>& v) {
    return std::adjacent_find(v.begin(), v.end(), std::not_equal_to<>()) != v.end();
  };
  if (proxy.size() >= 2 && distinct(proxy) && distinct(rerank_scores))
    rep.rho = spearman_rho(proxy, rerank_scores);
  const auto pr = detail::descending_ranks(proxy);
  const auto rr = detail::descending_ranks(rerank_scores);
  for (std::size_t i = 0; i < proxy.size(); ++i) {
    rep.rows.push_back({genotype_hash(genotypes[i]), proxy[i], rerank_scores[i], pr[i], rr[i]});
    if (rr[i] == 1) rep.winner_proxy_rank = pr[i];
  }
  return rep;
}

struct CostRow {
  std::string genotype_hash;
  CostSummary cost;
  double params_ratio = 1.0;  // relative to the first row
  double madds_ratio = 1.0;
};

inline std::vector<CostRow> cost_comparison(const std::vector<Genotype>& genotypes,
                                            int in_channels, int filters, int h, int w) {
  std::vector<CostRow> rows;
  for (const Genotype& g : genotypes) {
    require_valid(g);
    CostRow r;
    r.genotype_hash = genotype_hash(g);
    r.cost = genotype_cost(g, in_channels, filters, h, w);
    rows.push_back(r);
  }
  if (!rows.empty()) {
    const CostSummary base = rows.front().cost;
    for (auto& r : rows) {
      r.params_ratio = base.params ? static_cast<double>(r.cost.params) / base.params : 0.0;
      r.madds_ratio = base.madds ? static_cast<double>(r.cost.madds) / base.madds : 0.0;
    }
  }
  return rows;
}

}  // namespace dpc

#endif  // DPC_ANALYSIS_HPP_
