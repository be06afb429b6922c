#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "cdkt/cascade.hpp"
#include "cdkt/inference.hpp"

namespace cdkt {

// Non-interpolated average precision of a ranked list of users.
inline double average_precision(std::span<const UserIndex> ranking, const std::unordered_set<UserIndex>& relevant) {
  std::unordered_set<UserIndex> seen;
  seen.reserve(ranking.size());
  for (UserIndex u : ranking)
    if (!seen.insert(u).second) throw std::invalid_argument("average_precision: duplicate user in ranking");
  if (relevant.empty()) return 0.0;
  std::size_t hits = 0;
  double sum = 0.0;
  for (std::size_t k = 0; k < ranking.size(); ++k) {
    if (!relevant.contains(ranking[k])) continue;
    ++hits;
    sum += static_cast<double>(hits) / static_cast<double>(k + 1);
  }
  return sum / static_cast<double>(relevant.size());
}

inline double average_precision(const Prediction& p, const std::unordered_set<UserIndex>& relevant) {
  std::vector<UserIndex> order;
  order.reserve(p.ranking.size());
  for (const auto& r : p.ranking) order.push_back(r.user);
  return average_precision(order, relevant);
}

// Infected users of a cascade other than its source.
inline std::unordered_set<UserIndex> relevant_users(const UserTable& users, const Cascade& c) {
  std::unordered_set<UserIndex> out;
  for (const auto& inf : c.infections)
    if (inf.user != c.source) out.insert(users.at(inf.user));
  return out;
}

struct MapResult {
  double map = 0.0;
  std::vector<std::pair<std::string, double>> per_cascade;
  std::size_t degenerate = 0;  // cascades with no relevant user, scored 0
};

inline MapResult mean_average_precision_detail(std::span<const Prediction> predictions, std::span<const Cascade> test,
                                               const UserTable& users) {
  if (predictions.size() != test.size())
    throw std::invalid_argument("mean_average_precision: " + std::to_string(predictions.size()) +
                                " predictions for " + std::to_string(test.size()) + " cascades");
  MapResult r;
  if (test.empty()) return r;
  double sum = 0.0;
  for (std::size_t i = 0; i < test.size(); ++i) {
    if (predictions[i].cascade_id != test[i].id)
      throw std::invalid_argument("mean_average_precision: prediction '" + predictions[i].cascade_id +
                                  "' does not match cascade '" + test[i].id + "'");
    const auto relevant = relevant_users(users, test[i]);
    if (relevant.empty()) ++r.degenerate;
    const double ap = average_precision(predictions[i], relevant);
    r.per_cascade.emplace_back(test[i].id, ap);
    sum += ap;
  }
  r.map = sum / static_cast<double>(test.size());
  return r;
}

inline double mean_average_precision(std::span<const Prediction> predictions, std::span<const Cascade> test,
                                     const UserTable& users) {
  return mean_average_precision_detail(predictions, test, users).map;
}

// Pool order: score descending, then cascade id, then user index.
inline std::vector<PooledEntry> sorted_pool(const PooledScore& pooled) {
  std::vector<PooledEntry> entries = pooled.entries;
  std::sort(entries.begin(), entries.end(), [](const PooledEntry& a, const PooledEntry& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.cascade_id != b.cascade_id) return a.cascade_id < b.cascade_id;
    return a.user < b.user;
  });
  return entries;
}

inline double precision_at_k(const PooledScore& pooled, std::size_t k) {
  if (k == 0) throw std::invalid_argument("precision_at_k: k must be >= 1");
  if (k > pooled.size())
    throw std::invalid_argument("precision_at_k: k=" + std::to_string(k) + " exceeds pool size " +
                                std::to_string(pooled.size()));
  const auto entries = sorted_pool(pooled);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < k; ++i) hits += entries[i].relevant ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(k);
}

struct PrPoint {
  double recall = 0.0;
  double precision = 0.0;
};

// Raw (recall, precision) after each relevant hit in the sorted pool.
inline std::vector<PrPoint> precision_recall_curve(const PooledScore& pooled) {
  const std::size_t total = pooled.relevant_count();
  if (total == 0) throw std::invalid_argument("precision_recall_curve: no relevant entries");
  const auto entries = sorted_pool(pooled);
  std::vector<PrPoint> curve;
  curve.reserve(total);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (!entries[i].relevant) continue;
    ++hits;
    curve.push_back({static_cast<double>(hits) / static_cast<double>(total),
                     static_cast<double>(hits) / static_cast<double>(i + 1)});
  }
  return curve;
}

struct MetricsReport {
  std::optional<double> map;
  std::vector<std::pair<std::string, double>> ap_per_cascade;
  std::vector<std::pair<std::size_t, double>> p_at_k;
  std::vector<PrPoint> pr_curve;
  std::size_t cascades = 0;
  std::size_t pool_size = 0;
  std::size_t degenerate_cascades = 0;
};

// Scalars as key=value lines, then one TSV block per table, each opened by a
// `[name]` line and a header row.
inline void write_report(std::ostream& out, const MetricsReport& r) {
  out << "cascades=" << r.cascades << '\n';
  out << "pool_size=" << r.pool_size << '\n';
  out << "degenerate_cascades=" << r.degenerate_cascades << '\n';
  if (r.map) out << "map=" << text::format_real17(*r.map) << '\n';
  for (const auto& [k, p] : r.p_at_k) out << "p@" << k << '=' << text::format_real17(p) << '\n';
  if (r.map) {
    out << "\n[ap_per_cascade]\ncascade_id\tap\n";
    for (const auto& [id, ap] : r.ap_per_cascade) out << id << '\t' << text::format_real17(ap) << '\n';
  }
  if (!r.p_at_k.empty()) {
    out << "\n[p_at_k]\nk\tprecision\n";
    for (const auto& [k, p] : r.p_at_k) out << k << '\t' << text::format_real17(p) << '\n';
  }
  if (!r.pr_curve.empty()) {
    out << "\n[pr_curve]\nrecall\tprecision\n";
    for (const auto& pt : r.pr_curve)
      out << text::format_real17(pt.recall) << '\t' << text::format_real17(pt.precision) << '\n';
  }
}

}  // namespace cdkt
