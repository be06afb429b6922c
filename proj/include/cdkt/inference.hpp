#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "cdkt/cascade.hpp"
#include "cdkt/latent_model.hpp"
#include "cdkt/rng.hpp"

namespace cdkt {

struct RankedUser {
  UserIndex user = 0;
  double score = 0.0;
  std::optional<bool> contaminated;  // CDKT only
};

struct Prediction {
  std::string cascade_id;
  UserIndex source = 0;
  std::vector<RankedUser> ranking;  // score descending, ties by user index
};

// Score is tau - d^2 for CDKT and -d^2 for CDK; the source is left out.
inline Prediction rank_users(const LatentModel& model, UserIndex source) {
  if (source >= model.num_users()) throw std::out_of_range("rank_users: unknown source index");
  Prediction p;
  p.source = source;
  p.ranking.reserve(model.num_users() - 1);
  const auto zs = model.embedding(source);
  const bool thresholded = model.has_tau();
  const double offset = thresholded ? model.tau() : 0.0;
  for (UserIndex u = 0; u < model.num_users(); ++u) {
    if (u == source) continue;
    const double d2 = sq_distance(zs, model.embedding(u));
    RankedUser r{u, offset - d2, std::nullopt};
    if (thresholded) r.contaminated = d2 < offset;
    p.ranking.push_back(r);
  }
  std::sort(p.ranking.begin(), p.ranking.end(), [](const RankedUser& a, const RankedUser& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.user < b.user;
  });
  return p;
}

inline Prediction rank_users(const LatentModel& model, std::string_view source) {
  return rank_users(model, model.users().at(source));
}

inline Prediction predict(const LatentModel& model, const Cascade& c) {
  Prediction p = rank_users(model, c.source);
  p.cascade_id = c.id;
  return p;
}

// Predictions for every cascade, in input order. Work is split across
// `threads` workers; output does not depend on the thread count.
inline std::vector<Prediction> predict_all(const LatentModel& model, std::span<const Cascade> cascades,
                                           std::size_t threads = 1) {
  for (const auto& c : cascades) (void)model.users().at(c.source);
  std::vector<Prediction> out(cascades.size());
  threads = std::max<std::size_t>(1, std::min(threads, cascades.size()));
  if (threads == 1) {
    for (std::size_t i = 0; i < cascades.size(); ++i) out[i] = predict(model, cascades[i]);
    return out;
  }
  std::vector<std::jthread> workers;
  for (std::size_t w = 0; w < threads; ++w) {
    workers.emplace_back([&, w] {
      for (std::size_t i = w; i < cascades.size(); i += threads) out[i] = predict(model, cascades[i]);
    });
  }
  workers.clear();
  return out;
}

// Prediction TSV: cascade_id, user_id, score, label (1/0, or '-' without a threshold).
inline void write_predictions(std::ostream& out, const LatentModel& model, std::span<const Prediction> predictions) {
  std::vector<const Prediction*> sorted;
  for (const auto& p : predictions) sorted.push_back(&p);
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const Prediction* a, const Prediction* b) { return a->cascade_id < b->cascade_id; });
  for (const auto* p : sorted) {
    for (const auto& r : p->ranking) {
      out << p->cascade_id << '\t' << model.users().id(r.user) << '\t' << text::format_real17(r.score) << '\t'
          << (r.contaminated ? (*r.contaminated ? "1" : "0") : "-") << '\n';
    }
  }
}

struct PooledEntry {
  std::string cascade_id;
  UserIndex user = 0;
  double score = 0.0;
  bool relevant = false;

  friend bool operator==(const PooledEntry&, const PooledEntry&) = default;
};

// All (test cascade, non-source user) pairs with their scores, for ranking
// across cascades at once.
struct PooledScore {
  std::vector<PooledEntry> entries;

  std::size_t size() const noexcept { return entries.size(); }
  std::size_t relevant_count() const noexcept {
    return static_cast<std::size_t>(
        std::count_if(entries.begin(), entries.end(), [](const PooledEntry& e) { return e.relevant; }));
  }
};

inline PooledScore pool_predictions(const LatentModel& model, std::span<const Cascade> test, std::size_t threads = 1) {
  const auto predictions = predict_all(model, test, threads);
  PooledScore pool;
  pool.entries.reserve(test.size() * (model.num_users() > 0 ? model.num_users() - 1 : 0));
  for (std::size_t i = 0; i < test.size(); ++i) {
    const auto ic = index_cascade(model.users(), test[i]);
    for (const auto& r : predictions[i].ranking)
      pool.entries.push_back({test[i].id, r.user, r.score, ic.contains(r.user)});
  }
  return pool;
}

// Directed graph with per-edge transmission probabilities for the Independent
// Cascade model.
class IcGraph {
 public:
  struct Edge {
    UserIndex to;
    double probability;
    std::uint64_t id;  // position in insertion order, keys the coin flip
  };

  struct EdgeSpec {
    std::string from;
    std::string to;
    double probability;
  };

  IcGraph() = default;

  IcGraph(UserTable users, std::span<const EdgeSpec> edges) : users_(std::move(users)), out_(users_.size()) {
    for (const auto& e : edges) add_edge(users_.at(e.from), users_.at(e.to), e.probability);
  }

  // User set is the union of edge endpoints.
  explicit IcGraph(std::span<const EdgeSpec> edges) {
    std::vector<std::string> ids;
    for (const auto& e : edges) {
      ids.push_back(e.from);
      ids.push_back(e.to);
    }
    *this = IcGraph(UserTable(ids), edges);
  }

  void add_edge(UserIndex from, UserIndex to, double probability) {
    if (from >= out_.size() || to >= out_.size()) throw std::out_of_range("IcGraph: edge endpoint out of range");
    if (from == to) throw std::invalid_argument("IcGraph: self-loop on '" + users_.id(from) + "'");
    if (!(probability >= 0.0 && probability <= 1.0))
      throw std::invalid_argument("IcGraph: probability must be in [0, 1]");
    out_[from].push_back({to, probability, num_edges_++});
  }

  const UserTable& users() const noexcept { return users_; }
  std::size_t num_users() const noexcept { return users_.size(); }
  std::size_t num_edges() const noexcept { return num_edges_; }
  std::span<const Edge> out_edges(UserIndex u) const { return out_.at(u); }

  IcGraph with_probabilities(std::span<const double> probabilities) const {
    if (probabilities.size() != num_edges_) throw std::invalid_argument("IcGraph: probability count mismatch");
    IcGraph g = *this;
    for (auto& edges : g.out_)
      for (auto& e : edges) e.probability = probabilities[e.id];
    return g;
  }

 private:
  UserTable users_;
  std::vector<std::vector<Edge>> out_;
  std::uint64_t num_edges_ = 0;
};

inline std::vector<IcGraph::EdgeSpec> parse_ic_edges(std::istream& in) {
  std::vector<IcGraph::EdgeSpec> edges;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    const auto fields = text::split(line, '\t');
    if (fields.size() != 3) throw ParseError(line_no, "expected '<src>\\t<dst>\\t<probability>'");
    const auto p = text::parse_real(fields[2]);
    if (!text::is_valid_id(fields[0]) || !text::is_valid_id(fields[1])) throw ParseError(line_no, "invalid user id");
    if (!p || *p < 0.0 || *p > 1.0) throw ParseError(line_no, "probability must be a real in [0, 1]");
    if (fields[0] == fields[1]) throw ParseError(line_no, "self-loop");
    edges.push_back({std::string(fields[0]), std::string(fields[1]), *p});
  }
  return edges;
}

inline void write_ic_edges(std::ostream& out, const IcGraph& g) {
  for (UserIndex u = 0; u < g.num_users(); ++u)
    for (const auto& e : g.out_edges(u))
      out << g.users().id(u) << '\t' << g.users().id(e.to) << '\t' << text::format_real(e.probability) << '\n';
}

// One synchronous-round IC run. Each edge's coin is counter_uniform(coin_key,
// edge id), so runs sharing a key are coupled across probability settings.
// Returns (user, round of first infection) in infection order.
inline std::vector<std::pair<UserIndex, std::uint32_t>> simulate_ic(const IcGraph& g, UserIndex source,
                                                                     std::uint64_t coin_key) {
  std::vector<char> infected(g.num_users(), 0);
  std::vector<std::pair<UserIndex, std::uint32_t>> order{{source, 0}};
  infected.at(source) = 1;
  std::vector<UserIndex> frontier{source}, next;
  for (std::uint32_t round = 1; !frontier.empty(); ++round) {
    next.clear();
    for (UserIndex u : frontier) {
      for (const auto& e : g.out_edges(u)) {
        if (infected[e.to]) continue;
        if (counter_uniform(coin_key, e.id) < e.probability) {
          infected[e.to] = 1;
          next.push_back(e.to);
          order.emplace_back(e.to, round);
        }
      }
    }
    std::swap(frontier, next);
  }
  return order;
}

struct UserFrequency {
  UserIndex user = 0;
  double frequency = 0.0;

  friend bool operator==(const UserFrequency&, const UserFrequency&) = default;
};

// Empirical infection frequency of every user over r independent IC runs from
// `source`. Run k uses the seed stream ("ic-mc", k).
inline std::vector<UserFrequency> ic_monte_carlo_scores(const IcGraph& g, UserIndex source, std::size_t runs,
                                                        std::uint64_t seed) {
  if (runs < 1) throw std::invalid_argument("ic_monte_carlo_scores: need at least one simulation");
  if (source >= g.num_users()) throw std::out_of_range("ic_monte_carlo_scores: unknown source");
  std::vector<std::size_t> hits(g.num_users(), 0);
  for (std::size_t k = 0; k < runs; ++k)
    for (const auto& [u, round] : simulate_ic(g, source, derive_seed(seed, "ic-mc", k))) ++hits[u];
  std::vector<UserFrequency> out(g.num_users());
  for (UserIndex u = 0; u < g.num_users(); ++u)
    out[u] = {u, static_cast<double>(hits[u]) / static_cast<double>(runs)};
  return out;
}

}  // namespace cdkt
