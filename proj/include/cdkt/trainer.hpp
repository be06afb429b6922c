#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "cdkt/cascade.hpp"
#include "cdkt/latent_model.hpp"
#include "cdkt/objective.hpp"
#include "cdkt/rng.hpp"

namespace cdkt {

// Sign convention of the threshold updates. `Gradient` descends the hinge
// objective (tau grows when an infected user is too far). `Paper` replays the
// literal pseudocode: opposite tau signs and no source move in the threshold
// branches.
enum class TauUpdate { Gradient, Paper };

// `Gated` applies the outside-threshold branch only to non-infected
// candidates; `Paper` applies it to every sampled candidate.
enum class OutsideBranch { Gated, Paper };

struct StepRules {
  TauUpdate tau_update = TauUpdate::Gradient;
  OutsideBranch outside_branch = OutsideBranch::Gated;
};

struct TrainConfig {
  std::size_t dim = 500;
  std::uint64_t iterations = 1'000'000;
  double alpha0 = 0.05;
  double decay = 1e-5;  // alpha(t) = alpha0 / (1 + decay * t)
  std::uint64_t seed = 1;
  Variant variant = Variant::CDKT;
  std::optional<std::uint64_t> patience;  // in probes
  std::uint64_t probe_interval = 10'000;
  std::size_t probe_cascades = 64;
  std::size_t probe_negatives = 128;
  StepRules rules;

  double learning_rate(std::uint64_t t) const noexcept { return alpha0 / (1.0 + decay * static_cast<double>(t)); }

  void validate() const {
    if (dim < 1) throw std::invalid_argument("TrainConfig: dim must be >= 1");
    if (iterations < 1) throw std::invalid_argument("TrainConfig: iterations must be >= 1");
    if (!(alpha0 > 0.0)) throw std::invalid_argument("TrainConfig: alpha0 must be > 0");
    if (!(decay >= 0.0)) throw std::invalid_argument("TrainConfig: decay must be >= 0");
    if (probe_interval < 1) throw std::invalid_argument("TrainConfig: probe_interval must be >= 1");
    if (patience && *patience < 1) throw std::invalid_argument("TrainConfig: patience must be >= 1");
  }
};

// Embeddings uniform on [-1, 1]. For CDKT, tau starts at the median squared
// distance over random user pairs so it tracks the 2n/3 scale of the init.
inline LatentModel init_model(const UserTable& users, const TrainConfig& config) {
  if (users.empty()) throw std::invalid_argument("init_model: empty user list");
  if (config.dim < 1) throw std::invalid_argument("init_model: dim must be >= 1");
  LatentModel model(users, config.dim, config.variant);
  auto rng = make_engine(config.seed, "init");
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  for (double& x : model.coordinates()) x = unit(rng);

  if (config.variant == Variant::CDKT) {
    const std::size_t n = users.size();
    const std::size_t pairs = n > 1000 ? 1000 : std::min<std::size_t>(1000, n * n);
    auto pair_rng = make_engine(config.seed, "init-tau");
    std::uniform_int_distribution<UserIndex> pick(0, static_cast<UserIndex>(n - 1));
    std::vector<double> d(pairs);
    for (auto& v : d) {
      const UserIndex a = pick(pair_rng);
      const UserIndex b = pick(pair_rng);
      v = sq_distance(model, a, b);
    }
    std::sort(d.begin(), d.end());
    const double median = d.size() % 2 ? d[d.size() / 2] : 0.5 * (d[d.size() / 2 - 1] + d[d.size() / 2]);
    model.set_tau(median);
  }
  return model;
}

enum class CandidateKind { LaterInfected, NonInfected };

struct Triplet {
  std::size_t cascade = 0;
  UserIndex source = 0;
  UserIndex earlier = 0;  // u_i, infected, never the source
  UserIndex later = 0;    // u_j, infected strictly after u_i or not infected
  CandidateKind kind = CandidateKind::NonInfected;
};

class SamplingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Draws (cascade, u_i, u_j) uniformly: cascade over the training set, u_i over
// non-source infected users, u_j over later-infected and non-infected users.
// Draws with an empty candidate pool are redrawn.
class TripletSampler {
 public:
  TripletSampler(const UserTable& users, std::span<const Cascade> train, std::size_t max_retries = 1000)
      : num_users_(users.size()), max_retries_(max_retries) {
    cascades_.reserve(train.size());
    for (const auto& c : train) cascades_.push_back(index_cascade(users, c));
    const bool any = std::any_of(cascades_.begin(), cascades_.end(), [&](const IndexedCascade& c) {
      if (c.users.size() < 2) return false;
      if (c.members.size() < num_users_) return true;
      return c.times.back() > c.times[1];
    });
    if (!any) throw SamplingError("no training cascade admits a valid triplet");
  }

  const std::vector<IndexedCascade>& cascades() const noexcept { return cascades_; }
  std::size_t num_users() const noexcept { return num_users_; }

  // Size of the u_j candidate pool for the u_i at infection-order position `pos`.
  std::size_t pool_size(const IndexedCascade& c, std::size_t pos) const {
    return c.later_count(pos) + (num_users_ - c.members.size());
  }

  Triplet sample(Engine& rng) const {
    std::uniform_int_distribution<std::size_t> pick_cascade(0, cascades_.size() - 1);
    for (std::size_t attempt = 0; attempt < max_retries_; ++attempt) {
      const std::size_t ci = pick_cascade(rng);
      const auto& c = cascades_[ci];
      if (c.users.size() < 2) continue;
      // Position 0 is always the source (the only timestamp-0 user).
      std::uniform_int_distribution<std::size_t> pick_i(1, c.users.size() - 1);
      const std::size_t pos = pick_i(rng);
      const std::size_t later = c.later_count(pos);
      const std::size_t pool = pool_size(c, pos);
      if (pool == 0) continue;
      std::uniform_int_distribution<std::size_t> pick_j(0, pool - 1);
      const std::size_t r = pick_j(rng);
      Triplet t;
      t.cascade = ci;
      t.source = c.source;
      t.earlier = c.users[pos];
      if (r < later) {
        t.later = c.users[c.users.size() - later + r];
        t.kind = CandidateKind::LaterInfected;
      } else {
        t.later = c.nth_non_member(r - later);
        t.kind = CandidateKind::NonInfected;
      }
      return t;
    }
    throw SamplingError("could not draw a valid triplet after " + std::to_string(max_retries_) + " attempts");
  }

 private:
  std::size_t num_users_;
  std::size_t max_retries_;
  std::vector<IndexedCascade> cascades_;
};

// One stochastic update for a sampled triplet. Distances and coordinates are
// read from the pre-update model; all active branches are then applied
// together, so the step equals -alpha times the gradient of the active hinge
// terms. tau never goes below 0.
inline void sgd_step(LatentModel& model, const Triplet& t, double alpha, const StepRules& rules = {}) {
  if (!(alpha > 0.0)) throw std::invalid_argument("sgd_step: alpha must be > 0");
  auto zs = model.embedding(t.source);
  auto zi = model.embedding(t.earlier);
  auto zj = model.embedding(t.later);
  const double di = sq_distance(zs, zi);
  const double dj = sq_distance(zs, zj);

  const bool thresholded = model.variant() == Variant::CDKT;
  const double tau = thresholded ? model.tau() : 0.0;
  const bool pair = t.kind == CandidateKind::LaterInfected && dj - di < 1.0;
  const bool inside = thresholded && tau - di < 1.0;
  const bool outside = thresholded && dj - tau < 1.0 &&
                       (t.kind == CandidateKind::NonInfected || rules.outside_branch == OutsideBranch::Paper);
  if (!pair && !inside && !outside) return;

  const bool move_source = rules.tau_update == TauUpdate::Gradient;
  const double step = 2.0 * alpha;
  for (std::size_t k = 0; k < zs.size(); ++k) {
    const double s = zs[k], i = zi[k], j = zj[k];
    double ds = 0.0, dI = 0.0, dJ = 0.0;
    if (pair) {
      dI += s - i;
      dJ += j - s;
      ds += i - j;
    }
    if (inside) {
      dI += s - i;
      if (move_source) ds += i - s;
    }
    if (outside) {
      dJ += j - s;
      if (move_source) ds += s - j;
    }
    zs[k] = s + step * ds;
    zi[k] = i + step * dI;
    zj[k] = j + step * dJ;
  }

  if (thresholded) {
    const double sign = rules.tau_update == TauUpdate::Gradient ? 1.0 : -1.0;
    double next = tau;
    if (inside) next += sign * alpha;
    if (outside) next -= sign * alpha;
    model.set_tau(std::max(0.0, next));
  }
}

struct ProbePoint {
  std::uint64_t iteration = 0;
  double loss = 0.0;
  std::optional<double> tau;
};

enum class StopReason { Budget, Patience };

struct TrainTrace {
  std::vector<ProbePoint> probes;
  std::uint64_t final_iteration = 0;
  StopReason stop_reason = StopReason::Budget;
};

struct TrainResult {
  LatentModel model;
  TrainTrace trace;
};

// Fixed subsample of cascades and negatives for cheap loss estimates. The
// estimate rescales the negative family and the cascade count back to the
// full training objective.
class LossProbe {
 public:
  LossProbe(const TripletSampler& sampler, std::size_t max_cascades, std::size_t max_negatives,
            std::uint64_t seed) {
    const auto& all = sampler.cascades();
    std::vector<std::size_t> order(all.size());
    std::iota(order.begin(), order.end(), 0);
    auto rng = make_engine(seed, "probe");
    std::shuffle(order.begin(), order.end(), rng);
    order.resize(std::min(order.size(), max_cascades));
    std::sort(order.begin(), order.end());

    scale_ = static_cast<double>(all.size()) / static_cast<double>(std::max<std::size_t>(order.size(), 1));
    for (std::size_t ci : order) {
      const auto& c = all[ci];
      Entry e{&c, {}, 0.0};
      const std::size_t m = sampler.num_users() - c.members.size();
      std::vector<std::size_t> ranks(m);
      std::iota(ranks.begin(), ranks.end(), 0);
      if (m > max_negatives) {
        std::shuffle(ranks.begin(), ranks.end(), rng);
        ranks.resize(max_negatives);
        std::sort(ranks.begin(), ranks.end());
      }
      for (std::size_t r : ranks) e.negatives.push_back(c.nth_non_member(r));
      e.outside_scale = e.negatives.empty() ? 0.0 : static_cast<double>(m) / static_cast<double>(e.negatives.size());
      entries_.push_back(std::move(e));
    }
  }

  double estimate(const LatentModel& model) const {
    double sum = 0.0;
    for (const auto& e : entries_) {
      const auto terms = cascade_loss_terms(model, *e.cascade, std::span<const UserIndex>(e.negatives));
      sum += terms.inside + terms.order + terms.outside * e.outside_scale;
    }
    return sum * scale_;
  }

 private:
  struct Entry {
    const IndexedCascade* cascade;
    std::vector<UserIndex> negatives;
    double outside_scale;
  };
  std::vector<Entry> entries_;
  double scale_ = 1.0;
};

inline TrainResult train(const UserTable& users, std::span<const Cascade> cascades, const TrainConfig& config) {
  config.validate();
  TripletSampler sampler(users, cascades);
  LossProbe probe(sampler, config.probe_cascades, config.probe_negatives, config.seed);
  TrainResult result{init_model(users, config), {}};
  auto& model = result.model;
  auto& trace = result.trace;
  auto rng = make_engine(config.seed, "sampling");

  auto record = [&](std::uint64_t it) {
    trace.probes.push_back({it, probe.estimate(model),
                            model.has_tau() ? std::optional<double>(model.tau()) : std::nullopt});
  };
  record(0);
  double best = trace.probes.back().loss;
  std::uint64_t stale = 0;

  std::uint64_t t = 0;
  while (t < config.iterations) {
    sgd_step(model, sampler.sample(rng), config.learning_rate(t), config.rules);
    ++t;
    if (t % config.probe_interval == 0 || t == config.iterations) {
      record(t);
      const double loss = trace.probes.back().loss;
      if (loss < best - 1e-6 * best) {
        best = loss;
        stale = 0;
      } else if (config.patience && ++stale >= *config.patience) {
        trace.stop_reason = StopReason::Patience;
        break;
      }
    }
  }
  trace.final_iteration = t;
  return result;
}

inline TrainResult train(const CascadeDataset& dataset, const TrainConfig& config) {
  return train(dataset.users, dataset.train, config);
}

inline void write_trace(std::ostream& out, const TrainTrace& trace) {
  out << "iteration\tloss\ttau\n";
  for (const auto& p : trace.probes) {
    out << p.iteration << '\t' << text::format_real17(p.loss) << '\t'
        << (p.tau ? text::format_real17(*p.tau) : std::string("none")) << '\n';
  }
}

}  // namespace cdkt
