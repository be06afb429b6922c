#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "cdkt/cascade.hpp"
#include "cdkt/inference.hpp"
#include "cdkt/latent_model.hpp"
#include "cdkt/rng.hpp"

namespace cdkt {

// Planted generative geometry: users at fixed points, a squared-distance
// infection radius (stored as the model's tau) and a timestamp jitter scale.
struct PlantedWorld {
  LatentModel embedding;
  double noise = 0.0;

  double tau_gen() const { return embedding.tau(); }

  void validate() const {
    if (!embedding.has_tau() || !(embedding.tau() > 0.0))
      throw std::invalid_argument("PlantedWorld: tau_gen must be > 0");
    if (!(noise >= 0.0)) throw std::invalid_argument("PlantedWorld: noise must be >= 0");
    for (double x : embedding.coordinates())
      if (!std::isfinite(x)) throw std::invalid_argument("PlantedWorld: non-finite coordinate");
  }
};

using IcWorld = IcGraph;

inline std::string padded_id(char prefix, std::size_t index, std::size_t count) {
  std::string digits = std::to_string(index);
  const std::size_t width = std::to_string(count > 0 ? count - 1 : 0).size();
  return std::string(1, prefix) + std::string(width > digits.size() ? width - digits.size() : 0, '0') + digits;
}

inline UserTable synthetic_users(std::size_t n) {
  std::vector<std::string> ids;
  ids.reserve(n);
  for (std::size_t i = 0; i < n; ++i) ids.push_back(padded_id('u', i, n));
  return UserTable(ids);
}

// Squared-distance threshold below which a `fraction` of ordered
// (source, other user) pairs fall. Placed midway between neighbouring pair
// distances so no pair sits on the boundary.
inline double calibrate_threshold(const LatentModel& points, double fraction) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw std::invalid_argument("calibrate_threshold: fraction in (0, 1)");
  const std::size_t n = points.num_users();
  if (n < 2) throw std::invalid_argument("calibrate_threshold: need at least 2 users");
  std::vector<double> d;
  d.reserve(n * (n - 1) / 2);
  for (UserIndex a = 0; a < n; ++a)
    for (UserIndex b = a + 1; b < n; ++b) d.push_back(sq_distance(points, a, b));
  std::sort(d.begin(), d.end());
  const auto idx = std::clamp<std::size_t>(static_cast<std::size_t>(fraction * static_cast<double>(d.size())), 1,
                                           d.size() - 1);
  return 0.5 * (d[idx - 1] + d[idx]);
}

// Users uniform in the unit cube [0, 1]^dim.
inline PlantedWorld make_uniform_world(std::size_t num_users, std::size_t dim, double infect_fraction,
                                       std::uint64_t seed, double noise = 0.0) {
  LatentModel m(synthetic_users(num_users), dim, Variant::CDKT, 1.0);
  auto rng = make_engine(seed, "world");
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (double& x : m.coordinates()) x = unit(rng);
  m.set_tau(calibrate_threshold(m, infect_fraction));
  PlantedWorld w{std::move(m), noise};
  w.validate();
  return w;
}

// Two ball-shaped clusters with radii 1 and `radius_ratio`, far enough apart
// that no cross-cluster pair is ever within the infection radius. Users
// alternate between clusters by index.
inline PlantedWorld make_two_cluster_world(std::size_t num_users, std::size_t dim, double radius_ratio,
                                           double infect_fraction, std::uint64_t seed, double noise = 0.0) {
  if (!(radius_ratio > 0.0)) throw std::invalid_argument("make_two_cluster_world: radius_ratio must be > 0");
  LatentModel m(synthetic_users(num_users), dim, Variant::CDKT, 1.0);
  auto rng = make_engine(seed, "world");
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double separation = 4.0 * (1.0 + radius_ratio);
  for (UserIndex u = 0; u < num_users; ++u) {
    auto z = m.embedding(u);
    double norm = 0.0;
    for (double& x : z) {
      x = gauss(rng);
      norm += x * x;
    }
    norm = std::sqrt(norm);
    const double radius = (u % 2 == 0 ? 1.0 : radius_ratio) * std::pow(unit(rng), 1.0 / static_cast<double>(dim));
    for (double& x : z) x *= radius / (norm > 0.0 ? norm : 1.0);
    if (u % 2 == 1) z[0] += separation;
  }
  m.set_tau(calibrate_threshold(m, infect_fraction));
  const double cross_min = separation - 1.0 - radius_ratio;
  if (m.tau() >= cross_min * cross_min)
    throw std::invalid_argument("make_two_cluster_world: infection radius reaches across clusters");
  PlantedWorld w{std::move(m), noise};
  w.validate();
  return w;
}

// Each cascade picks a uniform source and infects exactly the users with
// d^2 < tau_gen; infection time is d^2 scaled by (1 + noise * N(0,1)).
inline std::vector<Cascade> generate_planted(const PlantedWorld& world, std::size_t num_cascades,
                                             std::uint64_t seed) {
  world.validate();
  if (num_cascades < 1) throw std::invalid_argument("generate_planted: num_cascades must be >= 1");
  const auto& model = world.embedding;
  const std::size_t n = model.num_users();
  const double tau = world.tau_gen();
  constexpr double kMinTime = 1e-12;
  std::vector<Cascade> out;
  out.reserve(num_cascades);
  for (std::size_t k = 0; k < num_cascades; ++k) {
    auto rng = make_engine(seed, "planted", k);
    std::uniform_int_distribution<UserIndex> pick(0, static_cast<UserIndex>(n - 1));
    std::normal_distribution<double> jitter(0.0, 1.0);
    const UserIndex source = pick(rng);
    std::vector<Infection> infections;
    for (UserIndex u = 0; u < n; ++u) {
      if (u == source) {
        infections.push_back({model.users().id(u), 0.0});
        continue;
      }
      const double d2 = sq_distance(model, source, u);
      if (!(d2 < tau)) continue;
      double t = d2;
      if (world.noise > 0.0) t = d2 * (1.0 + world.noise * jitter(rng));
      infections.push_back({model.users().id(u), std::max(t, kMinTime)});
    }
    out.push_back(make_cascade(padded_id('c', k, num_cascades), std::move(infections)));
  }
  return out;
}

// Synchronous-round IC cascades; timestamps are infection rounds.
inline std::vector<Cascade> generate_ic(const IcWorld& world, std::size_t num_cascades, std::uint64_t seed) {
  if (num_cascades < 1) throw std::invalid_argument("generate_ic: num_cascades must be >= 1");
  if (world.num_users() == 0) throw std::invalid_argument("generate_ic: empty graph");
  std::vector<Cascade> out;
  out.reserve(num_cascades);
  for (std::size_t k = 0; k < num_cascades; ++k) {
    auto rng = make_engine(seed, "ic-source", k);
    std::uniform_int_distribution<UserIndex> pick(0, static_cast<UserIndex>(world.num_users() - 1));
    const UserIndex source = pick(rng);
    std::vector<Infection> infections;
    for (const auto& [u, round] : simulate_ic(world, source, derive_seed(seed, "ic-coins", k)))
      infections.push_back({world.users().id(u), static_cast<double>(round)});
    out.push_back(make_cascade(padded_id('c', k, num_cascades), std::move(infections)));
  }
  return out;
}

// Directed Erdos-Renyi graph: each ordered pair is an edge with probability
// avg_degree / (n - 1); all edges share `probability`.
inline IcWorld random_ic_world(std::size_t num_users, double avg_degree, double probability, std::uint64_t seed) {
  if (num_users < 2) throw std::invalid_argument("random_ic_world: need at least 2 users");
  IcGraph g(synthetic_users(num_users), std::span<const IcGraph::EdgeSpec>{});
  auto rng = make_engine(seed, "ic-graph");
  std::bernoulli_distribution edge(std::clamp(avg_degree / static_cast<double>(num_users - 1), 0.0, 1.0));
  for (UserIndex a = 0; a < num_users; ++a)
    for (UserIndex b = 0; b < num_users; ++b)
      if (a != b && edge(rng)) g.add_edge(a, b, probability);
  return g;
}

}  // namespace cdkt
