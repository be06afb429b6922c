#include <gtest/gtest.h>

#include <set>
#include <sstream>

#include "cdkt/objective.hpp"
#include "cdkt/synthetic.hpp"

using namespace cdkt;

namespace {

std::string serialize(std::span<const Cascade> cs) {
  std::ostringstream out;
  write_cascades(out, cs);
  return out.str();
}

}  // namespace

TEST(GeneratePlanted, NoiselessCascadesSatisfyHardConstraints) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto world = make_uniform_world(80, 3, 0.2, seed);
    const auto cs = generate_planted(world, 60, seed + 10);
    for (const auto& c : cs) {
      EXPECT_EQ(check_constraints(world.embedding, c).violations(), 0u) << c.id;
      const UserIndex s = world.embedding.users().at(c.source);
      for (std::size_t k = 1; k < c.infections.size(); ++k) {
        const auto& inf = c.infections[k];
        EXPECT_EQ(inf.time, std::max(sq_distance(world.embedding, s, world.embedding.users().at(inf.user)), 1e-12));
        EXPECT_LE(c.infections[k - 1].time, inf.time);
      }
    }
  }
}

TEST(GeneratePlanted, InfectsExactlyTheUsersInsideTheRadius) {
  const auto world = make_uniform_world(50, 2, 0.3, 6, 0.4);
  for (const auto& c : generate_planted(world, 40, 7)) {
    const UserIndex s = world.embedding.users().at(c.source);
    std::set<std::string> expected;
    for (UserIndex u = 0; u < world.embedding.num_users(); ++u)
      if (u == s || sq_distance(world.embedding, s, u) < world.tau_gen()) expected.insert(world.embedding.users().id(u));
    std::set<std::string> got;
    for (const auto& inf : c.infections) got.insert(inf.user);
    EXPECT_EQ(got, expected);
    EXPECT_EQ(c.infections.front().time, 0.0);
  }
}

TEST(GeneratePlanted, HugeRadiusInfectsEveryone) {
  auto world = make_uniform_world(30, 2, 0.5, 4);
  world.embedding.set_tau(1e12);
  for (const auto& c : generate_planted(world, 10, 5)) EXPECT_EQ(c.size(), 30u);
}

TEST(GeneratePlanted, TwoFarClustersStayApart) {
  const auto world = make_two_cluster_world(40, 2, 2.0, 0.2, 11);
  const auto& m = world.embedding;
  double cross_min = 1e300;
  for (UserIndex a = 0; a < m.num_users(); ++a)
    for (UserIndex b = 0; b < m.num_users(); ++b)
      if (a % 2 != b % 2) cross_min = std::min(cross_min, sq_distance(m, a, b));
  ASSERT_LT(world.tau_gen(), cross_min);
  for (const auto& c : generate_planted(world, 50, 12)) {
    const UserIndex s = m.users().at(c.source);
    for (const auto& inf : c.infections) EXPECT_EQ(m.users().at(inf.user) % 2, s % 2) << c.id;
  }
}

TEST(GeneratePlanted, DeterministicBytes) {
  const auto world = make_uniform_world(60, 4, 0.2, 21, 0.3);
  EXPECT_EQ(serialize(generate_planted(world, 30, 5)), serialize(generate_planted(world, 30, 5)));
  EXPECT_NE(serialize(generate_planted(world, 30, 5)), serialize(generate_planted(world, 30, 6)));
  const auto again = make_uniform_world(60, 4, 0.2, 21, 0.3);
  EXPECT_EQ(world.embedding, again.embedding);
}

TEST(GeneratePlanted, Errors) {
  const auto world = make_uniform_world(10, 2, 0.2, 1);
  EXPECT_THROW(generate_planted(world, 0, 1), std::invalid_argument);
  EXPECT_THROW(make_uniform_world(10, 2, 1.5, 1), std::invalid_argument);
  EXPECT_THROW(make_uniform_world(10, 2, 0.2, 1, -0.1), std::invalid_argument);
}

TEST(CalibrateThreshold, SplitsPairDistancesAtTheQuantile) {
  const auto world = make_uniform_world(40, 2, 0.25, 3);
  const auto& m = world.embedding;
  std::size_t below = 0, total = 0;
  for (UserIndex a = 0; a < m.num_users(); ++a)
    for (UserIndex b = a + 1; b < m.num_users(); ++b, ++total) below += sq_distance(m, a, b) < world.tau_gen();
  EXPECT_NEAR(static_cast<double>(below) / static_cast<double>(total), 0.25, 1.0 / static_cast<double>(total));
}

namespace {

IcWorld chain_world(std::size_t n, double p) {
  std::vector<IcGraph::EdgeSpec> edges;
  for (std::size_t i = 0; i + 1 < n; ++i) edges.push_back({padded_id('u', i, n), padded_id('u', i + 1, n), p});
  return IcWorld(edges);
}

}  // namespace

TEST(GenerateIc, ChainTimestampsAreHopCounts) {
  const auto world = chain_world(6, 1.0);
  for (const auto& c : generate_ic(world, 20, 3)) {
    const auto s = world.users().at(c.source);
    EXPECT_EQ(c.size(), world.num_users() - s);
    for (const auto& inf : c.infections)
      EXPECT_EQ(inf.time, static_cast<double>(world.users().at(inf.user) - s)) << c.id;
  }
}

TEST(GenerateIc, ZeroProbabilityGivesSingletons) {
  const auto world = random_ic_world(30, 4.0, 0.0, 2);
  for (const auto& c : generate_ic(world, 25, 3)) EXPECT_EQ(c.size(), 1u);
}

TEST(GenerateIc, StarLeavesHitHalfTheTime) {
  std::vector<IcGraph::EdgeSpec> edges;
  for (int leaf = 0; leaf < 4; ++leaf) edges.push_back({"hub", "leaf" + std::to_string(leaf), 0.5});
  const IcWorld world(edges);
  const auto cs = generate_ic(world, 10000, 8);
  std::size_t centred = 0;
  std::map<std::string, std::size_t> hits;
  for (const auto& c : cs) {
    if (c.source != "hub") continue;
    ++centred;
    for (const auto& inf : c.infections)
      if (inf.user != "hub") ++hits[inf.user];
  }
  ASSERT_GT(centred, 1000u);
  const double sigma = std::sqrt(0.25 * static_cast<double>(centred));
  for (int leaf = 0; leaf < 4; ++leaf)
    EXPECT_NEAR(static_cast<double>(hits["leaf" + std::to_string(leaf)]), 0.5 * static_cast<double>(centred), 3 * sigma);
}

TEST(GenerateIc, RaisingProbabilitiesNeverShrinksCascades) {
  const auto base = random_ic_world(60, 3.0, 0.2, 13);
  std::mt19937_64 rng(14);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<double> low(base.num_edges()), high(base.num_edges());
  for (std::size_t e = 0; e < low.size(); ++e) {
    low[e] = unit(rng) * 0.5;
    high[e] = low[e] + unit(rng) * (1.0 - low[e]);
  }
  const auto weak = generate_ic(base.with_probabilities(low), 200, 15);
  const auto strong = generate_ic(base.with_probabilities(high), 200, 15);
  for (std::size_t k = 0; k < weak.size(); ++k) {
    ASSERT_EQ(weak[k].source, strong[k].source);
    std::set<std::string> big;
    for (const auto& inf : strong[k].infections) big.insert(inf.user);
    for (const auto& inf : weak[k].infections) EXPECT_TRUE(big.contains(inf.user)) << weak[k].id << " " << inf.user;
  }
}

TEST(GenerateIc, DeterministicBytes) {
  const auto world = random_ic_world(40, 2.5, 0.4, 5);
  EXPECT_EQ(serialize(generate_ic(world, 50, 6)), serialize(generate_ic(world, 50, 6)));
  std::ostringstream a, b;
  write_ic_edges(a, world);
  write_ic_edges(b, random_ic_world(40, 2.5, 0.4, 5));
  EXPECT_EQ(a.str(), b.str());
}
