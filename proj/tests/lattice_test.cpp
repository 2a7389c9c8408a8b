#include <gtest/gtest.h>

#include <random>
#include <set>

#include "contourlab/lattice.hpp"

using namespace contourlab;

TEST(Neighborhood, RadiusZeroIsTheSite) {
  Torus t(2, 4);
  auto r = neighborhood(t, t.index({0, 0}), 0);
  EXPECT_EQ(r.members, std::vector<int>{t.index({0, 0})});
}

TEST(Neighborhood, RadiusOneWrapsAround) {
  Torus t(2, 4);
  auto r = neighborhood(t, t.index({0, 0}), 1);
  ASSERT_EQ(r.size(), 9u);
  for (int dx : {-1, 0, 1})
    for (int dy : {-1, 0, 1}) EXPECT_TRUE(r.contains(t.index({dx, dy})));
}

TEST(Neighborhood, SmallTorusCollapses) {
  Torus t(2, 2);
  // Enumerate offsets and deduplicate modulo L.
  std::set<int> expected;
  for (int dx = -1; dx <= 1; ++dx)
    for (int dy = -1; dy <= 1; ++dy) expected.insert(t.index({dx, dy}));
  auto r = neighborhood(t, 0, 1);
  EXPECT_EQ(r.size(), 4u);
  EXPECT_EQ(std::set<int>(r.members.begin(), r.members.end()), expected);
}

TEST(Neighborhood, IsSymmetric) {
  Torus t(2, 5);
  for (int R : {0, 1, 2})
    for (int x = 0; x < t.site_count(); ++x)
      for (int y = 0; y < t.site_count(); ++y)
        EXPECT_EQ(neighborhood(t, x, R).contains(y), neighborhood(t, y, R).contains(x));
}

TEST(ConnectedComponents, EmptyRegion) {
  Torus t(2, 4);
  EXPECT_TRUE(connected_components(t, Region::cubes({}), Adjacency::CubeTouch).empty());
}

TEST(ConnectedComponents, OppositeCornersAndFull) {
  Torus t(2, 4, 1);
  auto two = connected_components(t, Region::cubes({t.cube_index(std::vector{0, 0}), t.cube_index(std::vector{2, 2})}),
                                  Adjacency::CubeTouch);
  EXPECT_EQ(two.size(), 2u);
  std::vector<int> all(t.cube_count());
  std::iota(all.begin(), all.end(), 0);
  EXPECT_EQ(connected_components(t, Region::cubes(all), Adjacency::CubeTouch).size(), 1u);
}

TEST(ConnectedComponents, DiagonalCubesTouch) {
  Torus t(2, 8, 2);
  auto comps = connected_components(
      t, Region::cubes({t.cube_index(std::vector{0, 0}), t.cube_index(std::vector{1, 1})}), Adjacency::CubeTouch);
  EXPECT_EQ(comps.size(), 1u);
  auto sites = connected_components(t, Region::sites({t.index({0, 0}), t.index({1, 1})}),
                                    Adjacency::SiteNearestNeighbor);
  EXPECT_EQ(sites.size(), 2u);
}

TEST(ConnectedComponents, RepresentationMismatchThrows) {
  Torus t(2, 4);
  EXPECT_THROW(connected_components(t, Region::sites({0}), Adjacency::CubeTouch), ConfigError);
}

TEST(ConnectedComponents, PartitionPropertiesOnRandomRegions) {
  Torus t(2, 6, 1);
  std::mt19937 rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<int> m;
    for (int c = 0; c < t.cube_count(); ++c)
      if (rng() % 3 == 0) m.push_back(c);
    Region r = Region::cubes(m);
    auto comps = connected_components(t, r, Adjacency::CubeTouch);
    std::vector<int> joined;
    for (const auto& c : comps) {
      joined.insert(joined.end(), c.members.begin(), c.members.end());
      auto again = connected_components(t, c, Adjacency::CubeTouch);
      ASSERT_EQ(again.size(), 1u);
      EXPECT_EQ(again[0], c);
    }
    std::sort(joined.begin(), joined.end());
    EXPECT_EQ(joined, r.members);
  }
}

TEST(RegionBoundary, SingleSite) {
  Torus t(2, 4);
  auto b = region_boundary(t, Region::sites({t.index({1, 1})}));
  EXPECT_EQ(b.components.size(), 1u);
  EXPECT_EQ(b.plaquette_count(), 4u);
}

TEST(RegionBoundary, TwoByTwoBlock) {
  Torus t(2, 6);
  std::vector<int> block{t.index({1, 1}), t.index({2, 1}), t.index({1, 2}), t.index({2, 2})};
  // Exposed faces by direct enumeration.
  int exposed = 0;
  for (int x : block)
    for (int d = 0; d < 2; ++d)
      for (int s : {-1, 1})
        if (std::find(block.begin(), block.end(), t.shifted(x, d, s)) == block.end()) ++exposed;
  auto b = region_boundary(t, Region::sites(block));
  EXPECT_EQ(exposed, 8);
  EXPECT_EQ(b.plaquette_count(), 8u);
  EXPECT_EQ(b.components.size(), 1u);
}

TEST(RegionBoundary, ComplementSharesFaces) {
  Torus t(2, 4);
  int x = t.index({2, 3});
  std::vector<int> rest;
  for (int y = 0; y < t.site_count(); ++y)
    if (y != x) rest.push_back(y);
  auto a = region_boundary(t, Region::sites({x}));
  auto b = region_boundary(t, Region::sites(rest));
  EXPECT_EQ(b.components.size(), 1u);
  EXPECT_EQ(a.components, b.components);
}

TEST(RegionBoundary, UndefinedForEmptyOrWhole) {
  Torus t(2, 3);
  EXPECT_THROW(region_boundary(t, Region::sites({})), BoundaryUndefined);
  std::vector<int> all(t.site_count());
  std::iota(all.begin(), all.end(), 0);
  EXPECT_THROW(region_boundary(t, Region::sites(all)), BoundaryUndefined);
}

TEST(RegionBoundary, EveryPlaquetteSeparatesMemberFromNonMember) {
  Torus t(2, 5);
  std::mt19937 rng(11);
  for (int trial = 0; trial < 40; ++trial) {
    std::vector<int> m;
    for (int x = 0; x < t.site_count(); ++x)
      if (rng() % 2) m.push_back(x);
    if (m.empty() || static_cast<int>(m.size()) == t.site_count()) continue;
    Region r = Region::sites(m);
    for (const auto& comp : region_boundary(t, r).components)
      for (const auto& p : comp) {
        int other = t.shifted(p.site, p.dir, 1);
        EXPECT_NE(r.contains(p.site), r.contains(other));
      }
  }
}

TEST(SiteOrder, LastCoordinateMostSignificant) {
  Torus t(2, 2);
  EXPECT_EQ(site_order(t, std::vector{0, 0}), 0);
  EXPECT_EQ(site_order(t, std::vector{1, 0}), 1);
  EXPECT_EQ(site_order(t, std::vector{0, 1}), 2);
  EXPECT_EQ(site_order(t, std::vector{1, 1}), 3);
  Torus big(3, 3);
  std::set<int> seen;
  for (int x = 0; x < big.site_count(); ++x) seen.insert(site_order(big, big.coords(x)));
  EXPECT_EQ(static_cast<int>(seen.size()), big.site_count());
  EXPECT_EQ(*seen.rbegin(), big.site_count() - 1);
}

TEST(Cubes, PartitionAndTouching) {
  Torus t(2, 4, 2);
  EXPECT_EQ(t.cube_count(), 4);
  EXPECT_EQ(t.cube_sites(0), (std::vector<int>{t.index({0, 0}), t.index({1, 0}), t.index({0, 1}), t.index({1, 1})}));
  // On a 2x2 cube torus every pair of distinct cubes touches.
  for (int a = 0; a < 4; ++a)
    for (int b = 0; b < 4; ++b) EXPECT_EQ(t.cubes_touch(a, b), a != b);
  EXPECT_THROW(Torus(2, 5, 2), ConfigError);
}

TEST(Json, RoundTrip) {
  Torus t(2, 4, 2);
  Region r = Region::sites({5, 0, 3});
  auto j = to_json(t, r);
  EXPECT_EQ(j["sites"][0], (nlohmann::json{0, 0}));
  EXPECT_EQ(j["L"], 4);
  auto [t2, r2] = torus_region_from_json(j);
  EXPECT_EQ(t2, t);
  EXPECT_EQ(r2, r);
  j["bogus"] = 1;
  EXPECT_THROW(torus_region_from_json(j), ConfigError);
}
