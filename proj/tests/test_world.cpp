#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <queue>
#include <random>

#include "hamgov/world.hpp"
#include "test_util.hpp"

using namespace hamgov;
using hamgov::testing::random_rotation;
using hamgov::testing::random_vec3;

namespace {

ObstacleSet one_sphere() {
  ObstacleSet o;
  o.add(Sphere{{3.0, 0.0, 0.0}, 1.0});
  return o;
}

ObstacleSet clutter(std::mt19937_64& rng) {
  ObstacleSet o;
  std::uniform_real_distribution<double> r(0.2, 1.0);
  for (int i = 0; i < 5; ++i) o.add(Sphere{random_vec3(rng, 6.0), r(rng)});
  for (int i = 0; i < 5; ++i) {
    const Vec3 lo = random_vec3(rng, 6.0);
    o.add(Box{lo, lo + Vec3(r(rng), r(rng), r(rng))});
  }
  return o;
}

// Plain uniform-cost search over free cells, no corner cutting past occupied
// cells.
double dijkstra(const OccupancyGrid& grid, const Cell& s, const Cell& g) {
  std::map<Cell, double> dist;
  using E = std::pair<double, Cell>;
  std::priority_queue<E, std::vector<E>, std::greater<>> q;
  dist[s] = 0.0;
  q.push({0.0, s});
  while (!q.empty()) {
    auto [d, c] = q.top();
    q.pop();
    if (d > dist[c]) continue;
    if (c == g) return d;
    for (int dx = -1; dx <= 1; ++dx)
      for (int dy = -1; dy <= 1; ++dy)
        for (int dz = -1; dz <= 1; ++dz) {
          const Cell n{c[0] + dx, c[1] + dy, c[2] + dz};
          if (n == c || !grid.free(n)) continue;
          bool clips = false;
          for (const Cell& m : {Cell{n[0], c[1], c[2]}, Cell{c[0], n[1], c[2]}, Cell{c[0], c[1], n[2]},
                                Cell{n[0], n[1], c[2]}, Cell{n[0], c[1], n[2]}, Cell{c[0], n[1], n[2]}})
            clips = clips || grid.occupied(m);
          if (clips) continue;
          const double nd = d + grid.resolution() * std::sqrt(double(dx * dx + dy * dy + dz * dz));
          auto it = dist.find(n);
          if (it == dist.end() || nd < it->second) {
            dist[n] = nd;
            q.push({nd, n});
          }
        }
  }
  return -1.0;
}

}  // namespace

TEST(ExactDistance, Examples) {
  EXPECT_TRUE(std::isinf(exact_distance(Vec3::Zero(), ObstacleSet{})));
  EXPECT_DOUBLE_EQ(exact_distance(Vec3::Zero(), one_sphere()), 2.0);
  ObstacleSet o;
  o.add(Box{{-1, -1, -1}, {1, 2, 3}});
  EXPECT_EQ(exact_distance(Vec3(0.5, 0.5, 0.5), o), 0.0);
  EXPECT_DOUBLE_EQ(exact_distance(Vec3(4, 2, 3), o), 3.0);
  EXPECT_DOUBLE_EQ(exact_distance(Vec3(4, 6, 3), o), 5.0);
}

TEST(ExactDistance, RejectsDegeneratePrimitives) {
  ObstacleSet o;
  EXPECT_THROW(o.add(Sphere{Vec3::Zero(), 0.0}), std::invalid_argument);
  EXPECT_THROW(o.add(Box{Vec3::Zero(), Vec3(1, 0, 1)}), std::invalid_argument);
}

TEST(TruncatedDistance, ClampsAtRange) {
  EXPECT_EQ(truncated_distance(Vec3::Zero(), ObstacleSet{}, 30.0), 30.0);
  EXPECT_EQ(truncated_distance(Vec3(-100, 0, 0), one_sphere(), 30.0), 30.0);
  EXPECT_DOUBLE_EQ(truncated_distance(Vec3::Zero(), one_sphere(), 30.0), 2.0);
  EXPECT_THROW(truncated_distance(Vec3::Zero(), one_sphere(), 0.0), std::invalid_argument);
}

TEST(TruncatedDistance, OneLipschitz) {
  std::mt19937_64 rng(1);
  const ObstacleSet o = clutter(rng);
  for (int i = 0; i < 2000; ++i) {
    const Vec3 a = random_vec3(rng, 8.0), b = a + random_vec3(rng, 0.5);
    const double da = truncated_distance(a, o, 3.0), db = truncated_distance(b, o, 3.0);
    EXPECT_LE(da, 3.0);
    EXPECT_LE(std::abs(da - db), (a - b).norm() + 1e-12);
  }
}

TEST(Lidar, SingleRayHitsSphere) {
  const PointCloud pc = lidar_scan(Vec3::Zero(), Mat3::Identity(), one_sphere(), 30.0, {Vec3::UnitX()});
  ASSERT_EQ(pc.points.size(), 1u);
  EXPECT_NEAR((pc.points[0] - Vec3(2, 0, 0)).norm(), 0.0, 1e-12);
  // the same ray in a body yawed by pi misses
  const Mat3 back = se3::so3_exp(Vec3(0, 0, M_PI));
  EXPECT_TRUE(lidar_scan(Vec3::Zero(), back, one_sphere(), 30.0, {Vec3::UnitX()}).points.empty());
  // out of range
  EXPECT_TRUE(lidar_scan(Vec3::Zero(), Mat3::Identity(), one_sphere(), 1.5, {Vec3::UnitX()}).points.empty());
}

TEST(Lidar, EmptyWorldGivesEmptyCloud) {
  EXPECT_TRUE(lidar_scan(Vec3::Zero(), Mat3::Identity(), ObstacleSet{}, 30.0, lidar_directions()).points.empty());
}

TEST(Lidar, DirectionPattern) {
  const auto d = lidar_directions();
  ASSERT_EQ(d.size(), 16u * 90u);
  for (const Vec3& v : d) EXPECT_NEAR(v.norm(), 1.0, 1e-15);
  EXPECT_THROW(lidar_directions(0, 4), std::invalid_argument);
}

TEST(Lidar, PointsLieOnSurfaces) {
  std::mt19937_64 rng(2);
  const auto dirs = lidar_directions();
  for (int trial = 0; trial < 10; ++trial) {
    const ObstacleSet o = clutter(rng);
    Vec3 p = random_vec3(rng, 6.0);
    while (o.distance(p) < 0.1) p = random_vec3(rng, 6.0);
    const PointCloud pc = lidar_scan(p, random_rotation(rng), o, 30.0, dirs);
    EXPECT_LE(pc.points.size(), dirs.size());
    EXPECT_GT(pc.points.size(), 0u);
    for (const Vec3& y : pc.points) EXPECT_LT(exact_distance(y, o), 1e-6);
  }
}

TEST(CloudDistance, Examples) {
  EXPECT_EQ(cloud_distance(Vec3::Zero(), {}, 30.0), 30.0);
  EXPECT_DOUBLE_EQ(cloud_distance(Vec3::Zero(), {Vec3(0, 4, 0)}, 30.0), 4.0);
  EXPECT_EQ(cloud_distance(Vec3::Zero(), {Vec3(0, 40, 0)}, 30.0), 30.0);
}

TEST(CloudDistance, NeverBelowTrueDistanceAndCloseNearby) {
  // sparse rays can only overestimate; from the scan origin the error is small
  std::mt19937_64 rng(3);
  const auto dirs = lidar_directions();
  for (int trial = 0; trial < 20; ++trial) {
    const ObstacleSet o = clutter(rng);
    Vec3 p = random_vec3(rng, 6.0);
    while (o.distance(p) < 0.1) p = random_vec3(rng, 6.0);
    const PointCloud pc = lidar_scan(p, Mat3::Identity(), o, 30.0, dirs);
    const double exact = truncated_distance(p, o, 30.0);
    const double sensed = cloud_distance(p, pc.points, 30.0);
    EXPECT_GE(sensed, exact - 1e-9);
    if (exact < 3.0) EXPECT_LT(sensed - exact, 0.3) << "trial " << trial;
    const Vec3 g = p + random_vec3(rng, 0.5);
    EXPECT_GE(cloud_distance(g, pc.points, 30.0), truncated_distance(g, o, 30.0) - 1e-9);
  }
}

TEST(World, ParseAndFormatRoundTrip) {
  const std::string text =
      "# test\n"
      "bounds -1 -2 0 10 5 3\n"
      "sphere 1 1 1 0.5   # trailing comment\n"
      "\n"
      "box 2 2 0 3 3 2\n";
  const World w = parse_world(text);
  EXPECT_EQ(w.lo, Vec3(-1, -2, 0));
  EXPECT_EQ(w.hi, Vec3(10, 5, 3));
  ASSERT_EQ(w.obstacles.spheres().size(), 1u);
  ASSERT_EQ(w.obstacles.boxes().size(), 1u);
  const World back = parse_world(format_world(w));
  EXPECT_EQ(format_world(back), format_world(w));
}

TEST(World, RejectsMalformed) {
  EXPECT_THROW(parse_world("sphere 0 0 0 1\n"), std::runtime_error);
  EXPECT_THROW(parse_world("bounds 0 0 0 1 1 1\nsphere 0 0 0\n"), std::runtime_error);
  EXPECT_THROW(parse_world("bounds 0 0 0 1 1 1\ncone 0 0 0 1\n"), std::runtime_error);
  EXPECT_THROW(parse_world("bounds 0 0 0 1 1 1\nsphere 0 0 0 -1\n"), std::runtime_error);
  EXPECT_THROW(parse_world("bounds 0 0 0 1 1 1\nbox 0 0 0 1 x 1\n"), std::runtime_error);
  try {
    parse_world("bounds 0 0 0 1 1 1\n\nbox 1 1 1 0 0 0\n");
    FAIL();
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos);
  }
  EXPECT_THROW(load_world("/nonexistent/world.txt"), std::runtime_error);
}

TEST(World, ShippedWorldsLoad) {
  for (const char* name : {"l_corridor.world", "forest.world", "narrow_gap.world"}) {
    const World w = load_world(std::string(HAMGOV_WORLDS_DIR) + "/" + name);
    EXPECT_FALSE(w.obstacles.empty()) << name;
  }
}

TEST(OccupancyGrid, Geometry) {
  const OccupancyGrid g(Vec3(0, 0, 0), Vec3(2.5, 1.0, 0.5), 0.25, 0.3);
  EXPECT_EQ(g.nx(), 10);
  EXPECT_EQ(g.ny(), 4);
  EXPECT_EQ(g.nz(), 2);
  EXPECT_EQ(g.cell_of(Vec3(0.3, 0.9, 0.1)), (Cell{1, 3, 0}));
  EXPECT_EQ(g.center(Cell{1, 3, 0}), Vec3(0.375, 0.875, 0.125));
  EXPECT_FALSE(g.in_bounds(Cell{10, 0, 0}));
  EXPECT_TRUE(g.blocked(Cell{-1, 0, 0}));
  EXPECT_THROW(OccupancyGrid(Vec3::Zero(), Vec3::Ones(), 0.0, 0.3), std::invalid_argument);
}

TEST(OccupancyGrid, UpdateMarksPointAndInflation) {
  OccupancyGrid g(Vec3(0, 0, 0), Vec3(4, 4, 4), 0.25, 0.3);
  g.update({});
  EXPECT_EQ(g.blocked_count(), 0u);
  const Vec3 p(2.01, 1.52, 2.3);
  g.update({p});
  EXPECT_EQ(g.occupied_count(), 1u);
  EXPECT_TRUE(g.occupied(g.cell_of(p)));
  std::size_t expected = 0;
  for (int x = 0; x < g.nx(); ++x)
    for (int y = 0; y < g.ny(); ++y)
      for (int z = 0; z < g.nz(); ++z) {
        const Cell c{x, y, z};
        const bool near = (g.center(c) - p).norm() <= 0.3 || c == g.cell_of(p);
        expected += near ? 1 : 0;
        EXPECT_EQ(g.blocked(c), near);
      }
  EXPECT_EQ(g.blocked_count(), expected);
  g.update({p});
  EXPECT_EQ(g.blocked_count(), expected);
  g.update({Vec3(-5, 0, 0)});  // out of bounds: ignored
  EXPECT_EQ(g.blocked_count(), expected);
}

TEST(Astar, StartEqualsGoal) {
  const OccupancyGrid g(Vec3::Zero(), Vec3::Ones(), 0.25, 0.0);
  const Path p = astar_plan(g, Vec3(0.4, 0.4, 0.4), Vec3(0.4, 0.4, 0.4));
  EXPECT_EQ(p.waypoints().size(), 1u);
  EXPECT_EQ(p.at(0.7), Vec3(0.4, 0.4, 0.4));
}

TEST(Astar, EmptyGridCornerToCorner) {
  const OccupancyGrid g(Vec3::Zero(), Vec3(10, 10, 1), 1.0, 0.0);
  const GridPlan plan = astar_cells(g, {0, 0, 0}, {9, 9, 0});
  EXPECT_NEAR(plan.cost, dijkstra(g, {0, 0, 0}, {9, 9, 0}), 1e-12);
  EXPECT_NEAR(plan.cost, 9.0 * std::sqrt(2.0), 1e-12);
  const Path p = astar_plan(g, g.center({0, 0, 0}), g.center({9, 9, 0}));
  EXPECT_EQ(p.waypoints().size(), 2u);  // one straight diagonal
}

TEST(Astar, WallWithSingleGap) {
  OccupancyGrid g(Vec3::Zero(), Vec3(10, 10, 1), 1.0, 0.0);
  for (int y = 0; y < 10; ++y)
    if (y != 7) g.set_blocked({5, y, 0});
  const GridPlan plan = astar_cells(g, {1, 1, 0}, {8, 1, 0});
  EXPECT_NE(std::find(plan.cells.begin(), plan.cells.end(), Cell{5, 7, 0}), plan.cells.end());
  EXPECT_NEAR(plan.cost, dijkstra(g, {1, 1, 0}, {8, 1, 0}), 1e-12);
  g.set_blocked({5, 7, 0});
  EXPECT_THROW(astar_cells(g, {1, 1, 0}, {8, 1, 0}), std::runtime_error);
}

TEST(Astar, NoCornerCutting) {
  OccupancyGrid g(Vec3::Zero(), Vec3(3, 3, 1), 1.0, 0.0);
  g.set_blocked({1, 0, 0});
  const GridPlan plan = astar_cells(g, {0, 0, 0}, {2, 1, 0});
  // the diagonal (0,0)->(1,1) would clip the occupied (1,0)
  for (std::size_t i = 1; i < plan.cells.size(); ++i) {
    const Cell& a = plan.cells[i - 1];
    const Cell& b = plan.cells[i];
    EXPECT_FALSE(g.occupied({b[0], a[1], a[2]}));
    EXPECT_FALSE(g.occupied({a[0], b[1], a[2]}));
  }
  EXPECT_NEAR(plan.cost, 3.0, 1e-12);
}

TEST(Astar, MatchesDijkstraOnRandomGrids) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int reachable = 0;
  for (int trial = 0; trial < 50; ++trial) {
    OccupancyGrid g(Vec3::Zero(), Vec3(12, 12, 3), 1.0, 0.0);
    for (int x = 0; x < 12; ++x)
      for (int y = 0; y < 12; ++y)
        for (int z = 0; z < 3; ++z)
          if (u(rng) < 0.3) g.set_blocked({x, y, z});
    std::uniform_int_distribution<int> c(0, 11), cz(0, 2);
    Cell s, t;
    do s = {c(rng), c(rng), cz(rng)}; while (!g.free(s));
    do t = {c(rng), c(rng), cz(rng)}; while (!g.free(t) || t == s);
    const double ref = dijkstra(g, s, t);
    if (ref < 0.0) {
      EXPECT_THROW(astar_cells(g, s, t), std::runtime_error);
      continue;
    }
    ++reachable;
    const GridPlan plan = astar_cells(g, s, t);
    EXPECT_NEAR(plan.cost, ref, 1e-9);
    for (const Cell& cell : plan.cells) EXPECT_TRUE(g.free(cell));
  }
  EXPECT_GT(reachable, 30);
}

TEST(Astar, StartInsideInflationEscapes) {
  OccupancyGrid g(Vec3::Zero(), Vec3(5, 5, 0.25), 0.25, 0.3);
  g.update({Vec3(2.4, 2.4, 0.125)});
  const Vec3 start = g.center(g.cell_of(Vec3(2.7, 2.4, 0.125)));
  ASSERT_TRUE(g.blocked(g.cell_of(start)));
  ASSERT_FALSE(g.occupied(g.cell_of(start)));
  const GridPlan plan = astar_cells(g, g.cell_of(start), g.cell_of(Vec3(4.5, 4.5, 0.1)));
  bool escaped = false;
  for (const Cell& c : plan.cells) {
    EXPECT_FALSE(g.occupied(c));
    if (escaped) EXPECT_TRUE(g.free(c));
    escaped = escaped || g.free(c);
  }
  EXPECT_TRUE(escaped);
}

TEST(Astar, PathWaypointsStayInMappedFreeSpace) {
  std::mt19937_64 rng(5);
  const World w = load_world(std::string(HAMGOV_WORLDS_DIR) + "/forest.world");
  OccupancyGrid g(w.lo, w.hi, 0.25, 0.3);
  const auto dirs = lidar_directions();
  for (int i = 0; i < 5; ++i) {
    Vec3 p = w.lo + (w.hi - w.lo).cwiseProduct((random_vec3(rng) + Vec3::Ones()) / 2);
    if (w.obstacles.distance(p) < 0.5) continue;
    g.update(lidar_scan(p, Mat3::Identity(), w.obstacles, 30.0, dirs).points);
  }
  const Vec3 a(0.6, 0.6, 1.1), b = w.hi - Vec3(0.6, 0.6, 1.9);
  if (!g.free(g.cell_of(a)) || !g.free(g.cell_of(b))) GTEST_SKIP() << "endpoints mapped as blocked";
  const Path p = astar_plan(g, a, b);
  EXPECT_EQ(p.start(), a);
  EXPECT_EQ(p.end(), b);
  for (std::size_t i = 1; i + 1 < p.waypoints().size(); ++i) EXPECT_TRUE(g.free(g.cell_of(p.waypoints()[i])));
  // dense check along the path: every sample sits in a free cell
  for (int k = 0; k <= 1000; ++k) EXPECT_TRUE(g.free(g.cell_of(p.at(k / 1000.0)))) << k;
}
