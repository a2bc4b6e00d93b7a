#include "doctest.h"

#include <algorithm>
#include <random>

#include "facereg/error.hpp"
#include "facereg/neighbor_index.hpp"
#include "test_support.hpp"

using namespace facereg;

namespace {

Neighbor brute_nearest(const std::vector<Point3>& pts, const Point3& q) {
  Neighbor best{0, 0.0};
  double best_d2 = squared_distance(pts[0], q);
  for (std::size_t i = 1; i < pts.size(); ++i) {
    const double d2 = squared_distance(pts[i], q);
    if (d2 < best_d2) {
      best_d2 = d2;
      best.index = i;
    }
  }
  best.distance = std::sqrt(best_d2);
  return best;
}

std::vector<Neighbor> brute_k(const std::vector<Point3>& pts, const Point3& q, std::size_t k) {
  std::vector<std::pair<double, std::size_t>> all;
  for (std::size_t i = 0; i < pts.size(); ++i) all.emplace_back(squared_distance(pts[i], q), i);
  std::sort(all.begin(), all.end());
  std::vector<Neighbor> out;
  for (std::size_t i = 0; i < std::min(k, all.size()); ++i) out.push_back({all[i].second, std::sqrt(all[i].first)});
  return out;
}

std::vector<Neighbor> brute_radius(const std::vector<Point3>& pts, const Point3& q, double r) {
  std::vector<Neighbor> out;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const double d2 = squared_distance(pts[i], q);
    if (d2 <= r * r) out.push_back({i, std::sqrt(d2)});
  }
  return out;
}

}  // namespace

TEST_CASE("nearest on tiny clouds") {
  const NeighborIndex two(PointCloud({Point3(0, 0, 0), Point3(10, 0, 0)}));
  const auto nb = two.nearest(Point3(1, 0, 0));
  CHECK(nb.index == 0);
  CHECK(nb.distance == 1.0);

  const NeighborIndex one(PointCloud({Point3(3, 4, 5)}));
  CHECK(one.nearest(Point3(-100, 7, 1e6)).index == 0);
}

TEST_CASE("empty cloud is rejected") {
  CHECK_THROWS_WITH_AS(build_index(PointCloud()), "empty cloud", InputError);
}

TEST_CASE("ties resolve to the lowest index") {
  // Duplicate points and an equidistant pair.
  const std::vector<Point3> pts{{1, 0, 0}, {-1, 0, 0}, {1, 0, 0}, {0, 5, 0}, {-1, 0, 0}};
  const NeighborIndex index(pts);
  CHECK(index.nearest(Point3(0, 0, 0)).index == 0);
  CHECK(index.nearest(Point3(-1, 0, 0)).index == 1);
  const auto knn = index.k_nearest(Point3(0, 0, 0), 4);
  REQUIRE(knn.size() == 4);
  CHECK(knn[0].index == 0);
  CHECK(knn[1].index == 1);
  CHECK(knn[2].index == 2);
  CHECK(knn[3].index == 4);
}

TEST_CASE("500 uniform points: every query equals the linear scan") {
  std::mt19937_64 rng(500);
  const auto pts = facereg::testing::random_points(rng, 500, 100.0);
  const NeighborIndex index(pts);
  for (const auto& q : facereg::testing::random_points(rng, 500, 120.0)) CHECK(index.nearest(q) == brute_nearest(pts, q));
  // Querying the stored points themselves gives exact zero distance.
  for (std::size_t i = 0; i < pts.size(); ++i) CHECK(index.nearest(pts[i]) == Neighbor{i, 0.0});
}

TEST_CASE("property: nearest, k-nearest and radius match brute force on 100 clouds") {
  std::mt19937_64 rng(100);
  std::uniform_int_distribution<std::size_t> size_dist(1, 1000);
  std::uniform_int_distribution<std::size_t> k_dist(1, 30);
  std::uniform_real_distribution<double> r_dist(0.0, 40.0);
  std::uniform_int_distribution<int> grid(-3, 3);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = size_dist(rng);
    std::vector<Point3> pts;
    if (trial % 4 == 0) {
      // Integer lattice cloud: many exact ties.
      for (std::size_t i = 0; i < n; ++i) pts.emplace_back(grid(rng), grid(rng), grid(rng));
    } else {
      pts = facereg::testing::random_points(rng, n, 100.0);
    }
    const NeighborIndex index(pts);
    for (int qi = 0; qi < 20; ++qi) {
      const Point3 q = trial % 4 == 0 ? Point3(grid(rng) * 0.5, grid(rng) * 0.5, grid(rng) * 0.5)
                                      : facereg::testing::random_points(rng, 1, 110.0)[0];
      CHECK(index.nearest(q) == brute_nearest(pts, q));
      const std::size_t k = k_dist(rng);
      CHECK(index.k_nearest(q, k) == brute_k(pts, q, k));
      const double r = trial % 4 == 0 ? 1.0 : r_dist(rng);
      const auto rad = index.radius(q, r);
      CHECK(rad == brute_radius(pts, q, r));
      CHECK(index.radius_count(q, r) == rad.size());
    }
  }
}
