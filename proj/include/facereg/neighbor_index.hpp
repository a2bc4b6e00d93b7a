#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "facereg/geometry.hpp"

namespace facereg {

struct Neighbor {
  std::size_t index;
  double distance;  ///< Euclidean, mm

  friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

/// Immutable KD-tree over a point cloud.
///
/// Every query returns exactly what a linear scan would: distances are
/// computed with squared_distance() and ties are broken by the lower point
/// index. The index keeps its own copy of the points and is safe to share
/// across threads.
class NeighborIndex {
 public:
  /// Throws InputError("empty cloud") for an empty cloud.
  explicit NeighborIndex(const PointCloud& cloud);
  explicit NeighborIndex(std::vector<Point3> points);

  std::size_t size() const { return points_.size(); }
  const std::vector<Point3>& points() const { return points_; }

  Neighbor nearest(const Point3& q) const;
  /// Up to k neighbors ordered by (distance, index).
  std::vector<Neighbor> k_nearest(const Point3& q, std::size_t k) const;
  /// All points with distance <= r, ordered by index.
  std::vector<Neighbor> radius(const Point3& q, double r) const;
  /// Number of points with distance <= r.
  std::size_t radius_count(const Point3& q, double r) const;

 private:
  struct Node {
    // Leaf: [begin, end) into order_. Inner: split on axis at value.
    std::uint32_t begin = 0, end = 0;
    std::int32_t left = -1, right = -1;
    int axis = -1;
    double split = 0.0;
  };

  int build(std::uint32_t begin, std::uint32_t end);
  void nearest_rec(int node, const Point3& q, std::size_t& best, double& best_d2) const;
  template <class Visit>
  void radius_rec(int node, const Point3& q, double r2, Visit&& visit) const;

  std::vector<Point3> points_;
  std::vector<std::uint32_t> order_;
  std::vector<Node> nodes_;
};

/// Builds a NeighborIndex; same as the constructor.
NeighborIndex build_index(const PointCloud& cloud);

}  // namespace facereg
