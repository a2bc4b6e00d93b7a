#include "facereg/neighbor_index.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <cmath>
#include <queue>

#include "facereg/error.hpp"

namespace facereg {

namespace {
constexpr std::uint32_t kLeafSize = 8;

bool closer(double d2a, std::size_t ia, double d2b, std::size_t ib) {
  return d2a < d2b || (d2a == d2b && ia < ib);
}
}  // namespace

NeighborIndex::NeighborIndex(const PointCloud& cloud) : NeighborIndex(cloud.points()) {}

NeighborIndex::NeighborIndex(std::vector<Point3> points) : points_(std::move(points)) {
  if (points_.empty()) throw InputError("empty cloud");
  if (points_.size() >= std::numeric_limits<std::uint32_t>::max())
    throw InputError("cloud too large for NeighborIndex");
  order_.resize(points_.size());
  std::iota(order_.begin(), order_.end(), 0u);
  nodes_.reserve(2 * points_.size() / kLeafSize + 1);
  build(0, static_cast<std::uint32_t>(points_.size()));
}

int NeighborIndex::build(std::uint32_t begin, std::uint32_t end) {
  const int id = static_cast<int>(nodes_.size());
  nodes_.push_back(Node{begin, end});
  if (end - begin <= kLeafSize) return id;

  Eigen::Vector3d lo = Eigen::Vector3d::Constant(std::numeric_limits<double>::infinity());
  Eigen::Vector3d hi = -lo;
  for (auto i = begin; i < end; ++i) {
    lo = lo.cwiseMin(points_[order_[i]]);
    hi = hi.cwiseMax(points_[order_[i]]);
  }
  int axis = 0;
  (hi - lo).maxCoeff(&axis);
  if (hi[axis] == lo[axis]) return id;  // all points coincide

  const auto mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                   [&](std::uint32_t a, std::uint32_t b) {
                     const double va = points_[a][axis], vb = points_[b][axis];
                     return va < vb || (va == vb && a < b);
                   });
  const double split = points_[order_[mid]][axis];
  const int left = build(begin, mid);
  const int right = build(mid, end);
  Node& n = nodes_[id];
  n.axis = axis;
  n.split = split;
  n.left = left;
  n.right = right;
  return id;
}

// Pruning uses a strict comparison so equidistant candidates on the far side
// are still visited and the index tie-break matches a linear scan.
void NeighborIndex::nearest_rec(int node_id, const Point3& q, std::size_t& best, double& best_d2) const {
  const Node& n = nodes_[node_id];
  if (n.axis < 0) {
    for (auto i = n.begin; i < n.end; ++i) {
      const std::size_t idx = order_[i];
      const double d2 = squared_distance(q, points_[idx]);
      if (closer(d2, idx, best_d2, best)) {
        best = idx;
        best_d2 = d2;
      }
    }
    return;
  }
  const double diff = q[n.axis] - n.split;
  const int near_side = diff <= 0.0 ? n.left : n.right;
  const int far_side = diff <= 0.0 ? n.right : n.left;
  nearest_rec(near_side, q, best, best_d2);
  if (diff * diff <= best_d2) nearest_rec(far_side, q, best, best_d2);
}

Neighbor NeighborIndex::nearest(const Point3& q) const {
  std::size_t best = std::numeric_limits<std::size_t>::max();
  double best_d2 = std::numeric_limits<double>::infinity();
  nearest_rec(0, q, best, best_d2);
  return {best, std::sqrt(best_d2)};
}

std::vector<Neighbor> NeighborIndex::k_nearest(const Point3& q, std::size_t k) const {
  if (k == 0) return {};
  using Entry = std::pair<double, std::size_t>;  // (d2, index), max-heap on (d2, index)
  std::priority_queue<Entry> heap;
  auto worst_d2 = [&] { return heap.size() < k ? std::numeric_limits<double>::infinity() : heap.top().first; };

  // Depth-first with near child visited first; explicit stack keeps the
  // pruning test evaluated against the current k-th distance.
  struct Frame {
    int node;
    double min_d2;
  };
  std::vector<Frame> frames{{0, 0.0}};
  while (!frames.empty()) {
    const Frame f = frames.back();
    frames.pop_back();
    if (f.min_d2 > worst_d2()) continue;
    const Node& n = nodes_[f.node];
    if (n.axis < 0) {
      for (auto i = n.begin; i < n.end; ++i) {
        const std::size_t idx = order_[i];
        const double d2 = squared_distance(q, points_[idx]);
        if (heap.size() < k) {
          heap.emplace(d2, idx);
        } else if (closer(d2, idx, heap.top().first, heap.top().second)) {
          heap.pop();
          heap.emplace(d2, idx);
        }
      }
      continue;
    }
    const double diff = q[n.axis] - n.split;
    const int near_side = diff <= 0.0 ? n.left : n.right;
    const int far_side = diff <= 0.0 ? n.right : n.left;
    frames.push_back({far_side, std::max(f.min_d2, diff * diff)});
    frames.push_back({near_side, f.min_d2});
  }

  std::vector<Neighbor> out(heap.size());
  for (std::size_t i = out.size(); i-- > 0;) {
    out[i] = {heap.top().second, std::sqrt(heap.top().first)};
    heap.pop();
  }
  return out;
}

template <class Visit>
void NeighborIndex::radius_rec(int node_id, const Point3& q, double r2, Visit&& visit) const {
  const Node& n = nodes_[node_id];
  if (n.axis < 0) {
    for (auto i = n.begin; i < n.end; ++i) {
      const std::size_t idx = order_[i];
      const double d2 = squared_distance(q, points_[idx]);
      if (d2 <= r2) visit(idx, d2);
    }
    return;
  }
  const double diff = q[n.axis] - n.split;
  const int near_side = diff <= 0.0 ? n.left : n.right;
  const int far_side = diff <= 0.0 ? n.right : n.left;
  radius_rec(near_side, q, r2, visit);
  if (diff * diff <= r2) radius_rec(far_side, q, r2, visit);
}

std::vector<Neighbor> NeighborIndex::radius(const Point3& q, double r) const {
  std::vector<Neighbor> out;
  if (!(r >= 0.0)) return out;
  radius_rec(0, q, r * r, [&](std::size_t idx, double d2) { out.push_back({idx, std::sqrt(d2)}); });
  std::sort(out.begin(), out.end(), [](const Neighbor& a, const Neighbor& b) { return a.index < b.index; });
  return out;
}

std::size_t NeighborIndex::radius_count(const Point3& q, double r) const {
  std::size_t count = 0;
  if (!(r >= 0.0)) return 0;
  radius_rec(0, q, r * r, [&](std::size_t, double) { ++count; });
  return count;
}

NeighborIndex build_index(const PointCloud& cloud) { return NeighborIndex(cloud); }

}  // namespace facereg
