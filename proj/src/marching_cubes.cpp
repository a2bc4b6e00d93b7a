#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "facereg/error.hpp"
#include "facereg/surface.hpp"
#include "mc_tables.hpp"

namespace facereg {

namespace {

constexpr std::array<std::array<int, 3>, 8> kCorner = {{
    {0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0}, {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1},
}};

// Each edge as (lower corner, axis); the lower corner is the endpoint with
// the smaller coordinate along the axis.
struct EdgeDef {
  int corner;
  int axis;
};
constexpr std::array<EdgeDef, 12> kEdge = {{
    {0, 0}, {1, 1}, {3, 0}, {0, 1}, {4, 0}, {5, 1}, {7, 0}, {4, 1}, {0, 2}, {1, 2}, {2, 2}, {3, 2},
}};

Vector3 gradient(const ScalarVolume& vol, int i, int j, int k) {
  Vector3 g;
  const std::array<int, 3> idx{i, j, k};
  for (int a = 0; a < 3; ++a) {
    auto lo = idx, hi = idx;
    lo[a] = std::max(0, idx[a] - 1);
    hi[a] = std::min(vol.dims[a] - 1, idx[a] + 1);
    const double span = (hi[a] - lo[a]) * vol.spacing[a];
    g[a] = (vol.at(hi[0], hi[1], hi[2]) - vol.at(lo[0], lo[1], lo[2])) / span;
  }
  return g;
}

}  // namespace

TriangleMesh marching_cubes(const ScalarVolume& vol, double iso) {
  vol.validate();
  const int nx = vol.dims[0], ny = vol.dims[1], nz = vol.dims[2];

  TriangleMesh mesh;
  // Global edge id = 3 * linear(lower grid point) + axis.
  std::unordered_map<std::uint64_t, std::uint32_t> edge_vertex;

  auto vertex_on_edge = [&](int i, int j, int k, int axis) -> std::uint32_t {
    const std::uint64_t id = 3 * static_cast<std::uint64_t>(vol.linear(i, j, k)) + axis;
    if (auto it = edge_vertex.find(id); it != edge_vertex.end()) return it->second;

    std::array<int, 3> b{i, j, k};
    b[axis] += 1;
    const double f0 = vol.at(i, j, k);
    const double f1 = vol.at(b[0], b[1], b[2]);
    const double t = std::clamp((iso - f0) / (f1 - f0), 0.0, 1.0);

    Vector3 offset(i, j, k);
    offset[axis] += t;
    const Point3 p = vol.origin + vol.spacing.cwiseProduct(offset);

    Vector3 g = (1.0 - t) * gradient(vol, i, j, k) + t * gradient(vol, b[0], b[1], b[2]);
    if (!(g.norm() > 0.0)) {
      g = Vector3::Zero();
      g[axis] = f1 - f0;
    }
    const auto idx = static_cast<std::uint32_t>(mesh.vertices.size());
    mesh.vertices.push_back(p);
    mesh.normals.push_back(-g.normalized());
    edge_vertex.emplace(id, idx);
    return idx;
  };

  for (int k = 0; k + 1 < nz; ++k) {
    for (int j = 0; j + 1 < ny; ++j) {
      for (int i = 0; i + 1 < nx; ++i) {
        int cube = 0;
        for (int c = 0; c < 8; ++c)
          if (vol.at(i + kCorner[c][0], j + kCorner[c][1], k + kCorner[c][2]) < iso) cube |= 1 << c;
        const auto mask = detail::kEdgeTable[cube];
        if (mask == 0) continue;

        std::array<std::uint32_t, 12> ev{};
        for (int e = 0; e < 12; ++e) {
          if (!(mask & (1 << e))) continue;
          const auto& c = kCorner[kEdge[e].corner];
          ev[e] = vertex_on_edge(i + c[0], j + c[1], k + c[2], kEdge[e].axis);
        }
        const auto& tri = detail::kTriTable[cube];
        for (int t = 0; t < 16 && tri[t] >= 0; t += 3) {
          // With corners flagged below iso, table order is already
          // counter-clockwise about the decreasing-value normal.
          const Triangle f{ev[tri[t]], ev[tri[t + 1]], ev[tri[t + 2]]};
          if (f[0] == f[1] || f[1] == f[2] || f[0] == f[2]) continue;
          mesh.triangles.push_back(f);
        }
      }
    }
  }
  if (mesh.triangles.empty()) throw PipelineError("empty isosurface");
  return mesh;
}

}  // namespace facereg
