#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <utility>
#include <vector>

#include "facereg/depth_io.hpp"
#include "facereg/geometry.hpp"

namespace facereg {

/// CT-like scalar grid. Sample (i, j, k) sits at origin + (i, j, k) * spacing
/// and is stored at values[i + nx * (j + ny * k)].
struct ScalarVolume {
  std::array<int, 3> dims{0, 0, 0};
  Vector3 spacing = Vector3::Ones();
  Point3 origin = Point3::Zero();
  std::vector<float> values;

  void validate() const;
  std::size_t linear(int i, int j, int k) const {
    return static_cast<std::size_t>(i) + static_cast<std::size_t>(dims[0]) * (static_cast<std::size_t>(j) + static_cast<std::size_t>(dims[1]) * k);
  }
  float at(int i, int j, int k) const { return values[linear(i, j, k)]; }
  Point3 position(int i, int j, int k) const {
    return origin + spacing.cwiseProduct(Vector3(i, j, k));
  }
};

using Triangle = std::array<std::uint32_t, 3>;

struct TriangleMesh {
  std::vector<Point3> vertices;
  std::vector<Triangle> triangles;
  std::vector<Vector3> normals;  ///< per vertex, unit length

  /// Throws InputError on out-of-range or repeated indices, or non-unit normals.
  void validate() const;
  bool empty() const { return vertices.empty() || triangles.empty(); }
};

/// Orthographic frame used to rasterize a mesh: pixel column grows along
/// u_axis, row along v_axis, both perpendicular to view_axis (which points
/// from the surface toward the viewer).
struct ImageProjection {
  Vector3 view_axis = Vector3::UnitZ();
  Vector3 u_axis = Vector3::UnitX();
  Vector3 v_axis = -Vector3::UnitY();
  double u_min = 0.0;
  double v_min = 0.0;
  double resolution_mm = 1.0;

  /// Landmark-convention pixel coordinates (pixel centers at integers) of a 3D point.
  std::pair<double, double> project(const Point3& p) const;
};

/// Gray image of normal angles plus, per pixel, the 3D surface point that
/// produced it.
struct NormalAngleImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> gray;
  std::vector<std::optional<Point3>> lookup;
  std::optional<ImageProjection> projection;  ///< absent when loaded from files without it

  std::size_t pixel(int col, int row) const { return static_cast<std::size_t>(row) * width + col; }
};

/// Table-driven marching cubes (256-case tables, linear edge interpolation).
/// Vertices are shared between adjacent cubes; normals are the normalized
/// negative volume gradient. Throws PipelineError("empty isosurface").
TriangleMesh marching_cubes(const ScalarVolume& volume, double iso);

PointCloud mesh_to_cloud(const TriangleMesh& mesh);

/// PCA normals over the k nearest neighbors (the point included), flipped to
/// face `viewpoint`. Requires cloud.size() > k.
PointCloud estimate_normals(const PointCloud& cloud, const Point3& viewpoint, std::size_t k = 20);

/// Orthographic normal-angle rendering: gray = round(255 * (1 - theta / 90deg))
/// where theta is the angle between the surface normal and view_axis.
NormalAngleImage render_normal_angle_image(const TriangleMesh& mesh, const Vector3& view_axis,
                                           double resolution_mm_per_px = 1.0);

/// Maps each landmark to the 3D point of its pixel, falling back to the
/// nearest populated pixel within 3 px. Throws PipelineError when none survive.
LandmarkCloud backproject_landmarks(const NormalAngleImage& image, const LandmarkSet& landmarks);

// File formats.

/// Accepts either the .raw file or its .volume.json sidecar.
ScalarVolume read_volume(const std::filesystem::path& path);
/// Writes `<stem>.raw` (u16 little-endian, x fastest) and `<stem>.volume.json`.
/// Values are rounded and clamped to [0, 65535].
void write_volume(const std::filesystem::path& raw_path, const ScalarVolume& volume);

/// Reads a PLY mesh; vertex normals are derived from the faces when absent.
TriangleMesh read_mesh(const std::filesystem::path& path);
void write_mesh(const std::filesystem::path& path, const TriangleMesh& mesh);

/// Writes the 8-bit PGM, `<stem>.lookup.bin` (3 x float32 per pixel, NaN when
/// empty) and `<stem>.projection.json`.
void write_normal_angle_image(const std::filesystem::path& pgm, const NormalAngleImage& image);
NormalAngleImage read_normal_angle_image(const std::filesystem::path& pgm);
std::filesystem::path lookup_sidecar(const std::filesystem::path& pgm);

}  // namespace facereg
