#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "facereg/geometry.hpp"

namespace facereg {

enum class PlyEncoding { Ascii, BinaryLittleEndian };

/// Raw contents of a PLY file: vertex positions, optional normals, optional
/// triangles. Polygons with more than three corners are fan-triangulated.
struct PlyData {
  std::vector<Point3> vertices;
  std::vector<Vector3> normals;
  std::vector<std::array<std::uint32_t, 3>> faces;
};

/// Reads ascii or binary_little_endian PLY. Unknown vertex properties are
/// skipped; x/y/z/nx/ny/nz may be float or double. Throws InputError.
PlyData read_ply(const std::filesystem::path& path);

/// Writes x,y,z (and nx,ny,nz when present) as float32, faces as
/// "list uchar int vertex_indices".
void write_ply(const std::filesystem::path& path, const PlyData& data,
               PlyEncoding encoding = PlyEncoding::BinaryLittleEndian);

PointCloud read_point_cloud(const std::filesystem::path& path);
void write_point_cloud(const std::filesystem::path& path, const PointCloud& cloud,
                       PlyEncoding encoding = PlyEncoding::BinaryLittleEndian);

}  // namespace facereg
