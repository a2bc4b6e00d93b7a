#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cstddef>
#include <span>
#include <vector>

namespace facereg {

/// A 3D position in millimeters.
using Point3 = Eigen::Vector3d;
/// A free 3D direction (normals, axes).
using Vector3 = Eigen::Vector3d;

/// Squared Euclidean distance, evaluated as ((dx*dx + dy*dy) + dz*dz).
/// Every nearest-neighbor path in the library goes through this so that
/// distances computed by different routes are bit-identical.
inline double squared_distance(const Point3& a, const Point3& b) {
  const double dx = a.x() - b.x();
  const double dy = a.y() - b.y();
  const double dz = a.z() - b.z();
  return dx * dx + dy * dy + dz * dz;
}

/// Ordered 3D points with optional per-point unit normals.
///
/// Immutable once built. Construction rejects non-finite coordinates and
/// normals that are not unit length within 1e-6.
class PointCloud {
 public:
  PointCloud() = default;
  explicit PointCloud(std::vector<Point3> points, std::vector<Vector3> normals = {});

  std::size_t size() const { return points_.size(); }
  bool empty() const { return points_.empty(); }
  bool has_normals() const { return !normals_.empty(); }

  const std::vector<Point3>& points() const { return points_; }
  const std::vector<Vector3>& normals() const { return normals_; }
  const Point3& operator[](std::size_t i) const { return points_[i]; }

  Point3 centroid() const;

  /// Subset in the order given by `indices`.
  PointCloud select(std::span<const std::size_t> indices) const;
  /// Same points with normals replaced.
  PointCloud with_normals(std::vector<Vector3> normals) const;

 private:
  std::vector<Point3> points_;
  std::vector<Vector3> normals_;
};

/// Proper rigid motion p -> R p + t. The constructor enforces
/// R^T R = I and det R = +1 within 1e-9.
class RigidTransform {
 public:
  RigidTransform();
  RigidTransform(const Eigen::Matrix3d& rotation, const Vector3& translation);

  static RigidTransform identity() { return {}; }
  static RigidTransform from_translation(const Vector3& t);
  /// Rotation of `angle_rad` about `axis` (normalized internally), then translation.
  static RigidTransform from_axis_angle(const Vector3& axis, double angle_rad,
                                        const Vector3& translation = Vector3::Zero());

  const Eigen::Matrix3d& rotation() const { return rotation_; }
  const Vector3& translation() const { return translation_; }

  Point3 apply(const Point3& p) const { return rotation_ * p + translation_; }
  Vector3 apply_direction(const Vector3& n) const { return rotation_ * n; }

  /// Rotation angle in radians, in [0, pi].
  double rotation_angle() const;

 private:
  Eigen::Matrix3d rotation_;
  Vector3 translation_;
};

/// compose(a, b) applies b first, then a.
RigidTransform compose(const RigidTransform& a, const RigidTransform& b);
RigidTransform invert(const RigidTransform& t);

/// Maps every point (and normal, if present) through `t`.
PointCloud apply_transform(const RigidTransform& t, const PointCloud& cloud);

/// Least-squares rigid motion taking source_pts[i] onto target_pts[i]
/// (cross-covariance SVD with reflection correction). Throws InputError on
/// size mismatch, fewer than 3 pairs, or collinear source points
/// ("degenerate configuration").
RigidTransform estimate_rigid(std::span<const Point3> source_pts,
                              std::span<const Point3> target_pts);

/// Angle between the rotations of two transforms, in radians.
double rotation_error(const RigidTransform& a, const RigidTransform& b);

}  // namespace facereg
