#include "facereg/geometry.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <string>

#include "facereg/error.hpp"

namespace facereg {

namespace {

constexpr double kUnitNormalTol = 1e-6;
constexpr double kRotationTol = 1e-9;
// Second singular value of the centered source scatter, relative to the
// first, below which the configuration is treated as collinear.
constexpr double kCollinearRelTol = 1e-12;

bool finite(const Vector3& v) { return std::isfinite(v.x()) && std::isfinite(v.y()) && std::isfinite(v.z()); }

}  // namespace

PointCloud::PointCloud(std::vector<Point3> points, std::vector<Vector3> normals)
    : points_(std::move(points)), normals_(std::move(normals)) {
  if (!normals_.empty() && normals_.size() != points_.size())
    throw InputError("normals count " + std::to_string(normals_.size()) +
                     " does not match point count " + std::to_string(points_.size()));
  for (std::size_t i = 0; i < points_.size(); ++i)
    if (!finite(points_[i])) throw InputError("non-finite point at index " + std::to_string(i));
  for (std::size_t i = 0; i < normals_.size(); ++i) {
    if (!finite(normals_[i]) || std::abs(normals_[i].norm() - 1.0) > kUnitNormalTol)
      throw InputError("normal at index " + std::to_string(i) + " is not unit length");
  }
}

Point3 PointCloud::centroid() const {
  Point3 c = Point3::Zero();
  for (const auto& p : points_) c += p;
  return points_.empty() ? c : Point3(c / static_cast<double>(points_.size()));
}

PointCloud PointCloud::select(std::span<const std::size_t> indices) const {
  std::vector<Point3> pts;
  std::vector<Vector3> nrm;
  pts.reserve(indices.size());
  if (has_normals()) nrm.reserve(indices.size());
  for (auto i : indices) {
    pts.push_back(points_.at(i));
    if (has_normals()) nrm.push_back(normals_[i]);
  }
  return PointCloud(std::move(pts), std::move(nrm));
}

PointCloud PointCloud::with_normals(std::vector<Vector3> normals) const {
  return PointCloud(points_, std::move(normals));
}

RigidTransform::RigidTransform()
    : rotation_(Eigen::Matrix3d::Identity()), translation_(Vector3::Zero()) {}

RigidTransform::RigidTransform(const Eigen::Matrix3d& rotation, const Vector3& translation)
    : rotation_(rotation), translation_(translation) {
  if (!rotation_.allFinite() || !finite(translation_))
    throw InputError("rigid transform has non-finite entries");
  const Eigen::Matrix3d gram = rotation_.transpose() * rotation_;
  if ((gram - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > kRotationTol)
    throw InputError("rotation matrix is not orthonormal");
  if (std::abs(rotation_.determinant() - 1.0) > kRotationTol)
    throw InputError("rotation matrix is not a proper rotation (det != 1)");
}

RigidTransform RigidTransform::from_translation(const Vector3& t) {
  return RigidTransform(Eigen::Matrix3d::Identity(), t);
}

RigidTransform RigidTransform::from_axis_angle(const Vector3& axis, double angle_rad,
                                               const Vector3& translation) {
  if (axis.norm() == 0.0) {
    if (angle_rad != 0.0) throw InputError("rotation axis must be non-zero");
    return from_translation(translation);
  }
  const Eigen::AngleAxisd aa(angle_rad, axis.normalized());
  return RigidTransform(aa.toRotationMatrix(), translation);
}

double RigidTransform::rotation_angle() const {
  // atan2 form stays accurate near 0 where acos of the trace loses half the digits.
  const auto& r = rotation_;
  const Vector3 skew(r(2, 1) - r(1, 2), r(0, 2) - r(2, 0), r(1, 0) - r(0, 1));
  return std::atan2(0.5 * skew.norm(), 0.5 * (r.trace() - 1.0));
}

RigidTransform compose(const RigidTransform& a, const RigidTransform& b) {
  return RigidTransform(a.rotation() * b.rotation(), a.rotation() * b.translation() + a.translation());
}

RigidTransform invert(const RigidTransform& t) {
  const Eigen::Matrix3d rt = t.rotation().transpose();
  return RigidTransform(rt, -(rt * t.translation()));
}

PointCloud apply_transform(const RigidTransform& t, const PointCloud& cloud) {
  std::vector<Point3> pts;
  pts.reserve(cloud.size());
  for (const auto& p : cloud.points()) pts.push_back(t.apply(p));
  std::vector<Vector3> nrm;
  if (cloud.has_normals()) {
    nrm.reserve(cloud.size());
    // Rotation preserves length up to rounding; renormalize to keep the
    // unit-normal invariant exact after long chains of transforms.
    for (const auto& n : cloud.normals()) nrm.push_back(t.apply_direction(n).normalized());
  }
  return PointCloud(std::move(pts), std::move(nrm));
}

RigidTransform estimate_rigid(std::span<const Point3> source_pts, std::span<const Point3> target_pts) {
  if (source_pts.size() != target_pts.size())
    throw InputError("estimate_rigid: point list length mismatch (" + std::to_string(source_pts.size()) +
                     " vs " + std::to_string(target_pts.size()) + ")");
  if (source_pts.size() < 3) throw InputError("estimate_rigid: at least 3 point pairs required");

  const double n = static_cast<double>(source_pts.size());
  Point3 mu_s = Point3::Zero();
  Point3 mu_t = Point3::Zero();
  for (std::size_t i = 0; i < source_pts.size(); ++i) {
    mu_s += source_pts[i];
    mu_t += target_pts[i];
  }
  mu_s /= n;
  mu_t /= n;

  Eigen::Matrix3d cross = Eigen::Matrix3d::Zero();
  Eigen::Matrix3d scatter = Eigen::Matrix3d::Zero();
  for (std::size_t i = 0; i < source_pts.size(); ++i) {
    const Vector3 s = source_pts[i] - mu_s;
    const Vector3 d = target_pts[i] - mu_t;
    cross += s * d.transpose();
    scatter += s * s.transpose();
  }

  const Eigen::JacobiSVD<Eigen::Matrix3d> scatter_svd(scatter);
  const auto& sv = scatter_svd.singularValues();
  if (!(sv(0) > 0.0) || sv(1) <= kCollinearRelTol * sv(0)) throw InputError("degenerate configuration");

  // cross = U S V^T; the optimal rotation is V U^T, with the last singular
  // direction negated if that would be a reflection.
  const Eigen::JacobiSVD<Eigen::Matrix3d> svd(cross, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Eigen::Matrix3d& u = svd.matrixU();
  const Eigen::Matrix3d& v = svd.matrixV();
  Eigen::Matrix3d d = Eigen::Matrix3d::Identity();
  if ((v * u.transpose()).determinant() < 0.0) d(2, 2) = -1.0;
  Eigen::Matrix3d r = v * d * u.transpose();

  // One Newton-Schulz step removes the last bits of orthogonality drift.
  r = 0.5 * r * (3.0 * Eigen::Matrix3d::Identity() - r.transpose() * r);
  return RigidTransform(r, mu_t - r * mu_s);
}

double rotation_error(const RigidTransform& a, const RigidTransform& b) {
  return compose(invert(a), b).rotation_angle();
}

}  // namespace facereg
