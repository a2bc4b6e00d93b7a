#pragma once

#include <cstddef>
#include <vector>

#include "facereg/geometry.hpp"

namespace facereg {

struct IssParams {
  double salient_radius = 6.0;  ///< mm
  double nonmax_radius = 4.0;   ///< mm
  double gamma_21 = 0.975;
  double gamma_32 = 0.975;
  std::size_t min_neighbors = 5;
};

struct HarrisParams {
  double radius = 6.0;  ///< mm
  /// Responses are det(M) - k tr(M)^2 with M the mean of n n^T over the
  /// neighborhood. For unit normals tr(M) = 1, so a flat patch scores -k and
  /// the default keeps points with det(M) > 1e-4.
  double response_threshold = 1e-4 - 0.04;
  double k_constant = 0.04;
};

struct SiftParams {
  double min_scale = 2.0;  ///< mm
  int octaves = 4;
  int scales_per_octave = 4;
  double contrast_threshold = 2e-3;
};

struct KeypointParams {
  IssParams iss;
  HarrisParams harris;
  SiftParams sift;

  /// Throws InputError on non-positive radii/scales, gammas outside (0, 1),
  /// or fewer than one octave/scale.
  void validate() const;
};

/// Median nearest-neighbor distance (mm). Needs at least 2 points.
double mean_spacing(const PointCloud& cloud);

/// Defaults scaled by point spacing: ISS salient 6x / non-max 4x, Harris
/// radius 6x, SIFT min_scale 2x.
KeypointParams default_keypoint_params(double spacing_mm);
KeypointParams default_keypoint_params(const PointCloud& cloud);

/// Intrinsic Shape Signatures. Returns selected point indices in ascending order.
std::vector<std::size_t> iss_keypoint_indices(const PointCloud& cloud, const IssParams& p);
/// Harris-3D on point normals. Requires normals.
std::vector<std::size_t> harris3d_keypoint_indices(const PointCloud& cloud, const HarrisParams& p);
/// Difference-of-Gaussians over a curvature field. Requires normals.
std::vector<std::size_t> sift3d_keypoint_indices(const PointCloud& cloud, const SiftParams& p);

struct ScaleKeypoint {
  std::size_t index;  ///< point index in the input cloud
  double scale;       ///< mm, Gaussian sigma of the extremal level
  double response;    ///< |difference of Gaussians| at that level
};

/// SIFT-3D detections with their scales, ascending by index.
std::vector<ScaleKeypoint> sift3d_detect(const PointCloud& cloud, const SiftParams& p);

/// Per-point Harris response (unthresholded, no suppression).
std::vector<double> harris3d_responses(const PointCloud& cloud, double radius, double k_constant);

/// The selected points themselves (normals kept when present).
PointCloud iss_keypoints(const PointCloud& cloud, const KeypointParams& p);
PointCloud harris3d_keypoints(const PointCloud& cloud, const KeypointParams& p);
PointCloud sift3d_keypoints(const PointCloud& cloud, const KeypointParams& p);

}  // namespace facereg
