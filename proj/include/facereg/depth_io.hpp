#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <utility>
#include <vector>

#include "facereg/geometry.hpp"

namespace facereg {

/// Pinhole model of the depth camera.
struct CameraIntrinsics {
  double fx = 0.0;
  double fy = 0.0;
  double cx = 0.0;
  double cy = 0.0;
  double depth_scale = 0.001;  ///< meters per raw depth unit

  /// Throws InputError unless fx, fy, depth_scale > 0 and all finite.
  void validate() const;

  /// Pixel coordinates (integer = pixel center) of a camera-frame point.
  std::pair<double, double> project(const Point3& p) const;
};

/// Raw depth image; 0 marks an invalid sample.
struct DepthFrame {
  int width = 0;
  int height = 0;
  std::vector<std::uint16_t> depth;  ///< row-major, width * height
  CameraIntrinsics intrinsics;

  void validate() const;
  std::uint16_t at(int u, int v) const { return depth[static_cast<std::size_t>(v) * width + u]; }
  /// Raw units to millimeters.
  double to_mm(std::uint16_t raw) const { return raw * intrinsics.depth_scale * 1000.0; }
};

/// One 2D landmark of the 68-point facial convention.
struct Landmark {
  int index = 0;  ///< 0..67
  double u = 0.0;  ///< column, pixel centers at integers
  double v = 0.0;  ///< row

  friend bool operator==(const Landmark&, const Landmark&) = default;
};

struct LandmarkSet {
  int image_width = 0;
  int image_height = 0;
  std::vector<Landmark> landmarks;

  /// Throws InputError on out-of-image coordinates or bad/duplicate indices.
  void validate() const;
  std::optional<Landmark> find(int index) const;
};

/// Lifted or back-projected landmarks: cloud[i] belongs to landmark indices[i],
/// in ascending landmark index order.
struct LandmarkCloud {
  PointCloud cloud;
  std::vector<int> indices;
};

/// Back-projects every valid pixel (camera frame, mm), row-major.
/// Throws PipelineError("empty depth frame") when no pixel is valid.
PointCloud depth_to_cloud(const DepthFrame& frame);

/// Lifts landmarks through the depth at their pixel; a dead pixel falls back
/// to the median of valid depths in a window x window neighborhood, and a
/// landmark with no valid depth there is dropped.
LandmarkCloud lift_landmarks(const DepthFrame& frame, const LandmarkSet& landmarks, int window = 5);

/// Keeps nose (27-35) and eye (36-47) landmarks.
LandmarkSet select_eyes_nose(const LandmarkSet& landmarks);

/// Points inside the keypoints' axis-aligned bounding box grown by margin_mm
/// on every side (boundary inclusive). Throws PipelineError when nothing is
/// retained.
PointCloud segment_region(const PointCloud& cloud, const PointCloud& keypoints, double margin_mm = 10.0);

// File formats.

/// `<stem>.intrinsics.json` next to a depth PGM.
std::filesystem::path intrinsics_sidecar(const std::filesystem::path& depth_pgm);
CameraIntrinsics read_intrinsics(const std::filesystem::path& path);
void write_intrinsics(const std::filesystem::path& path, const CameraIntrinsics& k);

/// Reads a 16-bit PGM plus intrinsics; the sidecar path defaults to
/// intrinsics_sidecar(pgm).
DepthFrame read_depth_frame(const std::filesystem::path& pgm,
                            const std::optional<std::filesystem::path>& intrinsics = std::nullopt);
void write_depth_frame(const std::filesystem::path& pgm, const DepthFrame& frame);

LandmarkSet read_landmarks(const std::filesystem::path& path);
void write_landmarks(const std::filesystem::path& path, const LandmarkSet& landmarks);

}  // namespace facereg
