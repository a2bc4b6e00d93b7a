#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "facereg/depth_io.hpp"
#include "facereg/geometry.hpp"
#include "facereg/surface.hpp"

namespace facereg {

/// Synthetic face: an ellipsoidal head with a nose ridge, nostril wings, a
/// brow ridge and two eye sockets, in a CT-like frame (mm, +y up, face toward
/// +z). A pinhole camera placed in the same frame images the head after it
/// has been displaced by head_pose.
struct PhantomSpec {
  std::string description;  ///< free text, carried through JSON
  std::uint64_t seed = 42;

  // CT grid. The grid is centered on x/y and its top slice clears the nose tip.
  std::array<int, 3> dims{176, 160, 116};
  double spacing_mm = 1.0;

  Vector3 head_radii{75.0, 95.0, 90.0};
  double nose_amplitude = 22.0;
  double nose_width = 8.0;
  double eye_depth = 10.0;
  double eye_radius = 11.0;
  double eye_separation = 64.0;  ///< distance between socket centers

  // Camera.
  int image_width = 640;
  int image_height = 480;
  double fx = 615.0;
  double fy = 615.0;
  double cx = 319.5;
  double cy = 239.5;
  double depth_scale = 1e-4;  ///< m per unit (0.1 mm)
  Point3 viewpoint{0.0, 0.0, 550.0};
  Vector3 view_axis{0.0, 0.0, -1.0};  ///< direction the camera looks
  double noise_sigma = 0.5;           ///< mm, additive on depth

  /// Rigid displacement of the head relative to the CT frame (the ground truth).
  RigidTransform head_pose;

  // CT-side landmark simulation: analytic landmarks projected into the
  // normal-angle image, jittered by up to this many pixels, with this many
  // landmarks dropped.
  double ct_landmark_jitter_px = 1.0;
  int ct_dropped_landmarks = 1;
  double render_resolution_mm = 1.0;

  // Eyes+nose segmentation margins (mm).
  double source_margin_mm = 10.0;
  double target_margin_mm = 40.0;

  // Optional detector overrides; unset fields use default_keypoint_params().
  std::optional<double> iss_salient_radius_mm, iss_nonmax_radius_mm;
  std::optional<double> harris_radius_mm, harris_threshold;
  std::optional<double> sift_min_scale_mm, sift_contrast_threshold;

  void validate() const;
  CameraIntrinsics intrinsics() const;
  /// Camera frame (x right, y down, z forward) to CT frame.
  RigidTransform camera_to_world() const;
};

/// Signed implicit function of the phantom surface in the CT frame: negative
/// inside, roughly a distance in mm near the face.
double phantom_implicit(const PhantomSpec& spec, const Point3& p);

/// Iso value separating inside (high) from outside in the phantom volume.
inline constexpr double kPhantomIso = 1000.0;

struct PhantomData {
  ScalarVolume volume;          ///< u16-valued, inside > kPhantomIso
  DepthFrame depth_frame;       ///< camera frame
  LandmarkSet camera_landmarks; ///< indices 27..47, depth-frame pixels
  LandmarkCloud surface_landmarks_3d;  ///< CT frame, exact surface points
  RigidTransform ground_truth;  ///< head_pose: CT surface -> displaced surface
  RigidTransform camera_to_world;
};

/// Throws InputError for an invalid spec and PipelineError when the camera
/// does not see the face.
PhantomData generate_phantom(const PhantomSpec& spec);

/// Transform that registration (camera cloud mapped by camera_to_world, onto
/// the CT surface) should recover: invert(ground_truth).
inline RigidTransform registration_truth(const PhantomData& d) { return invert(d.ground_truth); }

/// Simulated CT-side landmark detection: the exact surface landmarks projected
/// into `image`, jittered uniformly by ct_landmark_jitter_px, clamped to the
/// image, with ct_dropped_landmarks removed (all seeded by spec.seed).
LandmarkSet ct_image_landmarks(const PhantomSpec& spec, const LandmarkCloud& surface_landmarks,
                               const NormalAngleImage& image);

/// JSON spec files; unspecified fields keep their defaults and unknown keys
/// are rejected.
PhantomSpec phantom_spec_from_json(const std::string& text);
std::string to_json(const PhantomSpec& spec);
PhantomSpec read_phantom_spec(const std::filesystem::path& path);
void write_phantom_spec(const std::filesystem::path& path, const PhantomSpec& spec);

}  // namespace facereg
