#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "facereg/depth_io.hpp"
#include "facereg/geometry.hpp"
#include "facereg/keypoints.hpp"
#include "facereg/phantom.hpp"
#include "facereg/registration.hpp"
#include "facereg/surface.hpp"

namespace facereg {

enum class Method { Harris, Iss, Ours, Sift };

/// "harris", "iss", "ours", "sift".
std::string method_name(Method m);
/// Throws InputError for an unknown name.
Method parse_method(const std::string& name);
/// Comma-separated list, e.g. "ours,iss". Duplicates are removed.
std::vector<Method> parse_methods(const std::string& list);
std::vector<Method> all_methods();

/// CT side of a phantom case; independent of the head pose.
struct CtSide {
  TriangleMesh mesh;
  PointCloud surface;            ///< mesh vertices with normals
  NormalAngleImage image;
  LandmarkSet image_landmarks;   ///< simulated detections in `image`
  LandmarkCloud landmarks;       ///< back-projected
  PointCloud segmented;          ///< eyes+nose region of `surface`
};

/// Camera side, mapped into the CT frame through the known camera pose.
struct CameraSide {
  PointCloud cloud;
  LandmarkCloud landmarks;       ///< lifted eyes+nose landmarks
  PointCloud segmented;          ///< eyes+nose region with estimated normals
};

CtSide prepare_ct_side(const PhantomSpec& spec, const PhantomData& data);
CameraSide prepare_camera_side(const PhantomSpec& spec, const PhantomData& data);

/// Detector defaults for `cloud` with the spec's overrides applied.
KeypointParams keypoint_params_for(const PhantomSpec& spec, const PointCloud& cloud);

/// Coarse-stage keypoints of a baseline detector (not Method::Ours).
PointCloud detect_keypoints(Method m, const PointCloud& cloud, const KeypointParams& params);

struct BenchRow {
  std::string method;
  std::size_t src_features = 0;
  std::size_t tgt_features = 0;
  double coarse_rmse_mm = 0.0;
  double fine_rmse_mm = 0.0;
  double t_coarse_s = 0.0;   ///< mean over trials
  double t_fine_s = 0.0;     ///< mean over trials
  double t_total_s = 0.0;    ///< t_coarse_s + t_fine_s
  bool converged = false;    ///< both ICP stages met their tolerance
  // Informational fields (JSON and markdown only).
  double t_extract_s = 0.0;  ///< keypoint extraction on both sides, mean over trials
  double rotation_error_deg = 0.0;
  double translation_error_mm = 0.0;
  bool failed = false;       ///< stage error or fine RMSE >= kFailureRmseMm
  std::string error;         ///< stage error message, empty otherwise

  friend bool operator==(const BenchRow&, const BenchRow&) = default;
};

/// Fine RMSE at or above which a run counts as a failed registration.
inline constexpr double kFailureRmseMm = 2.0;

struct BenchReport {
  std::vector<BenchRow> rows;  ///< sorted by method name
  std::size_t trials = 0;
  std::uint64_t seed = 0;

  friend bool operator==(const BenchReport&, const BenchReport&) = default;
};

struct BenchOptions {
  std::size_t trials = 3;
  /// Run trials concurrently (timings then reflect contention; RMSE columns
  /// are unaffected).
  bool parallel_trials = false;
  /// When set, phantom artifacts are written here in the library's file
  /// formats and read back before use.
  std::optional<std::filesystem::path> artifact_dir;
};

/// Runs every method on the phantom displaced by perturbation (composed after
/// spec.head_pose). Stage errors are recorded in the row, never thrown.
/// Throws InputError for trials == 0 or an empty method list.
BenchReport run_comparison(const PhantomSpec& spec, const RigidTransform& perturbation,
                           const std::vector<Method>& methods, const BenchOptions& options = {});

/// Same, on prepared data (lets callers reuse the CT side across poses).
BenchReport run_comparison(const PhantomSpec& spec, const PhantomData& data, const CtSide& ct,
                           const std::vector<Method>& methods, const BenchOptions& options = {});

/// 5 x 5 perturbations: rotations {0, 7.5, 15, 22.5, 30} deg about seeded
/// random axes crossed with translations {0, 12.5, 25, 37.5, 50} mm along
/// seeded random directions. Rotations are about the CT origin.
std::vector<RigidTransform> perturbation_grid(std::uint64_t seed);

enum class ReportFormat { Json, Csv, Markdown };
/// Throws InputError for an unknown name ("json", "csv", "md"/"markdown").
ReportFormat parse_report_format(const std::string& name);

std::string report_emit(const BenchReport& report, ReportFormat format);
/// Inverse of the JSON form (exact).
BenchReport parse_report_json(const std::string& text);
/// Inverse of the CSV form; informational fields are left at defaults and
/// numbers carry 9 significant digits.
BenchReport parse_report_csv(const std::string& text);

}  // namespace facereg
