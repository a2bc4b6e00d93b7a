#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "facereg/geometry.hpp"

namespace facereg {

struct IcpParams {
  std::size_t max_iterations = 50;
  double max_correspondence_distance = 0.0;  ///< mm; 0 = unlimited
  double translation_epsilon = 1e-8;          ///< mm
  double rmse_epsilon = 1e-8;                 ///< mm
  double overlap_fraction = 1.0;              ///< (0, 1], best-distance trimming

  void validate() const;
};

/// Defaults used by the two stages of the pipeline.
IcpParams coarse_icp_params();  ///< 200 iterations, no trimming, no gating
IcpParams fine_icp_params();    ///< 150 iterations, 100% overlap, no gating

struct RegistrationResult {
  RigidTransform transform;  ///< maps the original source into the target frame
  double rmse = 0.0;         ///< mm; equals per_iteration_rmse.back()
  std::size_t iterations_run = 0;
  bool converged = false;    ///< stopped by an epsilon rather than the budget
  std::vector<double> per_iteration_rmse;
};

/// Point-to-point ICP. Each iteration matches every transformed source point
/// to its nearest target point, gates and trims the pairs, solves the rigid
/// update on the survivors, and records the survivors' RMSE after the update.
/// Throws InputError on invalid input and PipelineError("correspondence
/// starvation") when fewer than 3 pairs survive.
RegistrationResult icp(const PointCloud& source, const PointCloud& target, const RigidTransform& init,
                       const IcpParams& params);

/// Keypoint stage: centroid-aligning translation, then ICP with
/// coarse_icp_params() unless overridden. Fewer than 3 keypoints on either
/// side is a PipelineError: upstream landmark survival decides the count.
RegistrationResult coarse_register(const PointCloud& source_kp, const PointCloud& target_kp,
                                   const IcpParams& params = coarse_icp_params());

/// Full-cloud stage starting from `init` (usually the coarse transform).
RegistrationResult fine_register(const PointCloud& source, const PointCloud& target, const RigidTransform& init,
                                 const IcpParams& params = fine_icp_params());

/// sqrt(mean over t(source) of the squared distance to the nearest target point).
double evaluate_rmse(const PointCloud& source, const PointCloud& target, const RigidTransform& t);

// JSON: {"rotation": [9 numbers, row-major], "translation": [3], "rmse", "iterations_run",
// "converged", "per_iteration_rmse"}. Doubles are written with full round-trip precision.
std::string to_json(const RegistrationResult& r);
RegistrationResult registration_result_from_json(const std::string& text);
void write_result(const std::filesystem::path& path, const RegistrationResult& r);
RegistrationResult read_result(const std::filesystem::path& path);

/// Reads a transform from any JSON object carrying "rotation" and "translation"
/// (a result file works). Throws InputError.
RigidTransform read_transform(const std::filesystem::path& path);
void write_transform(const std::filesystem::path& path, const RigidTransform& t);

}  // namespace facereg
