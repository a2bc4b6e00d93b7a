#include "facereg/registration.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "facereg/error.hpp"
#include "facereg/neighbor_index.hpp"
#include "facereg/parallel.hpp"

namespace facereg {

void IcpParams::validate() const {
  if (max_iterations < 1) throw InputError("icp: max_iterations must be >= 1");
  if (!(overlap_fraction > 0.0 && overlap_fraction <= 1.0)) throw InputError("icp: overlap_fraction must be in (0, 1]");
  if (!(max_correspondence_distance >= 0.0)) throw InputError("icp: max_correspondence_distance must be >= 0");
  if (!(translation_epsilon >= 0.0) || !(rmse_epsilon >= 0.0)) throw InputError("icp: epsilons must be >= 0");
}

IcpParams coarse_icp_params() {
  IcpParams p;
  p.max_iterations = 200;
  return p;
}

IcpParams fine_icp_params() {
  IcpParams p;
  p.max_iterations = 150;
  p.overlap_fraction = 1.0;
  return p;
}

RegistrationResult icp(const PointCloud& source, const PointCloud& target, const RigidTransform& init,
                       const IcpParams& params) {
  params.validate();
  if (source.size() < 3) throw InputError("icp: source needs at least 3 points");
  if (target.size() < 3) throw InputError("icp: target needs at least 3 points");

  const NeighborIndex index(target);
  const auto& src = source.points();
  const auto& tgt = target.points();
  const std::size_t n = src.size();

  std::vector<Point3> moved(n);
  std::vector<std::size_t> match(n);
  std::vector<double> dist(n);
  std::vector<std::size_t> kept;
  std::vector<Point3> from, to;

  RegistrationResult result{init, 0.0, 0, false, {}};
  const bool gated = params.max_correspondence_distance > 0.0;

  for (std::size_t it = 0; it < params.max_iterations; ++it) {
    const RigidTransform& current = result.transform;
    parallel_for(0, n, [&](std::size_t i) {
      moved[i] = current.apply(src[i]);
      const auto nb = index.nearest(moved[i]);
      match[i] = nb.index;
      dist[i] = nb.distance;
    });

    kept.clear();
    for (std::size_t i = 0; i < n; ++i)
      if (!gated || dist[i] <= params.max_correspondence_distance) kept.push_back(i);
    if (params.overlap_fraction < 1.0 && !kept.empty()) {
      const auto m = static_cast<std::size_t>(std::ceil(params.overlap_fraction * static_cast<double>(kept.size())));
      std::stable_sort(kept.begin(), kept.end(), [&](std::size_t a, std::size_t b) { return dist[a] < dist[b]; });
      kept.resize(std::max<std::size_t>(m, 1));
      std::sort(kept.begin(), kept.end());
    }
    if (kept.size() < 3)
      throw PipelineError("correspondence starvation: " + std::to_string(kept.size()) + " pairs survived at iteration " +
                          std::to_string(it + 1));

    from.resize(kept.size());
    to.resize(kept.size());
    for (std::size_t k = 0; k < kept.size(); ++k) {
      from[k] = moved[kept[k]];
      to[k] = tgt[match[kept[k]]];
    }
    RigidTransform delta;
    try {
      delta = estimate_rigid(from, to);
    } catch (const InputError& e) {
      throw PipelineError(std::string("icp: ") + e.what() + " among surviving correspondences");
    }
    result.transform = compose(delta, current);

    double sum = 0.0;
    for (std::size_t k = 0; k < kept.size(); ++k) sum += squared_distance(delta.apply(from[k]), to[k]);
    const double rmse = std::sqrt(sum / static_cast<double>(kept.size()));

    const bool small_step = delta.translation().norm() < params.translation_epsilon;
    const bool flat = !result.per_iteration_rmse.empty() &&
                      std::abs(result.per_iteration_rmse.back() - rmse) < params.rmse_epsilon;
    result.per_iteration_rmse.push_back(rmse);
    result.iterations_run = it + 1;
    result.rmse = rmse;
    if (small_step || flat) {
      result.converged = true;
      break;
    }
  }
  return result;
}

RegistrationResult coarse_register(const PointCloud& source_kp, const PointCloud& target_kp, const IcpParams& params) {
  if (source_kp.size() < 3 || target_kp.size() < 3)
    throw PipelineError("coarse_register: each keypoint cloud needs at least 3 points (got " +
                        std::to_string(source_kp.size()) + " and " + std::to_string(target_kp.size()) + ")");
  const auto init = RigidTransform::from_translation(target_kp.centroid() - source_kp.centroid());
  return icp(source_kp, target_kp, init, params);
}

RegistrationResult fine_register(const PointCloud& source, const PointCloud& target, const RigidTransform& init,
                                 const IcpParams& params) {
  return icp(source, target, init, params);
}

double evaluate_rmse(const PointCloud& source, const PointCloud& target, const RigidTransform& t) {
  if (source.empty() || target.empty()) throw InputError("evaluate_rmse: empty cloud");
  const NeighborIndex index(target);
  std::vector<double> d2(source.size());
  parallel_for(0, source.size(), [&](std::size_t i) {
    const Point3 p = t.apply(source[i]);
    d2[i] = squared_distance(p, target[index.nearest(p).index]);
  });
  double sum = 0.0;
  for (double v : d2) sum += v;
  return std::sqrt(sum / static_cast<double>(source.size()));
}

}  // namespace facereg
