#include "facereg/keypoints.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <unordered_map>

#include <Eigen/Eigenvalues>

#include "facereg/error.hpp"
#include "facereg/neighbor_index.hpp"
#include "facereg/parallel.hpp"

namespace facereg {

namespace {

// Eigenvalue ratio below which a neighborhood counts as flat (no thickness).
constexpr double kFlatTol = 1e-9;

// Keeps i when score[i] beats every other candidate within `radius`
// (equal scores resolve to the lower index). Non-candidates have score < 0
// and are ignored. Returns ascending indices.
std::vector<std::size_t> suppress(const NeighborIndex& index, const std::vector<double>& score, double radius,
                                  const std::vector<char>& candidate) {
  const std::size_t n = score.size();
  std::vector<char> keep(n, 0);
  parallel_for(0, n, [&](std::size_t i) {
    if (!candidate[i]) return;
    for (const auto& nb : index.radius(index.points()[i], radius)) {
      const std::size_t j = nb.index;
      if (j == i || !candidate[j]) continue;
      if (score[j] > score[i] || (score[j] == score[i] && j < i)) return;
    }
    keep[i] = 1;
  });
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < n; ++i)
    if (keep[i]) out.push_back(i);
  return out;
}

void require_normals(const PointCloud& cloud, const char* who) {
  if (!cloud.has_normals()) throw InputError(std::string(who) + ": cloud has no normals (run estimate_normals first)");
}

}  // namespace

void KeypointParams::validate() const {
  if (!(iss.salient_radius > 0.0) || !(iss.nonmax_radius > 0.0)) throw InputError("iss: radii must be positive");
  if (!(iss.gamma_21 > 0.0 && iss.gamma_21 < 1.0) || !(iss.gamma_32 > 0.0 && iss.gamma_32 < 1.0))
    throw InputError("iss: gamma_21 and gamma_32 must be in (0, 1)");
  if (!(harris.radius > 0.0)) throw InputError("harris: radius must be positive");
  if (!std::isfinite(harris.response_threshold) || !std::isfinite(harris.k_constant))
    throw InputError("harris: threshold and k must be finite");
  if (!(sift.min_scale > 0.0)) throw InputError("sift: min_scale must be positive");
  if (sift.octaves < 1 || sift.scales_per_octave < 1) throw InputError("sift: octaves and scales must be >= 1");
  if (!(sift.contrast_threshold >= 0.0)) throw InputError("sift: contrast_threshold must be >= 0");
}

double mean_spacing(const PointCloud& cloud) {
  if (cloud.size() < 2) throw InputError("mean_spacing: need at least 2 points");
  const NeighborIndex index(cloud);
  std::vector<double> d(cloud.size());
  parallel_for(0, cloud.size(), [&](std::size_t i) { d[i] = index.k_nearest(cloud[i], 2)[1].distance; });
  const std::size_t m = d.size() / 2;
  std::nth_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(m), d.end());
  if (d.size() % 2 == 1) return d[m];
  const double upper = d[m];
  const double lower = *std::max_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(m));
  return 0.5 * (lower + upper);
}

KeypointParams default_keypoint_params(double s) {
  if (!(s > 0.0) || !std::isfinite(s)) throw InputError("default_keypoint_params: spacing must be positive");
  KeypointParams p;
  p.iss.salient_radius = 6.0 * s;
  p.iss.nonmax_radius = 4.0 * s;
  p.harris.radius = 6.0 * s;
  p.sift.min_scale = 2.0 * s;
  return p;
}

KeypointParams default_keypoint_params(const PointCloud& cloud) { return default_keypoint_params(mean_spacing(cloud)); }

// ---------------------------------------------------------------- ISS

std::vector<std::size_t> iss_keypoint_indices(const PointCloud& cloud, const IssParams& p) {
  KeypointParams all;
  all.iss = p;
  all.validate();
  if (cloud.size() <= p.min_neighbors)
    throw InputError("iss: cloud too small (" + std::to_string(cloud.size()) + " points, need more than " +
                     std::to_string(p.min_neighbors) + ")");
  const NeighborIndex index(cloud);
  const std::size_t n = cloud.size();

  // Density weights: inverse neighbor count within the salient radius.
  std::vector<double> weight(n);
  parallel_for(0, n, [&](std::size_t i) {
    weight[i] = 1.0 / static_cast<double>(index.radius_count(cloud[i], p.salient_radius));
  });

  std::vector<double> lambda3(n, -1.0);
  std::vector<char> salient(n, 0);
  parallel_for(0, n, [&](std::size_t i) {
    const auto nbs = index.radius(cloud[i], p.salient_radius);
    if (nbs.size() - 1 < p.min_neighbors) return;
    Eigen::Matrix3d scatter = Eigen::Matrix3d::Zero();
    double wsum = 0.0;
    for (const auto& nb : nbs) {
      if (nb.index == i) continue;
      const Vector3 d = cloud[nb.index] - cloud[i];
      scatter += weight[nb.index] * d * d.transpose();
      wsum += weight[nb.index];
    }
    scatter /= wsum;
    const Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(scatter, Eigen::EigenvaluesOnly);
    const double l1 = es.eigenvalues()(2), l2 = es.eigenvalues()(1), l3 = es.eigenvalues()(0);
    if (!(l1 > 0.0) || !(l2 > 0.0) || !(l3 > kFlatTol * l1)) return;
    if (l2 / l1 < p.gamma_21 && l3 / l2 < p.gamma_32) {
      salient[i] = 1;
      lambda3[i] = l3;
    }
  });
  return suppress(index, lambda3, p.nonmax_radius, salient);
}

// ---------------------------------------------------------------- Harris

std::vector<double> harris3d_responses(const PointCloud& cloud, double radius, double k) {
  require_normals(cloud, "harris3d");
  if (!(radius > 0.0)) throw InputError("harris3d: radius must be positive");
  const NeighborIndex index(cloud);
  std::vector<double> response(cloud.size());
  parallel_for(0, cloud.size(), [&](std::size_t i) {
    Eigen::Matrix3d m = Eigen::Matrix3d::Zero();
    const auto nbs = index.radius(cloud[i], radius);
    for (const auto& nb : nbs) {
      const Vector3& nrm = cloud.normals()[nb.index];
      m += nrm * nrm.transpose();
    }
    m /= static_cast<double>(nbs.size());
    const double tr = m.trace();
    response[i] = m.determinant() - k * tr * tr;
  });
  return response;
}

std::vector<std::size_t> harris3d_keypoint_indices(const PointCloud& cloud, const HarrisParams& p) {
  KeypointParams all;
  all.harris = p;
  all.validate();
  require_normals(cloud, "harris3d");
  if (cloud.size() <= 10) throw InputError("harris3d: cloud too small (need more than 10 points)");
  const auto response = harris3d_responses(cloud, p.radius, p.k_constant);
  std::vector<char> candidate(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) candidate[i] = response[i] > p.response_threshold;
  return suppress(NeighborIndex(cloud), response, p.radius, candidate);
}

// ---------------------------------------------------------------- SIFT

namespace {

// Greedy index-order subsampling: a point is accepted when no accepted point
// lies closer than r. Only distances decide, so the choice is rigid invariant.
std::vector<std::size_t> poisson_subsample(const std::vector<Point3>& pts, double r) {
  struct CellHash {
    std::size_t operator()(const std::array<long long, 3>& c) const {
      return static_cast<std::size_t>(c[0] * 73856093LL ^ c[1] * 19349663LL ^ c[2] * 83492791LL);
    }
  };
  std::unordered_map<std::array<long long, 3>, std::vector<std::size_t>, CellHash> grid;
  const auto cell = [r](const Point3& p) {
    return std::array<long long, 3>{static_cast<long long>(std::floor(p.x() / r)),
                                    static_cast<long long>(std::floor(p.y() / r)),
                                    static_cast<long long>(std::floor(p.z() / r))};
  };
  const double r2 = r * r;
  std::vector<std::size_t> accepted;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const auto c = cell(pts[i]);
    bool clear = true;
    for (long long dx = -1; dx <= 1 && clear; ++dx)
      for (long long dy = -1; dy <= 1 && clear; ++dy)
        for (long long dz = -1; dz <= 1 && clear; ++dz) {
          const auto it = grid.find({c[0] + dx, c[1] + dy, c[2] + dz});
          if (it == grid.end()) continue;
          for (std::size_t j : it->second)
            if (squared_distance(pts[i], pts[j]) < r2) {
              clear = false;
              break;
            }
        }
    if (!clear) continue;
    accepted.push_back(i);
    grid[c].push_back(i);
  }
  return accepted;
}

struct Candidate {
  double strength = -1.0;  ///< |DoG|
  double scale = 0.0;
};

}  // namespace

std::vector<ScaleKeypoint> sift3d_detect(const PointCloud& cloud, const SiftParams& p) {
  KeypointParams all;
  all.sift = p;
  all.validate();
  require_normals(cloud, "sift3d");
  if (cloud.size() <= 50) throw InputError("sift3d: cloud too small (need more than 50 points)");
  const std::size_t n = cloud.size();
  const NeighborIndex index(cloud);
  const auto& normals = cloud.normals();

  // Curvature field: sqrt(1 - |n . nbar|) with nbar the (unnormalized) mean
  // of the sign-aligned normals within min_scale. The square root makes it
  // grow linearly with curvature, so blob scales track feature widths.
  std::vector<double> field(n);
  parallel_for(0, n, [&](std::size_t i) {
    Vector3 sum = Vector3::Zero();
    const auto nbs = index.radius(cloud[i], p.min_scale);
    for (const auto& nb : nbs) {
      const Vector3& m = normals[nb.index];
      sum += m.dot(normals[i]) >= 0.0 ? m : Vector3(-m);
    }
    field[i] = std::sqrt(std::max(0.0, 1.0 - std::abs(normals[i].dot(sum / static_cast<double>(nbs.size())))));
  });

  const int S = p.scales_per_octave;
  const int levels = S + 3;
  std::vector<Candidate> best(n);

  for (int o = 0; o < p.octaves; ++o) {
    const double sigma0 = p.min_scale * std::pow(2.0, o);
    const auto samples = poisson_subsample(cloud.points(), 0.5 * sigma0);
    const std::size_t m = samples.size();
    std::vector<Point3> spts(m);
    for (std::size_t a = 0; a < m; ++a) spts[a] = cloud[samples[a]];
    const NeighborIndex sindex(spts);

    // Each sample carries the mean field of the cloud points closest to it.
    std::vector<std::size_t> owner(n);
    parallel_for(0, n, [&](std::size_t i) { owner[i] = sindex.nearest(cloud[i]).index; });
    std::vector<double> base(m, 0.0), count(m, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      base[owner[i]] += field[i];
      count[owner[i]] += 1.0;
    }
    for (std::size_t a = 0; a < m; ++a) base[a] /= count[a];

    std::vector<double> sigma(levels);
    std::vector<std::vector<double>> smooth(levels, std::vector<double>(m));
    for (int s = 0; s < levels; ++s) {
      sigma[s] = sigma0 * std::pow(2.0, static_cast<double>(s) / S);
      const double inv = 1.0 / (2.0 * sigma[s] * sigma[s]);
      auto& out = smooth[s];
      parallel_for(0, m, [&](std::size_t a) {
        double acc = 0.0, wsum = 0.0;
        for (const auto& nb : sindex.radius(spts[a], 3.0 * sigma[s])) {
          const double w = std::exp(-nb.distance * nb.distance * inv);
          acc += w * base[nb.index];
          wsum += w;
        }
        out[a] = acc / wsum;
      });
    }
    std::vector<std::vector<double>> dog(levels - 1, std::vector<double>(m));
    for (int s = 0; s + 1 < levels; ++s)
      for (std::size_t a = 0; a < m; ++a) dog[s][a] = smooth[s + 1][a] - smooth[s][a];

    std::vector<Candidate> found(m);
    parallel_for(0, m, [&](std::size_t a) {
      for (int s = 1; s <= S; ++s) {
        const double v = dog[s][a];
        if (!(std::abs(v) > p.contrast_threshold)) continue;
        const auto nbs = sindex.radius(spts[a], sigma[s]);
        bool is_max = true, is_min = true;
        for (int t = s - 1; t <= s + 1 && (is_max || is_min); ++t) {
          for (const auto& nb : nbs) {
            if (t == s && nb.index == a) continue;
            const double w = dog[t][nb.index];
            if (w >= v) is_max = false;
            if (w <= v) is_min = false;
            if (!is_max && !is_min) break;
          }
        }
        if ((is_max || is_min) && std::abs(v) > found[a].strength) found[a] = {std::abs(v), sigma[s]};
      }
    });
    for (std::size_t a = 0; a < m; ++a) {
      auto& b = best[samples[a]];
      if (found[a].strength > b.strength) b = found[a];
    }
  }

  // Final suppression: a candidate must be the strongest within its own scale.
  std::vector<ScaleKeypoint> out;
  for (std::size_t i = 0; i < n; ++i) {
    if (best[i].strength < 0.0) continue;
    bool keep = true;
    for (const auto& nb : index.radius(cloud[i], best[i].scale)) {
      const std::size_t j = nb.index;
      if (j == i || best[j].strength < 0.0) continue;
      if (best[j].strength > best[i].strength || (best[j].strength == best[i].strength && j < i)) {
        keep = false;
        break;
      }
    }
    if (keep) out.push_back({i, best[i].scale, best[i].strength});
  }
  return out;
}

std::vector<std::size_t> sift3d_keypoint_indices(const PointCloud& cloud, const SiftParams& p) {
  std::vector<std::size_t> out;
  for (const auto& k : sift3d_detect(cloud, p)) out.push_back(k.index);
  return out;
}

// ---------------------------------------------------------------- clouds

PointCloud iss_keypoints(const PointCloud& cloud, const KeypointParams& p) {
  return cloud.select(iss_keypoint_indices(cloud, p.iss));
}

PointCloud harris3d_keypoints(const PointCloud& cloud, const KeypointParams& p) {
  return cloud.select(harris3d_keypoint_indices(cloud, p.harris));
}

PointCloud sift3d_keypoints(const PointCloud& cloud, const KeypointParams& p) {
  return cloud.select(sift3d_keypoint_indices(cloud, p.sift));
}

}  // namespace facereg
