#include "doctest.h"

#include <cmath>
#include <numbers>
#include <random>

#include "facereg/error.hpp"
#include "facereg/registration.hpp"
#include "test_support.hpp"

using namespace facereg;

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

// Smooth, asymmetric height field so ICP has a unique optimum.
PointCloud wavy_surface(int n, double h) {
  std::vector<Point3> pts;
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) {
      const double x = (i - n / 2) * h, y = (j - n / 2) * h;
      pts.emplace_back(x, y, 12.0 * std::sin(x / 17.0) * std::cos(y / 23.0) + 0.004 * x * y + 0.02 * x);
    }
  return PointCloud(std::move(pts));
}

// Volumetric random cloud: sparse enough that ICP locks onto the exact
// correspondences. Surfaces sampled identically on both sides instead stall
// at a fraction of the sample spacing.
PointCloud random_cloud(std::uint64_t seed, std::size_t n) {
  std::mt19937_64 rng(seed);
  return PointCloud(facereg::testing::random_points(rng, n, 50.0));
}

double brute_rmse(const PointCloud& src, const PointCloud& tgt, const RigidTransform& t) {
  double sum = 0.0;
  for (const auto& p : src.points()) {
    const Point3 q = t.apply(p);
    double best = squared_distance(q, tgt[0]);
    for (const auto& r : tgt.points()) best = std::min(best, squared_distance(q, r));
    sum += best;
  }
  return std::sqrt(sum / static_cast<double>(src.size()));
}

void check_monotone(const RegistrationResult& r) {
  for (std::size_t i = 1; i < r.per_iteration_rmse.size(); ++i)
    CHECK(r.per_iteration_rmse[i] <= r.per_iteration_rmse[i - 1] + 1e-12);
  REQUIRE_FALSE(r.per_iteration_rmse.empty());
  CHECK(r.rmse == r.per_iteration_rmse.back());
  CHECK(r.iterations_run == r.per_iteration_rmse.size());
}

}  // namespace

TEST_CASE("icp on already aligned clouds stops after one iteration") {
  const auto cloud = wavy_surface(30, 2.0);
  const auto r = icp(cloud, cloud, RigidTransform::identity(), IcpParams{});
  CHECK(r.converged);
  CHECK(r.iterations_run == 1);
  CHECK(r.rmse < 1e-12);
  CHECK(rotation_error(r.transform, RigidTransform::identity()) < 1e-12);
  CHECK(r.transform.translation().norm() < 1e-12);
}

TEST_CASE("icp recovers a 5 degree / 5 mm offset") {
  const auto target = random_cloud(12, 300);
  const auto truth = RigidTransform::from_axis_angle(Vector3(0.3, -0.5, 0.8), 5.0 * kDeg, Vector3(3, -4, 0));
  const auto source = apply_transform(invert(truth), target);
  const auto r = icp(source, target, RigidTransform::identity(), fine_icp_params());
  CHECK(rotation_error(r.transform, truth) < 0.1 * kDeg);
  CHECK((r.transform.translation() - truth.translation()).norm() < 1e-3);
  CHECK(r.rmse < 1e-6);
  CHECK(r.converged);
  check_monotone(r);
}

TEST_CASE("property: icp rmse is non-increasing with full correspondences") {
  std::mt19937_64 rng(31);
  const auto target = wavy_surface(40, 2.5);
  std::normal_distribution<double> noise(0.0, 0.5);
  for (int trial = 0; trial < 25; ++trial) {
    std::vector<Point3> src;
    for (std::size_t i = 0; i < target.size(); i += 3)
      src.push_back(target[i] + Vector3(noise(rng), noise(rng), noise(rng)));
    const auto perturb = facereg::testing::random_transform(rng, 30.0 * kDeg, 30.0);
    const auto r = icp(apply_transform(perturb, PointCloud(src)), target, RigidTransform::identity(), IcpParams{});
    check_monotone(r);
    const auto& R = r.transform.rotation();
    CHECK((R.transpose() * R - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("icp with trimming and gating stays monotone on the survivors") {
  const auto target = random_cloud(13, 400);
  auto pts = apply_transform(RigidTransform::from_axis_angle(Vector3::UnitZ(), 3 * kDeg, Vector3(2, 1, 0)), target).points();
  // A block of outliers well outside the target.
  for (int i = 0; i < 50; ++i) pts.push_back(Point3(i % 10, i / 10.0, 90.0));
  IcpParams p;
  p.overlap_fraction = 0.85;
  p.max_correspondence_distance = 20.0;
  const auto r = icp(PointCloud(pts), target, RigidTransform::identity(), p);
  check_monotone(r);
  CHECK(r.rmse < 1e-9);
}

TEST_CASE("icp starvation and parameter errors") {
  const auto target = wavy_surface(10, 2.0);
  const auto far = apply_transform(RigidTransform::from_translation(Vector3(0, 0, 500)), target);
  IcpParams p;
  p.max_correspondence_distance = 1.0;
  CHECK_THROWS_WITH_AS(icp(far, target, RigidTransform::identity(), p),
                       doctest::Contains("correspondence starvation"), PipelineError);
  IcpParams bad;
  bad.overlap_fraction = 0.0;
  CHECK_THROWS_AS(icp(target, target, RigidTransform::identity(), bad), InputError);
  bad = IcpParams{};
  bad.max_iterations = 0;
  CHECK_THROWS_AS(icp(target, target, RigidTransform::identity(), bad), InputError);
  CHECK_THROWS_AS(icp(PointCloud({Point3(0, 0, 0), Point3(1, 0, 0)}), target, RigidTransform::identity(), IcpParams{}),
                  InputError);
}

TEST_CASE("stage defaults") {
  const auto c = coarse_icp_params();
  CHECK(c.max_iterations == 200);
  CHECK(c.overlap_fraction == 1.0);
  CHECK(c.max_correspondence_distance == 0.0);
  CHECK(c.translation_epsilon == 1e-8);
  CHECK(c.rmse_epsilon == 1e-8);
  const auto f = fine_icp_params();
  CHECK(f.max_iterations == 150);
  CHECK(f.overlap_fraction == 1.0);
  CHECK(f.max_correspondence_distance == 0.0);
}

TEST_CASE("coarse_register") {
  const PointCloud kp({Point3(0, 0, 0), Point3(30, 2, 5), Point3(-12, 25, 3), Point3(4, -18, 9), Point3(20, 20, -4)});
  const auto same = coarse_register(kp, kp);
  CHECK(rotation_error(same.transform, RigidTransform::identity()) < 1e-9);
  CHECK(same.transform.translation().norm() < 1e-9);

  // Centroid pre-alignment absorbs a large pure translation.
  const auto shifted = apply_transform(RigidTransform::from_translation(Vector3(200, -150, 90)), kp);
  const auto r = coarse_register(kp, shifted);
  CHECK(r.rmse < 1e-9);

  const PointCloud two({Point3(0, 0, 0), Point3(1, 0, 0)});
  CHECK_THROWS_AS(coarse_register(two, kp), PipelineError);
  CHECK_THROWS_AS(coarse_register(kp, two), PipelineError);
}

TEST_CASE("fine_register: exact init and antipodal init") {
  const auto target = wavy_surface(40, 2.0);
  const auto truth = RigidTransform::from_axis_angle(Vector3(1, 1, 0), 10 * kDeg, Vector3(5, 5, 5));
  const auto source = apply_transform(invert(truth), target);
  const auto exact = fine_register(source, target, truth);
  CHECK(exact.rmse < 1e-9);
  CHECK(exact.iterations_run == 1);

  // Upside-down start: ICP settles in a wrong basin and says so through rmse.
  const auto flipped = compose(truth, RigidTransform::from_axis_angle(Vector3::UnitX(), std::numbers::pi));
  const auto wrong = fine_register(source, target, flipped);
  CHECK(wrong.rmse > 2.0);
  CHECK(evaluate_rmse(source, target, wrong.transform) > 2.0);
}

TEST_CASE("evaluate_rmse matches the quadratic scan exactly") {
  const PointCloud a({Point3(0, 0, 0), Point3(1, 2, 3)});
  CHECK(evaluate_rmse(a, a, RigidTransform::identity()) == 0.0);
  CHECK(evaluate_rmse(PointCloud({Point3(3, 0, 0)}), PointCloud({Point3(0, 0, 0), Point3(10, 0, 0)}),
                      RigidTransform::identity()) == 3.0);
  CHECK_THROWS_AS(evaluate_rmse(PointCloud(), a, RigidTransform::identity()), InputError);

  std::mt19937_64 rng(8);
  std::uniform_int_distribution<std::size_t> sz(1, 500);
  for (int trial = 0; trial < 30; ++trial) {
    const PointCloud src(facereg::testing::random_points(rng, sz(rng), 50.0));
    const PointCloud tgt(facereg::testing::random_points(rng, sz(rng), 60.0));
    const auto t = facereg::testing::random_transform(rng, std::numbers::pi, 20.0);
    CHECK(evaluate_rmse(src, tgt, t) == brute_rmse(src, tgt, t));
  }
}

TEST_CASE("registration result JSON round trip") {
  const auto cloud = wavy_surface(20, 2.0);
  const auto truth = RigidTransform::from_axis_angle(Vector3(0, 1, 0), 4 * kDeg, Vector3(1, 2, 3));
  const auto r = icp(apply_transform(truth, cloud), cloud, RigidTransform::identity(), IcpParams{});
  const auto back = registration_result_from_json(to_json(r));
  CHECK(back.transform.rotation() == r.transform.rotation());
  CHECK(back.transform.translation() == r.transform.translation());
  CHECK(back.rmse == r.rmse);
  CHECK(back.iterations_run == r.iterations_run);
  CHECK(back.converged == r.converged);
  CHECK(back.per_iteration_rmse == r.per_iteration_rmse);
  CHECK_THROWS_AS(registration_result_from_json("{\"rotation\": [1]}"), InputError);
  CHECK_THROWS_AS(registration_result_from_json("not json"), InputError);
}
