#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <random>

#include "facereg/depth_io.hpp"
#include "facereg/error.hpp"
#include "facereg/phantom.hpp"
#include "facereg/surface.hpp"
#include "phantom_fixture.hpp"
#include "test_support.hpp"

using namespace facereg;

namespace {

using testing::small_phantom_spec;

double deg(double d) { return d * std::acos(-1.0) / 180.0; }

}  // namespace

TEST_CASE("phantom implicit function: inside negative, outside positive") {
  const PhantomSpec s;
  CHECK(phantom_implicit(s, Point3::Zero()) < -50.0);
  CHECK(phantom_implicit(s, Point3(0, 0, 300)) > 100.0);
  CHECK(phantom_implicit(s, Point3(0, -300, 0)) > 100.0);
  // Far from the face the surface is the plain ellipsoid.
  CHECK(phantom_implicit(s, Point3(0, 0, -90)) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(phantom_implicit(s, Point3(75, 0, 0)) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("camera pose: looks along the view axis, image right is +x") {
  const PhantomSpec s;
  const RigidTransform c2w = s.camera_to_world();
  CHECK((c2w.translation() - s.viewpoint).norm() == 0.0);
  CHECK((c2w.apply_direction(Vector3::UnitZ()) - Vector3(0, 0, -1)).norm() < 1e-12);
  CHECK((c2w.apply_direction(Vector3::UnitX()) - Vector3(1, 0, 0)).norm() < 1e-12);
  CHECK((c2w.apply_direction(Vector3::UnitY()) - Vector3(0, -1, 0)).norm() < 1e-12);

  PhantomSpec side = s;
  side.view_axis = Vector3(0, -1, 0);  // parallel to the default up hint
  const RigidTransform t = side.camera_to_world();
  CHECK((t.apply_direction(Vector3::UnitZ()) - Vector3(0, -1, 0)).norm() < 1e-12);
}

TEST_CASE("generate_phantom: noiseless camera points lie on the implicit surface") {
  const PhantomSpec s = small_phantom_spec();
  const PhantomData d = generate_phantom(s);
  const PointCloud cloud = depth_to_cloud(d.depth_frame);
  REQUIRE(cloud.size() > 5000);
  const double bound = 0.5 * s.spacing_mm;
  double worst = 0.0;
  for (const Point3& p : cloud.points())
    worst = std::max(worst, std::abs(phantom_implicit(s, d.camera_to_world.apply(p))));
  // Only depth quantization (0.1 mm units) separates samples from the surface.
  CHECK(worst <= bound);
  CHECK(worst < 0.1);
}

TEST_CASE("generate_phantom: marching cubes on the volume recovers the surface") {
  const PhantomSpec s = small_phantom_spec();
  const PhantomData d = generate_phantom(s);
  CHECK(d.volume.dims == s.dims);
  const bool u16_valued = std::all_of(d.volume.values.begin(), d.volume.values.end(),
                                      [](float v) { return v == std::round(v) && v >= 0.0f && v <= 65535.0f; });
  CHECK(u16_valued);
  const TriangleMesh mesh = marching_cubes(d.volume, kPhantomIso);
  REQUIRE(mesh.vertices.size() > 1000);
  double worst = 0.0;
  for (const Point3& v : mesh.vertices) worst = std::max(worst, std::abs(phantom_implicit(s, v)));
  CHECK(worst <= 0.5 * s.spacing_mm);
  // Inside is high: the head center sits well above the iso value.
  const Point3 o = d.volume.origin;
  const int i = static_cast<int>(std::round(-o.x() / s.spacing_mm));
  const int j = static_cast<int>(std::round(-o.y() / s.spacing_mm));
  CHECK(d.volume.at(i, j, 0) > kPhantomIso);
}

TEST_CASE("generate_phantom: landmarks are exact surface points in 68-point order") {
  const PhantomSpec s = small_phantom_spec();
  const PhantomData d = generate_phantom(s);
  REQUIRE(d.surface_landmarks_3d.indices.size() == 21);
  REQUIRE(d.camera_landmarks.landmarks.size() == 21);
  for (std::size_t i = 0; i < 21; ++i) {
    CHECK(d.surface_landmarks_3d.indices[i] == 27 + static_cast<int>(i));
    CHECK(d.camera_landmarks.landmarks[i].index == 27 + static_cast<int>(i));
    const Point3& p = d.surface_landmarks_3d.cloud[i];
    CHECK(std::abs(phantom_implicit(s, p)) < 1e-9);
    // Outermost crossing: nothing solid directly in front of the landmark.
    for (double dz = 0.25; dz < 40.0; dz += 0.25) CHECK(phantom_implicit(s, p + Point3(0, 0, dz)) > 0.0);
  }
  const auto& lm = d.surface_landmarks_3d.cloud;
  // Nose ridge runs down to the tip, which is the most prominent landmark.
  for (int k = 0; k < 3; ++k) CHECK(lm[k].y() > lm[k + 1].y());
  for (std::size_t k = 0; k < 21; ++k) CHECK(lm[3].z() >= lm[k].z());
  // Right eye (36-41) at -x, left eye (42-47) at +x, mirror images.
  for (int k = 0; k < 6; ++k) {
    CHECK(lm[9 + k].x() < 0.0);
    const Point3 mirrored(-lm[9 + k].x(), lm[9 + k].y(), lm[9 + k].z());
    const int partner[] = {3, 2, 1, 0, 5, 4};  // 36<->45, 37<->44, 38<->43, 39<->42, 40<->47, 41<->46
    CHECK((mirrored - lm[15 + partner[k]]).norm() < 1e-9);
  }
  // Outer corners lie further out than inner corners.
  CHECK(lm[9].x() < lm[12].x());
  CHECK(lm[18].x() > lm[15].x());
}

TEST_CASE("generate_phantom: camera landmarks are the projections of the posed surface landmarks") {
  PhantomSpec s = small_phantom_spec();
  s.head_pose = RigidTransform::from_axis_angle(Vector3(0.3, 1, 0.2), deg(12), Vector3(5, -8, 20));
  const PhantomData d = generate_phantom(s);
  const RigidTransform w2c = invert(d.camera_to_world);
  for (std::size_t i = 0; i < 21; ++i) {
    const Point3 c = w2c.apply(s.head_pose.apply(d.surface_landmarks_3d.cloud[i]));
    const double u = s.fx * c.x() / c.z() + s.cx, v = s.fy * c.y() / c.z() + s.cy;
    CHECK(d.camera_landmarks.landmarks[i].u == doctest::Approx(u).epsilon(1e-12));
    CHECK(d.camera_landmarks.landmarks[i].v == doctest::Approx(v).epsilon(1e-12));
  }
  CHECK(d.ground_truth.rotation() == s.head_pose.rotation());
  CHECK(d.ground_truth.translation() == s.head_pose.translation());
}

TEST_CASE("generate_phantom: lifted camera landmarks match the posed surface landmarks within 1.5 mm") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 4; ++trial) {
    PhantomSpec s = small_phantom_spec();
    s.image_width = 640;  // full camera resolution, as in the benchmark
    s.image_height = 480;
    s.fx = s.fy = 615.0;
    s.cx = 319.5;
    s.cy = 239.5;
    s.head_pose = testing::random_transform(rng, deg(15), 30.0);
    const PhantomData d = generate_phantom(s);
    const LandmarkCloud lifted = lift_landmarks(d.depth_frame, d.camera_landmarks);
    REQUIRE(lifted.indices.size() == 21);
    for (std::size_t i = 0; i < 21; ++i) {
      const Point3 got = d.camera_to_world.apply(lifted.cloud[i]);
      const Point3 want = d.ground_truth.apply(d.surface_landmarks_3d.cloud[i]);
      CHECK((got - want).norm() <= 1.5);
    }
  }
}

TEST_CASE("generate_phantom: depth noise has the requested spread") {
  PhantomSpec s = small_phantom_spec();
  const PhantomData clean = generate_phantom(s);
  s.noise_sigma = 0.5;
  const PhantomData noisy = generate_phantom(s);
  const double unit = s.depth_scale * 1000.0;
  double sum = 0.0, sum2 = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < clean.depth_frame.depth.size(); ++i) {
    if (clean.depth_frame.depth[i] == 0 || noisy.depth_frame.depth[i] == 0) continue;
    const double diff = (static_cast<double>(noisy.depth_frame.depth[i]) - clean.depth_frame.depth[i]) * unit;
    sum += diff;
    sum2 += diff * diff;
    ++n;
  }
  REQUIRE(n > 5000);
  const double mean = sum / n;
  const double sd = std::sqrt(sum2 / n - mean * mean);
  // Two independent roundings add unit^2 / 6 of variance.
  const double expected = std::sqrt(0.25 + unit * unit / 6.0);
  CHECK(std::abs(mean) < 4.0 * expected / std::sqrt(static_cast<double>(n)));
  CHECK(sd == doctest::Approx(expected).epsilon(0.05));
}

TEST_CASE("generate_phantom: same seed gives bit-identical output") {
  PhantomSpec s = small_phantom_spec();
  s.noise_sigma = 0.5;
  const PhantomData a = generate_phantom(s);
  const PhantomData b = generate_phantom(s);
  CHECK(a.volume.values == b.volume.values);
  CHECK(a.depth_frame.depth == b.depth_frame.depth);
  CHECK(a.camera_landmarks.landmarks == b.camera_landmarks.landmarks);
  CHECK(a.surface_landmarks_3d.cloud.points() == b.surface_landmarks_3d.cloud.points());
  s.seed = 43;
  const PhantomData c = generate_phantom(s);
  CHECK(a.depth_frame.depth != c.depth_frame.depth);
  CHECK(a.volume.values == c.volume.values);
}

TEST_CASE("generate_phantom: errors") {
  PhantomSpec s = small_phantom_spec();
  s.view_axis = Vector3(0, 0, 1);  // looking away from the head
  CHECK_THROWS_AS(generate_phantom(s), PipelineError);

  s = small_phantom_spec();
  s.viewpoint = Point3(0, 0, 0);  // inside the head
  CHECK_THROWS_AS(generate_phantom(s), PipelineError);

  const auto bad = [](auto mutate) {
    PhantomSpec b = small_phantom_spec();
    mutate(b);
    CHECK_THROWS_AS(generate_phantom(b), InputError);
  };
  bad([](PhantomSpec& b) { b.spacing_mm = 0.0; });
  bad([](PhantomSpec& b) { b.dims[1] = 1; });
  bad([](PhantomSpec& b) { b.head_radii.x() = -1.0; });
  bad([](PhantomSpec& b) { b.nose_width = 0.0; });
  bad([](PhantomSpec& b) { b.eye_radius = 0.0; });
  bad([](PhantomSpec& b) { b.eye_separation = 0.0; });
  bad([](PhantomSpec& b) { b.noise_sigma = -0.1; });
  bad([](PhantomSpec& b) { b.fx = 0.0; });
  bad([](PhantomSpec& b) { b.image_width = 0; });
  bad([](PhantomSpec& b) { b.view_axis = Vector3::Zero(); });
  bad([](PhantomSpec& b) { b.ct_dropped_landmarks = 19; });
  bad([](PhantomSpec& b) { b.harris_radius_mm = 0.0; });
  bad([](PhantomSpec& b) { b.render_resolution_mm = std::nan(""); });
}

TEST_CASE("ct_image_landmarks: bounded jitter, seeded drops, back-projection accuracy") {
  PhantomSpec s = small_phantom_spec();
  s.spacing_mm = 1.0;
  s.dims = {176, 160, 116};
  const PhantomData d = generate_phantom(s);
  const TriangleMesh mesh = marching_cubes(d.volume, kPhantomIso);
  const NormalAngleImage image = render_normal_angle_image(mesh, Vector3::UnitZ(), 1.0);

  s.ct_landmark_jitter_px = 0.0;
  s.ct_dropped_landmarks = 0;
  const LandmarkSet exact = ct_image_landmarks(s, d.surface_landmarks_3d, image);
  REQUIRE(exact.landmarks.size() == 21);
  const LandmarkCloud back = backproject_landmarks(image, exact);
  REQUIRE(back.indices.size() == 21);
  for (std::size_t i = 0; i < 21; ++i)
    CHECK((back.cloud[i] - d.surface_landmarks_3d.cloud[i]).norm() <= 2.0 * image.projection->resolution_mm);

  s.ct_landmark_jitter_px = 1.0;
  s.ct_dropped_landmarks = 3;
  const LandmarkSet jittered = ct_image_landmarks(s, d.surface_landmarks_3d, image);
  CHECK(jittered.landmarks.size() == 18);
  CHECK(jittered.image_width == image.width);
  for (const Landmark& l : jittered.landmarks) {
    const Landmark e = *exact.find(l.index);
    CHECK(std::abs(l.u - e.u) <= 1.0);
    CHECK(std::abs(l.v - e.v) <= 1.0);
  }
  CHECK(ct_image_landmarks(s, d.surface_landmarks_3d, image).landmarks == jittered.landmarks);
  s.seed = 99;
  CHECK(ct_image_landmarks(s, d.surface_landmarks_3d, image).landmarks != jittered.landmarks);
}

TEST_CASE("phantom spec JSON") {
  PhantomSpec s = small_phantom_spec();
  s.seed = 123456789012345ULL;
  s.description = "round trip";
  s.head_pose = RigidTransform::from_axis_angle(Vector3(1, 2, 3), 0.4, Vector3(1, -2, 3));
  s.harris_threshold = -0.03;
  s.sift_contrast_threshold = 0.004;
  const PhantomSpec r = phantom_spec_from_json(to_json(s));
  CHECK(r.seed == s.seed);
  CHECK(r.description == s.description);
  CHECK(r.dims == s.dims);
  CHECK(r.spacing_mm == s.spacing_mm);
  CHECK(r.head_radii == s.head_radii);
  CHECK(r.image_width == s.image_width);
  CHECK(r.fx == s.fx);
  CHECK(r.cx == s.cx);
  CHECK(r.viewpoint == s.viewpoint);
  CHECK(r.view_axis == s.view_axis);
  CHECK(r.noise_sigma == s.noise_sigma);
  CHECK(r.head_pose.rotation() == s.head_pose.rotation());
  CHECK(r.head_pose.translation() == s.head_pose.translation());
  CHECK(r.target_margin_mm == s.target_margin_mm);
  CHECK(r.harris_threshold == s.harris_threshold);
  CHECK(r.sift_contrast_threshold == s.sift_contrast_threshold);
  CHECK_FALSE(r.harris_radius_mm.has_value());

  const PhantomSpec partial = phantom_spec_from_json(R"({"seed": 5, "nose": {"amplitude": 18}})");
  CHECK(partial.seed == 5);
  CHECK(partial.nose_amplitude == 18.0);
  CHECK(partial.nose_width == PhantomSpec{}.nose_width);

  CHECK_THROWS_AS(phantom_spec_from_json("{"), InputError);
  CHECK_THROWS_AS(phantom_spec_from_json(R"({"sed": 1})"), InputError);
  CHECK_THROWS_AS(phantom_spec_from_json(R"({"nose": {"height": 1}})"), InputError);
  CHECK_THROWS_AS(phantom_spec_from_json(R"({"head_radii": [1, 2]})"), InputError);
  CHECK_THROWS_AS(phantom_spec_from_json(R"({"noise_sigma": "x"})"), InputError);
  CHECK_THROWS_AS(phantom_spec_from_json(R"({"eyes": {"radius": -2}})"), InputError);

  const auto path = testing::temp_dir("phantom_spec") / "spec.json";
  write_phantom_spec(path, s);
  CHECK(read_phantom_spec(path).seed == s.seed);
  CHECK_THROWS_AS(read_phantom_spec(path.parent_path() / "missing.json"), InputError);
}
