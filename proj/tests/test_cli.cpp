#include "doctest.h"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

#include "facereg/bench.hpp"
#include "facereg/depth_io.hpp"
#include "facereg/phantom.hpp"
#include "facereg/ply.hpp"
#include "facereg/registration.hpp"
#include "facereg/surface.hpp"
#include "phantom_fixture.hpp"
#include "test_support.hpp"

using namespace facereg;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string err;
};

Run cli(const std::string& args, const fs::path& dir) {
  const fs::path err = dir / "stderr.txt";
  const std::string cmd = std::string("\"") + FACEREG_CLI + "\" " + args + " > \"" + (dir / "stdout.txt").string() +
                          "\" 2> \"" + err.string() + "\"";
  const int status = std::system(cmd.c_str());
  std::ifstream in(err);
  std::stringstream ss;
  ss << in.rdbuf();
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, ss.str()};
}

std::string q(const fs::path& p) { return "\"" + p.string() + "\""; }

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Clouds go through float32 PLY, so the library side takes the same trip.
PointCloud via_ply(const PointCloud& cloud, const fs::path& dir) {
  write_point_cloud(dir / "lib.ply", cloud);
  return read_point_cloud(dir / "lib.ply");
}

void check_same_cloud(const PointCloud& a, const PointCloud& b_in, const fs::path& dir) {
  const PointCloud b = via_ply(b_in, dir);
  REQUIRE(a.size() == b.size());
  REQUIRE(a.has_normals() == b.has_normals());
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    worst = std::max(worst, (a.points()[i] - b.points()[i]).norm());
    if (a.has_normals()) worst = std::max(worst, (a.normals()[i] - b.normals()[i]).norm());
  }
  CHECK(worst == 0.0);
}

// One phantom case written by the CLI and reused across test cases.
struct Case {
  fs::path dir;
  PhantomSpec spec;
  PhantomData data;
};

const Case& phantom_case() {
  static const Case c = [] {
    Case k;
    k.dir = testing::temp_dir("cli");
    k.spec = testing::small_phantom_spec();
    k.spec.noise_sigma = 0.5;
    write_phantom_spec(k.dir / "spec.json", k.spec);
    const Run r = cli("phantom --spec " + q(k.dir / "spec.json") + " --out-dir " + q(k.dir / "ph"), k.dir);
    REQUIRE_MESSAGE(r.code == 0, r.err);
    k.data = generate_phantom(k.spec);
    return k;
  }();
  return c;
}

}  // namespace

TEST_CASE("cli: phantom output matches the library") {
  const Case& c = phantom_case();
  const fs::path ph = c.dir / "ph";
  const DepthFrame frame = read_depth_frame(ph / "depth.pgm");
  CHECK(frame.depth == c.data.depth_frame.depth);
  CHECK(frame.intrinsics.fx == c.data.depth_frame.intrinsics.fx);
  const ScalarVolume vol = read_volume(ph / "phantom.raw");
  CHECK(vol.values == c.data.volume.values);
  const LandmarkSet lm = read_landmarks(ph / "camera_landmarks.json");
  REQUIRE(lm.landmarks.size() == c.data.camera_landmarks.landmarks.size());
  for (std::size_t i = 0; i < lm.landmarks.size(); ++i) CHECK(lm.landmarks[i] == c.data.camera_landmarks.landmarks[i]);
  const RigidTransform gt = read_transform(ph / "ground_truth.json");
  CHECK((gt.rotation() - c.data.ground_truth.rotation()).norm() == 0.0);
  CHECK(read_phantom_spec(ph / "spec.json").seed == c.spec.seed);
}

TEST_CASE("cli: depth2cloud, extract, render and backproject match the library") {
  const Case& c = phantom_case();
  const fs::path ph = c.dir / "ph";
  REQUIRE(cli("depth2cloud " + q(ph / "depth.pgm") + " --out " + q(c.dir / "cam.ply"), c.dir).code == 0);
  check_same_cloud(read_point_cloud(c.dir / "cam.ply"), depth_to_cloud(c.data.depth_frame), c.dir);

  REQUIRE(cli("extract " + q(ph / "phantom.raw") + " --iso 1000 --out " + q(c.dir / "mesh.ply") + " --cloud-out " +
                  q(c.dir / "ct.ply"),
              c.dir)
              .code == 0);
  const TriangleMesh mesh = marching_cubes(c.data.volume, kPhantomIso);
  const TriangleMesh got = read_mesh(c.dir / "mesh.ply");
  CHECK(got.triangles == mesh.triangles);
  check_same_cloud(read_point_cloud(c.dir / "ct.ply"), mesh_to_cloud(mesh), c.dir);

  REQUIRE(cli("render " + q(c.dir / "mesh.ply") + " --axis 0,0,1 --res 2 --out " + q(c.dir / "ct.pgm"), c.dir).code ==
          0);
  const NormalAngleImage img = render_normal_angle_image(got, Vector3(0, 0, 1), 2.0);
  const NormalAngleImage rimg = read_normal_angle_image(c.dir / "ct.pgm");
  CHECK(rimg.gray == img.gray);

  const LandmarkSet lm = ct_image_landmarks(c.spec, c.data.surface_landmarks_3d, img);
  write_landmarks(c.dir / "ct_lm.json", lm);
  REQUIRE(cli("backproject " + q(c.dir / "ct.pgm") + " " + q(c.dir / "ct_lm.json") + " --out " + q(c.dir / "ctkp.ply"),
              c.dir)
              .code == 0);
  check_same_cloud(read_point_cloud(c.dir / "ctkp.ply"), backproject_landmarks(rimg, select_eyes_nose(lm)).cloud, c.dir);
}

TEST_CASE("cli: register ours on the phantom pair recovers the truth") {
  const Case& c = phantom_case();
  const fs::path ph = c.dir / "ph";
  const fs::path d = c.dir / "reg";
  fs::create_directories(d);
  REQUIRE(cli("depth2cloud " + q(ph / "depth.pgm") + " --out " + q(d / "cam.ply"), d).code == 0);
  REQUIRE(cli("extract " + q(ph / "phantom.raw") + " --iso 1000 --out " + q(d / "mesh.ply") + " --cloud-out " +
                  q(d / "ct.ply"),
              d)
              .code == 0);
  const double res = c.spec.render_resolution_mm;
  REQUIRE(cli("render " + q(d / "mesh.ply") + " --axis 0,0,1 --res " + std::to_string(res) + " --out " +
                  q(d / "ct.pgm"),
              d)
              .code == 0);
  REQUIRE(cli("backproject " + q(d / "ct.pgm") + " " + q(ph / "ct_landmarks.json") + " --out " + q(d / "ctkp.ply"), d)
              .code == 0);
  const Run r = cli("register " + q(d / "cam.ply") + " " + q(d / "ct.ply") + " --src-landmarks " +
                        q(ph / "camera_landmarks.json") + " --src-frame " + q(ph / "depth.pgm") + " --src-pose " +
                        q(ph / "camera_pose.json") + " --tgt-keypoints " + q(d / "ctkp.ply") +
                        " --src-margin 10 --tgt-margin 40 --out " + q(d / "fine.json") + " --coarse-out " +
                        q(d / "coarse.json"),
                    d);
  REQUIRE_MESSAGE(r.code == 0, r.err);
  const RegistrationResult fine = read_result(d / "fine.json");
  CHECK(fine.rmse <= 1.1);
  CHECK(rotation_error(fine.transform, registration_truth(c.data)) * 180.0 / std::acos(-1.0) < 2.0);

  // The same steps through the library give the same answer.
  const RigidTransform pose = c.data.camera_to_world;
  const PointCloud src_kp =
      apply_transform(pose, lift_landmarks(c.data.depth_frame, select_eyes_nose(c.data.camera_landmarks)).cloud);
  const PointCloud tgt_kp = read_point_cloud(d / "ctkp.ply");
  const PointCloud src = segment_region(apply_transform(pose, read_point_cloud(d / "cam.ply")), src_kp, 10.0);
  const PointCloud tgt = segment_region(read_point_cloud(d / "ct.ply"), tgt_kp, 40.0);
  const RegistrationResult coarse = coarse_register(src_kp, tgt_kp, coarse_icp_params());
  const RegistrationResult lib = fine_register(src, tgt, coarse.transform, fine_icp_params());
  CHECK(lib.iterations_run == fine.iterations_run);
  CHECK(lib.rmse == doctest::Approx(fine.rmse).epsilon(1e-12));
  CHECK((lib.transform.rotation() - fine.transform.rotation()).norm() < 1e-12);
  CHECK((lib.transform.translation() - fine.transform.translation()).norm() < 1e-10);
  CHECK(read_result(d / "coarse.json").iterations_run == coarse.iterations_run);
}

TEST_CASE("cli: register identical clouds gives zero rmse") {
  const fs::path d = testing::temp_dir("cli_identical");
  const PointCloud sphere = testing::fibonacci_sphere(400, 30.0);
  write_point_cloud(d / "a.ply", sphere);
  const PointCloud kp({sphere.points()[0], sphere.points()[100], sphere.points()[200], sphere.points()[300]});
  write_point_cloud(d / "kp.ply", kp);
  const Run r = cli("register " + q(d / "a.ply") + " " + q(d / "a.ply") + " --src-keypoints " + q(d / "kp.ply") +
                        " --tgt-keypoints " + q(d / "kp.ply") + " --out " + q(d / "r.json"),
                    d);
  REQUIRE_MESSAGE(r.code == 0, r.err);
  CHECK(read_result(d / "r.json").rmse < 1e-9);
}

TEST_CASE("cli: bench report is deterministic and honors the format") {
  const Case& c = phantom_case();
  const std::string base = "bench --spec " + q(c.dir / "spec.json") + " --methods ours --trials 3 --out ";
  REQUIRE(cli(base + q(c.dir / "a.csv"), c.dir).code == 0);
  REQUIRE(cli("--threads 1 " + base + q(c.dir / "b.csv"), c.dir).code == 0);
  const BenchReport a = parse_report_csv(slurp(c.dir / "a.csv"));
  const BenchReport b = parse_report_csv(slurp(c.dir / "b.csv"));
  REQUIRE(a.rows.size() == 1);
  CHECK(a.rows[0].method == "ours");
  CHECK(a.rows[0].fine_rmse_mm == b.rows[0].fine_rmse_mm);
  CHECK(a.rows[0].coarse_rmse_mm == b.rows[0].coarse_rmse_mm);
  CHECK(a.rows[0].fine_rmse_mm <= 1.1);

  REQUIRE(cli(base + q(c.dir / "r.json"), c.dir).code == 0);
  const BenchReport j = parse_report_json(slurp(c.dir / "r.json"));
  CHECK(j.trials == 3);
  CHECK(j.seed == c.spec.seed);
  // The seed flag overrides the spec.
  REQUIRE(cli("--seed 7 " + base + q(c.dir / "s.json"), c.dir).code == 0);
  CHECK(parse_report_json(slurp(c.dir / "s.json")).seed == 7);
}

TEST_CASE("cli: exit codes") {
  const fs::path d = testing::temp_dir("cli_errors");
  CHECK(cli("--help", d).code == 0);
  CHECK(cli("", d).code == 1);
  CHECK(cli("extract --bogus-flag", d).code == 1);

  SUBCASE("missing file") {
    const Run r = cli("depth2cloud " + q(d / "nope.pgm") + " --out " + q(d / "x.ply"), d);
    CHECK(r.code == 1);
    CHECK(!r.err.empty());
  }
  SUBCASE("all-zero depth frame") {
    DepthFrame f;
    f.width = 8;
    f.height = 6;
    f.depth.assign(48, 0);
    f.intrinsics.fx = f.intrinsics.fy = 10.0;
    f.intrinsics.cx = 3.5;
    f.intrinsics.cy = 2.5;
    write_depth_frame(d / "zero.pgm", f);
    const Run r = cli("depth2cloud " + q(d / "zero.pgm") + " --out " + q(d / "x.ply"), d);
    CHECK(r.code == 2);
    CHECK(r.err.find("empty depth frame") != std::string::npos);
  }
  SUBCASE("constant volume") {
    ScalarVolume v;
    v.dims = {4, 4, 4};
    v.values.assign(64, 5.0f);
    write_volume(d / "flat.raw", v);
    const Run r = cli("extract " + q(d / "flat.raw") + " --iso 10 --out " + q(d / "m.ply"), d);
    CHECK(r.code == 2);
    CHECK(r.err.find("empty isosurface") != std::string::npos);
  }
  SUBCASE("bad volume JSON") {
    std::ofstream(d / "bad.raw") << "x";
    std::ofstream(d / "bad.volume.json") << "{ not json";
    CHECK(cli("extract " + q(d / "bad.raw") + " --iso 10 --out " + q(d / "m.ply"), d).code == 1);
  }
  SUBCASE("empty mesh") {
    write_mesh(d / "empty.ply", TriangleMesh{});
    CHECK(cli("render " + q(d / "empty.ply") + " --out " + q(d / "i.pgm"), d).code == 1);
  }
  SUBCASE("two-point keypoints") {
    const PointCloud sphere = testing::fibonacci_sphere(200, 30.0);
    write_point_cloud(d / "a.ply", sphere);
    write_point_cloud(d / "kp.ply", PointCloud({sphere.points()[0], sphere.points()[50]}));
    const Run r = cli("register " + q(d / "a.ply") + " " + q(d / "a.ply") + " --src-keypoints " + q(d / "kp.ply") +
                          " --tgt-keypoints " + q(d / "kp.ply") + " --out " + q(d / "r.json"),
                      d);
    CHECK(r.code == 2);
  }
  SUBCASE("unknown method") {
    CHECK(cli("bench --methods ours,nope", d).code == 1);
    CHECK(cli("register a.ply b.ply --method nope --out r.json", d).code == 1);
  }
  SUBCASE("bad axis") { CHECK(cli("render m.ply --axis 1,2 --out i.pgm", d).code == 1); }
}
