#include "doctest.h"

#include <fstream>
#include <random>

#include "facereg/error.hpp"
#include "facereg/ply.hpp"
#include "test_support.hpp"

using namespace facereg;

namespace {

void write_text(const std::filesystem::path& p, const std::string& s) {
  std::ofstream f(p, std::ios::binary);
  f << s;
}

}  // namespace

TEST_CASE("point cloud PLY round trip in both encodings") {
  const auto dir = facereg::testing::temp_dir("ply_roundtrip");
  std::mt19937_64 rng(1);
  const auto sphere = facereg::testing::fibonacci_sphere(200, 37.5, Point3(1, 2, 3));
  for (auto enc : {PlyEncoding::Ascii, PlyEncoding::BinaryLittleEndian}) {
    const auto path = dir / (enc == PlyEncoding::Ascii ? "a.ply" : "b.ply");
    write_point_cloud(path, sphere, enc);
    const auto back = read_point_cloud(path);
    REQUIRE(back.size() == sphere.size());
    REQUIRE(back.has_normals());
    for (std::size_t i = 0; i < sphere.size(); ++i) {
      // float32 storage
      CHECK((back[i] - sphere[i]).cwiseAbs().maxCoeff() < 1e-4);
      CHECK((back.normals()[i] - sphere.normals()[i]).norm() < 1e-6);
    }
  }
  const PointCloud bare(facereg::testing::random_points(rng, 10, 5.0));
  write_point_cloud(dir / "bare.ply", bare);
  CHECK_FALSE(read_point_cloud(dir / "bare.ply").has_normals());
}

TEST_CASE("binary writes are the default and start with the expected header") {
  const auto dir = facereg::testing::temp_dir("ply_header");
  write_point_cloud(dir / "c.ply", PointCloud({Point3(1, 2, 3)}));
  std::ifstream f(dir / "c.ply", std::ios::binary);
  std::string line;
  std::getline(f, line);
  CHECK(line == "ply");
  std::getline(f, line);
  CHECK(line == "format binary_little_endian 1.0");
}

TEST_CASE("reader accepts doubles, extra properties, quads and comments") {
  const auto dir = facereg::testing::temp_dir("ply_foreign");
  write_text(dir / "q.ply",
             "ply\nformat ascii 1.0\ncomment made elsewhere\nelement vertex 4\n"
             "property double x\nproperty double y\nproperty double z\nproperty uchar red\n"
             "element face 1\nproperty list uchar int vertex_indices\nend_header\n"
             "0 0 0 255\n1 0 0 0\n1 1 0 7\n0 1 0 9\n4 0 1 2 3\n");
  const auto data = read_ply(dir / "q.ply");
  CHECK(data.vertices.size() == 4);
  CHECK(data.vertices[2] == Point3(1, 1, 0));
  REQUIRE(data.faces.size() == 2);
  CHECK(data.faces[0] == std::array<std::uint32_t, 3>{0, 1, 2});
  CHECK(data.faces[1] == std::array<std::uint32_t, 3>{0, 2, 3});
}

TEST_CASE("malformed files raise InputError") {
  const auto dir = facereg::testing::temp_dir("ply_bad");
  CHECK_THROWS_AS(read_ply(dir / "missing.ply"), InputError);
  write_text(dir / "notply.ply", "hello\n");
  CHECK_THROWS_AS(read_ply(dir / "notply.ply"), InputError);
  write_text(dir / "short.ply",
             "ply\nformat ascii 1.0\nelement vertex 3\nproperty float x\nproperty float y\nproperty float z\n"
             "end_header\n0 0 0\n1 1 1\n");
  CHECK_THROWS_AS(read_ply(dir / "short.ply"), InputError);
  write_text(dir / "big.ply", "ply\nformat binary_big_endian 1.0\nelement vertex 0\nend_header\n");
  CHECK_THROWS_AS(read_ply(dir / "big.ply"), InputError);
}
