#include "facereg/surface.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <string>

#include <nlohmann/json.hpp>

#include "facereg/error.hpp"
#include "facereg/image_io.hpp"
#include "facereg/neighbor_index.hpp"
#include "facereg/parallel.hpp"
#include "facereg/ply.hpp"

namespace facereg {

namespace {

constexpr double kFallbackRadiusPx = 3.0;

int nearest_pixel(double c, int size) {
  return std::clamp(static_cast<int>(std::floor(c + 0.5)), 0, size - 1);
}

std::filesystem::path with_suffix(std::filesystem::path p, const char* suffix) {
  p.replace_extension();
  p += suffix;
  return p;
}

nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open JSON file: " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw InputError("invalid JSON in " + path.string() + ": " + e.what());
  }
}

}  // namespace

void ScalarVolume::validate() const {
  for (int a = 0; a < 3; ++a) {
    if (dims[a] < 2) throw InputError("volume: every dimension must be >= 2");
    if (!(spacing[a] > 0.0) || !std::isfinite(spacing[a])) throw InputError("volume: spacing must be positive");
  }
  if (!origin.allFinite()) throw InputError("volume: origin must be finite");
  if (values.size() != static_cast<std::size_t>(dims[0]) * dims[1] * dims[2])
    throw InputError("volume: value count does not match dims");
}

void TriangleMesh::validate() const {
  if (normals.size() != vertices.size()) throw InputError("mesh: normal count does not match vertex count");
  for (const auto& n : normals)
    if (!n.allFinite() || std::abs(n.norm() - 1.0) > 1e-6) throw InputError("mesh: vertex normal is not unit length");
  for (const auto& t : triangles) {
    for (auto v : t)
      if (v >= vertices.size()) throw InputError("mesh: triangle index out of range");
    if (t[0] == t[1] || t[1] == t[2] || t[0] == t[2]) throw InputError("mesh: degenerate triangle");
  }
}

PointCloud mesh_to_cloud(const TriangleMesh& mesh) {
  if (mesh.vertices.empty()) throw InputError("mesh_to_cloud: empty mesh");
  return PointCloud(mesh.vertices, mesh.normals);
}

PointCloud estimate_normals(const PointCloud& cloud, const Point3& viewpoint, std::size_t k) {
  if (k < 3) throw InputError("estimate_normals: k must be at least 3");
  if (cloud.size() <= k)
    throw InputError("estimate_normals: cloud too small (" + std::to_string(cloud.size()) + " points for k = " +
                     std::to_string(k) + ")");
  const NeighborIndex index(cloud);
  std::vector<Vector3> normals(cloud.size());
  parallel_for(0, cloud.size(), [&](std::size_t i) {
    const auto nn = index.k_nearest(cloud[i], k);
    Point3 mean = Point3::Zero();
    for (const auto& n : nn) mean += cloud[n.index];
    mean /= static_cast<double>(nn.size());
    Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
    for (const auto& n : nn) {
      const Vector3 d = cloud[n.index] - mean;
      cov += d * d.transpose();
    }
    const Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(cov);
    Vector3 nrm = eig.eigenvectors().col(0).normalized();
    if (nrm.dot(viewpoint - cloud[i]) < 0.0) nrm = -nrm;
    normals[i] = nrm;
  });
  return cloud.with_normals(std::move(normals));
}

std::pair<double, double> ImageProjection::project(const Point3& p) const {
  return {(p.dot(u_axis) - u_min) / resolution_mm - 0.5, (p.dot(v_axis) - v_min) / resolution_mm - 0.5};
}

NormalAngleImage render_normal_angle_image(const TriangleMesh& mesh, const Vector3& view_axis,
                                           double resolution_mm_per_px) {
  if (mesh.empty()) throw InputError("render: empty mesh");
  mesh.validate();
  if (!view_axis.allFinite() || std::abs(view_axis.norm() - 1.0) > 1e-6)
    throw InputError("render: view axis must be a unit vector");
  if (!(resolution_mm_per_px > 0.0)) throw InputError("render: resolution must be positive");

  // Screen axes: u to the right, v downward when the view axis faces the viewer
  // and world +y is up.
  const Vector3 up_hint = std::abs(view_axis.y()) < 0.9 ? Vector3::UnitY() : Vector3::UnitZ();
  ImageProjection proj;
  proj.view_axis = view_axis;
  proj.u_axis = up_hint.cross(view_axis).normalized();
  proj.v_axis = proj.u_axis.cross(view_axis).normalized();
  proj.resolution_mm = resolution_mm_per_px;

  // Rasterize in coordinates relative to the first vertex so the result only
  // depends on relative geometry.
  const Point3 anchor = mesh.vertices.front();
  std::vector<Point3> local(mesh.vertices.size());
  for (std::size_t i = 0; i < local.size(); ++i) local[i] = mesh.vertices[i] - anchor;

  double u_lo = std::numeric_limits<double>::infinity(), v_lo = u_lo;
  double u_max = -u_lo, v_max = -u_lo;
  for (const auto& p : local) {
    const double u = p.dot(proj.u_axis), v = p.dot(proj.v_axis);
    u_lo = std::min(u_lo, u);
    v_lo = std::min(v_lo, v);
    u_max = std::max(u_max, u);
    v_max = std::max(v_max, v);
  }
  if (!(u_max > u_lo) || !(v_max > v_lo)) throw PipelineError("render: mesh projects to zero area");
  proj.u_min = u_lo + anchor.dot(proj.u_axis);
  proj.v_min = v_lo + anchor.dot(proj.v_axis);

  NormalAngleImage img;
  img.width = static_cast<int>(std::floor((u_max - u_lo) / resolution_mm_per_px)) + 1;
  img.height = static_cast<int>(std::floor((v_max - v_lo) / resolution_mm_per_px)) + 1;
  const std::size_t npx = static_cast<std::size_t>(img.width) * img.height;
  img.gray.assign(npx, 0);
  img.lookup.assign(npx, std::nullopt);

  std::vector<double> best_depth(npx, -std::numeric_limits<double>::infinity());
  std::vector<Vector3> best_normal(npx, Vector3::Zero());

  auto to_px = [&](const Point3& p) {
    return Eigen::Vector2d((p.dot(proj.u_axis) - u_lo) / resolution_mm_per_px,
                           (p.dot(proj.v_axis) - v_lo) / resolution_mm_per_px);
  };

  // Samples are visited in (triangle, lattice) order and only a strictly
  // deeper-toward-viewer sample replaces the current one, so ties go to the
  // lower sample index.
  for (const auto& tri : mesh.triangles) {
    const Point3& a = local[tri[0]];
    const Point3& b = local[tri[1]];
    const Point3& c = local[tri[2]];
    const auto pa = to_px(a), pb = to_px(b), pc = to_px(c);
    const double longest = std::max({(pa - pb).norm(), (pb - pc).norm(), (pc - pa).norm()});
    // Lattice spacing <= 0.5 px gives at least 4 samples per pixel.
    const int n = std::max(1, static_cast<int>(std::ceil(longest / 0.5)));
    for (int i = 0; i <= n; ++i) {
      for (int j = 0; i + j <= n; ++j) {
        const double wb = static_cast<double>(i) / n, wc = static_cast<double>(j) / n, wa = 1.0 - wb - wc;
        const Point3 p = wa * a + wb * b + wc * c;
        const auto q = to_px(p);
        const int col = std::clamp(static_cast<int>(std::floor(q.x())), 0, img.width - 1);
        const int row = std::clamp(static_cast<int>(std::floor(q.y())), 0, img.height - 1);
        const std::size_t px = img.pixel(col, row);
        const double depth = p.dot(view_axis);
        if (depth > best_depth[px]) {
          Vector3 nrm = wa * mesh.normals[tri[0]] + wb * mesh.normals[tri[1]] + wc * mesh.normals[tri[2]];
          const double len = nrm.norm();
          nrm = len > 0.0 ? Vector3(nrm / len) : mesh.normals[tri[0]];
          best_depth[px] = depth;
          best_normal[px] = nrm;
          img.lookup[px] = anchor + p;
        }
      }
    }
  }

  for (std::size_t px = 0; px < npx; ++px) {
    if (!img.lookup[px]) continue;
    const double theta = std::acos(std::clamp(best_normal[px].dot(view_axis), -1.0, 1.0)) * 180.0 / std::numbers::pi;
    const double g = theta >= 90.0 ? 0.0 : std::round(255.0 * (1.0 - theta / 90.0));
    img.gray[px] = static_cast<std::uint8_t>(std::clamp(g, 0.0, 255.0));
  }
  img.projection = proj;
  return img;
}

LandmarkCloud backproject_landmarks(const NormalAngleImage& image, const LandmarkSet& landmarks) {
  landmarks.validate();
  if (landmarks.image_width != image.width || landmarks.image_height != image.height)
    throw InputError("backproject_landmarks: landmark image size does not match the rendered image");

  auto sorted = landmarks.landmarks;
  std::sort(sorted.begin(), sorted.end(), [](const Landmark& a, const Landmark& b) { return a.index < b.index; });

  const int reach = static_cast<int>(std::ceil(kFallbackRadiusPx));
  std::vector<Point3> pts;
  std::vector<int> kept;
  for (const auto& l : sorted) {
    const int col = nearest_pixel(l.u, image.width);
    const int row = nearest_pixel(l.v, image.height);
    std::optional<Point3> hit = image.lookup[image.pixel(col, row)];
    if (!hit) {
      double best = std::numeric_limits<double>::infinity();
      for (int dr = -reach; dr <= reach; ++dr) {
        for (int dc = -reach; dc <= reach; ++dc) {
          if (dr * dr + dc * dc > kFallbackRadiusPx * kFallbackRadiusPx) continue;
          const int c = col + dc, r = row + dr;
          if (c < 0 || r < 0 || c >= image.width || r >= image.height) continue;
          const auto& cand = image.lookup[image.pixel(c, r)];
          if (!cand) continue;
          const double d2 = (c - l.u) * (c - l.u) + (r - l.v) * (r - l.v);
          // Row-major scan order resolves equal distances to the lower pixel index.
          if (d2 < best) {
            best = d2;
            hit = cand;
          }
        }
      }
    }
    if (!hit) continue;
    pts.push_back(*hit);
    kept.push_back(l.index);
  }
  if (pts.empty()) throw PipelineError("no landmark could be back-projected onto the surface");
  return {PointCloud(std::move(pts)), std::move(kept)};
}

ScalarVolume read_volume(const std::filesystem::path& path) {
  std::filesystem::path json_path, raw_path;
  const std::string name = path.filename().string();
  if (name.size() > 12 && name.ends_with(".volume.json")) {
    json_path = path;
    raw_path = path.parent_path() / (name.substr(0, name.size() - 12) + ".raw");
  } else {
    raw_path = path;
    json_path = with_suffix(path, ".volume.json");
  }
  const auto j = read_json(json_path);
  ScalarVolume vol;
  try {
    const auto dims = j.at("dims").get<std::vector<int>>();
    const auto spacing = j.at("spacing").get<std::vector<double>>();
    const auto origin = j.at("origin").get<std::vector<double>>();
    const auto dtype = j.value("dtype", std::string("u16"));
    if (dims.size() != 3 || spacing.size() != 3 || origin.size() != 3)
      throw InputError(json_path.string() + ": dims/spacing/origin must have 3 entries");
    if (dtype != "u16") throw InputError(json_path.string() + ": unsupported dtype '" + dtype + "'");
    vol.dims = {dims[0], dims[1], dims[2]};
    vol.spacing = Vector3(spacing[0], spacing[1], spacing[2]);
    vol.origin = Point3(origin[0], origin[1], origin[2]);
  } catch (const nlohmann::json::exception& e) {
    throw InputError(json_path.string() + ": " + e.what());
  }
  for (int d : vol.dims)
    if (d < 2) throw InputError("volume: every dimension must be >= 2");

  const std::size_t n = static_cast<std::size_t>(vol.dims[0]) * vol.dims[1] * vol.dims[2];
  std::ifstream in(raw_path, std::ios::binary);
  if (!in) throw InputError("cannot open volume data: " + raw_path.string());
  std::vector<unsigned char> raw(2 * n);
  if (!in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size())))
    throw InputError("volume data shorter than dims imply: " + raw_path.string());
  vol.values.resize(n);
  for (std::size_t i = 0; i < n; ++i) vol.values[i] = static_cast<float>(raw[2 * i] | (raw[2 * i + 1] << 8));
  vol.validate();
  return vol;
}

void write_volume(const std::filesystem::path& raw_path, const ScalarVolume& vol) {
  vol.validate();
  std::ofstream out(raw_path, std::ios::binary);
  if (!out) throw InputError("cannot write volume data: " + raw_path.string());
  std::vector<unsigned char> raw(2 * vol.values.size());
  for (std::size_t i = 0; i < vol.values.size(); ++i) {
    const auto v = static_cast<std::uint16_t>(std::clamp(std::round(static_cast<double>(vol.values[i])), 0.0, 65535.0));
    raw[2 * i] = static_cast<unsigned char>(v & 0xff);
    raw[2 * i + 1] = static_cast<unsigned char>(v >> 8);
  }
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!out) throw InputError("failed writing volume data: " + raw_path.string());

  nlohmann::json j = {{"dims", {vol.dims[0], vol.dims[1], vol.dims[2]}},
                      {"spacing", {vol.spacing.x(), vol.spacing.y(), vol.spacing.z()}},
                      {"origin", {vol.origin.x(), vol.origin.y(), vol.origin.z()}},
                      {"dtype", "u16"}};
  std::ofstream js(with_suffix(raw_path, ".volume.json"));
  if (!js) throw InputError("cannot write volume sidecar for " + raw_path.string());
  js << j.dump(2) << "\n";
}

TriangleMesh read_mesh(const std::filesystem::path& path) {
  auto ply = read_ply(path);
  TriangleMesh mesh;
  mesh.vertices = std::move(ply.vertices);
  mesh.triangles.reserve(ply.faces.size());
  for (const auto& f : ply.faces)
    if (f[0] != f[1] && f[1] != f[2] && f[0] != f[2]) mesh.triangles.push_back(f);
  if (!ply.normals.empty()) {
    mesh.normals = std::move(ply.normals);
  } else {
    std::vector<Vector3> acc(mesh.vertices.size(), Vector3::Zero());
    for (const auto& t : mesh.triangles) {
      const Vector3 fn = (mesh.vertices[t[1]] - mesh.vertices[t[0]]).cross(mesh.vertices[t[2]] - mesh.vertices[t[0]]);
      for (auto v : t) acc[v] += fn;
    }
    mesh.normals.resize(acc.size());
    for (std::size_t i = 0; i < acc.size(); ++i)
      mesh.normals[i] = acc[i].norm() > 0.0 ? Vector3(acc[i].normalized()) : Vector3::UnitZ();
  }
  mesh.validate();
  return mesh;
}

void write_mesh(const std::filesystem::path& path, const TriangleMesh& mesh) {
  mesh.validate();
  write_ply(path, PlyData{mesh.vertices, mesh.normals, mesh.triangles});
}

std::filesystem::path lookup_sidecar(const std::filesystem::path& pgm) { return with_suffix(pgm, ".lookup.bin"); }

void write_normal_angle_image(const std::filesystem::path& pgm, const NormalAngleImage& image) {
  write_pgm8(pgm, GrayImage<std::uint8_t>{image.width, image.height, image.gray});

  std::vector<float> buf(3 * image.lookup.size(), std::numeric_limits<float>::quiet_NaN());
  for (std::size_t i = 0; i < image.lookup.size(); ++i)
    if (const auto& p = image.lookup[i])
      for (int a = 0; a < 3; ++a) buf[3 * i + a] = static_cast<float>((*p)[a]);
  std::ofstream out(lookup_sidecar(pgm), std::ios::binary);
  if (!out) throw InputError("cannot write lookup sidecar for " + pgm.string());
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));

  if (image.projection) {
    const auto& p = *image.projection;
    nlohmann::json j = {{"view_axis", {p.view_axis.x(), p.view_axis.y(), p.view_axis.z()}},
                        {"u_axis", {p.u_axis.x(), p.u_axis.y(), p.u_axis.z()}},
                        {"v_axis", {p.v_axis.x(), p.v_axis.y(), p.v_axis.z()}},
                        {"u_min", p.u_min},
                        {"v_min", p.v_min},
                        {"resolution_mm", p.resolution_mm}};
    std::ofstream js(with_suffix(pgm, ".projection.json"));
    js << j.dump(2) << "\n";
  }
}

NormalAngleImage read_normal_angle_image(const std::filesystem::path& pgm) {
  auto gray = read_pgm8(pgm);
  NormalAngleImage img;
  img.width = gray.width;
  img.height = gray.height;
  img.gray = std::move(gray.pixels);

  const std::size_t n = img.gray.size();
  std::ifstream in(lookup_sidecar(pgm), std::ios::binary);
  if (!in) throw InputError("cannot open lookup sidecar: " + lookup_sidecar(pgm).string());
  std::vector<float> buf(3 * n);
  if (!in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float))))
    throw InputError("lookup sidecar is shorter than the image: " + lookup_sidecar(pgm).string());
  img.lookup.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (std::isnan(buf[3 * i])) continue;
    img.lookup[i] = Point3(buf[3 * i], buf[3 * i + 1], buf[3 * i + 2]);
  }

  const auto proj_path = with_suffix(pgm, ".projection.json");
  if (std::filesystem::exists(proj_path)) {
    const auto j = read_json(proj_path);
    auto vec = [&](const char* key) {
      const auto v = j.at(key).get<std::vector<double>>();
      return Vector3(v.at(0), v.at(1), v.at(2));
    };
    try {
      ImageProjection p;
      p.view_axis = vec("view_axis");
      p.u_axis = vec("u_axis");
      p.v_axis = vec("v_axis");
      p.u_min = j.at("u_min").get<double>();
      p.v_min = j.at("v_min").get<double>();
      p.resolution_mm = j.at("resolution_mm").get<double>();
      img.projection = p;
    } catch (const std::exception& e) {
      throw InputError(proj_path.string() + ": " + e.what());
    }
  }
  return img;
}

}  // namespace facereg
