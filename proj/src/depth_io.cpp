#include "facereg/depth_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <string>

#include <nlohmann/json.hpp>

#include "facereg/error.hpp"
#include "facereg/image_io.hpp"

namespace facereg {

namespace {

constexpr int kEyesNoseFirst = 27;
constexpr int kEyesNoseLast = 47;

int nearest_pixel(double c, int size) {
  return std::clamp(static_cast<int>(std::floor(c + 0.5)), 0, size - 1);
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

template <class T>
T json_get(const nlohmann::json& j, const char* key, const std::filesystem::path& path) {
  if (!j.contains(key)) throw InputError(path.string() + ": missing field '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw InputError(path.string() + ": field '" + key + "' has the wrong type");
  }
}

}  // namespace

void CameraIntrinsics::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0) || !std::isfinite(fx) || !std::isfinite(fy))
    throw InputError("intrinsics: focal lengths must be positive");
  if (!std::isfinite(cx) || !std::isfinite(cy)) throw InputError("intrinsics: principal point must be finite");
  if (!(depth_scale > 0.0) || !std::isfinite(depth_scale)) throw InputError("intrinsics: depth_scale must be positive");
}

std::pair<double, double> CameraIntrinsics::project(const Point3& p) const {
  return {fx * p.x() / p.z() + cx, fy * p.y() / p.z() + cy};
}

void DepthFrame::validate() const {
  if (width <= 0 || height <= 0) throw InputError("depth frame: non-positive dimensions");
  if (depth.size() != static_cast<std::size_t>(width) * height)
    throw InputError("depth frame: sample count does not match width*height");
  intrinsics.validate();
}

void LandmarkSet::validate() const {
  if (image_width <= 0 || image_height <= 0) throw InputError("landmarks: non-positive image dimensions");
  std::set<int> seen;
  for (const auto& l : landmarks) {
    if (l.index < 0 || l.index > 67) throw InputError("landmarks: index " + std::to_string(l.index) + " outside [0, 67]");
    if (!seen.insert(l.index).second) throw InputError("landmarks: duplicate index " + std::to_string(l.index));
    if (!(l.u >= 0.0 && l.u < image_width && l.v >= 0.0 && l.v < image_height))
      throw InputError("landmarks: landmark " + std::to_string(l.index) + " lies outside the image");
  }
}

std::optional<Landmark> LandmarkSet::find(int index) const {
  for (const auto& l : landmarks)
    if (l.index == index) return l;
  return std::nullopt;
}

PointCloud depth_to_cloud(const DepthFrame& frame) {
  frame.validate();
  const auto& k = frame.intrinsics;
  std::vector<Point3> pts;
  for (int v = 0; v < frame.height; ++v) {
    for (int u = 0; u < frame.width; ++u) {
      const auto raw = frame.at(u, v);
      if (raw == 0) continue;
      const double z = frame.to_mm(raw);
      pts.emplace_back((u - k.cx) * z / k.fx, (v - k.cy) * z / k.fy, z);
    }
  }
  if (pts.empty()) throw PipelineError("empty depth frame");
  return PointCloud(std::move(pts));
}

LandmarkCloud lift_landmarks(const DepthFrame& frame, const LandmarkSet& landmarks, int window) {
  frame.validate();
  landmarks.validate();
  if (window < 1 || window % 2 == 0) throw InputError("lift_landmarks: window must be a positive odd pixel span");
  if (landmarks.image_width != frame.width || landmarks.image_height != frame.height)
    throw InputError("lift_landmarks: landmark image size does not match the depth frame");

  auto sorted = landmarks.landmarks;
  std::sort(sorted.begin(), sorted.end(), [](const Landmark& a, const Landmark& b) { return a.index < b.index; });

  const auto& k = frame.intrinsics;
  const int half = window / 2;
  std::vector<Point3> pts;
  std::vector<int> kept;
  std::vector<std::uint16_t> samples;
  for (const auto& l : sorted) {
    const int pu = nearest_pixel(l.u, frame.width);
    const int pv = nearest_pixel(l.v, frame.height);
    double z = 0.0;
    if (const auto raw = frame.at(pu, pv); raw != 0) {
      z = frame.to_mm(raw);
    } else {
      samples.clear();
      for (int dv = -half; dv <= half; ++dv)
        for (int du = -half; du <= half; ++du) {
          const int u = pu + du, v = pv + dv;
          if (u < 0 || v < 0 || u >= frame.width || v >= frame.height) continue;
          if (const auto s = frame.at(u, v); s != 0) samples.push_back(s);
        }
      if (samples.empty()) continue;
      std::sort(samples.begin(), samples.end());
      const std::size_t m = samples.size() / 2;
      const double median = samples.size() % 2 == 1 ? frame.to_mm(samples[m])
                                                    : 0.5 * (frame.to_mm(samples[m - 1]) + frame.to_mm(samples[m]));
      z = median;
    }
    pts.emplace_back((l.u - k.cx) * z / k.fx, (l.v - k.cy) * z / k.fy, z);
    kept.push_back(l.index);
  }
  if (pts.empty()) throw PipelineError("no landmark could be lifted: all landmark windows lack valid depth");
  return {PointCloud(std::move(pts)), std::move(kept)};
}

LandmarkSet select_eyes_nose(const LandmarkSet& landmarks) {
  LandmarkSet out{landmarks.image_width, landmarks.image_height, {}};
  for (const auto& l : landmarks.landmarks)
    if (l.index >= kEyesNoseFirst && l.index <= kEyesNoseLast) out.landmarks.push_back(l);
  std::sort(out.landmarks.begin(), out.landmarks.end(),
            [](const Landmark& a, const Landmark& b) { return a.index < b.index; });
  return out;
}

PointCloud segment_region(const PointCloud& cloud, const PointCloud& keypoints, double margin_mm) {
  if (keypoints.empty()) throw InputError("segment_region: no keypoints");
  if (!(margin_mm >= 0.0)) throw InputError("segment_region: margin must be non-negative");
  Point3 lo = keypoints[0], hi = keypoints[0];
  for (const auto& p : keypoints.points()) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  lo.array() -= margin_mm;
  hi.array() += margin_mm;

  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto& p = cloud[i];
    if ((p.array() >= lo.array()).all() && (p.array() <= hi.array()).all()) keep.push_back(i);
  }
  if (keep.empty()) throw PipelineError("segmentation produced empty cloud");
  return cloud.select(keep);
}

std::filesystem::path intrinsics_sidecar(const std::filesystem::path& depth_pgm) {
  auto p = depth_pgm;
  p.replace_extension();
  p += ".intrinsics.json";
  return p;
}

CameraIntrinsics read_intrinsics(const std::filesystem::path& path) {
  const auto j = read_json(path);
  CameraIntrinsics k;
  k.fx = json_get<double>(j, "fx", path);
  k.fy = json_get<double>(j, "fy", path);
  k.cx = json_get<double>(j, "cx", path);
  k.cy = json_get<double>(j, "cy", path);
  k.depth_scale = json_get<double>(j, "depth_scale", path);
  k.validate();
  return k;
}

void write_intrinsics(const std::filesystem::path& path, const CameraIntrinsics& k) {
  nlohmann::json j = {{"fx", k.fx}, {"fy", k.fy}, {"cx", k.cx}, {"cy", k.cy}, {"depth_scale", k.depth_scale}};
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  out << j.dump(2) << "\n";
}

DepthFrame read_depth_frame(const std::filesystem::path& pgm, const std::optional<std::filesystem::path>& intrinsics) {
  auto img = read_pgm16(pgm);
  DepthFrame f;
  f.width = img.width;
  f.height = img.height;
  f.depth = std::move(img.pixels);
  f.intrinsics = read_intrinsics(intrinsics.value_or(intrinsics_sidecar(pgm)));
  f.validate();
  return f;
}

void write_depth_frame(const std::filesystem::path& pgm, const DepthFrame& frame) {
  frame.validate();
  write_pgm16(pgm, GrayImage<std::uint16_t>{frame.width, frame.height, frame.depth});
  write_intrinsics(intrinsics_sidecar(pgm), frame.intrinsics);
}

LandmarkSet read_landmarks(const std::filesystem::path& path) {
  const auto j = read_json(path);
  LandmarkSet s;
  s.image_width = json_get<int>(j, "image_width", path);
  s.image_height = json_get<int>(j, "image_height", path);
  if (!j.contains("landmarks") || !j["landmarks"].is_array())
    throw InputError(path.string() + ": 'landmarks' must be an array");
  for (const auto& e : j["landmarks"]) {
    Landmark l;
    l.index = json_get<int>(e, "index", path);
    l.u = json_get<double>(e, "u", path);
    l.v = json_get<double>(e, "v", path);
    s.landmarks.push_back(l);
  }
  s.validate();
  return s;
}

void write_landmarks(const std::filesystem::path& path, const LandmarkSet& landmarks) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& l : landmarks.landmarks) arr.push_back({{"index", l.index}, {"u", l.u}, {"v", l.v}});
  nlohmann::json j = {{"image_width", landmarks.image_width}, {"image_height", landmarks.image_height}, {"landmarks", arr}};
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  out << j.dump(2) << "\n";
}

}  // namespace facereg
