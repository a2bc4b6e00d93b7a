#include "facereg/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "facereg/error.hpp"
#include "facereg/parallel.hpp"
#include "json_util.hpp"

namespace facereg {

namespace {

// Feature layout in the CT frame (mm).
constexpr double kNoseTop = 12.0;
constexpr double kNoseTip = -22.0;
constexpr double kNostrilDrop = 13.0;
constexpr double kEyeY = 18.0;
constexpr double kBrowY = 31.0;
constexpr double kBrowHeight = 5.0;
constexpr double kValueSlope = 200.0;  // volume units per mm of implicit value
constexpr double kMaxValue = 2000.0;

double gauss(double d2, double sigma) { return std::exp(-d2 / (2.0 * sigma * sigma)); }

double smoothstep(double t) {
  t = std::clamp(t, 0.0, 1.0);
  return t * t * (3.0 - 2.0 * t);
}

double face_relief(const PhantomSpec& s, double x, double y) {
  const double a = s.nose_amplitude;
  const double t = std::clamp((kNoseTop - y) / (kNoseTop - kNoseTip), 0.0, 1.0);
  double h;
  if (y > kNoseTop)
    h = 0.25 * a * gauss((y - kNoseTop) * (y - kNoseTop), 10.0);
  else if (y >= kNoseTip)
    h = a * (0.25 + 0.75 * t);
  else
    h = a * gauss((y - kNoseTip) * (y - kNoseTip), 5.0);
  const double w = s.nose_width * (0.6 + 0.6 * t);
  double f = h * gauss(x * x, w);

  const double ala_x = 1.4 * s.nose_width;
  const double ala_y = kNoseTip - 4.0;
  const double ala_sigma = 0.6 * s.nose_width;
  for (double sx : {-1.0, 1.0}) {
    const double dx = x - sx * ala_x, dy = y - ala_y;
    f += 0.3 * a * gauss(dx * dx + dy * dy, ala_sigma);
  }

  f += kBrowHeight * gauss((y - kBrowY) * (y - kBrowY), 5.0) * gauss(x * x, 38.0);

  const double half = 0.5 * s.eye_separation;
  for (double sx : {-1.0, 1.0}) {
    const double dx = (x - sx * half) / s.eye_radius;
    const double dy = (y - kEyeY) / (0.7 * s.eye_radius);
    f -= s.eye_depth * std::exp(-0.5 * (dx * dx + dy * dy));
  }
  return f;
}

double top_of_face(const PhantomSpec& s) { return s.head_radii.z() + s.nose_amplitude + kBrowHeight; }

// Outermost surface crossing along -z at (x, y).
Point3 surface_point(const PhantomSpec& s, double x, double y) {
  double hi = top_of_face(s) + 10.0;
  if (phantom_implicit(s, {x, y, hi}) <= 0.0) throw PipelineError("phantom surface above search range");
  double lo = hi;
  while (phantom_implicit(s, {x, y, lo}) > 0.0) {
    hi = lo;
    lo -= 0.25;
    if (lo < 0.0) throw PipelineError("no phantom surface at landmark position");
  }
  for (int it = 0; it < 60; ++it) {
    const double mid = 0.5 * (lo + hi);
    (phantom_implicit(s, {x, y, mid}) > 0.0 ? hi : lo) = mid;
  }
  return {x, y, 0.5 * (lo + hi)};
}

// Landmarks 27..47 in the CT frame.
std::vector<Point3> analytic_landmarks(const PhantomSpec& s) {
  std::vector<std::pair<double, double>> xy;
  for (int k = 0; k < 4; ++k) xy.emplace_back(0.0, kNoseTop + (kNoseTip - kNoseTop) * k / 3.0);
  const double base_y = kNoseTip - kNostrilDrop;
  for (int k = -2; k <= 2; ++k) xy.emplace_back(0.7 * s.nose_width * k, base_y);
  const double ea = 1.1 * s.eye_radius, eb = 0.45 * s.eye_radius;
  const double half = 0.5 * s.eye_separation;
  const double deg = std::acos(-1.0) / 180.0;
  // Subject's right eye (-x): outer corner, upper outer, upper inner, inner
  // corner, lower inner, lower outer.
  for (double th : {180.0, 120.0, 60.0, 0.0, -60.0, -120.0})
    xy.emplace_back(-half + ea * std::cos(th * deg), kEyeY + eb * std::sin(th * deg));
  // Left eye (+x): inner corner, upper inner, upper outer, outer corner,
  // lower outer, lower inner.
  for (double th : {180.0, 120.0, 60.0, 0.0, -60.0, -120.0})
    xy.emplace_back(half + ea * std::cos(th * deg), kEyeY + eb * std::sin(th * deg));
  std::vector<Point3> out;
  for (const auto& [x, y] : xy) out.push_back(surface_point(s, x, y));
  return out;
}

ScalarVolume build_volume(const PhantomSpec& s) {
  ScalarVolume vol;
  vol.dims = s.dims;
  vol.spacing = Vector3::Constant(s.spacing_mm);
  const double h = s.spacing_mm;
  vol.origin = Point3(-0.5 * (s.dims[0] - 1) * h, -0.5 * (s.dims[1] - 1) * h,
                      top_of_face(s) + 4.0 * h - (s.dims[2] - 1) * h);
  vol.values.assign(static_cast<std::size_t>(s.dims[0]) * s.dims[1] * s.dims[2], 0.0f);
  // One task per (j, k) row of voxels.
  parallel_for(0, static_cast<std::size_t>(s.dims[1]) * s.dims[2], [&](std::size_t row) {
    const int j = static_cast<int>(row % s.dims[1]);
    const int k = static_cast<int>(row / s.dims[1]);
    for (int i = 0; i < s.dims[0]; ++i) {
      const double f = phantom_implicit(s, vol.position(i, j, k));
      const double v = std::clamp(std::round(kPhantomIso - kValueSlope * f), 0.0, kMaxValue);
      vol.values[vol.linear(i, j, k)] = static_cast<float>(v);
    }
  });
  return vol;
}

// Depth (camera z, mm) of the first surface hit along pixel (u, v), or NaN.
double cast_ray(const PhantomSpec& s, const RigidTransform& world_to_ct, const RigidTransform& cam_to_world,
                double u, double v, double bound) {
  const Vector3 d_cam((u - s.cx) / s.fx, (v - s.cy) / s.fy, 1.0);
  const Point3 o = world_to_ct.apply(cam_to_world.translation());
  const Vector3 d = world_to_ct.apply_direction(cam_to_world.apply_direction(d_cam));
  // |o + t d|^2 = bound^2
  const double a = d.squaredNorm(), b = o.dot(d), c = o.squaredNorm() - bound * bound;
  const double disc = b * b - a * c;
  if (disc <= 0.0) return std::nan("");
  const double t_exit = (-b + std::sqrt(disc)) / a;
  double t = std::max(0.0, (-b - std::sqrt(disc)) / a);
  const double dt = 0.5 / std::sqrt(a);
  double prev = t;
  if (phantom_implicit(s, o + t * d) <= 0.0) throw PipelineError("camera inside the phantom");
  while (t < t_exit) {
    prev = t;
    t += dt;
    if (phantom_implicit(s, o + t * d) <= 0.0) {
      double lo = prev, hi = t;
      for (int it = 0; it < 40; ++it) {
        const double mid = 0.5 * (lo + hi);
        (phantom_implicit(s, o + mid * d) > 0.0 ? lo : hi) = mid;
      }
      return 0.5 * (lo + hi);
    }
  }
  return std::nan("");
}

void require(bool ok, const std::string& what) {
  if (!ok) throw InputError("phantom spec: " + what);
}

}  // namespace

void PhantomSpec::validate() const {
  for (int d : dims) require(d >= 2, "volume dims must be >= 2");
  require(std::isfinite(spacing_mm) && spacing_mm > 0.0, "spacing must be > 0");
  require(head_radii.allFinite() && head_radii.minCoeff() > 0.0, "head radii must be > 0");
  require(std::isfinite(nose_amplitude) && nose_amplitude >= 0.0, "nose amplitude must be >= 0");
  require(std::isfinite(nose_width) && nose_width > 0.0, "nose width must be > 0");
  require(std::isfinite(eye_depth) && eye_depth >= 0.0, "eye depth must be >= 0");
  require(std::isfinite(eye_radius) && eye_radius > 0.0, "eye radius must be > 0");
  require(std::isfinite(eye_separation) && eye_separation > 0.0, "eye separation must be > 0");
  require(image_width > 0 && image_height > 0, "image size must be positive");
  intrinsics().validate();
  require(viewpoint.allFinite(), "viewpoint must be finite");
  require(view_axis.allFinite() && view_axis.norm() > 0.0, "view axis must be non-zero");
  require(std::isfinite(noise_sigma) && noise_sigma >= 0.0, "noise sigma must be >= 0");
  require(std::isfinite(ct_landmark_jitter_px) && ct_landmark_jitter_px >= 0.0, "landmark jitter must be >= 0");
  require(ct_dropped_landmarks >= 0 && ct_dropped_landmarks <= 18, "dropped landmarks must be in [0, 18]");
  require(std::isfinite(render_resolution_mm) && render_resolution_mm > 0.0, "render resolution must be > 0");
  require(std::isfinite(source_margin_mm) && source_margin_mm >= 0.0, "source margin must be >= 0");
  require(std::isfinite(target_margin_mm) && target_margin_mm >= 0.0, "target margin must be >= 0");
  for (const auto* o : {&iss_salient_radius_mm, &iss_nonmax_radius_mm, &harris_radius_mm, &sift_min_scale_mm,
                        &sift_contrast_threshold})
    require(!o->has_value() || (std::isfinite(**o) && **o > 0.0), "detector overrides must be > 0");
  require(!harris_threshold || std::isfinite(*harris_threshold), "harris threshold must be finite");
}

CameraIntrinsics PhantomSpec::intrinsics() const {
  CameraIntrinsics k;
  k.fx = fx;
  k.fy = fy;
  k.cx = cx;
  k.cy = cy;
  k.depth_scale = depth_scale;
  return k;
}

RigidTransform PhantomSpec::camera_to_world() const {
  const Vector3 z = view_axis.normalized();
  Vector3 up = Vector3::UnitY();
  if (std::abs(z.dot(up)) > 0.9) up = Vector3::UnitZ();
  const Vector3 y = -(up - up.dot(z) * z).normalized();
  const Vector3 x = y.cross(z);
  Eigen::Matrix3d r;
  r.col(0) = x;
  r.col(1) = y;
  r.col(2) = z;
  return RigidTransform(r, viewpoint);
}

double phantom_implicit(const PhantomSpec& s, const Point3& p) {
  const Vector3 q = p.cwiseQuotient(s.head_radii);
  const double base = (q.norm() - 1.0) * s.head_radii.z();
  const double weight = smoothstep(p.z() / 40.0);
  if (weight == 0.0) return base;
  return base - weight * face_relief(s, p.x(), p.y());
}

PhantomData generate_phantom(const PhantomSpec& spec) {
  spec.validate();
  PhantomData out;
  out.ground_truth = spec.head_pose;
  out.camera_to_world = spec.camera_to_world();
  out.volume = build_volume(spec);

  const std::vector<Point3> lm = analytic_landmarks(spec);
  out.surface_landmarks_3d.cloud = PointCloud(lm);
  for (int i = 27; i <= 47; ++i) out.surface_landmarks_3d.indices.push_back(i);

  const RigidTransform world_to_ct = invert(spec.head_pose);
  const double bound = spec.head_radii.maxCoeff() + spec.nose_amplitude + kBrowHeight + 10.0;
  const int w = spec.image_width, h = spec.image_height;
  std::vector<double> depth(static_cast<std::size_t>(w) * h);
  parallel_for(0, depth.size(), [&](std::size_t i) {
    depth[i] = cast_ray(spec, world_to_ct, out.camera_to_world, static_cast<double>(i % w),
                        static_cast<double>(i / w), bound);
  });

  DepthFrame& frame = out.depth_frame;
  frame.width = w;
  frame.height = h;
  frame.intrinsics = spec.intrinsics();
  frame.depth.assign(depth.size(), 0);
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  const double unit_mm = spec.depth_scale * 1000.0;
  std::size_t valid = 0;
  for (std::size_t i = 0; i < depth.size(); ++i) {
    if (std::isnan(depth[i])) continue;
    const double z = spec.noise_sigma > 0.0 ? depth[i] + spec.noise_sigma * noise(rng) : depth[i];
    const double raw = std::round(z / unit_mm);
    if (raw < 1.0 || raw > 65535.0) continue;
    frame.depth[i] = static_cast<std::uint16_t>(raw);
    ++valid;
  }
  if (valid == 0) throw PipelineError("camera does not see the phantom");

  const RigidTransform world_to_cam = invert(out.camera_to_world);
  out.camera_landmarks.image_width = w;
  out.camera_landmarks.image_height = h;
  for (std::size_t i = 0; i < lm.size(); ++i) {
    const Point3 c = world_to_cam.apply(spec.head_pose.apply(lm[i]));
    if (c.z() <= 0.0) throw PipelineError("landmark behind the camera");
    const auto [u, v] = frame.intrinsics.project(c);
    if (u < 0.0 || v < 0.0 || u > w - 1 || v > h - 1) throw PipelineError("landmark outside the camera image");
    out.camera_landmarks.landmarks.push_back({27 + static_cast<int>(i), u, v});
  }
  return out;
}

LandmarkSet ct_image_landmarks(const PhantomSpec& spec, const LandmarkCloud& surface, const NormalAngleImage& image) {
  if (!image.projection) throw InputError("normal-angle image has no projection");
  std::mt19937_64 rng(spec.seed ^ 0x9E3779B97F4A7C15ULL);
  std::uniform_real_distribution<double> jitter(-spec.ct_landmark_jitter_px, spec.ct_landmark_jitter_px);
  std::vector<std::size_t> order(surface.indices.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_drop = std::min<std::size_t>(static_cast<std::size_t>(spec.ct_dropped_landmarks), order.size());
  const std::set<std::size_t> dropped(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_drop));

  LandmarkSet out;
  out.image_width = image.width;
  out.image_height = image.height;
  for (std::size_t i = 0; i < surface.indices.size(); ++i) {
    auto [u, v] = image.projection->project(surface.cloud[i]);
    const double du = jitter(rng), dv = jitter(rng);
    if (dropped.count(i)) continue;
    u = std::clamp(u + du, 0.0, static_cast<double>(image.width - 1));
    v = std::clamp(v + dv, 0.0, static_cast<double>(image.height - 1));
    out.landmarks.push_back({surface.indices[i], u, v});
  }
  return out;
}

namespace {

using nlohmann::json;

json vec_json(const Vector3& v) { return {v.x(), v.y(), v.z()}; }

Vector3 vec_from(const json& j, const char* key) {
  if (!j.is_array() || j.size() != 3) throw InputError(std::string("phantom spec: ") + key + " needs 3 numbers");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw InputError("phantom spec: " + where + " must be an object");
  for (const auto& [key, _] : j.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }))
      throw InputError("phantom spec: unknown key '" + key + "' in " + where);
  }
}

template <class T>
void get_if(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

void get_opt(const json& j, const char* key, std::optional<double>& out) {
  if (j.contains(key)) out = j.at(key).get<double>();
}

}  // namespace

PhantomSpec phantom_spec_from_json(const std::string& text) {
  PhantomSpec s;
  try {
    const json j = json::parse(text);
    check_keys(j, {"description", "seed", "volume", "head_radii", "nose", "eyes", "camera", "noise_sigma", "head_pose", "ct",
                   "segmentation", "keypoints"},
               "spec");
    get_if(j, "description", s.description);
    get_if(j, "seed", s.seed);
    if (j.contains("volume")) {
      const json& v = j["volume"];
      check_keys(v, {"dims", "spacing_mm"}, "volume");
      get_if(v, "dims", s.dims);
      get_if(v, "spacing_mm", s.spacing_mm);
    }
    if (j.contains("head_radii")) s.head_radii = vec_from(j["head_radii"], "head_radii");
    if (j.contains("nose")) {
      const json& n = j["nose"];
      check_keys(n, {"amplitude", "width"}, "nose");
      get_if(n, "amplitude", s.nose_amplitude);
      get_if(n, "width", s.nose_width);
    }
    if (j.contains("eyes")) {
      const json& e = j["eyes"];
      check_keys(e, {"depth", "radius", "separation"}, "eyes");
      get_if(e, "depth", s.eye_depth);
      get_if(e, "radius", s.eye_radius);
      get_if(e, "separation", s.eye_separation);
    }
    if (j.contains("camera")) {
      const json& c = j["camera"];
      check_keys(c, {"width", "height", "fx", "fy", "cx", "cy", "depth_scale", "viewpoint", "view_axis"}, "camera");
      get_if(c, "width", s.image_width);
      get_if(c, "height", s.image_height);
      get_if(c, "fx", s.fx);
      get_if(c, "fy", s.fy);
      get_if(c, "cx", s.cx);
      get_if(c, "cy", s.cy);
      get_if(c, "depth_scale", s.depth_scale);
      if (c.contains("viewpoint")) s.viewpoint = vec_from(c["viewpoint"], "viewpoint");
      if (c.contains("view_axis")) s.view_axis = vec_from(c["view_axis"], "view_axis");
    }
    get_if(j, "noise_sigma", s.noise_sigma);
    if (j.contains("head_pose")) s.head_pose = detail::transform_from(j["head_pose"]);
    if (j.contains("ct")) {
      const json& c = j["ct"];
      check_keys(c, {"landmark_jitter_px", "dropped_landmarks", "render_resolution_mm"}, "ct");
      get_if(c, "landmark_jitter_px", s.ct_landmark_jitter_px);
      get_if(c, "dropped_landmarks", s.ct_dropped_landmarks);
      get_if(c, "render_resolution_mm", s.render_resolution_mm);
    }
    if (j.contains("segmentation")) {
      const json& m = j["segmentation"];
      check_keys(m, {"source_margin_mm", "target_margin_mm"}, "segmentation");
      get_if(m, "source_margin_mm", s.source_margin_mm);
      get_if(m, "target_margin_mm", s.target_margin_mm);
    }
    if (j.contains("keypoints")) {
      const json& k = j["keypoints"];
      check_keys(k, {"iss_salient_radius_mm", "iss_nonmax_radius_mm", "harris_radius_mm", "harris_threshold",
                     "sift_min_scale_mm", "sift_contrast_threshold"},
                 "keypoints");
      get_opt(k, "iss_salient_radius_mm", s.iss_salient_radius_mm);
      get_opt(k, "iss_nonmax_radius_mm", s.iss_nonmax_radius_mm);
      get_opt(k, "harris_radius_mm", s.harris_radius_mm);
      get_opt(k, "harris_threshold", s.harris_threshold);
      get_opt(k, "sift_min_scale_mm", s.sift_min_scale_mm);
      get_opt(k, "sift_contrast_threshold", s.sift_contrast_threshold);
    }
  } catch (const json::exception& e) {
    throw InputError(std::string("invalid phantom spec JSON: ") + e.what());
  }
  s.validate();
  return s;
}

std::string to_json(const PhantomSpec& s) {
  json j;
  if (!s.description.empty()) j["description"] = s.description;
  j["seed"] = s.seed;
  j["volume"] = {{"dims", s.dims}, {"spacing_mm", s.spacing_mm}};
  j["head_radii"] = vec_json(s.head_radii);
  j["nose"] = {{"amplitude", s.nose_amplitude}, {"width", s.nose_width}};
  j["eyes"] = {{"depth", s.eye_depth}, {"radius", s.eye_radius}, {"separation", s.eye_separation}};
  j["camera"] = {{"width", s.image_width}, {"height", s.image_height}, {"fx", s.fx},
                 {"fy", s.fy},          {"cx", s.cx},                 {"cy", s.cy},
                 {"depth_scale", s.depth_scale}, {"viewpoint", vec_json(s.viewpoint)},
                 {"view_axis", vec_json(s.view_axis)}};
  j["noise_sigma"] = s.noise_sigma;
  j["head_pose"] = detail::transform_json(s.head_pose);
  j["ct"] = {{"landmark_jitter_px", s.ct_landmark_jitter_px},
             {"dropped_landmarks", s.ct_dropped_landmarks},
             {"render_resolution_mm", s.render_resolution_mm}};
  j["segmentation"] = {{"source_margin_mm", s.source_margin_mm}, {"target_margin_mm", s.target_margin_mm}};
  json k = json::object();
  auto put = [&](const char* key, const std::optional<double>& v) {
    if (v) k[key] = *v;
  };
  put("iss_salient_radius_mm", s.iss_salient_radius_mm);
  put("iss_nonmax_radius_mm", s.iss_nonmax_radius_mm);
  put("harris_radius_mm", s.harris_radius_mm);
  put("harris_threshold", s.harris_threshold);
  put("sift_min_scale_mm", s.sift_min_scale_mm);
  put("sift_contrast_threshold", s.sift_contrast_threshold);
  if (!k.empty()) j["keypoints"] = k;
  return j.dump(2);
}

PhantomSpec read_phantom_spec(const std::filesystem::path& path) {
  return phantom_spec_from_json(detail::slurp(path));
}

void write_phantom_spec(const std::filesystem::path& path, const PhantomSpec& spec) {
  detail::dump(path, to_json(spec));
}

}  // namespace facereg
