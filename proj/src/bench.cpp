#include "facereg/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <random>
#include <sstream>

#include "facereg/error.hpp"
#include "facereg/parallel.hpp"
#include "json_util.hpp"

namespace facereg {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr std::size_t kNormalNeighbors = 20;

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

struct Trial {
  std::size_t src_features = 0, tgt_features = 0;
  RegistrationResult coarse, fine;
  double t_extract = 0.0, t_coarse = 0.0, t_fine = 0.0;
};

Trial run_trial(Method m, const PhantomSpec& spec, const PhantomData& data, const CtSide& ct,
                const CameraSide& cam) {
  Trial t;
  PointCloud src_kp, tgt_kp;
  const auto t0 = std::chrono::steady_clock::now();
  if (m == Method::Ours) {
    // Re-run both landmark paths so the extraction column is comparable.
    LandmarkCloud lifted = lift_landmarks(data.depth_frame, select_eyes_nose(data.camera_landmarks));
    src_kp = apply_transform(data.camera_to_world, lifted.cloud);
    tgt_kp = backproject_landmarks(ct.image, ct.image_landmarks).cloud;
  } else {
    src_kp = detect_keypoints(m, cam.segmented, keypoint_params_for(spec, cam.segmented));
    tgt_kp = detect_keypoints(m, ct.segmented, keypoint_params_for(spec, ct.segmented));
  }
  t.t_extract = seconds_since(t0);
  t.src_features = src_kp.size();
  t.tgt_features = tgt_kp.size();

  const auto t1 = std::chrono::steady_clock::now();
  t.coarse = coarse_register(src_kp, tgt_kp);
  t.t_coarse = seconds_since(t1);
  const auto t2 = std::chrono::steady_clock::now();
  t.fine = fine_register(cam.segmented, ct.segmented, t.coarse.transform);
  t.t_fine = seconds_since(t2);
  return t;
}

BenchRow run_method(Method m, const PhantomSpec& spec, const PhantomData& data, const CtSide& ct,
                    const CameraSide& cam, const BenchOptions& opt) {
  BenchRow row;
  row.method = method_name(m);
  std::vector<Trial> trials(opt.trials);
  std::vector<std::string> errors(opt.trials);
  auto one = [&](std::size_t i) {
    try {
      trials[i] = run_trial(m, spec, data, ct, cam);
    } catch (const InputError& e) {
      errors[i] = e.what();
    } catch (const PipelineError& e) {
      errors[i] = e.what();
    }
  };
  if (opt.parallel_trials) {
    parallel_for(0, opt.trials, one);
  } else {
    for (std::size_t i = 0; i < opt.trials; ++i) one(i);
  }
  const auto bad = std::find_if(errors.begin(), errors.end(), [](const std::string& e) { return !e.empty(); });
  if (bad != errors.end()) {
    row.error = *bad;
    row.failed = true;
    row.coarse_rmse_mm = row.fine_rmse_mm = kInf;
    row.rotation_error_deg = row.translation_error_mm = kInf;
    return row;
  }

  // Every trial computes the same registration; RMSEs come from the first.
  const Trial& first = trials.front();
  row.src_features = first.src_features;
  row.tgt_features = first.tgt_features;
  row.coarse_rmse_mm = evaluate_rmse(cam.segmented, ct.segmented, first.coarse.transform);
  row.fine_rmse_mm = evaluate_rmse(cam.segmented, ct.segmented, first.fine.transform);
  row.converged = first.coarse.converged && first.fine.converged;
  for (const Trial& t : trials) {
    row.t_coarse_s += t.t_coarse;
    row.t_fine_s += t.t_fine;
    row.t_extract_s += t.t_extract;
  }
  const double n = static_cast<double>(trials.size());
  row.t_coarse_s /= n;
  row.t_fine_s /= n;
  row.t_extract_s /= n;
  row.t_total_s = row.t_coarse_s + row.t_fine_s;

  const RigidTransform truth = registration_truth(data);
  row.rotation_error_deg = rotation_error(first.fine.transform, truth) * 180.0 / std::acos(-1.0);
  row.translation_error_mm = (first.fine.transform.translation() - truth.translation()).norm();
  row.failed = !(row.fine_rmse_mm < kFailureRmseMm);
  return row;
}

PhantomData through_files(const PhantomData& data, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_volume(dir / "phantom.raw", data.volume);
  write_depth_frame(dir / "depth.pgm", data.depth_frame);
  write_landmarks(dir / "camera_landmarks.json", data.camera_landmarks);
  PhantomData out = data;
  out.volume = read_volume(dir / "phantom.raw");
  out.depth_frame = read_depth_frame(dir / "depth.pgm");
  out.camera_landmarks = read_landmarks(dir / "camera_landmarks.json");
  return out;
}

}  // namespace

std::string method_name(Method m) {
  switch (m) {
    case Method::Harris: return "harris";
    case Method::Iss: return "iss";
    case Method::Ours: return "ours";
    case Method::Sift: return "sift";
  }
  throw InputError("unknown method");
}

Method parse_method(const std::string& name) {
  for (Method m : all_methods())
    if (method_name(m) == name) return m;
  throw InputError("unknown method '" + name + "' (expected ours, iss, harris or sift)");
}

std::vector<Method> parse_methods(const std::string& list) {
  std::vector<Method> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const Method m = parse_method(item);
    if (std::find(out.begin(), out.end(), m) == out.end()) out.push_back(m);
  }
  if (out.empty()) throw InputError("empty method list");
  return out;
}

std::vector<Method> all_methods() { return {Method::Harris, Method::Iss, Method::Ours, Method::Sift}; }

CtSide prepare_ct_side(const PhantomSpec& spec, const PhantomData& data) {
  CtSide ct;
  ct.mesh = marching_cubes(data.volume, kPhantomIso);
  ct.surface = mesh_to_cloud(ct.mesh);
  ct.image = render_normal_angle_image(ct.mesh, -spec.view_axis.normalized(), spec.render_resolution_mm);
  ct.image_landmarks = ct_image_landmarks(spec, data.surface_landmarks_3d, ct.image);
  ct.landmarks = backproject_landmarks(ct.image, ct.image_landmarks);
  ct.segmented = segment_region(ct.surface, ct.landmarks.cloud, spec.target_margin_mm);
  return ct;
}

CameraSide prepare_camera_side(const PhantomSpec& spec, const PhantomData& data) {
  CameraSide cam;
  cam.cloud = apply_transform(data.camera_to_world, depth_to_cloud(data.depth_frame));
  cam.landmarks = lift_landmarks(data.depth_frame, select_eyes_nose(data.camera_landmarks));
  if (cam.landmarks.cloud.empty()) throw PipelineError("no camera landmark could be lifted");
  cam.landmarks.cloud = apply_transform(data.camera_to_world, cam.landmarks.cloud);
  const PointCloud region = segment_region(cam.cloud, cam.landmarks.cloud, spec.source_margin_mm);
  cam.segmented = estimate_normals(region, data.camera_to_world.translation(), kNormalNeighbors);
  return cam;
}

KeypointParams keypoint_params_for(const PhantomSpec& spec, const PointCloud& cloud) {
  KeypointParams p = default_keypoint_params(cloud);
  if (spec.iss_salient_radius_mm) p.iss.salient_radius = *spec.iss_salient_radius_mm;
  if (spec.iss_nonmax_radius_mm) p.iss.nonmax_radius = *spec.iss_nonmax_radius_mm;
  if (spec.harris_radius_mm) p.harris.radius = *spec.harris_radius_mm;
  if (spec.harris_threshold) p.harris.response_threshold = *spec.harris_threshold;
  if (spec.sift_min_scale_mm) p.sift.min_scale = *spec.sift_min_scale_mm;
  if (spec.sift_contrast_threshold) p.sift.contrast_threshold = *spec.sift_contrast_threshold;
  p.validate();
  return p;
}

PointCloud detect_keypoints(Method m, const PointCloud& cloud, const KeypointParams& params) {
  switch (m) {
    case Method::Iss: return iss_keypoints(cloud, params);
    case Method::Harris: return harris3d_keypoints(cloud, params);
    case Method::Sift: return sift3d_keypoints(cloud, params);
    case Method::Ours: break;
  }
  throw InputError("detect_keypoints: 'ours' uses landmarks, not a detector");
}

BenchReport run_comparison(const PhantomSpec& spec, const RigidTransform& perturbation,
                           const std::vector<Method>& methods, const BenchOptions& options) {
  if (options.trials == 0) throw InputError("trials must be >= 1");
  if (methods.empty()) throw InputError("no methods to compare");
  PhantomSpec posed = spec;
  posed.head_pose = compose(perturbation, spec.head_pose);
  PhantomData data = generate_phantom(posed);
  if (options.artifact_dir) data = through_files(data, *options.artifact_dir);
  const CtSide ct = prepare_ct_side(posed, data);
  return run_comparison(posed, data, ct, methods, options);
}

BenchReport run_comparison(const PhantomSpec& spec, const PhantomData& data, const CtSide& ct,
                           const std::vector<Method>& methods, const BenchOptions& options) {
  if (options.trials == 0) throw InputError("trials must be >= 1");
  if (methods.empty()) throw InputError("no methods to compare");
  BenchReport report;
  report.trials = options.trials;
  report.seed = spec.seed;
  std::optional<CameraSide> cam;
  std::string cam_error;
  try {
    cam = prepare_camera_side(spec, data);
  } catch (const PipelineError& e) {
    cam_error = e.what();
  }
  std::vector<Method> sorted = methods;
  std::sort(sorted.begin(), sorted.end(), [](Method a, Method b) { return method_name(a) < method_name(b); });
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  for (Method m : sorted) {
    if (cam) {
      report.rows.push_back(run_method(m, spec, data, ct, *cam, options));
    } else {
      BenchRow row;
      row.method = method_name(m);
      row.failed = true;
      row.error = cam_error;
      row.coarse_rmse_mm = row.fine_rmse_mm = row.rotation_error_deg = row.translation_error_mm = kInf;
      report.rows.push_back(row);
    }
  }
  return report;
}

std::vector<RigidTransform> perturbation_grid(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  auto unit = [&] {
    Vector3 v;
    do v = Vector3(g(rng), g(rng), g(rng));
    while (v.norm() < 1e-6);
    return Vector3(v.normalized());
  };
  const double deg = std::acos(-1.0) / 180.0;
  std::vector<RigidTransform> out;
  for (int r = 0; r < 5; ++r)
    for (int t = 0; t < 5; ++t) {
      const Vector3 axis = unit();
      const Vector3 dir = unit();
      out.push_back(RigidTransform::from_axis_angle(axis, 7.5 * r * deg, 12.5 * t * dir));
    }
  return out;
}

ReportFormat parse_report_format(const std::string& name) {
  if (name == "json") return ReportFormat::Json;
  if (name == "csv") return ReportFormat::Csv;
  if (name == "md" || name == "markdown") return ReportFormat::Markdown;
  throw InputError("unknown report format '" + name + "' (expected json, csv or md)");
}

namespace {

using nlohmann::json;

const char* kCsvHeader =
    "method,src_features,tgt_features,coarse_rmse_mm,fine_rmse_mm,t_coarse_s,t_fine_s,t_total_s,converged";

std::string num9(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::string fixed(double v, int digits) {
  if (!std::isfinite(v)) return "n/a";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

double number_or_inf(const json& j) { return j.is_null() ? kInf : j.get<double>(); }

std::string emit_json(const BenchReport& r) {
  json rows = json::array();
  for (const BenchRow& row : r.rows) {
    rows.push_back({{"method", row.method},
                    {"src_features", row.src_features},
                    {"tgt_features", row.tgt_features},
                    {"coarse_rmse_mm", finite_or_null(row.coarse_rmse_mm)},
                    {"fine_rmse_mm", finite_or_null(row.fine_rmse_mm)},
                    {"t_coarse_s", row.t_coarse_s},
                    {"t_fine_s", row.t_fine_s},
                    {"t_total_s", row.t_total_s},
                    {"converged", row.converged},
                    {"t_extract_s", row.t_extract_s},
                    {"rotation_error_deg", finite_or_null(row.rotation_error_deg)},
                    {"translation_error_mm", finite_or_null(row.translation_error_mm)},
                    {"failed", row.failed},
                    {"error", row.error}});
  }
  return json{{"trials", r.trials}, {"seed", r.seed}, {"rows", rows}}.dump(2);
}

std::string emit_csv(const BenchReport& r) {
  std::string out = std::string(kCsvHeader) + "\n";
  for (const BenchRow& row : r.rows) {
    out += row.method + "," + std::to_string(row.src_features) + "," + std::to_string(row.tgt_features) + "," +
           num9(row.coarse_rmse_mm) + "," + num9(row.fine_rmse_mm) + "," + num9(row.t_coarse_s) + "," +
           num9(row.t_fine_s) + "," + num9(row.t_total_s) + "," + (row.converged ? "true" : "false") + "\n";
  }
  return out;
}

std::string emit_markdown(const BenchReport& r) {
  std::string out = "Trials: " + std::to_string(r.trials) + ", seed: " + std::to_string(r.seed) + "\n\n";
  out +=
      "| Method | Features (src/tgt) | Coarse RMSE (mm) | Fine RMSE (mm) | T_c (s) | T_f (s) | T_t (s) | "
      "Extraction (s) | Rotation error (deg) | Converged | Status |\n";
  out += "|---|---|---|---|---|---|---|---|---|---|---|\n";
  for (const BenchRow& row : r.rows) {
    std::string status = row.error.empty() ? (row.failed ? "failed" : "ok") : "failed: " + row.error;
    std::replace(status.begin(), status.end(), '|', '/');
    out += "| " + row.method + " | " + std::to_string(row.src_features) + " / " + std::to_string(row.tgt_features) +
           " | " + fixed(row.coarse_rmse_mm, 4) + " | " + fixed(row.fine_rmse_mm, 4) + " | " +
           fixed(row.t_coarse_s, 4) + " | " + fixed(row.t_fine_s, 4) + " | " + fixed(row.t_total_s, 4) + " | " +
           fixed(row.t_extract_s, 4) + " | " + fixed(row.rotation_error_deg, 3) + " | " +
           (row.converged ? "yes" : "no") + " | " + status + " |\n";
  }
  return out;
}

double parse_double(const std::string& s, const char* what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw InputError(std::string("report CSV: bad ") + what + " '" + s + "'");
  }
}

std::size_t parse_count(const std::string& s, const char* what) {
  if (s.empty() || !std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; }))
    throw InputError(std::string("report CSV: bad ") + what + " '" + s + "'");
  return std::stoull(s);
}

}  // namespace

std::string report_emit(const BenchReport& report, ReportFormat format) {
  switch (format) {
    case ReportFormat::Json: return emit_json(report);
    case ReportFormat::Csv: return emit_csv(report);
    case ReportFormat::Markdown: return emit_markdown(report);
  }
  throw InputError("unknown report format");
}

BenchReport parse_report_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    BenchReport r;
    r.trials = j.at("trials").get<std::size_t>();
    r.seed = j.at("seed").get<std::uint64_t>();
    for (const json& jr : j.at("rows")) {
      BenchRow row;
      row.method = jr.at("method").get<std::string>();
      row.src_features = jr.at("src_features").get<std::size_t>();
      row.tgt_features = jr.at("tgt_features").get<std::size_t>();
      row.coarse_rmse_mm = number_or_inf(jr.at("coarse_rmse_mm"));
      row.fine_rmse_mm = number_or_inf(jr.at("fine_rmse_mm"));
      row.t_coarse_s = jr.at("t_coarse_s").get<double>();
      row.t_fine_s = jr.at("t_fine_s").get<double>();
      row.t_total_s = jr.at("t_total_s").get<double>();
      row.converged = jr.at("converged").get<bool>();
      row.t_extract_s = jr.at("t_extract_s").get<double>();
      row.rotation_error_deg = number_or_inf(jr.at("rotation_error_deg"));
      row.translation_error_mm = number_or_inf(jr.at("translation_error_mm"));
      row.failed = jr.at("failed").get<bool>();
      row.error = jr.at("error").get<std::string>();
      r.rows.push_back(row);
    }
    return r;
  } catch (const json::exception& e) {
    throw InputError(std::string("invalid report JSON: ") + e.what());
  }
}

BenchReport parse_report_csv(const std::string& text) {
  std::stringstream ss(text);
  std::string line;
  if (!std::getline(ss, line) || line != kCsvHeader) throw InputError("report CSV: unexpected header");
  BenchReport r;
  while (std::getline(ss, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) f.push_back(cell);
    if (f.size() != 9) throw InputError("report CSV: expected 9 fields, got " + std::to_string(f.size()));
    BenchRow row;
    row.method = f[0];
    row.src_features = parse_count(f[1], "src_features");
    row.tgt_features = parse_count(f[2], "tgt_features");
    row.coarse_rmse_mm = parse_double(f[3], "coarse_rmse_mm");
    row.fine_rmse_mm = parse_double(f[4], "fine_rmse_mm");
    row.t_coarse_s = parse_double(f[5], "t_coarse_s");
    row.t_fine_s = parse_double(f[6], "t_fine_s");
    row.t_total_s = parse_double(f[7], "t_total_s");
    if (f[8] != "true" && f[8] != "false") throw InputError("report CSV: bad converged '" + f[8] + "'");
    row.converged = f[8] == "true";
    r.rows.push_back(row);
  }
  return r;
}

}  // namespace facereg
