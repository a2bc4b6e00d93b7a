#include <cstdint>
#include <cstdio>
#include <fstream>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "facereg/bench.hpp"
#include "facereg/depth_io.hpp"
#include "facereg/error.hpp"
#include "facereg/keypoints.hpp"
#include "facereg/parallel.hpp"
#include "facereg/phantom.hpp"
#include "facereg/ply.hpp"
#include "facereg/registration.hpp"
#include "facereg/surface.hpp"

namespace fs = std::filesystem;
using namespace facereg;

namespace {

bool g_verbose = false;

void note(const std::string& msg) {
  if (g_verbose) std::cerr << msg << '\n';
}

Vector3 parse_vec3(const std::string& text, const char* what) {
  std::stringstream ss(text);
  std::string item;
  std::vector<double> v;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      v.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw InputError(std::string(what) + ": expected x,y,z but got '" + text + "'");
    }
  }
  if (v.size() != 3) throw InputError(std::string(what) + ": expected x,y,z but got '" + text + "'");
  return {v[0], v[1], v[2]};
}

PlyEncoding encoding(bool ascii) { return ascii ? PlyEncoding::Ascii : PlyEncoding::BinaryLittleEndian; }

// --- depth2cloud -----------------------------------------------------------

struct Depth2CloudArgs {
  std::string depth, intrinsics, out, pose;
  bool ascii = false;
};

void run_depth2cloud(const Depth2CloudArgs& a) {
  std::optional<fs::path> intr;
  if (!a.intrinsics.empty()) intr = a.intrinsics;
  const DepthFrame frame = read_depth_frame(a.depth, intr);
  PointCloud cloud = depth_to_cloud(frame);
  if (!a.pose.empty()) cloud = apply_transform(read_transform(a.pose), cloud);
  write_point_cloud(a.out, cloud, encoding(a.ascii));
  note("wrote " + std::to_string(cloud.size()) + " points to " + a.out);
}

// --- extract ---------------------------------------------------------------

struct ExtractArgs {
  std::string volume, out, cloud_out;
  double iso = 0.0;
  bool ascii = false;
};

void run_extract(const ExtractArgs& a) {
  const ScalarVolume vol = read_volume(a.volume);
  const TriangleMesh mesh = marching_cubes(vol, a.iso);
  write_mesh(a.out, mesh);
  if (!a.cloud_out.empty()) write_point_cloud(a.cloud_out, mesh_to_cloud(mesh), encoding(a.ascii));
  note("isosurface: " + std::to_string(mesh.vertices.size()) + " vertices, " +
       std::to_string(mesh.triangles.size()) + " triangles");
}

// --- render ----------------------------------------------------------------

struct RenderArgs {
  std::string mesh, axis = "0,0,1", out;
  double res = 1.0;
};

void run_render(const RenderArgs& a) {
  const Vector3 axis = parse_vec3(a.axis, "--axis");
  const TriangleMesh mesh = read_mesh(a.mesh);
  if (!(axis.norm() > 0.0)) throw InputError("--axis must be non-zero");
  const NormalAngleImage img = render_normal_angle_image(mesh, axis.normalized(), a.res);
  write_normal_angle_image(a.out, img);
  note("rendered " + std::to_string(img.width) + "x" + std::to_string(img.height));
}

// --- backproject / lift ----------------------------------------------------

struct BackprojectArgs {
  std::string image, landmarks, out;
  bool all = false;
  bool ascii = false;
};

void run_backproject(const BackprojectArgs& a) {
  const NormalAngleImage img = read_normal_angle_image(a.image);
  LandmarkSet lm = read_landmarks(a.landmarks);
  if (!a.all) lm = select_eyes_nose(lm);
  const LandmarkCloud kp = backproject_landmarks(img, lm);
  write_point_cloud(a.out, kp.cloud, encoding(a.ascii));
  note("back-projected " + std::to_string(kp.cloud.size()) + " landmarks");
}

struct LiftArgs {
  std::string depth, landmarks, intrinsics, pose, out;
  int window = 5;
  bool all = false;
  bool ascii = false;
};

PointCloud lift(const std::string& depth, const std::string& intrinsics, const std::string& landmarks, bool all,
                int window) {
  std::optional<fs::path> intr;
  if (!intrinsics.empty()) intr = intrinsics;
  const DepthFrame frame = read_depth_frame(depth, intr);
  LandmarkSet lm = read_landmarks(landmarks);
  if (!all) lm = select_eyes_nose(lm);
  return lift_landmarks(frame, lm, window).cloud;
}

void run_lift(const LiftArgs& a) {
  PointCloud kp = lift(a.depth, a.intrinsics, a.landmarks, a.all, a.window);
  if (!a.pose.empty()) kp = apply_transform(read_transform(a.pose), kp);
  write_point_cloud(a.out, kp, encoding(a.ascii));
  note("lifted " + std::to_string(kp.size()) + " landmarks");
}

// --- register --------------------------------------------------------------

struct KeypointFlags {
  std::optional<double> iss_salient, iss_nonmax, iss_g21, iss_g32;
  std::optional<std::size_t> iss_min_neighbors;
  std::optional<double> harris_radius, harris_threshold, harris_k;
  std::optional<double> sift_min_scale, sift_contrast;
  std::optional<int> sift_octaves, sift_scales;

  KeypointParams resolve(const PointCloud& cloud) const {
    KeypointParams p = default_keypoint_params(cloud);
    if (iss_salient) p.iss.salient_radius = *iss_salient;
    if (iss_nonmax) p.iss.nonmax_radius = *iss_nonmax;
    if (iss_g21) p.iss.gamma_21 = *iss_g21;
    if (iss_g32) p.iss.gamma_32 = *iss_g32;
    if (iss_min_neighbors) p.iss.min_neighbors = *iss_min_neighbors;
    if (harris_radius) p.harris.radius = *harris_radius;
    if (harris_threshold) p.harris.response_threshold = *harris_threshold;
    if (harris_k) p.harris.k_constant = *harris_k;
    if (sift_min_scale) p.sift.min_scale = *sift_min_scale;
    if (sift_contrast) p.sift.contrast_threshold = *sift_contrast;
    if (sift_octaves) p.sift.octaves = *sift_octaves;
    if (sift_scales) p.sift.scales_per_octave = *sift_scales;
    p.validate();
    return p;
  }
};

void add_keypoint_flags(CLI::App* cmd, KeypointFlags& k) {
  cmd->add_option("--iss-salient-radius", k.iss_salient, "ISS salient radius (mm)");
  cmd->add_option("--iss-nonmax-radius", k.iss_nonmax, "ISS non-maximum radius (mm)");
  cmd->add_option("--iss-gamma21", k.iss_g21, "ISS eigenvalue ratio l2/l1 bound");
  cmd->add_option("--iss-gamma32", k.iss_g32, "ISS eigenvalue ratio l3/l2 bound");
  cmd->add_option("--iss-min-neighbors", k.iss_min_neighbors, "ISS minimum neighbor count");
  cmd->add_option("--harris-radius", k.harris_radius, "Harris neighborhood radius (mm)");
  cmd->add_option("--harris-threshold", k.harris_threshold, "Harris response threshold");
  cmd->add_option("--harris-k", k.harris_k, "Harris k constant");
  cmd->add_option("--sift-min-scale", k.sift_min_scale, "SIFT smallest scale (mm)");
  cmd->add_option("--sift-octaves", k.sift_octaves, "SIFT octave count");
  cmd->add_option("--sift-scales", k.sift_scales, "SIFT scales per octave");
  cmd->add_option("--sift-contrast", k.sift_contrast, "SIFT contrast threshold");
}

struct RegisterArgs {
  std::string source, target, method = "ours";
  std::string src_keypoints, src_landmarks, src_frame, src_intrinsics, src_pose, tgt_keypoints;
  std::optional<double> src_margin, tgt_margin;
  std::string src_viewpoint = "0,0,0", tgt_viewpoint;
  std::size_t normal_k = 20;
  std::size_t coarse_iterations = 200, fine_iterations = 150;
  double fine_overlap = 1.0, max_distance = 0.0;
  std::string out, coarse_out;
  KeypointFlags kp;
};

PointCloud with_normals(const PointCloud& cloud, const std::optional<Point3>& viewpoint, std::size_t k) {
  if (cloud.has_normals() && !viewpoint) return cloud;
  const Point3 vp = viewpoint ? *viewpoint : Point3(cloud.centroid() + Vector3(0, 0, 1000));
  return estimate_normals(cloud, vp, k);
}

void run_register(const RegisterArgs& a) {
  const Method method = parse_method(a.method);
  std::optional<RigidTransform> pose;
  if (!a.src_pose.empty()) pose = read_transform(a.src_pose);

  PointCloud source = read_point_cloud(a.source);
  PointCloud target = read_point_cloud(a.target);
  if (pose) source = apply_transform(*pose, source);

  std::optional<PointCloud> src_kp, tgt_kp;
  if (!a.src_keypoints.empty() && !a.src_landmarks.empty())
    throw InputError("use either --src-keypoints or --src-landmarks, not both");
  if (!a.src_keypoints.empty()) src_kp = read_point_cloud(a.src_keypoints);
  if (!a.src_landmarks.empty()) {
    if (a.src_frame.empty()) throw InputError("--src-landmarks needs --src-frame");
    src_kp = lift(a.src_frame, a.src_intrinsics, a.src_landmarks, false, 5);
  }
  if (src_kp && pose) src_kp = apply_transform(*pose, *src_kp);
  if (!a.tgt_keypoints.empty()) tgt_kp = read_point_cloud(a.tgt_keypoints);

  if (a.src_margin) {
    if (!src_kp) throw InputError("--src-margin needs source keypoints or landmarks");
    source = segment_region(source, *src_kp, *a.src_margin);
  }
  if (a.tgt_margin) {
    if (!tgt_kp) throw InputError("--tgt-margin needs --tgt-keypoints");
    target = segment_region(target, *tgt_kp, *a.tgt_margin);
  }

  PointCloud coarse_src, coarse_tgt;
  if (method == Method::Ours) {
    if (!src_kp || !tgt_kp) throw InputError("method 'ours' needs source and target keypoints");
    coarse_src = *src_kp;
    coarse_tgt = *tgt_kp;
  } else {
    std::optional<Point3> svp, tvp;
    svp = parse_vec3(a.src_viewpoint, "--src-viewpoint");
    if (pose) svp = pose->apply(*svp);  // viewpoint is given in the camera frame
    if (!a.tgt_viewpoint.empty()) tvp = parse_vec3(a.tgt_viewpoint, "--tgt-viewpoint");
    if (method != Method::Iss) {
      source = with_normals(source, svp, a.normal_k);
      target = with_normals(target, tvp, a.normal_k);
    }
    coarse_src = detect_keypoints(method, source, a.kp.resolve(source));
    coarse_tgt = detect_keypoints(method, target, a.kp.resolve(target));
  }
  note("keypoints: " + std::to_string(coarse_src.size()) + " source, " + std::to_string(coarse_tgt.size()) +
       " target");

  IcpParams cp = coarse_icp_params();
  cp.max_iterations = a.coarse_iterations;
  IcpParams fp = fine_icp_params();
  fp.max_iterations = a.fine_iterations;
  fp.overlap_fraction = a.fine_overlap;
  fp.max_correspondence_distance = a.max_distance;

  const RegistrationResult coarse = coarse_register(coarse_src, coarse_tgt, cp);
  const RegistrationResult fine = fine_register(source, target, coarse.transform, fp);
  write_result(a.out, fine);
  if (!a.coarse_out.empty()) write_result(a.coarse_out, coarse);
  std::printf("coarse rmse %.4f mm, fine rmse %.4f mm (%zu iterations, %s)\n",
              evaluate_rmse(source, target, coarse.transform), fine.rmse, fine.iterations_run,
              fine.converged ? "converged" : "budget reached");
}

// --- bench -----------------------------------------------------------------

struct BenchArgs {
  std::string spec, methods = "ours,iss,harris,sift", out, format, perturbation, artifacts;
  std::size_t trials = 3;
  bool parallel_trials = false;
};

ReportFormat format_for(const BenchArgs& a) {
  if (!a.format.empty()) return parse_report_format(a.format);
  const std::string ext = fs::path(a.out).extension().string();
  if (ext == ".csv") return ReportFormat::Csv;
  if (ext == ".json") return ReportFormat::Json;
  return ReportFormat::Markdown;
}

PhantomSpec load_spec(const std::string& path, const std::optional<std::uint64_t>& seed) {
  PhantomSpec s = path.empty() ? PhantomSpec{} : read_phantom_spec(path);
  if (seed) s.seed = *seed;
  return s;
}

void run_bench(const BenchArgs& a, const std::optional<std::uint64_t>& seed) {
  const std::vector<Method> methods = parse_methods(a.methods);
  const ReportFormat fmt = format_for(a);
  const PhantomSpec spec = load_spec(a.spec, seed);
  const RigidTransform pert = a.perturbation.empty() ? RigidTransform::identity() : read_transform(a.perturbation);
  BenchOptions opt;
  opt.trials = a.trials;
  opt.parallel_trials = a.parallel_trials;
  if (!a.artifacts.empty()) opt.artifact_dir = a.artifacts;
  const BenchReport report = run_comparison(spec, pert, methods, opt);
  const std::string text = report_emit(report, fmt);
  if (a.out.empty()) {
    std::cout << text;
  } else {
    std::ofstream out(a.out);
    if (!out) throw InputError("cannot write " + a.out);
    out << text;
    if (g_verbose) std::cerr << report_emit(report, ReportFormat::Markdown);
  }
}

// --- phantom ---------------------------------------------------------------

struct PhantomArgs {
  std::string spec, out_dir;
};

void run_phantom(const PhantomArgs& a, const std::optional<std::uint64_t>& seed) {
  const PhantomSpec spec = load_spec(a.spec, seed);
  const PhantomData d = generate_phantom(spec);
  const fs::path dir = a.out_dir;
  fs::create_directories(dir);
  write_volume(dir / "phantom.raw", d.volume);
  write_depth_frame(dir / "depth.pgm", d.depth_frame);
  write_landmarks(dir / "camera_landmarks.json", d.camera_landmarks);
  write_point_cloud(dir / "surface_landmarks.ply", d.surface_landmarks_3d.cloud);
  write_transform(dir / "ground_truth.json", d.ground_truth);
  write_transform(dir / "camera_pose.json", d.camera_to_world);
  write_transform(dir / "registration_truth.json", registration_truth(d));
  // Simulated CT-side detections for `render --axis <-view_axis> --res <render_resolution_mm>`.
  const TriangleMesh mesh = marching_cubes(d.volume, kPhantomIso);
  const NormalAngleImage img =
      render_normal_angle_image(mesh, -spec.view_axis.normalized(), spec.render_resolution_mm);
  write_landmarks(dir / "ct_landmarks.json", ct_image_landmarks(spec, d.surface_landmarks_3d, img));
  write_phantom_spec(dir / "spec.json", spec);
  note("phantom written to " + dir.string());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"facereg: CT-to-depth-camera face surface registration"};
  app.require_subcommand(1);
  app.fallthrough();
  std::uint64_t seed = 42;
  unsigned threads = 0;
  CLI::Option* seed_opt = app.add_option("--seed", seed, "Seed for every stochastic choice")->capture_default_str();
  app.add_option("--threads", threads, "Worker thread cap (0 = all cores)");
  app.add_flag("--verbose,-v", g_verbose, "Progress messages on stderr");

  Depth2CloudArgs d2c;
  auto* c_d2c = app.add_subcommand("depth2cloud", "Back-project a depth frame to a PLY point cloud");
  c_d2c->add_option("depth", d2c.depth, "16-bit depth PGM")->required();
  c_d2c->add_option("intrinsics", d2c.intrinsics, "Intrinsics JSON (default: <stem>.intrinsics.json)");
  c_d2c->add_option("--out,-o", d2c.out, "Output PLY")->required();
  c_d2c->add_option("--pose", d2c.pose, "Rigid transform JSON applied to the points");
  c_d2c->add_flag("--ascii", d2c.ascii, "Write ASCII PLY");

  ExtractArgs ext;
  auto* c_ext = app.add_subcommand("extract", "Marching-cubes isosurface of a CT volume");
  c_ext->add_option("volume", ext.volume, "Volume .raw or .volume.json")->required();
  c_ext->add_option("--iso", ext.iso, "Iso value")->required();
  c_ext->add_option("--out,-o", ext.out, "Output mesh PLY")->required();
  c_ext->add_option("--cloud-out", ext.cloud_out, "Also write the vertices with normals as a point cloud");
  c_ext->add_flag("--ascii", ext.ascii, "Write the point cloud as ASCII PLY");

  RenderArgs ren;
  auto* c_ren = app.add_subcommand("render", "Normal-angle image of a mesh");
  c_ren->add_option("mesh", ren.mesh, "Mesh PLY")->required();
  c_ren->add_option("--axis", ren.axis, "View axis x,y,z (surface toward viewer)")->capture_default_str();
  c_ren->add_option("--res", ren.res, "Millimeters per pixel")->capture_default_str();
  c_ren->add_option("--out,-o", ren.out, "Output PGM (lookup and projection sidecars alongside)")->required();

  BackprojectArgs bp;
  auto* c_bp = app.add_subcommand("backproject", "Map image landmarks to 3D points through a rendered lookup");
  c_bp->add_option("image", bp.image, "Normal-angle PGM written by render")->required();
  c_bp->add_option("landmarks", bp.landmarks, "Landmark JSON")->required();
  c_bp->add_option("--out,-o", bp.out, "Output keypoint PLY")->required();
  c_bp->add_flag("--all-landmarks", bp.all, "Keep every landmark instead of eyes and nose");
  c_bp->add_flag("--ascii", bp.ascii, "Write ASCII PLY");

  LiftArgs lf;
  auto* c_lf = app.add_subcommand("lift", "Lift camera landmarks through a depth frame");
  c_lf->add_option("depth", lf.depth, "16-bit depth PGM")->required();
  c_lf->add_option("landmarks", lf.landmarks, "Landmark JSON")->required();
  c_lf->add_option("--intrinsics", lf.intrinsics, "Intrinsics JSON (default: <stem>.intrinsics.json)");
  c_lf->add_option("--pose", lf.pose, "Rigid transform JSON applied to the points");
  c_lf->add_option("--window", lf.window, "Median window for dead pixels")->capture_default_str();
  c_lf->add_option("--out,-o", lf.out, "Output keypoint PLY")->required();
  c_lf->add_flag("--all-landmarks", lf.all, "Keep every landmark instead of eyes and nose");
  c_lf->add_flag("--ascii", lf.ascii, "Write ASCII PLY");

  RegisterArgs reg;
  auto* c_reg = app.add_subcommand("register", "Coarse (keypoint) then fine (full cloud) ICP");
  c_reg->add_option("source", reg.source, "Source cloud PLY (camera side)")->required();
  c_reg->add_option("target", reg.target, "Target cloud PLY (CT side)")->required();
  c_reg->add_option("--method", reg.method, "ours, iss, harris or sift")->capture_default_str();
  c_reg->add_option("--src-keypoints", reg.src_keypoints, "Source keypoint PLY");
  c_reg->add_option("--src-landmarks", reg.src_landmarks, "Source landmark JSON, lifted through --src-frame");
  c_reg->add_option("--src-frame", reg.src_frame, "Depth PGM for --src-landmarks");
  c_reg->add_option("--src-intrinsics", reg.src_intrinsics, "Intrinsics JSON for --src-frame");
  c_reg->add_option("--src-pose", reg.src_pose, "Transform applied to the source cloud and keypoints");
  c_reg->add_option("--tgt-keypoints", reg.tgt_keypoints, "Target keypoint PLY");
  c_reg->add_option("--src-margin", reg.src_margin, "Segment the source around its keypoints (mm)");
  c_reg->add_option("--tgt-margin", reg.tgt_margin, "Segment the target around its keypoints (mm)");
  c_reg->add_option("--src-viewpoint", reg.src_viewpoint, "Viewpoint for source normals x,y,z (source frame)")
      ->capture_default_str();
  c_reg->add_option("--tgt-viewpoint", reg.tgt_viewpoint,
                    "Viewpoint for target normals x,y,z (default: keep stored normals)");
  c_reg->add_option("--normal-neighbors", reg.normal_k, "Neighbors for normal estimation")->capture_default_str();
  c_reg->add_option("--coarse-iterations", reg.coarse_iterations, "Coarse ICP budget")->capture_default_str();
  c_reg->add_option("--fine-iterations", reg.fine_iterations, "Fine ICP budget")->capture_default_str();
  c_reg->add_option("--fine-overlap", reg.fine_overlap, "Fine ICP overlap fraction")->capture_default_str();
  c_reg->add_option("--max-distance", reg.max_distance, "Fine ICP correspondence gate (mm, 0 = none)")
      ->capture_default_str();
  c_reg->add_option("--out,-o", reg.out, "Fine registration result JSON")->required();
  c_reg->add_option("--coarse-out", reg.coarse_out, "Coarse registration result JSON");
  add_keypoint_flags(c_reg, reg.kp);

  BenchArgs ben;
  auto* c_ben = app.add_subcommand("bench", "Compare keypoint methods on the synthetic phantom");
  c_ben->add_option("--spec", ben.spec, "Phantom spec JSON (default: built-in phantom)");
  c_ben->add_option("--methods", ben.methods, "Comma-separated methods")->capture_default_str();
  c_ben->add_option("--trials", ben.trials, "Timing repetitions")->capture_default_str();
  c_ben->add_option("--perturbation", ben.perturbation, "Extra head displacement (transform JSON)");
  c_ben->add_option("--out,-o", ben.out, "Report file (format from extension; default: stdout)");
  c_ben->add_option("--format", ben.format, "json, csv or md (overrides the extension)");
  c_ben->add_option("--artifacts", ben.artifacts, "Write phantom artifacts here and read them back");
  c_ben->add_flag("--parallel-trials", ben.parallel_trials, "Run trials concurrently");

  PhantomArgs ph;
  auto* c_ph = app.add_subcommand("phantom", "Write a synthetic phantom case to a directory");
  c_ph->add_option("--spec", ph.spec, "Phantom spec JSON (default: built-in phantom)");
  c_ph->add_option("--out-dir,-o", ph.out_dir, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  set_thread_count(threads);
  std::optional<std::uint64_t> seed_override;
  if (seed_opt->count() > 0) seed_override = seed;
  try {
    if (c_d2c->parsed()) run_depth2cloud(d2c);
    if (c_ext->parsed()) run_extract(ext);
    if (c_ren->parsed()) run_render(ren);
    if (c_bp->parsed()) run_backproject(bp);
    if (c_lf->parsed()) run_lift(lf);
    if (c_reg->parsed()) run_register(reg);
    if (c_ben->parsed()) run_bench(ben, seed_override);
    if (c_ph->parsed()) run_phantom(ph, seed_override);
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const PipelineError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
