#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>
#include <string>
#include <vector>

#include "facereg/bench.hpp"
#include "facereg/depth_io.hpp"
#include "facereg/error.hpp"
#include "facereg/keypoints.hpp"
#include "facereg/neighbor_index.hpp"
#include "facereg/parallel.hpp"
#include "facereg/phantom.hpp"
#include "facereg/registration.hpp"
#include "facereg/surface.hpp"

namespace py = pybind11;
using namespace facereg;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

std::vector<Point3> to_points(const Array& a, const char* what) {
  if (a.ndim() != 2 || a.shape(1) != 3) throw InputError(std::string(what) + ": expected an (N, 3) array");
  const auto r = a.unchecked<2>();
  std::vector<Point3> out(static_cast<std::size_t>(a.shape(0)));
  for (py::ssize_t i = 0; i < a.shape(0); ++i) out[i] = Point3(r(i, 0), r(i, 1), r(i, 2));
  return out;
}

PointCloud to_cloud(const Array& points, const std::optional<Array>& normals, const char* what) {
  return PointCloud(to_points(points, what), normals ? to_points(*normals, what) : std::vector<Vector3>{});
}

Array from_points(const std::vector<Point3>& pts) {
  Array out({static_cast<py::ssize_t>(pts.size()), py::ssize_t{3}});
  auto w = out.mutable_unchecked<2>();
  for (std::size_t i = 0; i < pts.size(); ++i)
    for (int c = 0; c < 3; ++c) w(i, c) = pts[i][c];
  return out;
}

ScalarVolume to_volume(const py::array_t<float, py::array::c_style | py::array::forcecast>& values,
                       const Vector3& spacing, const Point3& origin) {
  if (values.ndim() != 3) throw InputError("volume: expected a 3D array indexed [z, y, x]");
  ScalarVolume v;
  v.dims = {static_cast<int>(values.shape(2)), static_cast<int>(values.shape(1)), static_cast<int>(values.shape(0))};
  v.spacing = spacing;
  v.origin = origin;
  v.values.assign(values.data(), values.data() + values.size());
  v.validate();
  return v;
}

py::array_t<float> from_volume(const ScalarVolume& v) {
  py::array_t<float> out({v.dims[2], v.dims[1], v.dims[0]});
  std::copy(v.values.begin(), v.values.end(), out.mutable_data());
  return out;
}

PhantomSpec spec_or_default(const std::optional<std::string>& json) {
  return json ? phantom_spec_from_json(*json) : PhantomSpec{};
}

}  // namespace

PYBIND11_MODULE(_facereg, m) {
  m.doc() = "CT-to-depth-camera face surface registration";

  py::register_exception<InputError>(m, "InputError", PyExc_ValueError);
  py::register_exception<PipelineError>(m, "PipelineError", PyExc_RuntimeError);

  m.def("set_thread_count", &set_thread_count, py::arg("n"), "Cap worker threads (0 = all cores).");
  m.def("thread_count", &thread_count);

  py::class_<RigidTransform>(m, "RigidTransform")
      .def(py::init<>())
      .def(py::init<const Eigen::Matrix3d&, const Vector3&>(), py::arg("rotation"), py::arg("translation"))
      .def_static("from_axis_angle", &RigidTransform::from_axis_angle, py::arg("axis"), py::arg("angle_rad"),
                  py::arg("translation") = Vector3::Zero())
      .def_property_readonly("rotation", &RigidTransform::rotation)
      .def_property_readonly("translation", &RigidTransform::translation)
      .def_property_readonly("angle", &RigidTransform::rotation_angle)
      .def("matrix",
           [](const RigidTransform& t) {
             Eigen::Matrix4d h = Eigen::Matrix4d::Identity();
             h.topLeftCorner<3, 3>() = t.rotation();
             h.topRightCorner<3, 1>() = t.translation();
             return h;
           })
      .def("apply",
           [](const RigidTransform& t, const Array& pts) {
             auto p = to_points(pts, "apply");
             for (auto& x : p) x = t.apply(x);
             return from_points(p);
           })
      .def("inverse", [](const RigidTransform& t) { return invert(t); })
      .def("__matmul__", [](const RigidTransform& a, const RigidTransform& b) { return compose(a, b); })
      .def("__repr__", [](const RigidTransform& t) {
        return "RigidTransform(angle=" + std::to_string(t.rotation_angle()) + " rad, translation=[" +
               std::to_string(t.translation().x()) + ", " + std::to_string(t.translation().y()) + ", " +
               std::to_string(t.translation().z()) + "])";
      });

  m.def(
      "estimate_rigid",
      [](const Array& src, const Array& tgt) { return estimate_rigid(to_points(src, "source"), to_points(tgt, "target")); },
      py::arg("source"), py::arg("target"), "Least-squares rigid motion taking source[i] onto target[i].");
  m.def("rotation_error", &rotation_error, py::arg("a"), py::arg("b"), "Angle between two rotations (rad).");

  py::class_<IcpParams>(m, "IcpParams")
      .def(py::init<>())
      .def_readwrite("max_iterations", &IcpParams::max_iterations)
      .def_readwrite("max_correspondence_distance", &IcpParams::max_correspondence_distance)
      .def_readwrite("translation_epsilon", &IcpParams::translation_epsilon)
      .def_readwrite("rmse_epsilon", &IcpParams::rmse_epsilon)
      .def_readwrite("overlap_fraction", &IcpParams::overlap_fraction);
  m.def("coarse_icp_params", &coarse_icp_params);
  m.def("fine_icp_params", &fine_icp_params);

  py::class_<RegistrationResult>(m, "RegistrationResult")
      .def_readonly("transform", &RegistrationResult::transform)
      .def_readonly("rmse", &RegistrationResult::rmse)
      .def_readonly("iterations_run", &RegistrationResult::iterations_run)
      .def_readonly("converged", &RegistrationResult::converged)
      .def_readonly("per_iteration_rmse", &RegistrationResult::per_iteration_rmse);

  m.def(
      "icp",
      [](const Array& src, const Array& tgt, const RigidTransform& init, const IcpParams& p) {
        return icp(to_cloud(src, std::nullopt, "source"), to_cloud(tgt, std::nullopt, "target"), init, p);
      },
      py::arg("source"), py::arg("target"), py::arg("init") = RigidTransform(), py::arg("params") = fine_icp_params());
  m.def(
      "coarse_register",
      [](const Array& src, const Array& tgt, const IcpParams& p) {
        return coarse_register(to_cloud(src, std::nullopt, "source"), to_cloud(tgt, std::nullopt, "target"), p);
      },
      py::arg("source_keypoints"), py::arg("target_keypoints"), py::arg("params") = coarse_icp_params());
  m.def(
      "fine_register",
      [](const Array& src, const Array& tgt, const RigidTransform& init, const IcpParams& p) {
        return fine_register(to_cloud(src, std::nullopt, "source"), to_cloud(tgt, std::nullopt, "target"), init, p);
      },
      py::arg("source"), py::arg("target"), py::arg("init"), py::arg("params") = fine_icp_params());
  m.def(
      "evaluate_rmse",
      [](const Array& src, const Array& tgt, const RigidTransform& t) {
        return evaluate_rmse(to_cloud(src, std::nullopt, "source"), to_cloud(tgt, std::nullopt, "target"), t);
      },
      py::arg("source"), py::arg("target"), py::arg("transform") = RigidTransform());

  m.def(
      "nearest",
      [](const Array& pts, const Array& queries) {
        const NeighborIndex index(to_points(pts, "points"));
        const auto q = to_points(queries, "queries");
        py::array_t<std::int64_t> idx(static_cast<py::ssize_t>(q.size()));
        py::array_t<double> dist(static_cast<py::ssize_t>(q.size()));
        for (std::size_t i = 0; i < q.size(); ++i) {
          const Neighbor n = index.nearest(q[i]);
          idx.mutable_at(i) = static_cast<std::int64_t>(n.index);
          dist.mutable_at(i) = n.distance;
        }
        return py::make_tuple(idx, dist);
      },
      py::arg("points"), py::arg("queries"), "Nearest point index and distance for every query.");

  m.def(
      "marching_cubes",
      [](const py::array_t<float, py::array::c_style | py::array::forcecast>& values, double iso,
         const Vector3& spacing, const Point3& origin) {
        const TriangleMesh mesh = marching_cubes(to_volume(values, spacing, origin), iso);
        py::array_t<std::uint32_t> tris({static_cast<py::ssize_t>(mesh.triangles.size()), py::ssize_t{3}});
        auto w = tris.mutable_unchecked<2>();
        for (std::size_t i = 0; i < mesh.triangles.size(); ++i)
          for (int c = 0; c < 3; ++c) w(i, c) = mesh.triangles[i][c];
        return py::make_tuple(from_points(mesh.vertices), from_points(mesh.normals), tris);
      },
      py::arg("values"), py::arg("iso"), py::arg("spacing") = Vector3::Ones(), py::arg("origin") = Point3::Zero(),
      "Isosurface of a volume indexed [z, y, x]; returns (vertices, normals, triangles).");

  m.def(
      "estimate_normals",
      [](const Array& pts, const Point3& viewpoint, std::size_t k) {
        return from_points(estimate_normals(to_cloud(pts, std::nullopt, "points"), viewpoint, k).normals());
      },
      py::arg("points"), py::arg("viewpoint"), py::arg("k") = 20);

  m.def(
      "depth_to_cloud",
      [](const py::array_t<std::uint16_t, py::array::c_style | py::array::forcecast>& depth, double fx, double fy,
         double cx, double cy, double depth_scale) {
        if (depth.ndim() != 2) throw InputError("depth: expected an (H, W) array");
        DepthFrame f;
        f.height = static_cast<int>(depth.shape(0));
        f.width = static_cast<int>(depth.shape(1));
        f.depth.assign(depth.data(), depth.data() + depth.size());
        f.intrinsics = {fx, fy, cx, cy, depth_scale};
        return from_points(depth_to_cloud(f).points());
      },
      py::arg("depth"), py::arg("fx"), py::arg("fy"), py::arg("cx"), py::arg("cy"), py::arg("depth_scale") = 0.001,
      "Back-projects every nonzero pixel to camera-frame millimeters.");

  m.def(
      "detect_keypoints",
      [](const std::string& method, const Array& pts, const std::optional<Array>& normals) {
        const PointCloud cloud = to_cloud(pts, normals, "points");
        return from_points(detect_keypoints(parse_method(method), cloud, default_keypoint_params(cloud)).points());
      },
      py::arg("method"), py::arg("points"), py::arg("normals") = py::none(),
      "ISS, Harris or SIFT keypoints with spacing-scaled default parameters.");

  m.def(
      "generate_phantom",
      [](const std::optional<std::string>& spec_json) {
        const PhantomSpec spec = spec_or_default(spec_json);
        const PhantomData d = generate_phantom(spec);
        py::array_t<std::uint16_t> depth({d.depth_frame.height, d.depth_frame.width});
        std::copy(d.depth_frame.depth.begin(), d.depth_frame.depth.end(), depth.mutable_data());
        py::list lms;
        for (const auto& l : d.camera_landmarks.landmarks) lms.append(py::make_tuple(l.index, l.u, l.v));
        const auto& k = d.depth_frame.intrinsics;
        py::dict out;
        out["volume"] = from_volume(d.volume);
        out["spacing"] = d.volume.spacing;
        out["origin"] = d.volume.origin;
        out["iso"] = kPhantomIso;
        out["depth"] = depth;
        out["intrinsics"] = py::dict(py::arg("fx") = k.fx, py::arg("fy") = k.fy, py::arg("cx") = k.cx,
                                     py::arg("cy") = k.cy, py::arg("depth_scale") = k.depth_scale);
        out["camera_landmarks"] = lms;
        out["surface_landmarks"] = from_points(d.surface_landmarks_3d.cloud.points());
        out["surface_landmark_indices"] = d.surface_landmarks_3d.indices;
        out["ground_truth"] = d.ground_truth;
        out["camera_to_world"] = d.camera_to_world;
        out["registration_truth"] = registration_truth(d);
        return out;
      },
      py::arg("spec_json") = py::none(), "Synthetic CT volume, depth frame and landmarks.");

  m.def(
      "default_phantom_spec_json", [] { return to_json(PhantomSpec{}); },
      "The built-in phantom spec as JSON.");

  m.def(
      "perturbation_grid", &perturbation_grid, py::arg("seed") = 42,
      "25 head displacements: 5 rotation magnitudes crossed with 5 translation magnitudes.");

  m.def(
      "run_comparison_json",
      [](const std::optional<std::string>& spec_json, const std::string& methods, std::size_t trials,
         const RigidTransform& perturbation) {
        const PhantomSpec spec = spec_or_default(spec_json);
        BenchOptions opt;
        opt.trials = trials;
        py::gil_scoped_release release;
        return report_emit(run_comparison(spec, perturbation, parse_methods(methods), opt), ReportFormat::Json);
      },
      py::arg("spec_json") = py::none(), py::arg("methods") = "ours,iss,harris,sift", py::arg("trials") = 3,
      py::arg("perturbation") = RigidTransform());
}
