// Python bindings for the dynpose core.

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <memory>

#include "dynpose/error.h"
#include "dynpose/evalmetrics.h"
#include "dynpose/filtering.h"
#include "dynpose/geometry.h"
#include "dynpose/io.h"
#include "dynpose/sfm.h"
#include "dynpose/synthbench.h"

namespace py = pybind11;

namespace dynpose {
namespace {

std::vector<PrPoint> PrCurveFromLists(const std::vector<double>& scores,
                                      const std::vector<bool>& labels) {
  const std::unique_ptr<bool[]> flags(new bool[labels.size()]);
  for (std::size_t i = 0; i < labels.size(); ++i) flags[i] = labels[i];
  return PrCurve(scores, std::span<const bool>(flags.get(), labels.size()));
}

py::dict CascadeDict(const CascadeResult& r) {
  py::dict components;
  for (FilterComponent c : kAllFilterComponents) {
    const auto& v = r.score[c];
    components[py::str(std::string(ComponentName(c)))] =
        v ? py::object(py::float_(*v)) : py::object(py::none());
  }
  py::dict out;
  out["include"] = r.include;
  out["last_stage"] = r.last_stage;
  out["aggregate"] = r.score.Aggregate();
  out["components"] = components;
  return out;
}

// Generates a scene, tracks it, reconstructs it and scores the result.
py::dict ReconstructSynthetic(const std::string& kind, std::uint64_t seed, double noise_px,
                              int num_frames, bool use_masks) {
  const auto trajectory_kind = ParseTrajectoryKind(kind);
  if (!trajectory_kind) throw Error(ErrorCode::kInvalidArgument, "unknown kind '" + kind + "'");
  SceneConfig sc;
  sc.trajectory_kind = *trajectory_kind;
  sc.num_frames = num_frames;
  const SynthScene scene = GenScene(seed, sc);
  TrackOptions to;
  to.noise_px = noise_px;
  const SynthTracks tracks = ProjectTracks(scene, to, seed + 1);
  std::map<std::int64_t, DynamicMask> masks;
  if (use_masks) {
    for (const auto& m : tracks.masks) masks.emplace(m.frame_index(), m);
  }
  SceneModel model;
  {
    py::gil_scoped_release release;
    model = RunPipeline(tracks.tracklets, masks, scene.intrinsics, num_frames, SfmConfig{}, seed);
  }
  py::dict out;
  out["failed"] = model.failed;
  out["failure_reason"] = model.failure_reason;
  out["mean_reprojection_error"] = model.mean_reprojection_error;
  out["registered_fraction"] = model.trajectory.RegisteredFraction();
  out["trajectory"] = model.trajectory;
  out["gt_trajectory"] = scene.gt_trajectory;
  if (!model.failed) {
    const TrajectoryReport r = EvaluateTrajectory(scene.gt_trajectory, model.trajectory);
    out["ate"] = r.ate;
    out["rpe_trans"] = r.rpe_trans;
    out["rpe_rot"] = r.rpe_rot;
  }
  return out;
}

}  // namespace
}  // namespace dynpose

PYBIND11_MODULE(_core, m) {
  using namespace dynpose;
  m.doc() = "Camera pose estimation and evaluation for dynamic videos";

  py::register_exception<Error>(m, "DynposeError", PyExc_ValueError);

  py::class_<CameraIntrinsics>(m, "CameraIntrinsics")
      .def(py::init([](double fx, double fy, double cx, double cy, double w, double h) {
             CameraIntrinsics k{fx, fy, cx, cy, w, h};
             k.Validate();
             return k;
           }),
           py::arg("fx"), py::arg("fy"), py::arg("cx"), py::arg("cy"), py::arg("width"),
           py::arg("height"))
      .def_readwrite("fx", &CameraIntrinsics::fx)
      .def_readwrite("fy", &CameraIntrinsics::fy)
      .def_readwrite("cx", &CameraIntrinsics::cx)
      .def_readwrite("cy", &CameraIntrinsics::cy)
      .def_readwrite("width", &CameraIntrinsics::width)
      .def_readwrite("height", &CameraIntrinsics::height)
      .def("K", &CameraIntrinsics::K);

  py::class_<Pose>(m, "Pose")
      .def(py::init<>())
      .def(py::init<const Matrix3d&, const Vector3d&>(), py::arg("rotation"),
           py::arg("translation"))
      .def_static("from_center", &Pose::FromCenter, py::arg("rotation_c2w"), py::arg("center"))
      .def_property_readonly("R", &Pose::R)
      .def_property_readonly("t", [](const Pose& p) { return Vector3d(p.translation()); })
      .def_property_readonly("center", &Pose::Center)
      .def("inverse", &Pose::Inverse)
      .def("transform", [](const Pose& p, const Vector3d& x) { return p.Transform(x); });

  py::class_<Trajectory>(m, "Trajectory")
      .def(py::init<double>(), py::arg("fps") = 12.0)
      .def("append", &Trajectory::Append, py::arg("index"), py::arg("pose"))
      .def_property_readonly("fps", &Trajectory::fps)
      .def("__len__", &Trajectory::size)
      .def("indices",
           [](const Trajectory& t) {
             std::vector<std::int64_t> out;
             for (const auto& f : t.frames()) out.push_back(f.index);
             return out;
           })
      .def("poses",
           [](const Trajectory& t) {
             std::vector<std::optional<Pose>> out;
             for (const auto& f : t.frames()) out.push_back(f.pose);
             return out;
           })
      .def("registered_fraction", &Trajectory::RegisteredFraction);

  m.def("load_trajectory", [](const std::filesystem::path& path) {
    const TrajectoryFile f = LoadTrajectory(path);
    return py::make_tuple(f.trajectory, f.intrinsics);
  });
  m.def(
      "save_trajectory",
      [](const std::filesystem::path& path, const Trajectory& t,
         std::optional<CameraIntrinsics> k) { SaveTrajectory(path, {t, k, std::nullopt}); },
      py::arg("path"), py::arg("trajectory"), py::arg("intrinsics") = std::nullopt);

  m.def(
      "sampson_error",
      [](const Matrix3d& f, const Vector2d& p1, const Vector2d& p2) {
        return SampsonError(f, p1, p2);
      },
      py::arg("F"), py::arg("p1"), py::arg("p2"));
  m.def(
      "fundamental_from_relative_pose",
      [](const CameraIntrinsics& k1, const CameraIntrinsics& k2, const Pose& relative) {
        return FundamentalFromRelativePose(k1, k2, relative).matrix;
      },
      py::arg("k1"), py::arg("k2"), py::arg("relative"));
  m.def("relative_pose", &RelativePose, py::arg("a"), py::arg("b"));

  m.def(
      "evaluate_trajectory",
      [](const Trajectory& gt, const Trajectory& pred, bool align_rpe) {
        const TrajectoryReport r = EvaluateTrajectory(gt, pred, align_rpe);
        py::dict out;
        out["ate"] = r.ate;
        out["rpe_trans"] = r.rpe_trans;
        out["rpe_rot"] = r.rpe_rot;
        out["registered_fraction"] = r.registered_fraction;
        return out;
      },
      py::arg("gt"), py::arg("pred"), py::arg("align_rpe") = true);

  m.def(
      "pr_curve",
      [](const std::vector<double>& scores, const std::vector<bool>& labels) {
        std::vector<std::tuple<double, double, double>> out;
        for (const auto& p : PrCurveFromLists(scores, labels)) {
          out.emplace_back(p.threshold, p.recall, p.precision);
        }
        return out;
      },
      py::arg("scores"), py::arg("labels"));
  m.def(
      "average_precision",
      [](const std::vector<double>& scores, const std::vector<bool>& labels, bool voc) {
        return AveragePrecision(PrCurveFromLists(scores, labels), voc);
      },
      py::arg("scores"), py::arg("labels"), py::arg("voc_smoothing") = true);

  m.def(
      "run_cascade",
      [](const std::string& signals_json) {
        return CascadeDict(RunCascade(ParseFilterSignals(signals_json)));
      },
      py::arg("signals_json"));
  m.def(
      "filter_fixture",
      [](const std::string& kind, std::uint64_t seed) {
        const auto k = ParseFixtureKind(kind);
        if (!k) throw Error(ErrorCode::kInvalidArgument, "unknown fixture '" + kind + "'");
        return FormatFilterSignals(MakeFilterFixture(*k, seed));
      },
      py::arg("kind"), py::arg("seed") = 0);

  m.def("reconstruct_synthetic", &ReconstructSynthetic, py::arg("kind") = "orbit",
        py::arg("seed") = 0, py::arg("noise_px") = 0.0, py::arg("num_frames") = 60,
        py::arg("use_masks") = true);
}
