// dynpose command-line front end. Exit codes: 0 success, 2 input error,
// 3 pipeline failure.

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <sstream>
#include <iostream>
#include <mutex>
#include <regex>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "dynpose/error.h"
#include "dynpose/evalmetrics.h"
#include "dynpose/filtering.h"
#include "dynpose/io.h"
#include "dynpose/masking.h"
#include "dynpose/sfm.h"
#include "dynpose/synthbench.h"
#include "dynpose/tracking.h"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace dynpose {
namespace {

constexpr int kExitInput = 2;
constexpr int kExitPipeline = 3;

// Raised for reconstruction failures that still produced output files.
struct PipelineFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Globals {
  std::string config_path;
  std::uint64_t seed = 0;
  int jobs = 1;
  std::string out;
};

PipelineConfig LoadConfig(const Globals& g) {
  PipelineConfig c = g.config_path.empty() ? PipelineConfig{} : LoadPipelineConfig(g.config_path);
  c.Validate();
  c.sfm.fps = c.fps;
  return c;
}

fs::path RequireOut(const Globals& g) {
  if (g.out.empty()) throw Error(ErrorCode::kInvalidArgument, "--out is required");
  return g.out;
}

// Runs fn(0..n-1) on up to `jobs` threads; rethrows the first exception.
void ParallelFor(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, jobs)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> threads;
  for (std::size_t w = 0; w < workers; ++w) {
    threads.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : threads) t.join();
  if (error) std::rethrow_exception(error);
}

std::vector<fs::path> ExpandInputs(const std::vector<std::string>& inputs, const std::string& ext) {
  std::vector<fs::path> out;
  for (const auto& in : inputs) {
    if (fs::is_directory(in)) {
      std::vector<fs::path> found;
      for (const auto& e : fs::directory_iterator(in)) {
        if (e.is_regular_file() && e.path().extension() == ext) found.push_back(e.path());
      }
      std::sort(found.begin(), found.end());
      out.insert(out.end(), found.begin(), found.end());
    } else {
      out.emplace_back(in);
    }
  }
  if (out.empty()) throw Error(ErrorCode::kInvalidArgument, "no " + ext + " inputs found");
  return out;
}

// Frame-indexed files such as fwd_000012.dpfl.
std::map<std::int64_t, fs::path> IndexedFiles(const fs::path& dir, const std::string& prefix,
                                              const std::string& ext) {
  const std::regex pattern(prefix + R"((\d+))" + std::regex_replace(ext, std::regex(R"(\.)"), R"(\.)"));
  std::map<std::int64_t, fs::path> out;
  if (!fs::is_directory(dir)) {
    throw Error(ErrorCode::kInvalidArgument, "not a directory: " + dir.string());
  }
  for (const auto& e : fs::directory_iterator(dir)) {
    std::smatch m;
    const std::string name = e.path().filename().string();
    if (std::regex_match(name, m, pattern)) out.emplace(std::stoll(m[1].str()), e.path());
  }
  return out;
}

std::string IndexedName(const std::string& prefix, std::int64_t frame, const std::string& ext) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s%06lld%s", prefix.c_str(), static_cast<long long>(frame),
                ext.c_str());
  return buf;
}

CameraIntrinsics ParseIntrinsicsFlag(const std::string& text) {
  std::vector<double> v;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      v.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw Error(ErrorCode::kInvalidArgument, "bad --intrinsics value '" + item + "'");
    }
  }
  if (v.size() != 6) {
    throw Error(ErrorCode::kInvalidArgument, "--intrinsics needs fx,fy,cx,cy,width,height");
  }
  CameraIntrinsics k{v[0], v[1], v[2], v[3], v[4], v[5]};
  k.Validate();
  return k;
}

json IntrinsicsJson(const CameraIntrinsics& k) {
  return {{"fx", k.fx}, {"fy", k.fy}, {"cx", k.cx}, {"cy", k.cy},
          {"width", k.width}, {"height", k.height}};
}

struct Manifest {
  CameraIntrinsics intrinsics;
  std::int64_t num_frames = 0;
  double fps = 12.0;
};

Manifest LoadManifest(const fs::path& path) {
  json j;
  try {
    j = json::parse(ReadFile(path));
    Manifest m;
    const json& k = j.at("intrinsics");
    m.intrinsics = {k.at("fx").get<double>(), k.at("fy").get<double>(),
                    k.at("cx").get<double>(), k.at("cy").get<double>(),
                    k.at("width").get<double>(), k.at("height").get<double>()};
    m.num_frames = j.at("num_frames").get<std::int64_t>();
    m.fps = j.value("fps", 12.0);
    m.intrinsics.Validate();
    return m;
  } catch (const json::exception& e) {
    throw ParseError(path.string(), ParseError::Unit::kLine, 1,
                     std::string("bad manifest: ") + e.what());
  }
}

// ---- filter ---------------------------------------------------------------

int RunFilter(const Globals& g, const std::vector<std::string>& inputs) {
  const PipelineConfig config = LoadConfig(g);
  const fs::path out = RequireOut(g);
  const auto files = ExpandInputs(inputs, ".json");
  std::vector<FilterSignals> signals(files.size());
  std::vector<CascadeResult> results(files.size());
  std::vector<double> scores(files.size());
  ParallelFor(files.size(), g.jobs, [&](std::size_t i) {
    signals[i] = ParseFilterSignals(ReadFile(files[i]), files[i].string());
    results[i] = RunCascade(signals[i], config.filter);
    scores[i] = ScoreAvailable(signals[i], config.filter).Aggregate();
  });
  fs::create_directories(out);
  WriteFile(out / "decisions.csv", FormatCsv(CascadeTable(signals, results)));

  std::size_t included = 0;
  for (const auto& r : results) included += r.include ? 1 : 0;
  std::cout << "included " << included << "/" << results.size() << " videos\n";

  const bool labeled = std::all_of(signals.begin(), signals.end(),
                                   [](const FilterSignals& s) { return s.label.has_value(); });
  if (labeled) {
    const std::unique_ptr<bool[]> labels(new bool[signals.size()]);
    for (std::size_t i = 0; i < signals.size(); ++i) labels[i] = *signals[i].label;
    try {
      const auto curve = PrCurve(scores, std::span<const bool>(labels.get(), signals.size()));
      WriteFile(out / "pr_curve.csv", FormatCsv(PrCurveTable(curve)));
      std::cout << "average precision " << FormatNumber(AveragePrecision(curve)) << "\n";
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kNoPositives) throw;
      std::cerr << "warning: no positive labels; PR curve skipped\n";
    }
  }
  return 0;
}

// ---- pr-curve -------------------------------------------------------------

int RunPrCurve(const Globals& g, const std::string& scores_path, const std::string& score_col,
               const std::string& label_col) {
  const CsvTable table = ParseCsv(ReadFile(scores_path), scores_path);
  auto column = [&](const std::string& name) {
    const auto it = std::find(table.header.begin(), table.header.end(), name);
    if (it == table.header.end()) {
      throw Error(ErrorCode::kInvalidArgument, scores_path + ": no column '" + name + "'");
    }
    return static_cast<std::size_t>(it - table.header.begin());
  };
  const std::size_t sc = column(score_col);
  const std::size_t lc = column(label_col);
  std::vector<double> scores;
  std::vector<char> labels;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    // Header is line 1; quoted newlines are not expected in score files.
    const std::size_t line = r + 2;
    try {
      std::size_t used = 0;
      scores.push_back(std::stod(row[sc], &used));
      if (used != row[sc].size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw ParseError(scores_path, ParseError::Unit::kLine, line, "bad score '" + row[sc] + "'");
    }
    if (row[lc] != "0" && row[lc] != "1") {
      throw ParseError(scores_path, ParseError::Unit::kLine, line, "label must be 0 or 1");
    }
    labels.push_back(row[lc] == "1");
  }
  const std::unique_ptr<bool[]> flags(new bool[labels.size()]);
  for (std::size_t i = 0; i < labels.size(); ++i) flags[i] = labels[i] != 0;
  const auto curve = PrCurve(scores, std::span<const bool>(flags.get(), labels.size()));
  const std::string csv = FormatCsv(PrCurveTable(curve));
  if (g.out.empty()) {
    std::cout << csv;
  } else {
    WriteFile(g.out, csv);
  }
  std::cerr << "average precision " << FormatNumber(AveragePrecision(curve, true)) << "\n";
  return 0;
}

// ---- mask -----------------------------------------------------------------

int RunMask(const Globals& g, const std::string& flows_dir, const std::string& labels_dir,
            std::int64_t num_frames) {
  const PipelineConfig config = LoadConfig(g);
  const fs::path out = RequireOut(g);
  MaskSources sources;
  int width = 0;
  int height = 0;
  auto adopt_size = [&](int w, int h, const std::string& what) {
    if (width == 0) {
      width = w;
      height = h;
    } else if (w != width || h != height) {
      throw Error(ErrorCode::kDimensionMismatch,
                  what + " is " + std::to_string(w) + "x" + std::to_string(h) + ", expected " +
                      std::to_string(width) + "x" + std::to_string(height));
    }
  };
  if (!flows_dir.empty()) {
    const auto fwd = IndexedFiles(flows_dir, "fwd_", ".dpfl");
    const auto bwd = IndexedFiles(flows_dir, "bwd_", ".dpfl");
    for (const auto& [frame, path] : fwd) {
      const auto back = bwd.find(frame);
      if (back == bwd.end()) {
        throw Error(ErrorCode::kInvalidArgument, "no backward flow for " + path.string());
      }
      const FlowField f = LoadFlow(path);
      const FlowField b = LoadFlow(back->second);
      adopt_size(f.width, f.height, path.string());
      adopt_size(b.width, b.height, back->second.string());
      MotionSegmentResult seg =
          MotionSegment(f, b, g.seed + static_cast<std::uint64_t>(frame), config.masking.motion);
      if (seg.warning) std::cerr << "warning: frame " << frame << ": " << *seg.warning << "\n";
      seg.mask.set_frame_index(frame);
      sources.motion.emplace(frame, std::move(seg.mask));
    }
  }
  if (!labels_dir.empty()) {
    for (const auto& [frame, path] : IndexedFiles(labels_dir, "label_", ".pgm")) {
      LabelMap labels = DecodeLabelPgm(ReadFile(path), path.string());
      adopt_size(labels.width, labels.height, path.string());
      sources.semantic.emplace(frame, std::move(labels));
    }
  }
  if (width == 0) throw Error(ErrorCode::kInvalidArgument, "no flow or label inputs found");
  const auto masks = ComposeMasks(sources, num_frames, width, height, config.masking.cadence);
  fs::create_directories(out);
  for (const auto& m : masks) SaveMask(out / MaskFileName(m.frame_index()), m);
  std::cout << "wrote " << masks.size() << " masks\n";
  return 0;
}

// ---- correspond -----------------------------------------------------------

std::map<std::int64_t, DynamicMask> MaybeMasks(const std::string& dir) {
  if (dir.empty()) return {};
  return LoadMaskDirectory(dir);
}

int RunCorrespond(const Globals& g, const std::string& tracklets_path, const std::string& masks_dir) {
  const PipelineConfig config = LoadConfig(g);
  const fs::path out = RequireOut(g);
  const auto tracklets = LoadTracklets(tracklets_path);
  const CorrespondenceSet set =
      ExtractCorrespondences(tracklets, MaybeMasks(masks_dir), config.sfm.deduplicate_correspondences);
  for (const auto& w : set.warnings) std::cerr << "warning: " << w << "\n";
  WriteFile(out, FormatCorrespondences(set));
  std::cout << set.pairs.size() << " frame pairs, " << set.TotalMatches() << " matches\n";
  return 0;
}

// ---- sfm ------------------------------------------------------------------

int RunSfm(const Globals& g, const std::string& corr_path, const std::string& tracklets_path,
           const std::string& masks_dir, const std::string& manifest_path,
           const std::string& intrinsics_flag, std::int64_t frames_flag) {
  PipelineConfig config = LoadConfig(g);
  const fs::path out = RequireOut(g);
  if (corr_path.empty() == tracklets_path.empty()) {
    throw Error(ErrorCode::kInvalidArgument,
                "give exactly one of --correspondences or --tracklets");
  }
  std::optional<Manifest> manifest;
  if (!manifest_path.empty()) manifest = LoadManifest(manifest_path);
  CameraIntrinsics k;
  if (!intrinsics_flag.empty()) {
    k = ParseIntrinsicsFlag(intrinsics_flag);
  } else if (manifest) {
    k = manifest->intrinsics;
  } else {
    throw Error(ErrorCode::kInvalidArgument, "intrinsics required: --intrinsics or --manifest");
  }
  if (manifest) config.sfm.fps = manifest->fps;

  CorrespondenceSet set;
  if (!corr_path.empty()) {
    set = ParseCorrespondences(ReadFile(corr_path), corr_path);
  } else {
    set = ExtractCorrespondences(LoadTracklets(tracklets_path), MaybeMasks(masks_dir),
                                 config.sfm.deduplicate_correspondences);
    for (const auto& w : set.warnings) std::cerr << "warning: " << w << "\n";
  }
  std::int64_t num_frames = frames_flag;
  if (num_frames <= 0 && manifest) num_frames = manifest->num_frames;
  if (num_frames <= 0) {
    for (const auto& [key, m] : set.pairs) num_frames = std::max(num_frames, key.second + 1);
  }
  if (num_frames <= 0) throw Error(ErrorCode::kInvalidArgument, "no frames to reconstruct");

  const SceneModel model = RunPipelineFromCorrespondences(set, k, num_frames, config.sfm, g.seed);
  fs::create_directories(out);
  TrajectoryFile file{model.trajectory, model.intrinsics, std::nullopt};
  if (!model.failed) file.mean_reprojection_error = model.mean_reprojection_error;
  SaveTrajectory(out / "trajectory.txt", file);
  json report = {{"failed", model.failed},
                 {"failure_reason", model.failure_reason},
                 {"attempts", model.attempts},
                 {"num_frames", num_frames},
                 {"registered_frames", model.trajectory.NumRegistered()},
                 {"registered_fraction", model.trajectory.RegisteredFraction()},
                 {"mean_reprojection_error", model.mean_reprojection_error},
                 {"num_landmarks", model.landmarks.size()},
                 {"intrinsics", IntrinsicsJson(model.intrinsics)}};
  WriteFile(out / "report.json", report.dump(2) + "\n");
  if (model.failed) throw PipelineFailure("reconstruction FAILED: " + model.failure_reason);
  std::cout << "registered " << model.trajectory.NumRegistered() << "/" << num_frames
            << " frames, mean reprojection error "
            << FormatNumber(model.mean_reprojection_error) << " px\n";
  return 0;
}

// ---- eval-traj ------------------------------------------------------------

int RunEvalTraj(const Globals& g, const std::vector<std::string>& gts,
                const std::vector<std::string>& preds, std::vector<std::string> names) {
  const PipelineConfig config = LoadConfig(g);
  if (gts.size() != preds.size() || gts.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "--gt and --pred must pair up");
  }
  if (names.empty()) {
    for (const auto& p : preds) names.push_back(fs::path(p).stem().string());
  }
  if (names.size() != preds.size()) {
    throw Error(ErrorCode::kInvalidArgument, "one --name per --pred");
  }
  std::vector<TrajectoryReport> reports(preds.size());
  ParallelFor(preds.size(), g.jobs, [&](std::size_t i) {
    const Trajectory gt = LoadTrajectory(gts[i]).trajectory;
    const Trajectory pred = LoadTrajectory(preds[i]).trajectory;
    if (!gt.Complete()) {
      throw Error(ErrorCode::kInvalidArgument, gts[i] + ": ground truth has unregistered frames");
    }
    reports[i] = EvaluateTrajectory(gt, pred, config.eval.rpe_reuses_alignment);
  });
  const std::string csv = FormatCsv(TrajectoryReportTable(names, reports));
  if (g.out.empty()) {
    std::cout << csv;
  } else {
    WriteFile(g.out, csv);
  }
  return 0;
}

// ---- eval-sampson ---------------------------------------------------------

int RunEvalSampson(const Globals& g, const std::string& pairs_path,
                   const std::vector<std::string>& preds, const std::string& intrinsics_flag) {
  const PipelineConfig config = LoadConfig(g);
  const auto pairs = ParseAnnotatedPairs(ReadFile(pairs_path), pairs_path);
  std::map<std::string, Trajectory> trajectories;
  std::map<std::string, CameraIntrinsics> intrinsics;
  for (const auto& arg : preds) {
    const auto eq = arg.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw Error(ErrorCode::kInvalidArgument, "--pred expects video=path, got '" + arg + "'");
    }
    const std::string video = arg.substr(0, eq);
    const TrajectoryFile file = LoadTrajectory(arg.substr(eq + 1));
    trajectories[video] = file.trajectory;
    if (file.intrinsics) {
      intrinsics[video] = *file.intrinsics;
    } else if (!intrinsics_flag.empty()) {
      intrinsics[video] = ParseIntrinsicsFlag(intrinsics_flag);
    } else {
      throw Error(ErrorCode::kInvalidArgument,
                  arg + ": trajectory has no intrinsics header; pass --intrinsics");
    }
  }
  const SampsonReport report =
      SampsonEval(trajectories, intrinsics, pairs, config.eval.sampson_thresholds);
  const std::string csv = FormatCsv(SampsonReportTable(report));
  if (g.out.empty()) {
    std::cout << csv;
  } else {
    WriteFile(g.out, csv);
  }
  return 0;
}

// ---- synth ----------------------------------------------------------------

int RunSynth(const Globals& g, const std::string& kind_name, double noise, int frames,
             bool with_flows, std::size_t num_pairs) {
  const PipelineConfig config = LoadConfig(g);
  const fs::path out = RequireOut(g);
  const auto kind = ParseTrajectoryKind(kind_name);
  if (!kind) throw Error(ErrorCode::kInvalidArgument, "unknown trajectory kind '" + kind_name + "'");
  SceneConfig sc;
  sc.trajectory_kind = *kind;
  sc.num_frames = frames;
  sc.fps = config.fps;
  const SynthScene scene = GenScene(g.seed, sc);
  TrackOptions to;
  to.noise_px = noise;
  to.window_stride = static_cast<int>(std::lround(config.tracking.stride_seconds * config.fps));
  to.window_length = static_cast<int>(std::lround(config.tracking.length_seconds * config.fps));
  const SynthTracks tracks = ProjectTracks(scene, to, g.seed + 1);
  const std::string video = "synth_" + std::string(TrajectoryKindName(*kind)) + "_" +
                            std::to_string(g.seed);

  fs::create_directories(out / "masks");
  fs::create_directories(out / "signals");
  SaveTrajectory(out / "gt_trajectory.txt", {scene.gt_trajectory, scene.intrinsics, std::nullopt});
  SaveTracklets(out / "tracklets.jsonl", tracks.tracklets);
  for (const auto& m : tracks.masks) SaveMask(out / "masks" / MaskFileName(m.frame_index()), m);
  WriteFile(out / "pairs.jsonl",
            FormatAnnotatedPairs(SampleAnnotatedPairs(scene, video, num_pairs, 10, g.seed + 2)));
  std::vector<std::string> signal_files;
  ParallelFor(kAllFixtureKinds.size(), g.jobs, [&](std::size_t i) {
    const FixtureKind fk = kAllFixtureKinds[i];
    FilterSignals s = MakeFilterFixture(fk, g.seed);
    WriteFile(out / "signals" / (std::string(FixtureKindName(fk)) + ".json"),
              FormatFilterSignals(s));
  });
  if (with_flows) {
    fs::create_directories(out / "flow");
    const int stride = config.masking.cadence.keyframe_stride;
    for (std::int64_t f = 0; f + 1 < frames; f += stride) {
      SaveFlow(out / "flow" / IndexedName("fwd_", f, ".dpfl"),
               RenderFlow(scene, f, f + 1, to.mask_radius_px));
      SaveFlow(out / "flow" / IndexedName("bwd_", f, ".dpfl"),
               RenderFlow(scene, f + 1, f, to.mask_radius_px));
    }
  }
  std::size_t dynamic = 0;
  for (bool d : tracks.dynamic) dynamic += d ? 1 : 0;
  json manifest = {{"video", video},
                   {"seed", g.seed},
                   {"trajectory_kind", TrajectoryKindName(*kind)},
                   {"num_frames", frames},
                   {"fps", scene.fps()},
                   {"intrinsics", IntrinsicsJson(scene.intrinsics)},
                   {"noise_px", noise},
                   {"num_tracklets", tracks.tracklets.size()},
                   {"num_dynamic_tracklets", dynamic},
                   {"files",
                    {{"gt_trajectory", "gt_trajectory.txt"},
                     {"tracklets", "tracklets.jsonl"},
                     {"masks", "masks"},
                     {"pairs", "pairs.jsonl"},
                     {"signals", "signals"}}}};
  if (with_flows) manifest["files"]["flow"] = "flow";
  WriteFile(out / "manifest.json", manifest.dump(2) + "\n");
  std::cout << "wrote " << video << " to " << out.string() << "\n";
  return 0;
}

bool IsInputError(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument:
    case ErrorCode::kParseError:
    case ErrorCode::kDimensionMismatch:
    case ErrorCode::kMissingSignal:
    case ErrorCode::kNoPositives:
    case ErrorCode::kNoPairs:
    case ErrorCode::kSeriesTooShort:
      return true;
    default:
      return false;
  }
}

int Main(int argc, char** argv) {
  CLI::App app{"dynpose: video filtering, dynamic masking, pose estimation and evaluation"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config_path, "Pipeline configuration JSON")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "Random seed");
  app.add_option("--jobs", g.jobs, "Worker threads")->check(CLI::PositiveNumber);
  app.add_option("--out", g.out, "Output file or directory");

  std::function<int()> action;

  auto* filter = app.add_subcommand("filter", "Score filter signals; write decisions and PR points");
  std::vector<std::string> signal_inputs;
  filter->add_option("signals", signal_inputs, "Signal JSON files or directories")->required();
  filter->callback([&] { action = [&] { return RunFilter(g, signal_inputs); }; });

  auto* mask = app.add_subcommand("mask", "Build dynamic masks from flows and label maps");
  std::string flows_dir;
  std::string labels_dir;
  std::int64_t mask_frames = 0;
  mask->add_option("--flows", flows_dir, "Directory of fwd_/bwd_NNNNNN.dpfl keyframe flows");
  mask->add_option("--labels", labels_dir, "Directory of label_NNNNNN.pgm semantic maps");
  mask->add_option("--frames", mask_frames, "Number of video frames")->required()->check(CLI::PositiveNumber);
  mask->callback([&] { action = [&] { return RunMask(g, flows_dir, labels_dir, mask_frames); }; });

  auto* correspond = app.add_subcommand("correspond", "Extract correspondences from tracklets");
  std::string tracklets_path;
  std::string masks_dir;
  correspond->add_option("--tracklets", tracklets_path, "Tracklets JSON lines")->required();
  correspond->add_option("--masks", masks_dir, "Directory of mask_NNNNNN.pgm");
  correspond->callback([&] { action = [&] { return RunCorrespond(g, tracklets_path, masks_dir); }; });

  auto* sfm = app.add_subcommand("sfm", "Reconstruct camera poses");
  std::string corr_path;
  std::string sfm_tracklets;
  std::string sfm_masks;
  std::string manifest_path;
  std::string intrinsics_flag;
  std::int64_t sfm_frames = 0;
  sfm->add_option("--correspondences", corr_path, "Correspondence archive");
  sfm->add_option("--tracklets", sfm_tracklets, "Tracklets JSON lines");
  sfm->add_option("--masks", sfm_masks, "Directory of mask_NNNNNN.pgm");
  sfm->add_option("--manifest", manifest_path, "Video manifest with intrinsics and frame count");
  sfm->add_option("--intrinsics", intrinsics_flag, "fx,fy,cx,cy,width,height");
  sfm->add_option("--frames", sfm_frames, "Number of video frames");
  sfm->callback([&] {
    action = [&] {
      return RunSfm(g, corr_path, sfm_tracklets, sfm_masks, manifest_path, intrinsics_flag,
                    sfm_frames);
    };
  });

  auto* eval_traj = app.add_subcommand("eval-traj", "ATE and RPE against ground truth");
  std::vector<std::string> gts;
  std::vector<std::string> preds;
  std::vector<std::string> names;
  eval_traj->add_option("--gt", gts, "Ground-truth trajectories")->required();
  eval_traj->add_option("--pred", preds, "Predicted trajectories, one per --gt")->required();
  eval_traj->add_option("--name", names, "Video names (default: prediction file stems)");
  eval_traj->callback([&] { action = [&] { return RunEvalTraj(g, gts, preds, names); }; });

  auto* eval_sampson = app.add_subcommand("eval-sampson", "Sampson error on annotated pairs");
  std::string pairs_path;
  std::vector<std::string> sampson_preds;
  std::string sampson_intrinsics;
  eval_sampson->add_option("--pairs", pairs_path, "Annotated pairs JSON lines")->required();
  eval_sampson->add_option("--pred", sampson_preds, "video=trajectory.txt")->required();
  eval_sampson->add_option("--intrinsics", sampson_intrinsics,
                           "fx,fy,cx,cy,width,height for trajectories without a header");
  eval_sampson->callback([&] {
    action = [&] { return RunEvalSampson(g, pairs_path, sampson_preds, sampson_intrinsics); };
  });

  auto* synth = app.add_subcommand("synth", "Write a synthetic fixture directory");
  std::string kind = "orbit";
  double noise = 0.0;
  int synth_frames = 60;
  bool with_flows = false;
  std::size_t num_pairs = 50;
  synth->add_option("--kind", kind, "orbit, forward-arc, pan, static or linear");
  synth->add_option("--noise", noise, "Track noise in pixels")->check(CLI::NonNegativeNumber);
  synth->add_option("--frames", synth_frames, "Number of frames")->check(CLI::PositiveNumber);
  synth->add_flag("--flows", with_flows, "Also write keyframe optical flow");
  synth->add_option("--pairs", num_pairs, "Annotated pairs to sample");
  synth->callback([&] {
    action = [&] { return RunSynth(g, kind, noise, synth_frames, with_flows, num_pairs); };
  });

  auto* pr_curve = app.add_subcommand("pr-curve", "Precision-recall curve from scores and labels");
  std::string scores_path;
  std::string score_col = "score";
  std::string label_col = "label";
  pr_curve->add_option("scores", scores_path, "CSV with score and label columns")->required();
  pr_curve->add_option("--score-column", score_col, "Score column name");
  pr_curve->add_option("--label-column", label_col, "Label column name");
  pr_curve->callback([&] {
    action = [&] { return RunPrCurve(g, scores_path, score_col, label_col); };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitInput;
  }
  try {
    return action();
  } catch (const PipelineFailure& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitPipeline;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return IsInputError(e.code()) ? kExitInput : kExitPipeline;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  }
}

}  // namespace
}  // namespace dynpose

int main(int argc, char** argv) { return dynpose::Main(argc, argv); }
