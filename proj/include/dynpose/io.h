#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dynpose/evalmetrics.h"
#include "dynpose/filtering.h"
#include "dynpose/geometry.h"
#include "dynpose/masking.h"
#include "dynpose/sfm.h"
#include "dynpose/tracking.h"

namespace dynpose {

// ---- Configuration --------------------------------------------------------

struct TrackingConfig {
  int grid_rows = 42;
  int grid_cols = 42;
  double stride_seconds = 5.0 / 12.0;
  double length_seconds = 2.5;
};

struct MaskingConfig {
  MaskCadence cadence;
  MotionSegmentOptions motion;
};

struct EvalConfig {
  std::vector<double> sampson_thresholds = DefaultSampsonThresholds();
  double reprojection_threshold = 1.37;
  bool rpe_reuses_alignment = true;
};

struct PipelineConfig {
  double fps = 12.0;
  TrackingConfig tracking;
  MaskingConfig masking;
  FilterThresholds filter;
  SfmConfig sfm;
  EvalConfig eval;

  // Throws kInvalidArgument naming the first non-positive constant.
  void Validate() const;
};

// Missing keys keep their defaults; unknown keys are rejected.
PipelineConfig ParsePipelineConfig(const std::string& text,
                                   const std::string& source = "<config>");
std::string FormatPipelineConfig(const PipelineConfig& config);
PipelineConfig LoadPipelineConfig(const std::filesystem::path& path);

// ---- Trajectory (TUM-style text) ------------------------------------------

// Header values carried in '#' comment lines.
struct TrajectoryFile {
  Trajectory trajectory;
  std::optional<CameraIntrinsics> intrinsics;
  std::optional<double> mean_reprojection_error;
};

// One line per registered frame: "frame tx ty tz qx qy qz qw" with 9
// significant digits. The header records the total frame count so that
// unregistered frames survive a round trip.
std::string FormatTrajectory(const TrajectoryFile& file);
TrajectoryFile ParseTrajectory(const std::string& text,
                               const std::string& source = "<trajectory>");
void SaveTrajectory(const std::filesystem::path& path, const TrajectoryFile& file);
TrajectoryFile LoadTrajectory(const std::filesystem::path& path);

// ---- Tracklets (JSON lines) -----------------------------------------------

std::string FormatTracklets(const std::vector<Tracklet>& tracklets);
std::vector<Tracklet> ParseTracklets(const std::string& text,
                                     const std::string& source = "<tracklets>");
void SaveTracklets(const std::filesystem::path& path,
                   const std::vector<Tracklet>& tracklets);
std::vector<Tracklet> LoadTracklets(const std::filesystem::path& path);

// ---- Masks and label maps (binary PGM) ------------------------------------

// P5, maxval 255, dynamic pixels 255.
std::string EncodeMaskPgm(const DynamicMask& mask);
// Any non-zero pixel is dynamic. With expected dimensions, a different size
// throws kDimensionMismatch.
DynamicMask DecodeMaskPgm(const std::string& bytes, std::int64_t frame_index,
                          const std::string& source = "<mask>",
                          std::optional<std::pair<int, int>> expected_size = {});
std::string MaskFileName(std::int64_t frame_index);
void SaveMask(const std::filesystem::path& path, const DynamicMask& mask);
DynamicMask LoadMask(const std::filesystem::path& path, std::int64_t frame_index,
                     std::optional<std::pair<int, int>> expected_size = {});
// Reads every mask_NNNNNN.pgm in a directory.
std::map<std::int64_t, DynamicMask> LoadMaskDirectory(
    const std::filesystem::path& dir,
    std::optional<std::pair<int, int>> expected_size = {});

// P5, maxval 65535, big-endian class ids.
std::string EncodeLabelPgm(const LabelMap& labels);
LabelMap DecodeLabelPgm(const std::string& bytes, const std::string& source = "<labels>");

// ---- Flow (DPFL binary) ---------------------------------------------------

// "DPFL", u32 width, u32 height (little-endian), then width*height
// little-endian f32 (u, v) pairs, row-major.
std::string EncodeFlow(const FlowField& flow);
FlowField DecodeFlow(const std::string& bytes, const std::string& source = "<flow>");
void SaveFlow(const std::filesystem::path& path, const FlowField& flow);
FlowField LoadFlow(const std::filesystem::path& path);

// ---- Filter signals (JSON) ------------------------------------------------

std::string FormatFilterSignals(const FilterSignals& signals);
FilterSignals ParseFilterSignals(const std::string& text,
                                 const std::string& source = "<signals>");

// ---- Annotated pairs (JSON lines) -----------------------------------------

std::string FormatAnnotatedPairs(const std::vector<AnnotatedPair>& pairs);
std::vector<AnnotatedPair> ParseAnnotatedPairs(const std::string& text,
                                               const std::string& source = "<pairs>");

// ---- Correspondence archive (JSON lines) ----------------------------------

// One record per frame pair: {"i", "j", "matches": [[ax, ay, bx, by, id], ...]}.
std::string FormatCorrespondences(const CorrespondenceSet& set);
CorrespondenceSet ParseCorrespondences(const std::string& text,
                                       const std::string& source = "<correspondences>");

// ---- Reports (CSV) --------------------------------------------------------

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  friend bool operator==(const CsvTable&, const CsvTable&) = default;
};

// Fields containing a comma, quote or newline are quoted.
std::string FormatCsv(const CsvTable& table);
// Every row must have as many fields as the header.
CsvTable ParseCsv(const std::string& text, const std::string& source = "<csv>");

// Shortest text that parses back to the same double.
std::string FormatNumber(double value);

CsvTable TrajectoryReportTable(const std::vector<std::string>& videos,
                               const std::vector<TrajectoryReport>& reports);
CsvTable SampsonReportTable(const SampsonReport& report);
CsvTable CascadeTable(const std::vector<FilterSignals>& signals,
                      const std::vector<CascadeResult>& results);
CsvTable PrCurveTable(const std::vector<PrPoint>& curve);

// ---- Files ----------------------------------------------------------------

std::string ReadFile(const std::filesystem::path& path);
void WriteFile(const std::filesystem::path& path, const std::string& contents);

}  // namespace dynpose
