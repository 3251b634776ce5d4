#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace dynpose {

// Raw per-video measurements. Distances are fractions of the frame diagonal;
// focal lengths are pixels at 720p. Absent fields mean the signal has not
// been computed (yet).
struct FilterSignals {
  std::string video;
  // Sample rate of flow_seq / focal_seq.
  double signal_fps = 6.0;
  std::optional<std::vector<double>> flow_seq;
  std::optional<std::vector<double>> focal_seq;
  std::optional<double> distortion_alpha;
  std::optional<double> classifier_acceptable;
  std::optional<double> classifier_interaction;
  std::optional<std::vector<double>> mask_fraction_seq;
  std::optional<std::vector<double>> track_loss_seq;
  std::optional<double> track_median_move;
  // Smallest per-window median movement; falls back to track_median_move.
  std::optional<double> track_window_median_move;
  std::optional<std::array<bool, 8>> vlm_answers;
  // Ground-truth suitability, when known.
  std::optional<bool> label;
};

enum class FilterComponent {
  kClassifier = 0,
  kDistortion,
  kFocal,
  kMasking,
  kFlow,
  kTracking,
  kVlm,
};
inline constexpr std::size_t kNumFilterComponents = 7;
inline constexpr std::array<FilterComponent, kNumFilterComponents>
    kAllFilterComponents = {
        FilterComponent::kClassifier, FilterComponent::kDistortion,
        FilterComponent::kFocal,      FilterComponent::kMasking,
        FilterComponent::kFlow,       FilterComponent::kTracking,
        FilterComponent::kVlm};

std::string_view ComponentName(FilterComponent component);

struct FilterScore {
  std::array<std::optional<double>, kNumFilterComponents> components;

  std::optional<double>& operator[](FilterComponent c) {
    return components[static_cast<std::size_t>(c)];
  }
  const std::optional<double>& operator[](FilterComponent c) const {
    return components[static_cast<std::size_t>(c)];
  }
  std::size_t NumPresent() const;
  // Arithmetic mean of the present components; 0 when none are present.
  double Aggregate() const;
};

// Every threshold the scorers use. Defaults are the published operating
// values; sigmoid_slope and the stage thresholds are ours.
struct FilterThresholds {
  double classifier_acceptable_min = 0.55;
  double classifier_interaction_min = 0.20;
  double distortion_alpha_max = 1.00;
  double focal_spread_max_ratio = 0.40;  // (p90 - p10) / mean
  double focal_window_change_max = 0.20;
  double focal_p80_max = 1400.0;
  double mask_p90_max = 0.80;
  double flow_mean_min = 0.02127;
  double flow_spike_sigmas = 4.0;
  double flow_window_mean_max = 0.15;
  double track_loss_max = 0.50;
  double track_move_min = 0.05;
  double window_seconds = 1.0;
  double sigmoid_slope = 50.0;
  double final_threshold = 0.910;
  // One per intermediate cascade stage.
  std::array<double, 4> stage_thresholds = {0.70, 0.70, 0.70, 0.70};
};

enum class MarginSense { kAtLeast, kAtMost };

// (value - threshold) / |threshold|, sign-flipped for kAtMost so that a
// positive margin always means "passes". A zero threshold uses denominator 1.
double RelativeMargin(double value, double threshold, MarginSense sense);

// Logistic 1 / (1 + exp(-slope * margin)).
double SmoothMargin(double margin, double slope = 50.0);

// Linear interpolation between order statistics, p in [0, 100].
double Percentile(std::span<const double> values, double p);

double ScoreClassifier(double acceptable, double interaction,
                       const FilterThresholds& t = {});
double ScoreDistortion(double alpha, const FilterThresholds& t = {});
double ScoreFocal(std::span<const double> focal_seq, double fps,
                  const FilterThresholds& t = {});
double ScoreMasking(std::span<const double> mask_fraction_seq,
                    const FilterThresholds& t = {});
double ScoreFlow(std::span<const double> flow_seq, double fps,
                 const FilterThresholds& t = {});
double ScoreTracking(std::span<const double> track_loss_seq,
                     double median_move,
                     std::optional<double> window_median_move = std::nullopt,
                     const FilterThresholds& t = {});
double ScoreVlm(const std::array<bool, 8>& answers);

// Scores a single component. Throws kMissingSignal if its inputs are absent.
double ScoreComponent(const FilterSignals& signals, FilterComponent component,
                      const FilterThresholds& t = {});
// Scores every component whose inputs are present.
FilterScore ScoreAvailable(const FilterSignals& signals,
                           const FilterThresholds& t = {});

bool Aggregate(const FilterScore& score, double threshold);

// Stages in evaluation order: {classifier, flow, focal}, {distortion},
// {tracking}, {masking}, {vlm}.
const std::vector<std::vector<FilterComponent>>& CascadeStages();

struct StageDecision {
  std::size_t stage = 0;
  double mean = 0.0;
  double threshold = 0.0;
  bool passed = false;
};

struct CascadeResult {
  FilterScore score;
  std::vector<StageDecision> stages;
  bool include = false;
  // Index of the stage that excluded the video, or the last stage.
  std::size_t last_stage = 0;
};

// Runs the staged filter. A video failing a stage is excluded and later
// components are never scored. The last stage applies final_threshold to all
// seven components.
CascadeResult RunCascade(const FilterSignals& signals,
                         const FilterThresholds& t = {});

struct LabeledVideo {
  std::string video;
  bool suitable = false;
};

struct PrPoint {
  double threshold = 0.0;
  double recall = 0.0;
  double precision = 0.0;
};

// Sweeps the decision threshold over the distinct scores in descending order.
// Throws kNoPositives if no label is positive.
std::vector<PrPoint> PrCurve(std::span<const double> scores,
                             std::span<const bool> labels);

// Sum over recall increments of precision. With voc_smoothing each precision
// is replaced by the maximum precision at equal or higher recall.
double AveragePrecision(std::span<const PrPoint> curve,
                        bool voc_smoothing = true);

}  // namespace dynpose
