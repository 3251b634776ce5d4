#include "dynpose/filtering.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dynpose/error.h"

namespace dynpose {
namespace {

void RequireNonEmpty(std::span<const double> values, std::size_t min_size,
                     std::string_view what) {
  if (values.size() < min_size) {
    throw Error(ErrorCode::kSeriesTooShort,
                std::string(what) + " needs at least " +
                    std::to_string(min_size) + " samples");
  }
}

// Number of samples spanned by a window of `seconds` at `fps`, at least one.
std::size_t WindowSamples(double fps, double seconds) {
  return std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(fps * seconds)));
}

double Mean(std::span<const double> values) {
  return std::accumulate(values.begin(), values.end(), 0.0) /
         static_cast<double>(values.size());
}

double Indicator(double value, double threshold, MarginSense sense,
                 const FilterThresholds& t) {
  return SmoothMargin(RelativeMargin(value, threshold, sense), t.sigmoid_slope);
}

template <typename T>
const T& Need(const std::optional<T>& value, std::string_view name) {
  if (!value) {
    throw Error(ErrorCode::kMissingSignal,
                "signal '" + std::string(name) + "' is absent");
  }
  return *value;
}

}  // namespace

std::string_view ComponentName(FilterComponent component) {
  switch (component) {
    case FilterComponent::kClassifier: return "classifier";
    case FilterComponent::kDistortion: return "distortion";
    case FilterComponent::kFocal: return "focal";
    case FilterComponent::kMasking: return "masking";
    case FilterComponent::kFlow: return "flow";
    case FilterComponent::kTracking: return "tracking";
    case FilterComponent::kVlm: return "vlm";
  }
  return "unknown";
}

std::size_t FilterScore::NumPresent() const {
  return static_cast<std::size_t>(std::count_if(
      components.begin(), components.end(),
      [](const std::optional<double>& c) { return c.has_value(); }));
}

double FilterScore::Aggregate() const {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& c : components) {
    if (!c) continue;
    sum += *c;
    ++n;
  }
  return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

double RelativeMargin(double value, double threshold, MarginSense sense) {
  const double denom = threshold != 0.0 ? std::abs(threshold) : 1.0;
  const double margin = (value - threshold) / denom;
  return sense == MarginSense::kAtLeast ? margin : -margin;
}

double SmoothMargin(double margin, double slope) {
  return 1.0 / (1.0 + std::exp(-slope * margin));
}

double Percentile(std::span<const double> values, double p) {
  RequireNonEmpty(values, 1, "percentile");
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const double pos = p / 100.0 * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

double ScoreClassifier(double acceptable, double interaction,
                       const FilterThresholds& t) {
  return 0.5 * (Indicator(acceptable, t.classifier_acceptable_min,
                          MarginSense::kAtLeast, t) +
                Indicator(interaction, t.classifier_interaction_min,
                          MarginSense::kAtLeast, t));
}

double ScoreDistortion(double alpha, const FilterThresholds& t) {
  return Indicator(alpha, t.distortion_alpha_max, MarginSense::kAtMost, t);
}

double ScoreFocal(std::span<const double> focal_seq, double fps,
                  const FilterThresholds& t) {
  RequireNonEmpty(focal_seq, 2, "focal series");
  const double mean = Mean(focal_seq);
  const double spread = Percentile(focal_seq, 90) - Percentile(focal_seq, 10);
  const double spread_score = Indicator(spread, t.focal_spread_max_ratio * mean,
                                        MarginSense::kAtMost, t);

  // Relative change between the extremes of every window spanning one
  // second, i.e. fps intervals.
  const std::size_t window =
      std::min(WindowSamples(fps, t.window_seconds) + 1, focal_seq.size());
  double max_change = 0.0;
  for (std::size_t start = 0; start + window <= focal_seq.size(); ++start) {
    const auto [lo, hi] = std::minmax_element(
        focal_seq.begin() + static_cast<std::ptrdiff_t>(start),
        focal_seq.begin() + static_cast<std::ptrdiff_t>(start + window));
    max_change = std::max(max_change, (*hi - *lo) / *lo);
  }
  const double window_score = Indicator(max_change, t.focal_window_change_max,
                                        MarginSense::kAtMost, t);

  const double long_score = Indicator(Percentile(focal_seq, 80),
                                      t.focal_p80_max, MarginSense::kAtMost, t);
  return (spread_score + window_score + long_score) / 3.0;
}

double ScoreMasking(std::span<const double> mask_fraction_seq,
                    const FilterThresholds& t) {
  RequireNonEmpty(mask_fraction_seq, 1, "mask fraction series");
  return Indicator(Percentile(mask_fraction_seq, 90), t.mask_p90_max,
                   MarginSense::kAtMost, t);
}

double ScoreFlow(std::span<const double> flow_seq, double fps,
                 const FilterThresholds& t) {
  RequireNonEmpty(flow_seq, 1, "flow series");
  const double mean = Mean(flow_seq);
  const double mean_score =
      Indicator(mean, t.flow_mean_min, MarginSense::kAtLeast, t);

  // The spike test is scored on the z-score of the largest step so that a
  // perfectly steady series (sigma = 0) is not an outlier.
  double var = 0.0;
  for (double f : flow_seq) var += (f - mean) * (f - mean);
  const double sigma = std::sqrt(var / static_cast<double>(flow_seq.size()));
  const double peak = *std::max_element(flow_seq.begin(), flow_seq.end());
  const double z = sigma > 0.0 ? (peak - mean) / sigma : 0.0;
  const double spike_score =
      Indicator(z, t.flow_spike_sigmas, MarginSense::kAtMost, t);

  const std::size_t window =
      std::min(WindowSamples(fps, t.window_seconds), flow_seq.size());
  double window_sum = std::accumulate(
      flow_seq.begin(), flow_seq.begin() + static_cast<std::ptrdiff_t>(window),
      0.0);
  double max_window_mean = window_sum / static_cast<double>(window);
  for (std::size_t end = window; end < flow_seq.size(); ++end) {
    window_sum += flow_seq[end] - flow_seq[end - window];
    max_window_mean =
        std::max(max_window_mean, window_sum / static_cast<double>(window));
  }
  const double sustained_score = Indicator(
      max_window_mean, t.flow_window_mean_max, MarginSense::kAtMost, t);
  return (mean_score + spike_score + sustained_score) / 3.0;
}

double ScoreTracking(std::span<const double> track_loss_seq,
                     double median_move,
                     std::optional<double> window_median_move,
                     const FilterThresholds& t) {
  RequireNonEmpty(track_loss_seq, 1, "track loss series");
  const double max_loss =
      *std::max_element(track_loss_seq.begin(), track_loss_seq.end());
  const double cut_score =
      Indicator(max_loss, t.track_loss_max, MarginSense::kAtMost, t);
  const double video_score =
      Indicator(median_move, t.track_move_min, MarginSense::kAtLeast, t);
  const double window_score =
      Indicator(window_median_move.value_or(median_move), t.track_move_min,
                MarginSense::kAtLeast, t);
  return (cut_score + video_score + window_score) / 3.0;
}

double ScoreVlm(const std::array<bool, 8>& answers) {
  return std::any_of(answers.begin(), answers.end(), [](bool a) { return a; })
             ? 0.0
             : 1.0;
}

double ScoreComponent(const FilterSignals& s, FilterComponent component,
                      const FilterThresholds& t) {
  switch (component) {
    case FilterComponent::kClassifier:
      return ScoreClassifier(Need(s.classifier_acceptable, "classifier_acceptable"),
                             Need(s.classifier_interaction, "classifier_interaction"),
                             t);
    case FilterComponent::kDistortion:
      return ScoreDistortion(Need(s.distortion_alpha, "distortion_alpha"), t);
    case FilterComponent::kFocal:
      return ScoreFocal(Need(s.focal_seq, "focal_seq"), s.signal_fps, t);
    case FilterComponent::kMasking:
      return ScoreMasking(Need(s.mask_fraction_seq, "mask_fraction_seq"), t);
    case FilterComponent::kFlow:
      return ScoreFlow(Need(s.flow_seq, "flow_seq"), s.signal_fps, t);
    case FilterComponent::kTracking:
      return ScoreTracking(Need(s.track_loss_seq, "track_loss_seq"),
                           Need(s.track_median_move, "track_median_move"),
                           s.track_window_median_move, t);
    case FilterComponent::kVlm:
      return ScoreVlm(Need(s.vlm_answers, "vlm_answers"));
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown filter component");
}

FilterScore ScoreAvailable(const FilterSignals& signals,
                           const FilterThresholds& t) {
  FilterScore score;
  for (FilterComponent c : kAllFilterComponents) {
    try {
      score[c] = ScoreComponent(signals, c, t);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kMissingSignal) throw;
    }
  }
  return score;
}

bool Aggregate(const FilterScore& score, double threshold) {
  return score.Aggregate() >= threshold;
}

const std::vector<std::vector<FilterComponent>>& CascadeStages() {
  static const std::vector<std::vector<FilterComponent>> stages = {
      {FilterComponent::kClassifier, FilterComponent::kFlow,
       FilterComponent::kFocal},
      {FilterComponent::kDistortion},
      {FilterComponent::kTracking},
      {FilterComponent::kMasking},
      {FilterComponent::kVlm},
  };
  return stages;
}

CascadeResult RunCascade(const FilterSignals& signals,
                         const FilterThresholds& t) {
  const auto& stages = CascadeStages();
  CascadeResult result;
  for (std::size_t stage = 0; stage < stages.size(); ++stage) {
    for (FilterComponent c : stages[stage]) {
      result.score[c] = ScoreComponent(signals, c, t);
    }
    const bool final_stage = stage + 1 == stages.size();
    StageDecision decision;
    decision.stage = stage;
    decision.mean = result.score.Aggregate();
    decision.threshold =
        final_stage ? t.final_threshold : t.stage_thresholds[stage];
    decision.passed = decision.mean >= decision.threshold;
    result.stages.push_back(decision);
    result.last_stage = stage;
    if (!decision.passed) return result;
  }
  result.include = true;
  return result;
}

std::vector<PrPoint> PrCurve(std::span<const double> scores,
                             std::span<const bool> labels) {
  if (scores.size() != labels.size()) {
    throw Error(ErrorCode::kInvalidArgument,
                "scores and labels differ in length");
  }
  const auto positives = std::count(labels.begin(), labels.end(), true);
  if (positives == 0) {
    throw Error(ErrorCode::kNoPositives, "no positive labels");
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] > scores[b];
  });

  std::vector<PrPoint> curve;
  std::size_t tp = 0;
  std::size_t fp = 0;
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (labels[order[i]]) ++tp; else ++fp;
    // Emit once per distinct score, after all ties are counted.
    if (i + 1 < order.size() && scores[order[i + 1]] == scores[order[i]]) {
      continue;
    }
    curve.push_back({scores[order[i]],
                     static_cast<double>(tp) / static_cast<double>(positives),
                     static_cast<double>(tp) / static_cast<double>(tp + fp)});
  }
  return curve;
}

double AveragePrecision(std::span<const PrPoint> curve, bool voc_smoothing) {
  std::vector<double> precision(curve.size());
  for (std::size_t i = 0; i < curve.size(); ++i) precision[i] = curve[i].precision;
  if (voc_smoothing) {
    // Recall is non-decreasing along the curve, so a suffix maximum is the
    // maximum over points with recall >= the current one.
    for (std::size_t i = curve.size(); i-- > 1;) {
      precision[i - 1] = std::max(precision[i - 1], precision[i]);
    }
  }
  double ap = 0.0;
  double prev_recall = 0.0;
  for (std::size_t i = 0; i < curve.size(); ++i) {
    ap += (curve[i].recall - prev_recall) * precision[i];
    prev_recall = curve[i].recall;
  }
  return ap;
}

}  // namespace dynpose
