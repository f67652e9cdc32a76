#pragma once

#include <span>
#include <string>
#include <vector>

#include "phaseforge/arch.hpp"
#include "phaseforge/synth.hpp"

namespace phaseforge::eval {

// Per-frame probability distributions plus argmax labels for one video.
struct PredictionTrace {
  std::string video_id;
  Matrix probs;             // T x M, rows sum to 1
  std::vector<int> labels;  // 1-based argmax per frame
};

// Strictly causal: output at t depends only on frames <= t.
PredictionTrace predict_sequence(const nn::ParamStore& params, const synth::SurgeryRecord& record);

struct RsdPrediction {
  Vec rsd;   // normalized units (minutes / s_norm)
  Vec prog;  // sigmoid outputs in (0,1)
};
RsdPrediction predict_rsd_sequence(const nn::ParamStore& params, const synth::SurgeryRecord& record);

// Trailing-window mode filter; ties go to the most recently seen label among
// the tied phases. window is in seconds.
std::vector<int> causal_mode_filter(std::span<const int> labels, double window_s, double fps);

double accuracy(std::span<const int> pred, std::span<const int> gt);

struct PrecisionRecall {
  Vec precision, recall;                          // percent, per phase (index p-1)
  std::vector<uint8_t> precision_defined, recall_defined;
  double avg_precision = 0.0, avg_recall = 0.0;   // over defined phases
};
PrecisionRecall per_phase_precision_recall(std::span<const int> pred, std::span<const int> gt, int M);

double f1(double avg_precision, double avg_recall);

enum class DistanceMode { First, Closest };
struct TemporalDistance {
  Vec seconds;                       // per phase; sentinel = video duration when not predicted
  std::vector<uint8_t> predicted;    // phase appears in predictions
  std::vector<uint8_t> in_gt;        // phase appears in ground truth
};
TemporalDistance temporal_distance(std::span<const int> pred, std::span<const int> gt, double fps,
                                   int M, DistanceMode mode);

// Percent of frames inside predicted runs that never overlap the same phase in
// the ground truth.
double noise_pct(std::span<const int> pred, std::span<const int> gt);

struct MetricsReport {
  std::string video_id;
  double accuracy = 0.0;
  double avg_precision = 0.0, avg_recall = 0.0, f1 = 0.0;
  double noise = 0.0;
  Vec precision, recall;
  std::vector<uint8_t> precision_defined, recall_defined;
  Vec td_first, td_closest;
  std::vector<uint8_t> phase_predicted, phase_in_gt;
};

// Classification metrics from the raw predictions; boundary metrics (temporal
// distance, noise) from the filtered ones.
MetricsReport compute_metrics(const std::string& video_id, std::span<const int> pred_raw,
                              std::span<const int> pred_filtered, std::span<const int> gt, int M,
                              double fps);

struct Aggregate {
  int n_videos = 0;
  // mean/std pairs; std is the sample standard deviation (0 for n < 2)
  double accuracy_mean = 0, accuracy_std = 0;
  double avg_precision_mean = 0, avg_precision_std = 0;
  double avg_recall_mean = 0, avg_recall_std = 0;
  double f1_mean = 0, f1_std = 0;
  double noise_mean = 0, noise_std = 0;
  Vec precision_mean, recall_mean;          // over videos where defined
  Vec td_first_mean, td_closest_mean;       // over videos where predicted; sentinels excluded
  std::vector<int> td_undefined_count;      // videos where the phase was never predicted
};
Aggregate aggregate(const std::vector<MetricsReport>& reports);

}  // namespace phaseforge::eval
