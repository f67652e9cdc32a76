#pragma once

#include <atomic>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "phaseforge/common.hpp"

namespace phaseforge::synth {

// Phase ids are 1-based: 1..num_phases.
struct WorkflowModel {
  int num_phases = 7;
  Vec phase_duration_mean;  // seconds, one per phase
  Vec phase_duration_std;   // seconds
  double min_phase_duration = 5.0;  // seconds
  int feature_dim = 16;
  double emission_noise_std = 0.35;
  double fps = 1.0;
  double skip_prob = 0.0;  // chance a middle phase is skipped; 0 keeps full coverage

  void validate() const;
};

// Total number of phase-label reads through SurgeryRecord accessors since
// process start. Pre-training stages must not move this counter; the
// experiment layer snapshots it around every self-supervised stage.
uint64_t label_reads();

class SurgeryRecord {
 public:
  std::string video_id;
  double fps = 1.0;
  Matrix frames;  // T x D

  int num_frames() const { return frames.rows; }
  double duration_seconds() const { return frames.rows / fps; }

  // Instrumented access: bumps the global label-read counter.
  std::span<const int> phases() const;
  int phase_at(int t) const;

  void set_phases(std::vector<int> labels) { phase_labels_ = std::move(labels); }

 private:
  std::vector<int> phase_labels_;
};

struct FramePair {
  Vec frame_a;
  Vec frame_b;
  int t_a = 0;
  int t_b = 0;
  int label = 0;  // 0 iff frame_a occurs first
};

struct PaddedSequence {
  Matrix features;            // pad_to x D, zero rows past T
  std::vector<int> labels;    // pad_to, 0 past T
  std::vector<uint8_t> mask;  // 1 for real frames
};

// Feature-and-mask padding for label-free stages.
struct PaddedFeatures {
  Matrix features;
  std::vector<uint8_t> mask;
};

SurgeryRecord generate_surgery(const WorkflowModel& model, uint64_t seed, const std::string& video_id = "");
std::vector<SurgeryRecord> generate_dataset(const WorkflowModel& model, int n_videos, uint64_t seed);

// progress[t] = (t+1) / T; final frame is exactly 1.
Vec derive_progress_labels(const SurgeryRecord& record);
// rsd[t] = (T_minutes - elapsed_minutes(t)) / s_norm; final frame is exactly 0.
Vec derive_rsd_labels(const SurgeryRecord& record, double s_norm);

std::vector<FramePair> sample_frame_pairs(const SurgeryRecord& record, int n_pairs, uint64_t seed);

PaddedSequence pad_sequence(const SurgeryRecord& record, int pad_to);
PaddedFeatures pad_features(const SurgeryRecord& record, int pad_to);

}  // namespace phaseforge::synth
