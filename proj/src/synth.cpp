#include "phaseforge/synth.hpp"

#include <cmath>

#include "phaseforge/rng.hpp"

namespace phaseforge::synth {

namespace {
std::atomic<uint64_t> g_label_reads{0};
}

uint64_t label_reads() { return g_label_reads.load(std::memory_order_relaxed); }

std::span<const int> SurgeryRecord::phases() const {
  g_label_reads.fetch_add(1, std::memory_order_relaxed);
  return phase_labels_;
}

int SurgeryRecord::phase_at(int t) const {
  g_label_reads.fetch_add(1, std::memory_order_relaxed);
  return phase_labels_[static_cast<size_t>(t)];
}

void WorkflowModel::validate() const {
  require(num_phases >= 1, "WorkflowModel: num_phases >= 1");
  require(static_cast<int>(phase_duration_mean.size()) == num_phases,
          "WorkflowModel: one duration mean per phase");
  require(static_cast<int>(phase_duration_std.size()) == num_phases,
          "WorkflowModel: one duration std per phase");
  for (double m : phase_duration_mean) require(m > 0.0, "WorkflowModel: means > 0");
  for (double s : phase_duration_std) require(s >= 0.0, "WorkflowModel: stds >= 0");
  require(fps > 0.0, "WorkflowModel: fps > 0");
  require(min_phase_duration >= 1.0 / fps, "WorkflowModel: min_phase_duration >= 1/fps");
  require(feature_dim >= num_phases, "WorkflowModel: feature_dim >= num_phases");
  require(emission_noise_std >= 0.0, "WorkflowModel: emission noise >= 0");
  require(skip_prob >= 0.0 && skip_prob < 1.0, "WorkflowModel: skip_prob in [0,1)");
}

namespace {

// Normal truncated below at `lo`, by rejection. A zero-std draw degenerates to
// max(mean, lo) so fixed-duration models terminate.
double truncated_normal(Rng& rng, double mean, double std, double lo) {
  if (std == 0.0) return std::max(mean, lo);
  for (int attempt = 0; attempt < 10000; ++attempt) {
    double d = rng.normal(mean, std);
    if (d >= lo) return d;
  }
  return lo;
}

}  // namespace

SurgeryRecord generate_surgery(const WorkflowModel& model, uint64_t seed, const std::string& video_id) {
  model.validate();
  Rng rng(seed);

  const int M = model.num_phases;
  std::vector<int> frames_per_phase(M, 0);
  std::vector<uint8_t> skipped(M, 0);
  for (int p = 0; p < M; ++p) {
    if (model.skip_prob > 0.0 && p > 0 && p < M - 1 && rng.uniform() < model.skip_prob) {
      skipped[p] = 1;
      continue;
    }
    double dur = truncated_normal(rng, model.phase_duration_mean[p], model.phase_duration_std[p],
                                  model.min_phase_duration);
    frames_per_phase[p] = static_cast<int>(std::llround(dur * model.fps));
    if (frames_per_phase[p] < 1) frames_per_phase[p] = 1;
  }

  int T = 0;
  for (int p = 0; p < M; ++p) T += frames_per_phase[p];

  SurgeryRecord rec;
  rec.video_id = video_id;
  rec.fps = model.fps;
  rec.frames = Matrix(T, model.feature_dim);
  std::vector<int> labels(T);

  // Emission: block one-hot phase embedding over the first M dims, i.i.d.
  // Gaussian noise on every dim except the reserved last one, which carries the
  // clean elapsed-time ramp (t+1)/T that makes progress and RSD learnable.
  const int time_dim = model.feature_dim - 1;
  int t = 0;
  for (int p = 0; p < M; ++p) {
    for (int k = 0; k < frames_per_phase[p]; ++k, ++t) {
      labels[t] = p + 1;
      double* row = rec.frames.row(t);
      row[p] = 1.0;
      if (model.emission_noise_std > 0.0) {
        for (int d = 0; d < time_dim; ++d) row[d] += rng.normal(0.0, model.emission_noise_std);
      }
      row[time_dim] = static_cast<double>(t + 1) / T;
    }
  }
  rec.set_phases(std::move(labels));
  return rec;
}

std::vector<SurgeryRecord> generate_dataset(const WorkflowModel& model, int n_videos, uint64_t seed) {
  require(n_videos >= 1, "generate_dataset: n_videos >= 1");
  std::vector<SurgeryRecord> out;
  out.reserve(n_videos);
  for (int i = 0; i < n_videos; ++i) {
    char id[32];
    std::snprintf(id, sizeof(id), "video%04d", i);
    out.push_back(generate_surgery(model, derive_seed(seed, "video", static_cast<uint64_t>(i)), id));
  }
  return out;
}

Vec derive_progress_labels(const SurgeryRecord& record) {
  const int T = record.num_frames();
  require(T >= 1, "derive_progress_labels: empty record");
  Vec out(T);
  for (int t = 0; t < T; ++t) out[t] = static_cast<double>(t + 1) / T;
  return out;
}

Vec derive_rsd_labels(const SurgeryRecord& record, double s_norm) {
  require(s_norm > 0.0, "derive_rsd_labels: s_norm > 0");
  const int T = record.num_frames();
  const double total_min = T / record.fps / 60.0;
  Vec out(T);
  for (int t = 0; t < T; ++t) {
    double elapsed_min = (t + 1) / record.fps / 60.0;
    out[t] = (total_min - elapsed_min) / s_norm;
  }
  return out;
}

std::vector<FramePair> sample_frame_pairs(const SurgeryRecord& record, int n_pairs, uint64_t seed) {
  const int T = record.num_frames();
  require(T >= 2, "sample_frame_pairs: need at least 2 frames");
  Rng rng(seed);
  std::vector<FramePair> pairs;
  pairs.reserve(n_pairs);
  const int D = record.frames.cols;
  for (int k = 0; k < n_pairs; ++k) {
    int a = static_cast<int>(rng.below(T));
    int b = static_cast<int>(rng.below(T - 1));
    if (b >= a) ++b;
    FramePair pr;
    pr.t_a = a;
    pr.t_b = b;
    pr.frame_a.assign(record.frames.row(a), record.frames.row(a) + D);
    pr.frame_b.assign(record.frames.row(b), record.frames.row(b) + D);
    pr.label = a < b ? 0 : 1;
    pairs.push_back(std::move(pr));
  }
  return pairs;
}

PaddedSequence pad_sequence(const SurgeryRecord& record, int pad_to) {
  const int T = record.num_frames();
  require(pad_to >= T, "pad_sequence: pad_to < record length");
  PaddedSequence out;
  out.features = Matrix(pad_to, record.frames.cols);
  std::copy(record.frames.data.begin(), record.frames.data.end(), out.features.data.begin());
  out.labels.assign(pad_to, 0);
  auto ph = record.phases();
  std::copy(ph.begin(), ph.end(), out.labels.begin());
  out.mask.assign(pad_to, 0);
  std::fill(out.mask.begin(), out.mask.begin() + T, 1);
  return out;
}

PaddedFeatures pad_features(const SurgeryRecord& record, int pad_to) {
  const int T = record.num_frames();
  require(pad_to >= T, "pad_features: pad_to < record length");
  PaddedFeatures out;
  out.features = Matrix(pad_to, record.frames.cols);
  std::copy(record.frames.data.begin(), record.frames.data.end(), out.features.data.begin());
  out.mask.assign(pad_to, 0);
  std::fill(out.mask.begin(), out.mask.begin() + T, 1);
  return out;
}

}  // namespace phaseforge::synth
