#include "phaseforge/eval.hpp"

#include <algorithm>
#include <cmath>

#include "phaseforge/nn.hpp"

namespace phaseforge::eval {

namespace {
constexpr int kPredictChunk = 256;
}

PredictionTrace predict_sequence(const nn::ParamStore& params, const synth::SurgeryRecord& record) {
  const nn::ArchSpec& spec = params.spec;
  require(spec.variant == nn::Variant::EndoN2NVanilla || spec.variant == nn::Variant::EndoN2NUpdated,
          "predict_sequence: needs an EndoN2N-style model");
  require(record.frames.cols == spec.input_dim(), "predict_sequence: feature dim mismatch");
  const int T = record.num_frames();
  const int M = spec.num_phases;

  PredictionTrace out;
  out.video_id = record.video_id;
  out.probs = Matrix(T, M);
  out.labels.resize(T);

  nn::LstmState state = nn::zero_state(spec.lstm_hidden);
  for (int start = 0; start < T; start += kPredictChunk) {
    int len = std::min(kPredictChunk, T - start);
    Matrix chunk(len, record.frames.cols);
    std::copy(record.frames.row(start), record.frames.row(start) + static_cast<size_t>(len) * record.frames.cols,
              chunk.data.begin());
    Matrix logits = nn::endon2n_forward_chunk(params, chunk, start, record.fps, state, nullptr);
    for (int t = 0; t < len; ++t) {
      nn::softmax({logits.row(t), static_cast<size_t>(M)}, {out.probs.row(start + t), static_cast<size_t>(M)});
      const double* row = logits.row(t);
      out.labels[start + t] = 1 + static_cast<int>(std::max_element(row, row + M) - row);
    }
  }
  return out;
}

RsdPrediction predict_rsd_sequence(const nn::ParamStore& params, const synth::SurgeryRecord& record) {
  require(params.spec.variant == nn::Variant::RsdProgress, "predict_rsd_sequence: needs rsd-progress model");
  const int T = record.num_frames();
  RsdPrediction out;
  out.rsd.resize(T);
  out.prog.resize(T);
  nn::LstmState state = nn::zero_state(params.spec.lstm_hidden);
  for (int start = 0; start < T; start += kPredictChunk) {
    int len = std::min(kPredictChunk, T - start);
    Matrix chunk(len, record.frames.cols);
    std::copy(record.frames.row(start), record.frames.row(start) + static_cast<size_t>(len) * record.frames.cols,
              chunk.data.begin());
    nn::RsdChunkOut heads = nn::rsdnet_forward_chunk(params, chunk, start, record.fps, state, nullptr);
    for (int t = 0; t < len; ++t) {
      out.rsd[start + t] = heads.z_rsd[t];
      out.prog[start + t] = nn::sigmoid(heads.z_prog[t]);
    }
  }
  return out;
}

std::vector<int> causal_mode_filter(std::span<const int> labels, double window_s, double fps) {
  const int T = static_cast<int>(labels.size());
  int w = static_cast<int>(std::llround(window_s * fps));
  require(w >= 1, "causal_mode_filter: window shorter than one frame");
  std::vector<int> out(T);
  for (int t = 0; t < T; ++t) {
    int lo = std::max(0, t - w + 1);
    // count occurrences; tie-break by most recent position
    int best = labels[t];
    int best_count = 0;
    int best_last = -1;
    for (int s = lo; s <= t; ++s) {
      int cand = labels[s];
      int count = 0, last = -1;
      for (int u = lo; u <= t; ++u) {
        if (labels[u] == cand) {
          ++count;
          last = u;
        }
      }
      if (count > best_count || (count == best_count && last > best_last)) {
        best = cand;
        best_count = count;
        best_last = last;
      }
    }
    out[t] = best;
  }
  return out;
}

double accuracy(std::span<const int> pred, std::span<const int> gt) {
  require(pred.size() == gt.size() && !pred.empty(), "accuracy: length mismatch");
  int64_t hits = 0;
  for (size_t t = 0; t < pred.size(); ++t) hits += pred[t] == gt[t];
  return 100.0 * static_cast<double>(hits) / static_cast<double>(pred.size());
}

PrecisionRecall per_phase_precision_recall(std::span<const int> pred, std::span<const int> gt, int M) {
  require(pred.size() == gt.size(), "precision_recall: length mismatch");
  std::vector<int64_t> tp(M, 0), fp(M, 0), fn(M, 0);
  for (size_t t = 0; t < pred.size(); ++t) {
    int p = pred[t], g = gt[t];
    if (p == g) {
      ++tp[p - 1];
    } else {
      ++fp[p - 1];
      ++fn[g - 1];
    }
  }
  PrecisionRecall out;
  out.precision.assign(M, 0.0);
  out.recall.assign(M, 0.0);
  out.precision_defined.assign(M, 0);
  out.recall_defined.assign(M, 0);
  double psum = 0, rsum = 0;
  int pn = 0, rn = 0;
  for (int p = 0; p < M; ++p) {
    if (tp[p] + fp[p] > 0) {
      out.precision[p] = 100.0 * tp[p] / static_cast<double>(tp[p] + fp[p]);
      out.precision_defined[p] = 1;
      psum += out.precision[p];
      ++pn;
    }
    if (tp[p] + fn[p] > 0) {
      out.recall[p] = 100.0 * tp[p] / static_cast<double>(tp[p] + fn[p]);
      out.recall_defined[p] = 1;
      rsum += out.recall[p];
      ++rn;
    }
  }
  out.avg_precision = pn > 0 ? psum / pn : 0.0;
  out.avg_recall = rn > 0 ? rsum / rn : 0.0;
  return out;
}

double f1(double avg_precision, double avg_recall) {
  double s = avg_precision + avg_recall;
  if (s <= 0.0) return 0.0;
  return 2.0 * avg_precision * avg_recall / s;
}

TemporalDistance temporal_distance(std::span<const int> pred, std::span<const int> gt, double fps,
                                   int M, DistanceMode mode) {
  require(pred.size() == gt.size(), "temporal_distance: length mismatch");
  const int T = static_cast<int>(gt.size());
  TemporalDistance out;
  out.seconds.assign(M, T / fps);
  out.predicted.assign(M, 0);
  out.in_gt.assign(M, 0);

  std::vector<int> gt_onset(M, -1);
  for (int t = 0; t < T; ++t) {
    int g = gt[t] - 1;
    if (gt_onset[g] < 0) gt_onset[g] = t;
  }
  for (int p = 0; p < M; ++p) out.in_gt[p] = gt_onset[p] >= 0;

  // onsets of maximal constant runs in the predictions
  std::vector<std::vector<int>> run_onsets(M);
  for (int t = 0; t < T; ++t) {
    if (t == 0 || pred[t] != pred[t - 1]) run_onsets[pred[t] - 1].push_back(t);
  }
  for (int p = 0; p < M; ++p) {
    if (gt_onset[p] < 0) continue;  // phase absent from ground truth: undefined
    if (run_onsets[p].empty()) continue;  // never predicted: sentinel stays
    out.predicted[p] = 1;
    if (mode == DistanceMode::First) {
      out.seconds[p] = std::abs(run_onsets[p].front() - gt_onset[p]) / fps;
    } else {
      double best = std::abs(run_onsets[p].front() - gt_onset[p]) / fps;
      for (int onset : run_onsets[p]) best = std::min(best, std::abs(onset - gt_onset[p]) / fps);
      out.seconds[p] = best;
    }
  }
  return out;
}

double noise_pct(std::span<const int> pred, std::span<const int> gt) {
  require(pred.size() == gt.size() && !pred.empty(), "noise_pct: length mismatch");
  const int T = static_cast<int>(pred.size());
  int64_t noise_frames = 0;
  int start = 0;
  for (int t = 1; t <= T; ++t) {
    if (t == T || pred[t] != pred[start]) {
      bool overlaps = false;
      for (int u = start; u < t && !overlaps; ++u) overlaps = gt[u] == pred[start];
      if (!overlaps) noise_frames += t - start;
      start = t;
    }
  }
  return 100.0 * static_cast<double>(noise_frames) / static_cast<double>(T);
}

MetricsReport compute_metrics(const std::string& video_id, std::span<const int> pred_raw,
                              std::span<const int> pred_filtered, std::span<const int> gt, int M,
                              double fps) {
  MetricsReport r;
  r.video_id = video_id;
  r.accuracy = accuracy(pred_raw, gt);
  PrecisionRecall pr = per_phase_precision_recall(pred_raw, gt, M);
  r.precision = pr.precision;
  r.recall = pr.recall;
  r.precision_defined = pr.precision_defined;
  r.recall_defined = pr.recall_defined;
  r.avg_precision = pr.avg_precision;
  r.avg_recall = pr.avg_recall;
  r.f1 = f1(pr.avg_precision, pr.avg_recall);
  r.noise = noise_pct(pred_filtered, gt);
  TemporalDistance tf = temporal_distance(pred_filtered, gt, fps, M, DistanceMode::First);
  TemporalDistance tc = temporal_distance(pred_filtered, gt, fps, M, DistanceMode::Closest);
  r.td_first = tf.seconds;
  r.td_closest = tc.seconds;
  r.phase_predicted = tf.predicted;
  r.phase_in_gt = tf.in_gt;
  return r;
}

namespace {
void mean_std(const Vec& xs, double& mean, double& std) {
  mean = 0.0;
  std = 0.0;
  if (xs.empty()) return;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  if (xs.size() < 2) return;
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  std = std::sqrt(ss / static_cast<double>(xs.size() - 1));
}
}  // namespace

Aggregate aggregate(const std::vector<MetricsReport>& reports) {
  require(!reports.empty(), "aggregate: no reports");
  Aggregate agg;
  agg.n_videos = static_cast<int>(reports.size());
  auto collect = [&](auto getter, double& mean, double& std) {
    Vec xs;
    for (const auto& r : reports) xs.push_back(getter(r));
    mean_std(xs, mean, std);
  };
  collect([](const MetricsReport& r) { return r.accuracy; }, agg.accuracy_mean, agg.accuracy_std);
  collect([](const MetricsReport& r) { return r.avg_precision; }, agg.avg_precision_mean,
          agg.avg_precision_std);
  collect([](const MetricsReport& r) { return r.avg_recall; }, agg.avg_recall_mean, agg.avg_recall_std);
  collect([](const MetricsReport& r) { return r.f1; }, agg.f1_mean, agg.f1_std);
  collect([](const MetricsReport& r) { return r.noise; }, agg.noise_mean, agg.noise_std);

  const int M = static_cast<int>(reports.front().precision.size());
  agg.precision_mean.assign(M, 0.0);
  agg.recall_mean.assign(M, 0.0);
  agg.td_first_mean.assign(M, 0.0);
  agg.td_closest_mean.assign(M, 0.0);
  agg.td_undefined_count.assign(M, 0);
  for (int p = 0; p < M; ++p) {
    double ps = 0, rs = 0, tf = 0, tc = 0;
    int pn = 0, rn = 0, tn = 0;
    for (const auto& r : reports) {
      if (r.precision_defined[p]) {
        ps += r.precision[p];
        ++pn;
      }
      if (r.recall_defined[p]) {
        rs += r.recall[p];
        ++rn;
      }
      if (r.phase_in_gt[p] && r.phase_predicted[p]) {
        tf += r.td_first[p];
        tc += r.td_closest[p];
        ++tn;
      } else if (r.phase_in_gt[p]) {
        ++agg.td_undefined_count[p];
      }
    }
    agg.precision_mean[p] = pn ? ps / pn : 0.0;
    agg.recall_mean[p] = rn ? rs / rn : 0.0;
    agg.td_first_mean[p] = tn ? tf / tn : 0.0;
    agg.td_closest_mean[p] = tn ? tc / tn : 0.0;
  }
  return agg;
}

}  // namespace phaseforge::eval
