#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "phaseforge/arch.hpp"
#include "phaseforge/synth.hpp"

namespace phaseforge::train {

enum class Optimizer { Sgd, Adam };

struct TrainConfig {
  Optimizer optimizer = Optimizer::Sgd;
  int64_t iterations = 1000;
  double alpha = 1e-3;
  int64_t step_size = 0;  // decay interval in iterations; 0 disables decay
  double gamma = 0.1;
  int batch_size = 50;    // frames per forward pass (frame models) / subseq_len (sequence models)
  double lambda = 5e-4;   // L2, applied inside the optimizer step
  double momentum = 0.9;
  double adam_beta1 = 0.9, adam_beta2 = 0.999, adam_eps = 1e-8;
  double lr_mult_random_layers = 10.0;

  void validate() const;
  double lr_at(int64_t iter) const;
};

using FrozenSet = std::set<std::string>;
using LrMultipliers = std::map<std::string, double>;  // absent -> 1.0

// 10x multiplier for every tensor the store marks as freshly initialized.
LrMultipliers fresh_multipliers(const nn::ParamStore& params, const TrainConfig& cfg);

struct SgdState {
  TensorMap velocity;
};
struct AdamState {
  TensorMap m, v;
};

// Caffe-convention momentum SGD:
//   v <- momentum v - lr_t (g + lambda w);  w <- w + v
void sgd_update(nn::ParamStore& params, const TensorMap& grads, const TrainConfig& cfg,
                int64_t iter, const FrozenSet& frozen, const LrMultipliers& mult, SgdState& state);
// Adam with bias correction; the L2 term joins the gradient before the moment
// updates; alpha follows the same step-decay schedule.
void adam_update(nn::ParamStore& params, const TensorMap& grads, const TrainConfig& cfg,
                 int64_t iter, const FrozenSet& frozen, const LrMultipliers& mult, AdamState& state);

// ---------------------------------------------------------------------------
// BPTT drivers
// ---------------------------------------------------------------------------

struct BpttResult {
  double loss = 0.0;
  TensorMap grads;
};

// Exact whole-sequence gradients (single unrolled trace); the cap guards the
// trace memory since this path exists as the reference oracle.
BpttResult full_bptt_grads(const nn::ParamStore& params, const Matrix& frames,
                           std::span<const int> labels, std::span<const uint8_t> mask, double fps,
                           int trace_cap = 512);
// The approximation: subsequences processed in order, hidden/cell state carried
// across boundaries in the forward pass, each subsequence backpropagated with a
// zero incoming state gradient, gradients summed before any update. The
// returned loss is exact (identical to the whole-sequence loss) for every
// subsequence length.
BpttResult truncated_bptt_grads(const nn::ParamStore& params, const Matrix& frames,
                                std::span<const int> labels, std::span<const uint8_t> mask,
                                int subseq_len, double fps);

// Multi-task (RSD + progress) objective variants.
BpttResult full_bptt_grads_rsd(const nn::ParamStore& params, const Matrix& frames,
                               std::span<const double> y_rsd, std::span<const double> y_prog,
                               std::span<const uint8_t> mask, double fps, int trace_cap = 512);
BpttResult truncated_bptt_grads_rsd(const nn::ParamStore& params, const Matrix& frames,
                                    std::span<const double> y_rsd, std::span<const double> y_prog,
                                    std::span<const uint8_t> mask, int subseq_len, double fps);

// ---------------------------------------------------------------------------
// weight transfer
// ---------------------------------------------------------------------------

// Name-matched copy into a freshly initialized destination store. Tensors
// missing from the source stay randomly initialized and keep their `fresh`
// tag (10x learning rate); source-only tensors are dropped.
nn::ParamStore transfer_weights(const nn::ParamStore& src, const nn::ArchSpec& dst_spec,
                                uint64_t dst_seed);
// Overwrites dst's encoder stack from src (used when a later fine-tuning stage
// supplies the encoder while another stage supplies the rest).
void overlay_encoder(nn::ParamStore& dst, const nn::ParamStore& src);

// ---------------------------------------------------------------------------
// training pipelines
// ---------------------------------------------------------------------------

// Append-only CSV logger; update rows and per-epoch validation rows.
class TrainLogger {
 public:
  TrainLogger() = default;
  explicit TrainLogger(const std::string& csv_path);
  void log_update(int64_t iter, double loss, double lr, double wall_ms);
  void log_val(int64_t iter, const std::string& metric, double value);

 private:
  std::shared_ptr<std::ofstream> out_;
};

struct SeqTrainConfig {
  int subseq_len = 50;
  int pad_to = 600;
  int epochs = 100;         // end-to-end stages scale iterations to this
  double step_frac = 0.25;  // step_size = round(step_frac * iterations)
};

int64_t scaled_iterations(int epochs, int n_videos);
int64_t scaled_step_size(int64_t iterations, double step_frac);

using Videos = std::vector<const synth::SurgeryRecord*>;

// CNN fine-tuning for phase recognition (encoder + fc_phase_pre, per-frame
// batches). Reads phase labels — supervised.
nn::ParamStore train_phase_encoder(const Videos& videos, const TrainConfig& cfg,
                                   const nn::ParamStore& init, uint64_t seed, TrainLogger log = {});

// CNN fine-tuning for progress regression; labels derived from timestamps.
nn::ParamStore train_progress_encoder(const Videos& videos, const TrainConfig& cfg,
                                      const nn::ParamStore& init, uint64_t seed,
                                      TrainLogger log = {});

struct SeqTrainResult {
  nn::ParamStore best;    // highest validation accuracy (final when no vals)
  nn::ParamStore final_;  // last iterate
  double best_val_accuracy = 0.0;
  int64_t best_iter = -1;
};

// End-to-end EndoN2N training with the truncated-BPTT approximation; one video
// per iteration, one optimizer update per video, validation once per epoch.
SeqTrainResult train_endon2n(const Videos& train, const Videos& val, const TrainConfig& cfg,
                             const SeqTrainConfig& seq, const nn::ParamStore& init, uint64_t seed,
                             TrainLogger log = {});

// Two-step baseline: frozen encoder features, LSTM + fc_phase trained with
// exact BPTT over whole padded sequences.
SeqTrainResult train_endolstm(const Videos& train, const Videos& val, const TrainConfig& cfg,
                              const SeqTrainConfig& seq, const nn::ParamStore& encoder,
                              uint64_t seed, TrainLogger log = {});

// Multi-task RSD/progress pre-training; fc_prog_pre arrives from the progress
// encoder and stays frozen. Never touches phase labels.
nn::ParamStore pretrain_rsd(const Videos& videos, const TrainConfig& cfg, const SeqTrainConfig& seq,
                            const nn::ParamStore& progress_encoder, uint64_t seed,
                            TrainLogger log = {});

// Siamese temporal-order pre-training over sampled frame pairs.
nn::ParamStore pretrain_tempcon(const std::vector<synth::FramePair>& pairs, const TrainConfig& cfg,
                                const nn::ArchSpec& arch, uint64_t seed, TrainLogger log = {});

}  // namespace phaseforge::train
