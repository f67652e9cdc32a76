#include "phaseforge/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <memory>

#include "phaseforge/eval.hpp"
#include "phaseforge/kernels.hpp"
#include "phaseforge/nn.hpp"
#include "phaseforge/rng.hpp"

namespace phaseforge::train {

namespace k = phaseforge::kernels;
using nn::ParamStore;

void TrainConfig::validate() const {
  require(alpha > 0.0, "TrainConfig: alpha > 0");
  require(gamma > 0.0 && gamma <= 1.0, "TrainConfig: gamma in (0,1]");
  require(iterations >= 0, "TrainConfig: iterations >= 0");
  require(lambda >= 0.0, "TrainConfig: lambda >= 0");
  require(batch_size >= 1, "TrainConfig: batch >= 1");
}

double TrainConfig::lr_at(int64_t iter) const {
  if (step_size <= 0) return alpha;
  return alpha * std::pow(gamma, static_cast<double>(iter / step_size));
}

LrMultipliers fresh_multipliers(const ParamStore& params, const TrainConfig& cfg) {
  LrMultipliers mult;
  for (const auto& name : params.fresh) mult[name] = cfg.lr_mult_random_layers;
  return mult;
}

void sgd_update(ParamStore& params, const TensorMap& grads, const TrainConfig& cfg, int64_t iter,
                const FrozenSet& frozen, const LrMultipliers& mult, SgdState& state) {
  nn::check_same_shapes(params, grads, "sgd_update");
  if (state.velocity.empty()) state.velocity = nn::zeros_like(params);
  const double base_lr = cfg.lr_at(iter);
  for (auto& [name, w] : params.tensors) {
    if (frozen.count(name)) continue;
    auto it = mult.find(name);
    const double lr = base_lr * (it != mult.end() ? it->second : 1.0);
    const Matrix& g = grads.at(name);
    Matrix& v = state.velocity.at(name);
    for (size_t i = 0; i < w.data.size(); ++i) {
      v.data[i] = cfg.momentum * v.data[i] - lr * (g.data[i] + cfg.lambda * w.data[i]);
      w.data[i] += v.data[i];
    }
  }
}

void adam_update(ParamStore& params, const TensorMap& grads, const TrainConfig& cfg, int64_t iter,
                 const FrozenSet& frozen, const LrMultipliers& mult, AdamState& state) {
  nn::check_same_shapes(params, grads, "adam_update");
  if (state.m.empty()) {
    state.m = nn::zeros_like(params);
    state.v = nn::zeros_like(params);
  }
  const double base_lr = cfg.lr_at(iter);
  const double t = static_cast<double>(iter + 1);
  const double bc1 = 1.0 - std::pow(cfg.adam_beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.adam_beta2, t);
  for (auto& [name, w] : params.tensors) {
    if (frozen.count(name)) continue;
    auto it = mult.find(name);
    const double lr = base_lr * (it != mult.end() ? it->second : 1.0);
    const Matrix& g = grads.at(name);
    Matrix& m = state.m.at(name);
    Matrix& v = state.v.at(name);
    for (size_t i = 0; i < w.data.size(); ++i) {
      double gi = g.data[i] + cfg.lambda * w.data[i];
      m.data[i] = cfg.adam_beta1 * m.data[i] + (1.0 - cfg.adam_beta1) * gi;
      v.data[i] = cfg.adam_beta2 * v.data[i] + (1.0 - cfg.adam_beta2) * gi * gi;
      double mhat = m.data[i] / bc1;
      double vhat = v.data[i] / bc2;
      w.data[i] -= lr * mhat / (std::sqrt(vhat) + cfg.adam_eps);
    }
  }
}

// ---------------------------------------------------------------------------
// BPTT drivers
// ---------------------------------------------------------------------------

namespace {

// Masked per-frame loss terms and scaled logit gradients for one chunk. Both
// drivers share this, which is what makes the l=1 truncated pass bit-equal to
// the full pass.
double phase_chunk_dlogits(const Matrix& logits, std::span<const int> labels,
                           std::span<const uint8_t> mask, int64_t offset, int64_t t_eff,
                           Matrix& dLogits) {
  const int M = logits.cols;
  double loss_sum = 0.0;
  dLogits = Matrix(logits.rows, M);
  for (int t = 0; t < logits.rows; ++t) {
    if (!mask[offset + t]) continue;  // padded frames never touch loss or gradients
    double* dz = dLogits.row(t);
    loss_sum += nn::softmax_xent({logits.row(t), static_cast<size_t>(M)}, labels[offset + t],
                                 {dz, static_cast<size_t>(M)});
    for (int i = 0; i < M; ++i) dz[i] /= static_cast<double>(t_eff);
  }
  return loss_sum;
}

double rsd_chunk_dheads(const nn::RsdChunkOut& heads, std::span<const double> y_rsd,
                        std::span<const double> y_prog, std::span<const uint8_t> mask,
                        int64_t offset, int64_t t_eff, Vec& dz_rsd, Vec& dz_prog) {
  const int T = static_cast<int>(heads.z_rsd.size());
  dz_rsd.assign(T, 0.0);
  dz_prog.assign(T, 0.0);
  double loss_sum = 0.0;
  for (int t = 0; t < T; ++t) {
    if (!mask[offset + t]) continue;
    auto [v_rsd, d_rsd] = nn::smooth_l1(heads.z_rsd[t] - y_rsd[offset + t]);
    double p = nn::sigmoid(heads.z_prog[t]);
    auto [v_prog, d_prog] = nn::smooth_l1(p - y_prog[offset + t]);
    loss_sum += v_rsd + v_prog;
    dz_rsd[t] = d_rsd / static_cast<double>(t_eff);
    dz_prog[t] = d_prog * p * (1.0 - p) / static_cast<double>(t_eff);
  }
  return loss_sum;
}

int64_t masked_count(std::span<const uint8_t> mask) {
  int64_t n = 0;
  for (uint8_t m : mask) n += m;
  return n;
}

// Index of the last unmasked frame. Chunks past it carry state nowhere and
// chunks without any real frame backpropagate exact zeros, so both can be
// skipped without changing a bit of the result.
int last_real_frame(std::span<const uint8_t> mask) {
  for (int t = static_cast<int>(mask.size()) - 1; t >= 0; --t)
    if (mask[t]) return t;
  return -1;
}

bool any_real(std::span<const uint8_t> mask, int start, int len) {
  for (int t = start; t < start + len; ++t)
    if (mask[t]) return true;
  return false;
}


// Pad target: the configured length, or the longest video when that is longer
// (sequences are padded to a common length, which the longest video defines).
int pad_target(const Videos& videos, int configured) {
  int longest = 0;
  for (const auto* rec : videos) longest = std::max(longest, rec->num_frames());
  return std::max(configured, longest);
}

Matrix chunk_rows(const Matrix& frames, int start, int len) {
  Matrix out(len, frames.cols);
  std::copy(frames.row(start), frames.row(start) + static_cast<size_t>(len) * frames.cols,
            out.data.begin());
  return out;
}

}  // namespace

BpttResult truncated_bptt_grads(const ParamStore& params, const Matrix& frames,
                                std::span<const int> labels, std::span<const uint8_t> mask,
                                int subseq_len, double fps) {
  require(subseq_len >= 1, "truncated_bptt: subseq_len >= 1");
  const int T = frames.rows;
  const int64_t t_eff = masked_count(mask);
  require(t_eff > 0, "truncated_bptt: empty mask");
  BpttResult result;
  result.grads = nn::zeros_like(params);
  double loss_sum = 0.0;
  const int last_real = last_real_frame(mask);
  nn::LstmState state = nn::zero_state(params.spec.lstm_hidden);
  for (int start = 0; start < T && start <= last_real; start += subseq_len) {
    const int len = std::min(subseq_len, T - start);
    Matrix chunk = chunk_rows(frames, start, len);
    nn::SeqChunkTrace trace;
    Matrix logits = nn::endon2n_forward_chunk(params, chunk, start, fps, state, &trace);
    if (!any_real(mask, start, len)) continue;  // all-padded: zero gradients, state carried
    Matrix dLogits;
    loss_sum += phase_chunk_dlogits(logits, labels, mask, start, t_eff, dLogits);
    // zero incoming state gradient: BPTT truncated at the boundary
    nn::endon2n_backward_chunk(params, trace, dLogits, nn::StateGrad{}, result.grads);
  }
  result.loss = loss_sum / static_cast<double>(t_eff);
  return result;
}

BpttResult full_bptt_grads(const ParamStore& params, const Matrix& frames,
                           std::span<const int> labels, std::span<const uint8_t> mask, double fps,
                           int trace_cap) {
  const int T = frames.rows;
  require(T <= trace_cap, "full_bptt: sequence exceeds trace cap");
  const int64_t t_eff = masked_count(mask);
  require(t_eff > 0, "full_bptt: empty mask");
  BpttResult result;
  result.grads = nn::zeros_like(params);
  nn::LstmState state = nn::zero_state(params.spec.lstm_hidden);
  nn::SeqChunkTrace trace;
  Matrix logits = nn::endon2n_forward_chunk(params, frames, 0, fps, state, &trace);
  Matrix dLogits;
  double loss_sum = phase_chunk_dlogits(logits, labels, mask, 0, t_eff, dLogits);
  nn::endon2n_backward_chunk(params, trace, dLogits, nn::StateGrad{}, result.grads);
  result.loss = loss_sum / static_cast<double>(t_eff);
  return result;
}

BpttResult truncated_bptt_grads_rsd(const ParamStore& params, const Matrix& frames,
                                    std::span<const double> y_rsd, std::span<const double> y_prog,
                                    std::span<const uint8_t> mask, int subseq_len, double fps) {
  require(subseq_len >= 1, "truncated_bptt_rsd: subseq_len >= 1");
  const int T = frames.rows;
  const int64_t t_eff = masked_count(mask);
  require(t_eff > 0, "truncated_bptt_rsd: empty mask");
  BpttResult result;
  result.grads = nn::zeros_like(params);
  double loss_sum = 0.0;
  const int last_real = last_real_frame(mask);
  nn::LstmState state = nn::zero_state(params.spec.lstm_hidden);
  for (int start = 0; start < T && start <= last_real; start += subseq_len) {
    const int len = std::min(subseq_len, T - start);
    Matrix chunk = chunk_rows(frames, start, len);
    nn::SeqChunkTrace trace;
    nn::RsdChunkOut heads = nn::rsdnet_forward_chunk(params, chunk, start, fps, state, &trace);
    if (!any_real(mask, start, len)) continue;
    Vec dz_rsd, dz_prog;
    loss_sum += rsd_chunk_dheads(heads, y_rsd, y_prog, mask, start, t_eff, dz_rsd, dz_prog);
    nn::rsdnet_backward_chunk(params, trace, dz_rsd, dz_prog, nn::StateGrad{}, result.grads);
  }
  result.loss = loss_sum / static_cast<double>(t_eff);
  return result;
}

BpttResult full_bptt_grads_rsd(const ParamStore& params, const Matrix& frames,
                               std::span<const double> y_rsd, std::span<const double> y_prog,
                               std::span<const uint8_t> mask, double fps, int trace_cap) {
  const int T = frames.rows;
  require(T <= trace_cap, "full_bptt_rsd: sequence exceeds trace cap");
  const int64_t t_eff = masked_count(mask);
  require(t_eff > 0, "full_bptt_rsd: empty mask");
  BpttResult result;
  result.grads = nn::zeros_like(params);
  nn::LstmState state = nn::zero_state(params.spec.lstm_hidden);
  nn::SeqChunkTrace trace;
  nn::RsdChunkOut heads = nn::rsdnet_forward_chunk(params, frames, 0, fps, state, &trace);
  Vec dz_rsd, dz_prog;
  double loss_sum = rsd_chunk_dheads(heads, y_rsd, y_prog, mask, 0, t_eff, dz_rsd, dz_prog);
  nn::rsdnet_backward_chunk(params, trace, dz_rsd, dz_prog, nn::StateGrad{}, result.grads);
  result.loss = loss_sum / static_cast<double>(t_eff);
  return result;
}

// ---------------------------------------------------------------------------
// weight transfer
// ---------------------------------------------------------------------------

ParamStore transfer_weights(const ParamStore& src, const nn::ArchSpec& dst_spec, uint64_t dst_seed) {
  ParamStore dst = nn::init_params(dst_spec, dst_seed);
  dst.stage = "transfer:" + src.stage;
  for (auto& [name, tensor] : dst.tensors) {
    auto it = src.tensors.find(name);
    if (it == src.tensors.end()) continue;
    require(tensor.same_shape(it->second),
            "transfer_weights: shape mismatch for " + name + " from " + src.arch_tag() + " to " +
                variant_tag(dst_spec.variant));
    tensor = it->second;
    dst.fresh.erase(name);
  }
  return dst;
}

void overlay_encoder(ParamStore& dst, const ParamStore& src) {
  for (int l = 0; l < dst.spec.encoder_layers(); ++l) {
    for (const char* suffix : {".W", ".b"}) {
      std::string name = "enc" + std::to_string(l) + suffix;
      const Matrix& s = src.at(name);
      require(dst.at(name).same_shape(s), "overlay_encoder: shape mismatch for " + name);
      dst.at(name) = s;
      dst.fresh.erase(name);
    }
  }
}

// ---------------------------------------------------------------------------
// pipelines
// ---------------------------------------------------------------------------

TrainLogger::TrainLogger(const std::string& csv_path) {
  out_ = std::make_shared<std::ofstream>(csv_path);
  *out_ << "kind,iter,metric,value,lr,wall_ms\n";
}

void TrainLogger::log_update(int64_t iter, double loss, double lr, double wall_ms) {
  if (out_) *out_ << "update," << iter << ",loss," << loss << "," << lr << "," << wall_ms << "\n";
}

void TrainLogger::log_val(int64_t iter, const std::string& metric, double value) {
  if (out_) *out_ << "val," << iter << "," << metric << "," << value << ",,\n";
}

int64_t scaled_iterations(int epochs, int n_videos) {
  return static_cast<int64_t>(epochs) * n_videos;
}

int64_t scaled_step_size(int64_t iterations, double step_frac) {
  return std::max<int64_t>(1, static_cast<int64_t>(std::llround(step_frac * iterations)));
}

namespace {

struct OptimizerDriver {
  const TrainConfig& cfg;
  FrozenSet frozen;
  LrMultipliers mult;
  SgdState sgd;
  AdamState adam;

  OptimizerDriver(const TrainConfig& c, const ParamStore& params, FrozenSet frz = {})
      : cfg(c), frozen(std::move(frz)), mult(fresh_multipliers(params, c)) {}

  void step(ParamStore& params, const TensorMap& grads, int64_t iter) {
    if (cfg.optimizer == Optimizer::Sgd)
      sgd_update(params, grads, cfg, iter, frozen, mult, sgd);
    else
      adam_update(params, grads, cfg, iter, frozen, mult, adam);
    params.iteration = iter + 1;
  }
};

double now_ms() {
  using namespace std::chrono;
  return duration<double, std::milli>(steady_clock::now().time_since_epoch()).count();
}

// Frame pool over a set of videos with per-epoch reshuffling.
struct FramePool {
  std::vector<std::pair<int, int>> index;  // (video, frame)
  size_t cursor = 0;
  Rng rng;

  FramePool(const Videos& videos, uint64_t seed) : rng(seed) {
    for (size_t v = 0; v < videos.size(); ++v)
      for (int t = 0; t < videos[v]->num_frames(); ++t)
        index.emplace_back(static_cast<int>(v), t);
    require(!index.empty(), "training pool is empty");
    rng.shuffle(index);
  }

  std::vector<std::pair<int, int>> next_batch(int n) {
    std::vector<std::pair<int, int>> batch;
    batch.reserve(n);
    for (int i = 0; i < n; ++i) {
      if (cursor == index.size()) {
        rng.shuffle(index);
        cursor = 0;
      }
      batch.push_back(index[cursor++]);
    }
    return batch;
  }
};

}  // namespace

ParamStore train_phase_encoder(const Videos& videos, const TrainConfig& cfg,
                               const ParamStore& init, uint64_t seed, TrainLogger log) {
  cfg.validate();
  require(!videos.empty(), "train_phase_encoder: empty dataset");
  require(init.spec.variant == nn::Variant::PhaseEncoder, "train_phase_encoder: wrong arch");
  ParamStore params = init;
  params.stage = "phase_enc";
  OptimizerDriver opt(cfg, params);
  FramePool pool(videos, derive_seed(seed, "phase_enc.pool"));
  const int D = params.spec.input_dim();
  const int M = params.spec.num_phases;

  for (int64_t iter = 0; iter < cfg.iterations; ++iter) {
    double t0 = now_ms();
    auto batch = pool.next_batch(cfg.batch_size);
    Matrix X(static_cast<int>(batch.size()), D);
    std::vector<int> y(batch.size());
    for (size_t i = 0; i < batch.size(); ++i) {
      const auto* rec = videos[batch[i].first];
      std::copy(rec->frames.row(batch[i].second), rec->frames.row(batch[i].second) + D,
                X.row(static_cast<int>(i)));
      y[i] = rec->phase_at(batch[i].second);
    }
    nn::FrameTrace trace;
    Matrix logits = nn::phase_encoder_forward(params, X, &trace);
    Matrix dLogits(logits.rows, logits.cols);
    double loss = 0.0;
    for (int i = 0; i < logits.rows; ++i) {
      loss += nn::softmax_xent({logits.row(i), static_cast<size_t>(M)}, y[i],
                               {dLogits.row(i), static_cast<size_t>(M)});
    }
    loss /= logits.rows;
    for (double& v : dLogits.data) v /= logits.rows;
    TensorMap grads = nn::zeros_like(params);
    nn::phase_encoder_backward(params, trace, dLogits, grads);
    opt.step(params, grads, iter);
    log.log_update(iter, loss, cfg.lr_at(iter), now_ms() - t0);
  }
  return params;
}

ParamStore train_progress_encoder(const Videos& videos, const TrainConfig& cfg,
                                  const ParamStore& init, uint64_t seed, TrainLogger log) {
  cfg.validate();
  require(!videos.empty(), "train_progress_encoder: empty dataset");
  require(init.spec.variant == nn::Variant::ProgressEncoder, "train_progress_encoder: wrong arch");
  ParamStore params = init;
  params.stage = "prog_enc";
  OptimizerDriver opt(cfg, params);
  FramePool pool(videos, derive_seed(seed, "prog_enc.pool"));
  const int D = params.spec.input_dim();

  std::vector<Vec> progress;
  progress.reserve(videos.size());
  for (const auto* rec : videos) progress.push_back(synth::derive_progress_labels(*rec));

  for (int64_t iter = 0; iter < cfg.iterations; ++iter) {
    double t0 = now_ms();
    auto batch = pool.next_batch(cfg.batch_size);
    Matrix X(static_cast<int>(batch.size()), D);
    Vec y(batch.size());
    for (size_t i = 0; i < batch.size(); ++i) {
      const auto* rec = videos[batch[i].first];
      std::copy(rec->frames.row(batch[i].second), rec->frames.row(batch[i].second) + D,
                X.row(static_cast<int>(i)));
      y[i] = progress[batch[i].first][batch[i].second];
    }
    nn::FrameTrace trace;
    Vec z = nn::progress_encoder_forward(params, X, &trace);
    Vec dz(z.size());
    double loss = 0.0;
    for (size_t i = 0; i < z.size(); ++i) {
      double p = nn::sigmoid(z[i]);
      auto [v, d] = nn::smooth_l1(p - y[i]);
      loss += v;
      dz[i] = d * p * (1.0 - p) / static_cast<double>(z.size());
    }
    loss /= static_cast<double>(z.size());
    TensorMap grads = nn::zeros_like(params);
    nn::progress_encoder_backward(params, trace, dz, grads);
    opt.step(params, grads, iter);
    log.log_update(iter, loss, cfg.lr_at(iter), now_ms() - t0);
  }
  return params;
}

namespace {

double validation_accuracy(const ParamStore& params, const Videos& val) {
  if (val.empty()) return 0.0;
  double sum = 0.0;
  for (const auto* rec : val) {
    eval::PredictionTrace pred = eval::predict_sequence(params, *rec);
    sum += eval::accuracy(pred.labels, rec->phases());
  }
  return sum / static_cast<double>(val.size());
}

}  // namespace

SeqTrainResult train_endon2n(const Videos& train, const Videos& val, const TrainConfig& cfg,
                             const SeqTrainConfig& seq, const ParamStore& init, uint64_t seed,
                             TrainLogger log) {
  cfg.validate();
  require(!train.empty(), "train_endon2n: empty dataset");
  require(init.spec.variant == nn::Variant::EndoN2NVanilla ||
              init.spec.variant == nn::Variant::EndoN2NUpdated,
          "train_endon2n: wrong arch");
  ParamStore params = init;
  params.stage = init.spec.variant == nn::Variant::EndoN2NUpdated ? "endon2n_updated" : "endon2n";
  OptimizerDriver opt(cfg, params);
  Rng order_rng(derive_seed(seed, "endon2n.order"));
  const int n = static_cast<int>(train.size());

  std::vector<synth::PaddedSequence> padded;
  padded.reserve(n);
  const int pad_to = pad_target(train, seq.pad_to);
  for (const auto* rec : train) padded.push_back(synth::pad_sequence(*rec, pad_to));

  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;

  SeqTrainResult result;
  result.best_val_accuracy = -1.0;
  for (int64_t iter = 0; iter < cfg.iterations; ++iter) {
    if (iter % n == 0) order_rng.shuffle(order);
    double t0 = now_ms();
    const auto& seq_data = padded[order[iter % n]];
    BpttResult bptt = truncated_bptt_grads(params, seq_data.features, seq_data.labels,
                                           seq_data.mask, seq.subseq_len,
                                           train[order[iter % n]]->fps);
    opt.step(params, bptt.grads, iter);
    log.log_update(iter, bptt.loss, cfg.lr_at(iter), now_ms() - t0);
    const bool epoch_end = (iter + 1) % n == 0 || iter + 1 == cfg.iterations;
    if (epoch_end && !val.empty()) {
      double acc = validation_accuracy(params, val);
      log.log_val(iter, "val_accuracy", acc);
      if (acc > result.best_val_accuracy) {
        result.best_val_accuracy = acc;
        result.best_iter = iter + 1;
        result.best = params;
      }
    }
  }
  result.final_ = params;
  if (result.best_iter < 0) {
    result.best = params;  // no validation set: final weights
    result.best_iter = cfg.iterations;
  }
  return result;
}

SeqTrainResult train_endolstm(const Videos& train, const Videos& val, const TrainConfig& cfg,
                              const SeqTrainConfig& seq, const ParamStore& encoder, uint64_t seed,
                              TrainLogger log) {
  cfg.validate();
  require(!train.empty(), "train_endolstm: empty dataset");
  require(encoder.spec.variant == nn::Variant::PhaseEncoder, "train_endolstm: needs phase encoder");
  nn::ArchSpec spec = encoder.spec;
  spec.variant = nn::Variant::EndoN2NVanilla;
  ParamStore params = transfer_weights(encoder, spec, derive_seed(seed, "endolstm.init"));
  params.stage = "endolstm";

  // the CNN stays fixed: freeze every encoder tensor
  FrozenSet frozen;
  for (int l = 0; l < spec.encoder_layers(); ++l) {
    frozen.insert("enc" + std::to_string(l) + ".W");
    frozen.insert("enc" + std::to_string(l) + ".b");
  }
  OptimizerDriver opt(cfg, params, frozen);

  // features extracted once per video with the frozen encoder
  const int n = static_cast<int>(train.size());
  std::vector<Matrix> feats(n);
  std::vector<std::vector<int>> labels(n);
  std::vector<std::vector<uint8_t>> masks(n);
#pragma omp parallel for schedule(static)
  for (int v = 0; v < n; ++v) {
    synth::PaddedSequence p = synth::pad_sequence(*train[v], pad_target(train, seq.pad_to));
    feats[v] = nn::encoder_forward_batch(params, p.features, nullptr);
    labels[v] = std::move(p.labels);
    masks[v] = std::move(p.mask);
  }

  const int H = spec.lstm_hidden;
  const int M = spec.num_phases;
  Rng order_rng(derive_seed(seed, "endolstm.order"));
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;

  SeqTrainResult result;
  result.best_val_accuracy = -1.0;
  for (int64_t iter = 0; iter < cfg.iterations; ++iter) {
    if (iter % n == 0) order_rng.shuffle(order);
    double t0 = now_ms();
    const int v = order[iter % n];
    // exact BPTT: whole padded sequence as one unrolled trace (LSTM only)
    nn::LstmState state = nn::zero_state(H);
    nn::LstmTrace trace;
    nn::lstm_forward_chunk(params, feats[v], state, trace);
    const Matrix& W = params.at("fc_phase.W");
    const Matrix& b = params.at("fc_phase.b");
    Matrix logits(feats[v].rows, M);
    k::affine_batch(W.data.data(), b.data.data(), M, H, trace.h.data.data(), feats[v].rows,
                    logits.data.data());
    const int64_t t_eff = [&] {
      int64_t c = 0;
      for (uint8_t m : masks[v]) c += m;
      return c;
    }();
    Matrix dLogits;
    double loss_sum = phase_chunk_dlogits(logits, labels[v], masks[v], 0, t_eff, dLogits);
    TensorMap grads = nn::zeros_like(params);
    k::affine_grad_batch(trace.h.data.data(), dLogits.data.data(), M, H, feats[v].rows,
                         grads.at("fc_phase.W").data.data(), grads.at("fc_phase.b").data.data());
    Matrix dH(feats[v].rows, H);
    k::affine_bwd_input_batch(W.data.data(), M, H, dLogits.data.data(), feats[v].rows,
                              dH.data.data());
    nn::lstm_backward_chunk(params, trace, dH, nn::StateGrad{}, grads, nullptr);
    opt.step(params, grads, iter);
    log.log_update(iter, loss_sum / static_cast<double>(t_eff), cfg.lr_at(iter), now_ms() - t0);
    const bool epoch_end = (iter + 1) % n == 0 || iter + 1 == cfg.iterations;
    if (epoch_end && !val.empty()) {
      double acc = validation_accuracy(params, val);
      log.log_val(iter, "val_accuracy", acc);
      if (acc > result.best_val_accuracy) {
        result.best_val_accuracy = acc;
        result.best_iter = iter + 1;
        result.best = params;
      }
    }
  }
  result.final_ = params;
  if (result.best_iter < 0) {
    result.best = params;
    result.best_iter = cfg.iterations;
  }
  return result;
}

ParamStore pretrain_rsd(const Videos& videos, const TrainConfig& cfg, const SeqTrainConfig& seq,
                        const ParamStore& progress_encoder, uint64_t seed, TrainLogger log) {
  cfg.validate();
  require(!videos.empty(), "pretrain_rsd: empty dataset");
  require(progress_encoder.spec.variant == nn::Variant::ProgressEncoder,
          "pretrain_rsd: needs progress encoder");
  nn::ArchSpec spec = progress_encoder.spec;
  spec.variant = nn::Variant::RsdProgress;
  ParamStore params = transfer_weights(progress_encoder, spec, derive_seed(seed, "rsd.init"));
  params.stage = "rsd_pretrain";

  OptimizerDriver opt(cfg, params, FrozenSet{"fc_prog_pre.W", "fc_prog_pre.b"});

  const int n = static_cast<int>(videos.size());
  const int pad_to = pad_target(videos, seq.pad_to);
  std::vector<synth::PaddedFeatures> padded(n);
  std::vector<Vec> y_rsd(n), y_prog(n);
  for (int v = 0; v < n; ++v) {
    padded[v] = synth::pad_features(*videos[v], pad_to);
    Vec rsd = synth::derive_rsd_labels(*videos[v], spec.s_norm);
    Vec prog = synth::derive_progress_labels(*videos[v]);
    rsd.resize(pad_to, 0.0);
    prog.resize(pad_to, 0.0);
    y_rsd[v] = std::move(rsd);
    y_prog[v] = std::move(prog);
  }

  Rng order_rng(derive_seed(seed, "rsd.order"));
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;

  for (int64_t iter = 0; iter < cfg.iterations; ++iter) {
    if (iter % n == 0) order_rng.shuffle(order);
    double t0 = now_ms();
    const int v = order[iter % n];
    BpttResult bptt = truncated_bptt_grads_rsd(params, padded[v].features, y_rsd[v], y_prog[v],
                                               padded[v].mask, seq.subseq_len, videos[v]->fps);
    opt.step(params, bptt.grads, iter);
    log.log_update(iter, bptt.loss, cfg.lr_at(iter), now_ms() - t0);
  }
  return params;
}

ParamStore pretrain_tempcon(const std::vector<synth::FramePair>& pairs, const TrainConfig& cfg,
                            const nn::ArchSpec& arch, uint64_t seed, TrainLogger log) {
  cfg.validate();
  require(!pairs.empty(), "pretrain_tempcon: empty pair set");
  nn::ArchSpec spec = arch;
  spec.variant = nn::Variant::TempCon;
  ParamStore params = nn::init_params(spec, derive_seed(seed, "tempcon.init"));
  params.stage = "tempcon_pretrain";
  OptimizerDriver opt(cfg, params);

  Rng order_rng(derive_seed(seed, "tempcon.order"));
  std::vector<size_t> order(pairs.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  order_rng.shuffle(order);
  size_t cursor = 0;

  const int D = spec.input_dim();
  for (int64_t iter = 0; iter < cfg.iterations; ++iter) {
    double t0 = now_ms();
    const int B = cfg.batch_size;
    Matrix A(B, D), Bm(B, D);
    std::vector<int> y(B);
    for (int i = 0; i < B; ++i) {
      if (cursor == order.size()) {
        order_rng.shuffle(order);
        cursor = 0;
      }
      const synth::FramePair& pr = pairs[order[cursor++]];
      std::copy(pr.frame_a.begin(), pr.frame_a.end(), A.row(i));
      std::copy(pr.frame_b.begin(), pr.frame_b.end(), Bm.row(i));
      y[i] = pr.label + 1;  // softmax_xent labels are 1-based
    }
    nn::TempConTrace trace;
    Matrix logits = nn::tempcon_forward(params, A, Bm, &trace);
    Matrix dLogits(B, 2);
    double loss = 0.0;
    for (int i = 0; i < B; ++i)
      loss += nn::softmax_xent({logits.row(i), 2}, y[i], {dLogits.row(i), 2});
    loss /= B;
    for (double& v : dLogits.data) v /= B;
    TensorMap grads = nn::zeros_like(params);
    nn::tempcon_backward(params, trace, dLogits, grads);
    opt.step(params, grads, iter);
    log.log_update(iter, loss, cfg.lr_at(iter), now_ms() - t0);
  }
  return params;
}

}  // namespace phaseforge::train
