#pragma once

#include <functional>
#include <span>
#include <utility>

#include "phaseforge/arch.hpp"
#include "phaseforge/common.hpp"

namespace phaseforge::nn {

// ---------------------------------------------------------------------------
// scalar pieces
// ---------------------------------------------------------------------------

inline double sigmoid(double z) {
  if (z >= 0.0) {
    double e = std::exp(-z);
    return 1.0 / (1.0 + e);
  }
  double e = std::exp(z);
  return e / (1.0 + e);
}

// value and derivative: 0.5 x^2 for |x| < 1, |x| - 0.5 otherwise.
std::pair<double, double> smooth_l1(double x);

// Max-subtracted softmax; p sums to 1.
void softmax(std::span<const double> z, std::span<double> p);
// Returns -log p[label-1] via log-sum-exp; writes dz = p - onehot when dz nonempty.
double softmax_xent(std::span<const double> z, int label, std::span<double> dz);

// ---------------------------------------------------------------------------
// losses: masked multinomial logistic, and the multi-task RSD/progress
// smooth-L1 regression
// ---------------------------------------------------------------------------

// Mean masked cross-entropy: -(1/T_eff) sum_t mask[t] log softmax(z_t)[y_t].
double phase_sequence_loss(const Matrix& logits, std::span<const int> labels,
                           std::span<const uint8_t> mask);

// Mean masked smooth-L1 residuals of the RSD activation and the sigmoid of the
// progress activation against their targets.
double rsd_progress_loss(std::span<const double> z_rsd, std::span<const double> z_prog,
                         std::span<const double> y_rsd, std::span<const double> y_prog,
                         std::span<const uint8_t> mask);

// ---------------------------------------------------------------------------
// encoder (ReLU MLP, linear output layer)
// ---------------------------------------------------------------------------

struct MlpTrace {
  std::vector<Matrix> acts;  // acts[0] = input, acts[L] = features
};

// X: T x D -> features T x F. Trace may be null for inference.
Matrix encoder_forward_batch(const ParamStore& params, const Matrix& X, MlpTrace* trace);
// Accumulates parameter gradients; writes d(input) when dX != nullptr.
void encoder_backward_batch(const ParamStore& params, const MlpTrace& trace, const Matrix& dFeats,
                            TensorMap& grads, Matrix* dX);
Vec encoder_forward(const ParamStore& params, std::span<const double> x);

// ---------------------------------------------------------------------------
// LSTM (standard non-peephole cell, gate order [i f g o])
// ---------------------------------------------------------------------------

struct LstmState {
  Vec h, c;
};
LstmState zero_state(int hidden);

struct LstmTrace {
  Matrix in;      // T x I
  Matrix gates;   // T x 4H, post-activation
  Matrix c;       // T x H
  Matrix tanh_c;  // T x H
  Matrix h;       // T x H
  Vec h_in, c_in;
};

struct StateGrad {
  Vec dh, dc;
};
StateGrad zero_state_grad(int hidden);

// Forward a subsequence; `state` enters as the carried state and leaves as the
// state after the last step.
void lstm_forward_chunk(const ParamStore& params, const Matrix& X_in, LstmState& state,
                        LstmTrace& trace);
// Exact reverse pass. `incoming` is the gradient of downstream loss w.r.t. the
// state leaving the chunk: zero implements the truncation boundary; the
// returned gradient w.r.t. the entering state lets callers chain full BPTT.
StateGrad lstm_backward_chunk(const ParamStore& params, const LstmTrace& trace,
                              const Matrix& dH_ext, const StateGrad& incoming, TensorMap& grads,
                              Matrix* dX_in);
// Single step; returns the new state (h is state.h).
LstmState lstm_step(const ParamStore& params, std::span<const double> x, const LstmState& state);

// ---------------------------------------------------------------------------
// heads
// ---------------------------------------------------------------------------

Vec phase_head(const ParamStore& params, std::span<const double> h);       // logits, size M
double progress_head(const ParamStore& params, std::span<const double> f); // sigmoid(fc_prog_pre f)
double rsd_head(const ParamStore& params, std::span<const double> h);      // linear

// ---------------------------------------------------------------------------
// sequence networks
// ---------------------------------------------------------------------------

// Elapsed-time LSTM input feature: minutes / s_norm, matching the RSD target
// scale. `t_global` is the 0-based frame index within the whole video.
inline double elapsed_feature(int64_t t_global, double fps, double s_norm) {
  return (static_cast<double>(t_global + 1) / fps / 60.0) / s_norm;
}

struct SeqChunkTrace {
  MlpTrace enc;
  Vec prog_pre_z;  // fc_prog_pre pre-activations (updated variants only)
  Matrix lstm_in;  // T x I
  LstmTrace lstm;
};

// EndoN2N (vanilla or updated by params.spec.variant). frames: T x D rows of
// the chunk; t0 is the chunk's global frame offset. Returns phase logits T x M.
Matrix endon2n_forward_chunk(const ParamStore& params, const Matrix& frames, int64_t t0,
                             double fps, LstmState& state, SeqChunkTrace* trace);
StateGrad endon2n_backward_chunk(const ParamStore& params, const SeqChunkTrace& trace,
                                 const Matrix& dLogits, const StateGrad& incoming,
                                 TensorMap& grads);

struct RsdChunkOut {
  Vec z_rsd, z_prog;  // raw head activations per frame
};
RsdChunkOut rsdnet_forward_chunk(const ParamStore& params, const Matrix& frames, int64_t t0,
                                 double fps, LstmState& state, SeqChunkTrace* trace);
StateGrad rsdnet_backward_chunk(const ParamStore& params, const SeqChunkTrace& trace,
                                std::span<const double> dz_rsd, std::span<const double> dz_prog,
                                const StateGrad& incoming, TensorMap& grads);

// ---------------------------------------------------------------------------
// per-frame fine-tuning networks
// ---------------------------------------------------------------------------

struct FrameTrace {
  MlpTrace enc;
};
// encoder + fc_phase_pre. X: B x D -> logits B x M.
Matrix phase_encoder_forward(const ParamStore& params, const Matrix& X, FrameTrace* trace);
void phase_encoder_backward(const ParamStore& params, const FrameTrace& trace,
                            const Matrix& dLogits, TensorMap& grads);
// encoder + fc_prog_pre. X: B x D -> pre-sigmoid activations, length B.
Vec progress_encoder_forward(const ParamStore& params, const Matrix& X, FrameTrace* trace);
void progress_encoder_backward(const ParamStore& params, const FrameTrace& trace,
                               std::span<const double> dz, TensorMap& grads);

// ---------------------------------------------------------------------------
// TempCon siamese
// ---------------------------------------------------------------------------

struct TempConTrace {
  MlpTrace enc_a, enc_b;
  Matrix concat;  // B x 2F
};
// A, B: B x D frame batches -> logits B x 2 (shared encoder weights).
Matrix tempcon_forward(const ParamStore& params, const Matrix& A, const Matrix& B,
                       TempConTrace* trace);
void tempcon_backward(const ParamStore& params, const TempConTrace& trace, const Matrix& dLogits,
                      TensorMap& grads);

// ---------------------------------------------------------------------------
// gradient oracle
// ---------------------------------------------------------------------------

// Central differences per scalar parameter. The loss callback must be a pure
// function of the store.
TensorMap finite_diff_grads(const std::function<double(const ParamStore&)>& loss_fn,
                            const ParamStore& params, double epsilon);

}  // namespace phaseforge::nn
