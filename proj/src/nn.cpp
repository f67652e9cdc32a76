#include "phaseforge/nn.hpp"

#include <algorithm>
#include <cmath>

#include "phaseforge/kernels.hpp"

namespace phaseforge::nn {

namespace k = phaseforge::kernels;

std::pair<double, double> smooth_l1(double x) {
  if (std::abs(x) < 1.0) return {0.5 * x * x, x};
  return {std::abs(x) - 0.5, x > 0.0 ? 1.0 : -1.0};
}

void softmax(std::span<const double> z, std::span<double> p) {
  double zmax = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (size_t i = 0; i < z.size(); ++i) {
    p[i] = std::exp(z[i] - zmax);
    sum += p[i];
  }
  for (size_t i = 0; i < z.size(); ++i) p[i] /= sum;
}

double softmax_xent(std::span<const double> z, int label, std::span<double> dz) {
  const int M = static_cast<int>(z.size());
  require(label >= 1 && label <= M, "softmax_xent: label out of range");
  double zmax = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (int i = 0; i < M; ++i) sum += std::exp(z[i] - zmax);
  double loss = std::log(sum) - (z[label - 1] - zmax);
  if (!dz.empty()) {
    for (int i = 0; i < M; ++i) dz[i] = std::exp(z[i] - zmax) / sum;
    dz[label - 1] -= 1.0;
  }
  return loss;
}

double phase_sequence_loss(const Matrix& logits, std::span<const int> labels,
                           std::span<const uint8_t> mask) {
  require(static_cast<size_t>(logits.rows) == labels.size() && labels.size() == mask.size(),
          "phase_sequence_loss: length mismatch");
  double sum = 0.0;
  int64_t t_eff = 0;
  for (int t = 0; t < logits.rows; ++t) {
    if (!mask[t]) continue;
    sum += softmax_xent({logits.row(t), static_cast<size_t>(logits.cols)}, labels[t], {});
    ++t_eff;
  }
  require(t_eff > 0, "phase_sequence_loss: empty mask");
  return sum / static_cast<double>(t_eff);
}

double rsd_progress_loss(std::span<const double> z_rsd, std::span<const double> z_prog,
                         std::span<const double> y_rsd, std::span<const double> y_prog,
                         std::span<const uint8_t> mask) {
  require(z_rsd.size() == z_prog.size() && z_rsd.size() == y_rsd.size() &&
              z_rsd.size() == y_prog.size() && z_rsd.size() == mask.size(),
          "rsd_progress_loss: length mismatch");
  double sum = 0.0;
  int64_t t_eff = 0;
  for (size_t t = 0; t < z_rsd.size(); ++t) {
    if (!mask[t]) continue;
    sum += smooth_l1(z_rsd[t] - y_rsd[t]).first;
    sum += smooth_l1(sigmoid(z_prog[t]) - y_prog[t]).first;
    ++t_eff;
  }
  require(t_eff > 0, "rsd_progress_loss: empty mask");
  return sum / static_cast<double>(t_eff);
}

// ---------------------------------------------------------------------------
// encoder
// ---------------------------------------------------------------------------

Matrix encoder_forward_batch(const ParamStore& params, const Matrix& X, MlpTrace* trace) {
  const ArchSpec& spec = params.spec;
  require(X.cols == spec.input_dim(), "encoder_forward: input dim mismatch");
  const int L = spec.encoder_layers();
  Matrix cur = X;
  if (trace) {
    trace->acts.clear();
    trace->acts.push_back(cur);
  }
  for (int l = 0; l < L; ++l) {
    const Matrix& W = params.at("enc" + std::to_string(l) + ".W");
    const Matrix& b = params.at("enc" + std::to_string(l) + ".b");
    Matrix next(cur.rows, W.rows);
    k::affine_batch(W.data.data(), b.data.data(), W.rows, W.cols, cur.data.data(), cur.rows,
                    next.data.data());
    if (l + 1 < L) k::relu(next.data.data(), next.data.data(), static_cast<int64_t>(next.size()));
    cur = std::move(next);
    if (trace) trace->acts.push_back(cur);
  }
  return cur;
}

void encoder_backward_batch(const ParamStore& params, const MlpTrace& trace, const Matrix& dFeats,
                            TensorMap& grads, Matrix* dX) {
  const int L = params.spec.encoder_layers();
  require(static_cast<int>(trace.acts.size()) == L + 1, "encoder_backward: trace mismatch");
  Matrix d = dFeats;
  for (int l = L - 1; l >= 0; --l) {
    const Matrix& W = params.at("enc" + std::to_string(l) + ".W");
    const Matrix& in = trace.acts[l];
    const int T = in.rows;
    if (l + 1 < L) {
      // through the ReLU of this layer's output
      const Matrix& out = trace.acts[l + 1];
      k::relu_bwd(out.data.data(), d.data.data(), d.data.data(), static_cast<int64_t>(d.size()));
    }
    std::string key = "enc" + std::to_string(l);
    k::affine_grad_batch(in.data.data(), d.data.data(), W.rows, W.cols, T,
                         grads.at(key + ".W").data.data(), grads.at(key + ".b").data.data());
    if (l > 0 || dX) {
      Matrix dIn(T, W.cols);
      k::affine_bwd_input_batch(W.data.data(), W.rows, W.cols, d.data.data(), T, dIn.data.data());
      if (l == 0) {
        if (dX) *dX = std::move(dIn);
      } else {
        d = std::move(dIn);
      }
    }
  }
}

Vec encoder_forward(const ParamStore& params, std::span<const double> x) {
  Matrix X(1, static_cast<int>(x.size()));
  std::copy(x.begin(), x.end(), X.data.begin());
  Matrix f = encoder_forward_batch(params, X, nullptr);
  return f.data;
}

// ---------------------------------------------------------------------------
// LSTM
// ---------------------------------------------------------------------------

LstmState zero_state(int hidden) { return {Vec(hidden, 0.0), Vec(hidden, 0.0)}; }
StateGrad zero_state_grad(int hidden) { return {Vec(hidden, 0.0), Vec(hidden, 0.0)}; }

void lstm_forward_chunk(const ParamStore& params, const Matrix& X_in, LstmState& state,
                        LstmTrace& trace) {
  const Matrix& Wx = params.at("lstm.Wx");
  const Matrix& Wh = params.at("lstm.Wh");
  const Matrix& b = params.at("lstm.b");
  const int H = params.spec.lstm_hidden;
  const int T = X_in.rows;
  require(X_in.cols == Wx.cols, "lstm_forward: input dim mismatch");
  require(static_cast<int>(state.h.size()) == H, "lstm_forward: state dim mismatch");

  trace.in = X_in;
  trace.gates = Matrix(T, 4 * H);
  trace.c = Matrix(T, H);
  trace.tanh_c = Matrix(T, H);
  trace.h = Matrix(T, H);
  trace.h_in = state.h;
  trace.c_in = state.c;

  // input contributions for the whole chunk in one pass
  k::affine_batch(Wx.data.data(), b.data.data(), 4 * H, Wx.cols, X_in.data.data(), T,
                  trace.gates.data.data());

  for (int t = 0; t < T; ++t) {
    double* z = trace.gates.row(t);
    k::affine_add(Wh.data.data(), 4 * H, H, state.h.data(), z);
    double* c = trace.c.row(t);
    double* tc = trace.tanh_c.row(t);
    double* h = trace.h.row(t);
    for (int j = 0; j < H; ++j) {
      double i_g = sigmoid(z[j]);
      double f_g = sigmoid(z[H + j]);
      double g_g = std::tanh(z[2 * H + j]);
      double o_g = sigmoid(z[3 * H + j]);
      z[j] = i_g;
      z[H + j] = f_g;
      z[2 * H + j] = g_g;
      z[3 * H + j] = o_g;
      c[j] = f_g * state.c[j] + i_g * g_g;
      tc[j] = std::tanh(c[j]);
      h[j] = o_g * tc[j];
    }
    std::copy(c, c + H, state.c.begin());
    std::copy(h, h + H, state.h.begin());
  }
}

StateGrad lstm_backward_chunk(const ParamStore& params, const LstmTrace& trace,
                              const Matrix& dH_ext, const StateGrad& incoming, TensorMap& grads,
                              Matrix* dX_in) {
  const Matrix& Wx = params.at("lstm.Wx");
  const Matrix& Wh = params.at("lstm.Wh");
  const int H = params.spec.lstm_hidden;
  const int T = trace.h.rows;
  require(dH_ext.rows == T && dH_ext.cols == H, "lstm_backward: dH_ext shape");

  Matrix dZ(T, 4 * H);
  Vec dh_carry = incoming.dh.empty() ? Vec(H, 0.0) : incoming.dh;
  Vec dc_carry = incoming.dc.empty() ? Vec(H, 0.0) : incoming.dc;

  // Wh transposed once so the per-step dh computation streams rows
  Matrix WhT(H, 4 * H);
  for (int r = 0; r < 4 * H; ++r)
    for (int c = 0; c < H; ++c) WhT.at(c, r) = Wh.at(r, c);

  for (int t = T - 1; t >= 0; --t) {
    const double* gate = trace.gates.row(t);
    const double* tc = trace.tanh_c.row(t);
    const double* c_prev = t > 0 ? trace.c.row(t - 1) : trace.c_in.data();
    const double* dh_ext = dH_ext.row(t);
    double* dz = dZ.row(t);
    for (int j = 0; j < H; ++j) {
      double i_g = gate[j], f_g = gate[H + j], g_g = gate[2 * H + j], o_g = gate[3 * H + j];
      double dh = dh_ext[j] + dh_carry[j];
      double do_ = dh * tc[j];
      double dc = dh * o_g * (1.0 - tc[j] * tc[j]) + dc_carry[j];
      double di = dc * g_g;
      double df = dc * c_prev[j];
      double dg = dc * i_g;
      dc_carry[j] = dc * f_g;
      dz[j] = di * i_g * (1.0 - i_g);
      dz[H + j] = df * f_g * (1.0 - f_g);
      dz[2 * H + j] = dg * (1.0 - g_g * g_g);
      dz[3 * H + j] = do_ * o_g * (1.0 - o_g);
    }
    k::affine(WhT.data.data(), nullptr, H, 4 * H, dz, dh_carry.data());
  }

  // parameter gradients in one batched pass each
  k::affine_grad_batch(trace.in.data.data(), dZ.data.data(), 4 * H, Wx.cols, T,
                       grads.at("lstm.Wx").data.data(), grads.at("lstm.b").data.data());
  Matrix h_prev(T, H);
  std::copy(trace.h_in.begin(), trace.h_in.end(), h_prev.row(0));
  if (T > 1)
    std::copy(trace.h.data.begin(), trace.h.data.begin() + static_cast<size_t>(T - 1) * H,
              h_prev.row(1));
  k::affine_grad_batch(h_prev.data.data(), dZ.data.data(), 4 * H, H, T,
                       grads.at("lstm.Wh").data.data(), nullptr);
  if (dX_in) {
    *dX_in = Matrix(T, Wx.cols);
    k::affine_bwd_input_batch(Wx.data.data(), 4 * H, Wx.cols, dZ.data.data(), T,
                              dX_in->data.data());
  }
  return {std::move(dh_carry), std::move(dc_carry)};
}

LstmState lstm_step(const ParamStore& params, std::span<const double> x, const LstmState& state) {
  Matrix X(1, static_cast<int>(x.size()));
  std::copy(x.begin(), x.end(), X.data.begin());
  LstmState s = state;
  LstmTrace trace;
  lstm_forward_chunk(params, X, s, trace);
  return s;
}

// ---------------------------------------------------------------------------
// heads
// ---------------------------------------------------------------------------

namespace {
Vec head_forward(const ParamStore& params, const std::string& head, std::span<const double> in) {
  const Matrix& W = params.at(head + ".W");
  const Matrix& b = params.at(head + ".b");
  require(static_cast<int>(in.size()) == W.cols, head + ": input dim mismatch");
  Vec out(W.rows);
  k::affine(W.data.data(), b.data.data(), W.rows, W.cols, in.data(), out.data());
  return out;
}
}  // namespace

Vec phase_head(const ParamStore& params, std::span<const double> h) {
  const char* head = params.spec.variant == Variant::PhaseEncoder ? "fc_phase_pre" : "fc_phase";
  return head_forward(params, head, h);
}

double progress_head(const ParamStore& params, std::span<const double> f) {
  return sigmoid(head_forward(params, "fc_prog_pre", f)[0]);
}

double rsd_head(const ParamStore& params, std::span<const double> h) {
  return head_forward(params, "fc_rsd", h)[0];
}

// ---------------------------------------------------------------------------
// sequence networks
// ---------------------------------------------------------------------------

namespace {

// Builds the LSTM input block for a chunk: features, then (updated variants)
// the elapsed-time feature and sigmoid(fc_prog_pre) per frame.
Matrix build_lstm_input(const ParamStore& params, const Matrix& feats, int64_t t0, double fps,
                        Vec* prog_pre_z) {
  const ArchSpec& spec = params.spec;
  const int T = feats.rows;
  const int F = spec.feature_dim();
  if (!spec.updated_inputs()) return feats;

  const Matrix& W = params.at("fc_prog_pre.W");
  const Matrix& b = params.at("fc_prog_pre.b");
  Vec z(T);
  k::affine_batch(W.data.data(), b.data.data(), 1, F, feats.data.data(), T, z.data());

  Matrix in(T, F + 2);
  for (int t = 0; t < T; ++t) {
    const double* f = feats.row(t);
    double* row = in.row(t);
    std::copy(f, f + F, row);
    row[F] = elapsed_feature(t0 + t, fps, spec.s_norm);
    row[F + 1] = sigmoid(z[t]);
  }
  if (prog_pre_z) *prog_pre_z = std::move(z);
  return in;
}

// Shared backward tail: dX_lstm_in -> (fc_prog_pre grads, encoder grads).
void backward_through_inputs(const ParamStore& params, const SeqChunkTrace& trace,
                             const Matrix& dLstmIn, TensorMap& grads) {
  const ArchSpec& spec = params.spec;
  const int T = dLstmIn.rows;
  const int F = spec.feature_dim();
  const Matrix& feats = trace.enc.acts.back();

  if (!spec.updated_inputs()) {
    encoder_backward_batch(params, trace.enc, dLstmIn, grads, nullptr);
    return;
  }

  Matrix dFeats(T, F);
  Vec dz_prog(T);
  for (int t = 0; t < T; ++t) {
    const double* din = dLstmIn.row(t);
    std::copy(din, din + F, dFeats.row(t));
    double s = sigmoid(trace.prog_pre_z[t]);
    dz_prog[t] = din[F + 1] * s * (1.0 - s);
    // the elapsed-time column is an input constant, no gradient
  }
  const Matrix& W = params.at("fc_prog_pre.W");
  k::affine_grad_batch(feats.data.data(), dz_prog.data(), 1, F, T,
                       grads.at("fc_prog_pre.W").data.data(),
                       grads.at("fc_prog_pre.b").data.data());
  Matrix dFeatsProg(T, F);
  k::affine_bwd_input_batch(W.data.data(), 1, F, dz_prog.data(), T, dFeatsProg.data.data());
  for (size_t i = 0; i < dFeats.data.size(); ++i) dFeats.data[i] += dFeatsProg.data[i];
  encoder_backward_batch(params, trace.enc, dFeats, grads, nullptr);
}

}  // namespace

Matrix endon2n_forward_chunk(const ParamStore& params, const Matrix& frames, int64_t t0,
                             double fps, LstmState& state, SeqChunkTrace* trace) {
  SeqChunkTrace local;
  SeqChunkTrace& tr = trace ? *trace : local;
  Matrix feats = encoder_forward_batch(params, frames, &tr.enc);
  tr.lstm_in = build_lstm_input(params, feats, t0, fps, &tr.prog_pre_z);
  lstm_forward_chunk(params, tr.lstm_in, state, tr.lstm);
  const Matrix& W = params.at("fc_phase.W");
  const Matrix& b = params.at("fc_phase.b");
  Matrix logits(frames.rows, W.rows);
  k::affine_batch(W.data.data(), b.data.data(), W.rows, W.cols, tr.lstm.h.data.data(), frames.rows,
                  logits.data.data());
  return logits;
}

StateGrad endon2n_backward_chunk(const ParamStore& params, const SeqChunkTrace& trace,
                                 const Matrix& dLogits, const StateGrad& incoming,
                                 TensorMap& grads) {
  const ArchSpec& spec = params.spec;
  const int T = dLogits.rows;
  const int H = spec.lstm_hidden;
  const Matrix& W = params.at("fc_phase.W");
  k::affine_grad_batch(trace.lstm.h.data.data(), dLogits.data.data(), W.rows, W.cols, T,
                       grads.at("fc_phase.W").data.data(), grads.at("fc_phase.b").data.data());
  Matrix dH(T, H);
  k::affine_bwd_input_batch(W.data.data(), W.rows, W.cols, dLogits.data.data(), T, dH.data.data());
  Matrix dLstmIn;
  StateGrad out = lstm_backward_chunk(params, trace.lstm, dH, incoming, grads, &dLstmIn);
  backward_through_inputs(params, trace, dLstmIn, grads);
  return out;
}

RsdChunkOut rsdnet_forward_chunk(const ParamStore& params, const Matrix& frames, int64_t t0,
                                 double fps, LstmState& state, SeqChunkTrace* trace) {
  SeqChunkTrace local;
  SeqChunkTrace& tr = trace ? *trace : local;
  Matrix feats = encoder_forward_batch(params, frames, &tr.enc);
  tr.lstm_in = build_lstm_input(params, feats, t0, fps, &tr.prog_pre_z);
  lstm_forward_chunk(params, tr.lstm_in, state, tr.lstm);
  const int T = frames.rows;
  RsdChunkOut out;
  out.z_rsd.resize(T);
  out.z_prog.resize(T);
  const Matrix& Wr = params.at("fc_rsd.W");
  const Matrix& br = params.at("fc_rsd.b");
  const Matrix& Wp = params.at("fc_prog.W");
  const Matrix& bp = params.at("fc_prog.b");
  k::affine_batch(Wr.data.data(), br.data.data(), 1, Wr.cols, tr.lstm.h.data.data(), T,
                  out.z_rsd.data());
  k::affine_batch(Wp.data.data(), bp.data.data(), 1, Wp.cols, tr.lstm.h.data.data(), T,
                  out.z_prog.data());
  return out;
}

StateGrad rsdnet_backward_chunk(const ParamStore& params, const SeqChunkTrace& trace,
                                std::span<const double> dz_rsd, std::span<const double> dz_prog,
                                const StateGrad& incoming, TensorMap& grads) {
  const int T = trace.lstm.h.rows;
  const int H = params.spec.lstm_hidden;
  const Matrix& Wr = params.at("fc_rsd.W");
  const Matrix& Wp = params.at("fc_prog.W");
  k::affine_grad_batch(trace.lstm.h.data.data(), dz_rsd.data(), 1, H, T,
                       grads.at("fc_rsd.W").data.data(), grads.at("fc_rsd.b").data.data());
  k::affine_grad_batch(trace.lstm.h.data.data(), dz_prog.data(), 1, H, T,
                       grads.at("fc_prog.W").data.data(), grads.at("fc_prog.b").data.data());
  Matrix dH(T, H);
  for (int t = 0; t < T; ++t) {
    double* row = dH.row(t);
    for (int j = 0; j < H; ++j)
      row[j] = dz_rsd[t] * Wr.data[j] + dz_prog[t] * Wp.data[j];
  }
  Matrix dLstmIn;
  StateGrad out = lstm_backward_chunk(params, trace.lstm, dH, incoming, grads, &dLstmIn);
  backward_through_inputs(params, trace, dLstmIn, grads);
  return out;
}

// ---------------------------------------------------------------------------
// per-frame fine-tuning networks
// ---------------------------------------------------------------------------

Matrix phase_encoder_forward(const ParamStore& params, const Matrix& X, FrameTrace* trace) {
  FrameTrace local;
  FrameTrace& tr = trace ? *trace : local;
  Matrix feats = encoder_forward_batch(params, X, &tr.enc);
  const Matrix& W = params.at("fc_phase_pre.W");
  const Matrix& b = params.at("fc_phase_pre.b");
  Matrix logits(X.rows, W.rows);
  k::affine_batch(W.data.data(), b.data.data(), W.rows, W.cols, feats.data.data(), X.rows,
                  logits.data.data());
  return logits;
}

void phase_encoder_backward(const ParamStore& params, const FrameTrace& trace,
                            const Matrix& dLogits, TensorMap& grads) {
  const Matrix& W = params.at("fc_phase_pre.W");
  const Matrix& feats = trace.enc.acts.back();
  const int B = dLogits.rows;
  k::affine_grad_batch(feats.data.data(), dLogits.data.data(), W.rows, W.cols, B,
                       grads.at("fc_phase_pre.W").data.data(),
                       grads.at("fc_phase_pre.b").data.data());
  Matrix dFeats(B, W.cols);
  k::affine_bwd_input_batch(W.data.data(), W.rows, W.cols, dLogits.data.data(), B,
                            dFeats.data.data());
  encoder_backward_batch(params, trace.enc, dFeats, grads, nullptr);
}

Vec progress_encoder_forward(const ParamStore& params, const Matrix& X, FrameTrace* trace) {
  FrameTrace local;
  FrameTrace& tr = trace ? *trace : local;
  Matrix feats = encoder_forward_batch(params, X, &tr.enc);
  const Matrix& W = params.at("fc_prog_pre.W");
  const Matrix& b = params.at("fc_prog_pre.b");
  Vec z(X.rows);
  k::affine_batch(W.data.data(), b.data.data(), 1, W.cols, feats.data.data(), X.rows, z.data());
  return z;
}

void progress_encoder_backward(const ParamStore& params, const FrameTrace& trace,
                               std::span<const double> dz, TensorMap& grads) {
  const Matrix& W = params.at("fc_prog_pre.W");
  const Matrix& feats = trace.enc.acts.back();
  const int B = static_cast<int>(dz.size());
  k::affine_grad_batch(feats.data.data(), dz.data(), 1, W.cols, B,
                       grads.at("fc_prog_pre.W").data.data(),
                       grads.at("fc_prog_pre.b").data.data());
  Matrix dFeats(B, W.cols);
  k::affine_bwd_input_batch(W.data.data(), 1, W.cols, dz.data(), B, dFeats.data.data());
  encoder_backward_batch(params, trace.enc, dFeats, grads, nullptr);
}

// ---------------------------------------------------------------------------
// TempCon siamese
// ---------------------------------------------------------------------------

Matrix tempcon_forward(const ParamStore& params, const Matrix& A, const Matrix& B,
                       TempConTrace* trace) {
  require(A.rows == B.rows && A.cols == B.cols, "tempcon_forward: batch mismatch");
  TempConTrace local;
  TempConTrace& tr = trace ? *trace : local;
  Matrix fa = encoder_forward_batch(params, A, &tr.enc_a);
  Matrix fb = encoder_forward_batch(params, B, &tr.enc_b);
  const int n = A.rows;
  const int F = fa.cols;
  tr.concat = Matrix(n, 2 * F);
  for (int t = 0; t < n; ++t) {
    std::copy(fa.row(t), fa.row(t) + F, tr.concat.row(t));
    std::copy(fb.row(t), fb.row(t) + F, tr.concat.row(t) + F);
  }
  const Matrix& W = params.at("fc_pair.W");
  const Matrix& b = params.at("fc_pair.b");
  Matrix logits(n, 2);
  k::affine_batch(W.data.data(), b.data.data(), 2, 2 * F, tr.concat.data.data(), n,
                  logits.data.data());
  return logits;
}

void tempcon_backward(const ParamStore& params, const TempConTrace& trace, const Matrix& dLogits,
                      TensorMap& grads) {
  const Matrix& W = params.at("fc_pair.W");
  const int n = dLogits.rows;
  const int F = params.spec.feature_dim();
  k::affine_grad_batch(trace.concat.data.data(), dLogits.data.data(), 2, 2 * F, n,
                       grads.at("fc_pair.W").data.data(), grads.at("fc_pair.b").data.data());
  Matrix dConcat(n, 2 * F);
  k::affine_bwd_input_batch(W.data.data(), 2, 2 * F, dLogits.data.data(), n, dConcat.data.data());
  Matrix dFa(n, F), dFb(n, F);
  for (int t = 0; t < n; ++t) {
    std::copy(dConcat.row(t), dConcat.row(t) + F, dFa.row(t));
    std::copy(dConcat.row(t) + F, dConcat.row(t) + 2 * F, dFb.row(t));
  }
  // shared weights: both streams accumulate into the same gradients
  encoder_backward_batch(params, trace.enc_a, dFa, grads, nullptr);
  encoder_backward_batch(params, trace.enc_b, dFb, grads, nullptr);
}

// ---------------------------------------------------------------------------
// gradient oracle
// ---------------------------------------------------------------------------

TensorMap finite_diff_grads(const std::function<double(const ParamStore&)>& loss_fn,
                            const ParamStore& params, double epsilon) {
  ParamStore work = params;
  TensorMap grads = zeros_like(params);
  for (auto& [name, tensor] : work.tensors) {
    Matrix& g = grads.at(name);
    for (size_t i = 0; i < tensor.data.size(); ++i) {
      const double saved = tensor.data[i];
      tensor.data[i] = saved + epsilon;
      double up = loss_fn(work);
      tensor.data[i] = saved - epsilon;
      double down = loss_fn(work);
      tensor.data[i] = saved;
      g.data[i] = (up - down) / (2.0 * epsilon);
    }
  }
  return grads;
}

}  // namespace phaseforge::nn
