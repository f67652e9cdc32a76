#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "phaseforge/eval.hpp"
#include "phaseforge/kernels.hpp"
#include "phaseforge/nn.hpp"
#include "phaseforge/rng.hpp"
#include "phaseforge/synth.hpp"
#include "phaseforge/train.hpp"

using namespace phaseforge;
using train::TrainConfig;
using train::Videos;

namespace {

// Short videos and a narrow LSTM keep each run in the low seconds.
synth::WorkflowModel mini_model(double noise = 0.35) {
  synth::WorkflowModel m;
  m.num_phases = 7;
  m.phase_duration_mean = {8, 18, 12, 18, 8, 8, 10};
  m.phase_duration_std = {2, 5, 3, 5, 2, 2, 3};
  m.min_phase_duration = 2.0;
  m.feature_dim = 16;
  m.emission_noise_std = noise;
  return m;
}

nn::ArchSpec mini_arch(nn::Variant v) {
  nn::ArchSpec s;
  s.encoder_widths = {16, 32, 24};
  s.lstm_hidden = 64;
  s.num_phases = 7;
  s.s_norm = 5.0;
  s.variant = v;
  return s;
}

train::SeqTrainConfig mini_seq() {
  train::SeqTrainConfig seq;
  seq.subseq_len = 25;
  seq.pad_to = 120;
  seq.epochs = 60;
  seq.step_frac = 0.25;
  return seq;
}

Videos to_videos(const std::vector<synth::SurgeryRecord>& ds, size_t from, size_t to) {
  Videos v;
  for (size_t i = from; i < to; ++i) v.push_back(&ds[i]);
  return v;
}

double test_accuracy(const nn::ParamStore& model, const Videos& test) {
  double acc = 0;
  for (const auto* rec : test) {
    eval::PredictionTrace pred = eval::predict_sequence(model, *rec);
    acc += eval::accuracy(pred.labels, rec->phases());
  }
  return acc / static_cast<double>(test.size());
}

}  // namespace

TEST_CASE("phase encoder reaches 99% train accuracy on noiseless emissions") {
  kernels::configure_threads_from_env();
  auto ds = synth::generate_dataset(mini_model(0.0), 4, 301);
  Videos vids = to_videos(ds, 0, 4);
  TrainConfig cfg{train::Optimizer::Sgd, 400, 1e-3, 200, 0.1, 50, 5e-4};
  nn::ParamStore init = nn::init_params(mini_arch(nn::Variant::PhaseEncoder), 302);
  nn::ParamStore trained = train::train_phase_encoder(vids, cfg, init, 303);
  int hits = 0, total = 0;
  for (const auto* rec : vids) {
    Matrix logits = nn::phase_encoder_forward(trained, rec->frames, nullptr);
    auto ph = rec->phases();
    for (int t = 0; t < logits.rows; ++t) {
      const double* row = logits.row(t);
      hits += 1 + static_cast<int>(std::max_element(row, row + 7) - row) == ph[t];
      ++total;
    }
  }
  CHECK(100.0 * hits / total >= 99.0);
}

TEST_CASE("zero-iteration stages return their initialization unchanged") {
  auto ds = synth::generate_dataset(mini_model(), 2, 305);
  Videos vids = to_videos(ds, 0, 2);
  TrainConfig cfg;
  cfg.iterations = 0;
  nn::ParamStore init = nn::init_params(mini_arch(nn::Variant::PhaseEncoder), 306);
  nn::ParamStore out = train::train_phase_encoder(vids, cfg, init, 307);
  for (const auto& [name, t] : init.tensors) CHECK(out.at(name).data == t.data);

  nn::ParamStore pinit = nn::init_params(mini_arch(nn::Variant::ProgressEncoder), 308);
  nn::ParamStore pout = train::train_progress_encoder(vids, cfg, pinit, 309);
  for (const auto& [name, t] : pinit.tensors) CHECK(pout.at(name).data == t.data);
}

TEST_CASE("phase encoder loss trend is non-increasing early on (seed-pinned smoke)") {
  auto ds = synth::generate_dataset(mini_model(0.1), 4, 310);
  Videos vids = to_videos(ds, 0, 4);
  // measure the loss on a fixed probe batch before and after short training
  Matrix full(200, 16);
  std::vector<int> probe_labels;
  int idx = 0;
  for (const auto* rec : vids) {
    auto ph = rec->phases();
    for (int t = 0; t < rec->num_frames() && idx < 200; t += 3, ++idx) {
      std::copy(rec->frames.row(t), rec->frames.row(t) + 16, full.row(idx));
      probe_labels.push_back(ph[t]);
    }
  }
  Matrix probe(idx, 16);
  std::copy(full.data.begin(), full.data.begin() + static_cast<size_t>(idx) * 16,
            probe.data.begin());
  auto probe_loss = [&](const nn::ParamStore& p) {
    Matrix logits = nn::phase_encoder_forward(p, probe, nullptr);
    double s = 0;
    for (int i = 0; i < logits.rows; ++i)
      s += nn::softmax_xent({logits.row(i), 7}, probe_labels[i], {});
    return s / logits.rows;
  };
  nn::ParamStore init = nn::init_params(mini_arch(nn::Variant::PhaseEncoder), 311);
  double before = probe_loss(init);
  TrainConfig cfg{train::Optimizer::Sgd, 100, 1e-3, 0, 0.1, 50, 5e-4};
  nn::ParamStore after10 = train::train_phase_encoder(vids, [&] {
    TrainConfig c = cfg;
    c.iterations = 10;
    return c;
  }(), init, 312);
  nn::ParamStore after100 = train::train_phase_encoder(vids, cfg, init, 312);
  CHECK(probe_loss(after10) < before);
  CHECK(probe_loss(after100) < probe_loss(after10));
}

TEST_CASE("endon2n end-to-end beats 90% held-out accuracy; endolstm beats 85%") {
  kernels::configure_threads_from_env();
  auto ds = synth::generate_dataset(mini_model(), 16, 320);
  Videos train_vids = to_videos(ds, 0, 10);
  Videos val_vids = to_videos(ds, 10, 12);
  Videos test_vids = to_videos(ds, 12, 16);
  train::SeqTrainConfig seq = mini_seq();

  // phase-encoder fine-tuning on the training pool
  TrainConfig pe_cfg{train::Optimizer::Sgd, 600, 1e-3, 300, 0.1, 50, 5e-4};
  nn::ParamStore pe = train::train_phase_encoder(
      train_vids, pe_cfg, nn::init_params(mini_arch(nn::Variant::PhaseEncoder), 321), 322);

  // EndoN2N: truncated-BPTT end-to-end training
  TrainConfig n2n_cfg{train::Optimizer::Adam, 0, 1e-4, 0, 0.25, 1, 5e-4};
  n2n_cfg.iterations = train::scaled_iterations(seq.epochs, static_cast<int>(train_vids.size()));
  n2n_cfg.step_size = train::scaled_step_size(n2n_cfg.iterations, seq.step_frac);
  nn::ParamStore n2n_init =
      train::transfer_weights(pe, mini_arch(nn::Variant::EndoN2NVanilla), 323);
  train::SeqTrainResult n2n = train::train_endon2n(train_vids, val_vids, n2n_cfg, seq, n2n_init, 324);
  double n2n_acc = test_accuracy(n2n.best, test_vids);
  CHECK(n2n_acc >= 90.0);

  // EndoLSTM: frozen encoder, exact BPTT
  TrainConfig lstm_cfg{train::Optimizer::Sgd, 0, 1e-3, 0, 0.1, 1, 5e-4};
  lstm_cfg.iterations = n2n_cfg.iterations;
  lstm_cfg.step_size = train::scaled_step_size(lstm_cfg.iterations, 1.0 / 3.0);
  train::SeqTrainResult el = train::train_endolstm(train_vids, val_vids, lstm_cfg, seq, pe, 325);
  double el_acc = test_accuracy(el.best, test_vids);
  CHECK(el_acc >= 85.0);

  // encoder tensors bit-identical before and after EndoLSTM training
  for (int l = 0; l < 2; ++l)
    for (const char* sfx : {".W", ".b"}) {
      std::string name = "enc" + std::to_string(l) + sfx;
      CHECK(el.best.at(name).data == pe.at(name).data);
      CHECK(el.final_.at(name).data == pe.at(name).data);
    }
  MESSAGE("endon2n ", n2n_acc, "% vs endolstm ", el_acc, "%");
}

TEST_CASE("endolstm gradient path equals full BPTT restricted to LSTM+head tensors") {
  auto ds = synth::generate_dataset(mini_model(), 1, 330);
  synth::SurgeryRecord rec = ds[0];
  // T = 16 toy slice
  Matrix frames(16, 16);
  std::copy(rec.frames.row(0), rec.frames.row(0) + 16 * 16, frames.data.begin());
  std::vector<int> labels(rec.phases().begin(), rec.phases().begin() + 16);
  std::vector<uint8_t> mask(16, 1);

  nn::ParamStore params = nn::init_params(mini_arch(nn::Variant::EndoN2NVanilla), 331);
  train::BpttResult full = train::full_bptt_grads(params, frames, labels, mask, 1.0);

  // the two-step route: features from the frozen encoder, then LSTM + head
  Matrix feats = nn::encoder_forward_batch(params, frames, nullptr);
  nn::LstmState state = nn::zero_state(64);
  nn::LstmTrace trace;
  nn::lstm_forward_chunk(params, feats, state, trace);
  const Matrix& W = params.at("fc_phase.W");
  const Matrix& b = params.at("fc_phase.b");
  Matrix logits(16, 7);
  kernels::affine_batch(W.data.data(), b.data.data(), 7, 64, trace.h.data.data(), 16,
                        logits.data.data());
  Matrix dLogits(16, 7);
  for (int t = 0; t < 16; ++t) {
    nn::softmax_xent({logits.row(t), 7}, labels[t], {dLogits.row(t), 7});
    for (int i = 0; i < 7; ++i) dLogits.at(t, i) /= 16.0;
  }
  TensorMap grads = nn::zeros_like(params);
  kernels::affine_grad_batch(trace.h.data.data(), dLogits.data.data(), 7, 64, 16,
                             grads.at("fc_phase.W").data.data(),
                             grads.at("fc_phase.b").data.data());
  Matrix dH(16, 64);
  kernels::affine_bwd_input_batch(W.data.data(), 7, 64, dLogits.data.data(), 16, dH.data.data());
  nn::lstm_backward_chunk(params, trace, dH, nn::StateGrad{}, grads, nullptr);

  for (const char* name : {"lstm.Wx", "lstm.Wh", "lstm.b", "fc_phase.W", "fc_phase.b"})
    CHECK(grads.at(name).data == full.grads.at(name).data);
}

TEST_CASE("progress encoder: held-out MAE under 0.15; perfect predictor has zero loss") {
  auto ds = synth::generate_dataset(mini_model(), 8, 340);
  Videos train_vids = to_videos(ds, 0, 6);
  Videos test_vids = to_videos(ds, 6, 8);
  TrainConfig cfg{train::Optimizer::Sgd, 1500, 1e-3, 600, 0.1, 64, 5e-4};
  nn::ParamStore trained = train::train_progress_encoder(
      train_vids, cfg, nn::init_params(mini_arch(nn::Variant::ProgressEncoder), 341), 342);
  double mae = 0;
  int64_t n = 0;
  for (const auto* rec : test_vids) {
    Vec z = nn::progress_encoder_forward(trained, rec->frames, nullptr);
    Vec y = synth::derive_progress_labels(*rec);
    for (size_t t = 0; t < z.size(); ++t) {
      mae += std::abs(nn::sigmoid(z[t]) - y[t]);
      ++n;
    }
  }
  mae /= static_cast<double>(n);
  MESSAGE("progress MAE ", mae);
  CHECK(mae <= 0.15);

  // perfect predictions give exactly zero loss
  Vec targets = {0.25, 0.5, 0.75};
  Vec z_perfect(3);
  for (int i = 0; i < 3; ++i) z_perfect[i] = std::log(targets[i] / (1.0 - targets[i]));
  double loss = 0;
  for (int i = 0; i < 3; ++i)
    loss += nn::smooth_l1(nn::sigmoid(z_perfect[i]) - targets[i]).first;
  CHECK(loss < 1e-25);
}

TEST_CASE("rsd pre-training: frozen progress head, beats constant baseline by 20%") {
  kernels::configure_threads_from_env();
  auto ds = synth::generate_dataset(mini_model(), 10, 350);
  Videos train_vids = to_videos(ds, 0, 8);
  Videos test_vids = to_videos(ds, 8, 10);
  train::SeqTrainConfig seq = mini_seq();

  TrainConfig pcfg{train::Optimizer::Sgd, 1000, 1e-3, 400, 0.1, 64, 5e-4};
  nn::ParamStore prog = train::train_progress_encoder(
      train_vids, pcfg, nn::init_params(mini_arch(nn::Variant::ProgressEncoder), 351), 352);

  TrainConfig rcfg{train::Optimizer::Sgd, 0, 1e-3, 0, 0.5, 1, 1e-3};
  rcfg.iterations = train::scaled_iterations(seq.epochs, static_cast<int>(train_vids.size()));
  rcfg.step_size = train::scaled_step_size(rcfg.iterations, seq.step_frac);
  nn::ParamStore rsd = train::pretrain_rsd(train_vids, rcfg, seq, prog, 353);

  // frozen contract
  CHECK(rsd.at("fc_prog_pre.W").data == prog.at("fc_prog_pre.W").data);
  CHECK(rsd.at("fc_prog_pre.b").data == prog.at("fc_prog_pre.b").data);

  // constant-mean baseline from training-set statistics
  double mean_rsd = 0;
  int64_t n_train = 0;
  for (const auto* rec : train_vids) {
    for (double v : synth::derive_rsd_labels(*rec, 5.0)) {
      mean_rsd += v;
      ++n_train;
    }
  }
  mean_rsd /= static_cast<double>(n_train);
  double mae_model = 0, mae_base = 0;
  int64_t n = 0;
  for (const auto* rec : test_vids) {
    eval::RsdPrediction pred = eval::predict_rsd_sequence(rsd, *rec);
    Vec y = synth::derive_rsd_labels(*rec, 5.0);
    for (size_t t = 0; t < y.size(); ++t) {
      mae_model += std::abs(pred.rsd[t] - y[t]);
      mae_base += std::abs(mean_rsd - y[t]);
      ++n;
    }
  }
  mae_model /= static_cast<double>(n);
  mae_base /= static_cast<double>(n);
  MESSAGE("rsd MAE model ", mae_model, " baseline ", mae_base);
  CHECK(mae_model <= 0.8 * mae_base);
}

TEST_CASE("tempcon: no signal on identical frames, real signal on ordered pairs") {
  auto ds = synth::generate_dataset(mini_model(), 6, 360);
  // degenerate pairs: frame_b == frame_a carries no order information
  std::vector<synth::FramePair> degenerate;
  Rng rng(361);
  for (int k = 0; k < 2000; ++k) {
    const auto& rec = ds[k % 4];
    int t = static_cast<int>(rng.below(rec.num_frames()));
    synth::FramePair p;
    p.frame_a.assign(rec.frames.row(t), rec.frames.row(t) + 16);
    p.frame_b = p.frame_a;
    p.t_a = t;
    p.t_b = t;
    p.label = static_cast<int>(rng.below(2));
    degenerate.push_back(std::move(p));
  }
  TrainConfig cfg{train::Optimizer::Sgd, 50, 5e-4, 0, 1.0, 40, 5e-4};
  nn::ParamStore no_signal =
      train::pretrain_tempcon(degenerate, cfg, mini_arch(nn::Variant::TempCon), 362);
  int hits = 0;
  for (const auto& p : degenerate) {
    Matrix A(1, 16), B(1, 16);
    std::copy(p.frame_a.begin(), p.frame_a.end(), A.row(0));
    std::copy(p.frame_b.begin(), p.frame_b.end(), B.row(0));
    Matrix logits = nn::tempcon_forward(no_signal, A, B, nullptr);
    hits += (logits.at(0, 1) > logits.at(0, 0) ? 1 : 0) == p.label;
  }
  double acc = 100.0 * hits / degenerate.size();
  CHECK(acc > 40.0);
  CHECK(acc < 60.0);

  // real pairs: the elapsed-time channel makes order learnable
  std::vector<synth::FramePair> pairs;
  for (int v = 0; v < 4; ++v) {
    auto vp = synth::sample_frame_pairs(ds[v], 3000, 363 + v);
    pairs.insert(pairs.end(), vp.begin(), vp.end());
  }
  TrainConfig cfg2{train::Optimizer::Sgd, 0, 5e-4, 0, 1.0, 160, 5e-4};
  cfg2.iterations = 2 * static_cast<int64_t>(pairs.size()) / 160;  // two epochs
  nn::ParamStore trained =
      train::pretrain_tempcon(pairs, cfg2, mini_arch(nn::Variant::TempCon), 364);
  auto heldout = synth::sample_frame_pairs(ds[5], 2000, 365);
  int hits2 = 0;
  for (const auto& p : heldout) {
    Matrix A(1, 16), B(1, 16);
    std::copy(p.frame_a.begin(), p.frame_a.end(), A.row(0));
    std::copy(p.frame_b.begin(), p.frame_b.end(), B.row(0));
    Matrix logits = nn::tempcon_forward(trained, A, B, nullptr);
    hits2 += (logits.at(0, 1) > logits.at(0, 0) ? 1 : 0) == p.label;
  }
  double acc2 = 100.0 * hits2 / heldout.size();
  MESSAGE("tempcon held-out pair accuracy ", acc2, "%");
  CHECK(acc2 >= 70.0);
}

TEST_CASE("tempcon training loss decreases over the first epoch (seed-pinned)") {
  auto ds = synth::generate_dataset(mini_model(), 2, 370);
  auto pairs = synth::sample_frame_pairs(ds[0], 4000, 371);
  nn::ArchSpec arch = mini_arch(nn::Variant::TempCon);

  auto eval_loss = [&](const nn::ParamStore& p) {
    double s = 0;
    Matrix A(static_cast<int>(pairs.size()), 16), B(static_cast<int>(pairs.size()), 16);
    for (size_t i = 0; i < pairs.size(); ++i) {
      std::copy(pairs[i].frame_a.begin(), pairs[i].frame_a.end(), A.row(static_cast<int>(i)));
      std::copy(pairs[i].frame_b.begin(), pairs[i].frame_b.end(), B.row(static_cast<int>(i)));
    }
    Matrix logits = nn::tempcon_forward(p, A, B, nullptr);
    for (size_t i = 0; i < pairs.size(); ++i)
      s += nn::softmax_xent({logits.row(static_cast<int>(i)), 2}, pairs[i].label + 1, {});
    return s / static_cast<double>(pairs.size());
  };

  TrainConfig cfg{train::Optimizer::Sgd, 0, 5e-4, 0, 1.0, 160, 5e-4};
  cfg.iterations = static_cast<int64_t>(pairs.size()) / 160;
  nn::ParamStore init = nn::init_params(arch, 372);
  double before = eval_loss(init);
  nn::ParamStore after = train::pretrain_tempcon(pairs, cfg, arch, 372);
  CHECK(eval_loss(after) < before);
}

TEST_CASE("epoch accounting: one video for 100 epochs is exactly 100 updates") {
  auto ds = synth::generate_dataset(mini_model(), 1, 380);
  Videos vids = to_videos(ds, 0, 1);
  train::SeqTrainConfig seq = mini_seq();
  TrainConfig cfg{train::Optimizer::Adam, 0, 1e-4, 0, 0.25, 1, 5e-4};
  cfg.iterations = train::scaled_iterations(100, 1);
  CHECK(cfg.iterations == 100);
  cfg.step_size = train::scaled_step_size(cfg.iterations, seq.step_frac);
  nn::ParamStore pe = nn::init_params(mini_arch(nn::Variant::PhaseEncoder), 381);
  nn::ParamStore init = train::transfer_weights(pe, mini_arch(nn::Variant::EndoN2NVanilla), 382);
  train::SeqTrainResult res = train::train_endon2n(vids, {}, cfg, seq, init, 383);
  CHECK(res.final_.iteration == 100);
}

TEST_CASE("pipelines are bit-reproducible under identical seeds") {
  auto ds = synth::generate_dataset(mini_model(), 4, 390);
  Videos vids = to_videos(ds, 0, 3);
  Videos val = to_videos(ds, 3, 4);
  TrainConfig pe_cfg{train::Optimizer::Sgd, 50, 1e-3, 0, 0.1, 50, 5e-4};
  nn::ParamStore init = nn::init_params(mini_arch(nn::Variant::PhaseEncoder), 391);
  nn::ParamStore a = train::train_phase_encoder(vids, pe_cfg, init, 392);
  nn::ParamStore b = train::train_phase_encoder(vids, pe_cfg, init, 392);
  for (const auto& [name, t] : a.tensors) CHECK(b.at(name).data == t.data);

  train::SeqTrainConfig seq = mini_seq();
  TrainConfig cfg{train::Optimizer::Adam, 20, 1e-4, 5, 0.25, 1, 5e-4};
  nn::ParamStore n2n_init = train::transfer_weights(a, mini_arch(nn::Variant::EndoN2NVanilla), 393);
  train::SeqTrainResult r1 = train::train_endon2n(vids, val, cfg, seq, n2n_init, 394);
  train::SeqTrainResult r2 = train::train_endon2n(vids, val, cfg, seq, n2n_init, 394);
  for (const auto& [name, t] : r1.final_.tensors) CHECK(r2.final_.at(name).data == t.data);
  CHECK(r1.best_iter == r2.best_iter);
}

TEST_CASE("training results are identical across thread counts") {
  auto ds = synth::generate_dataset(mini_model(), 3, 400);
  Videos vids = to_videos(ds, 0, 3);
  train::SeqTrainConfig seq = mini_seq();
  TrainConfig cfg{train::Optimizer::Adam, 15, 1e-4, 5, 0.25, 1, 5e-4};
  nn::ParamStore pe = nn::init_params(mini_arch(nn::Variant::PhaseEncoder), 401);
  nn::ParamStore init = train::transfer_weights(pe, mini_arch(nn::Variant::EndoN2NVanilla), 402);

  kernels::configure_threads(1);
  train::SeqTrainResult serial = train::train_endon2n(vids, {}, cfg, seq, init, 403);
  kernels::configure_threads(2);
  train::SeqTrainResult threaded = train::train_endon2n(vids, {}, cfg, seq, init, 403);
  kernels::configure_threads(0);
  for (const auto& [name, t] : serial.final_.tensors)
    CHECK(threaded.final_.at(name).data == t.data);
}
