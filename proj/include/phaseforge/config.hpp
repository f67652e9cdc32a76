#pragma once

#include <map>
#include <string>
#include <vector>

#include "phaseforge/synth.hpp"
#include "phaseforge/train.hpp"

namespace phaseforge::expt {

// Full experiment configuration. Toy defaults finish on a laptop in minutes;
// paper_scale() switches every stage to the published hyperparameter table and
// the 4-fold 80/10/30 protocol.
struct ExperimentConfig {
  uint64_t seed = 42;
  std::string out_dir = "out";

  // synthetic dataset
  int n_videos = 36;
  synth::WorkflowModel workflow;

  // architecture
  std::vector<int> enc_hidden = {32};
  int feature_width = 24;
  int lstm_hidden = 128;
  double s_norm = 5.0;

  // sequence handling (subseq_len doubles as the per-forward-pass batch)
  train::SeqTrainConfig seq;

  // per-stage optimizer settings
  train::TrainConfig phase_enc;
  train::TrainConfig prog_enc;
  train::TrainConfig endon2n;   // iterations filled by epoch scaling at run time
  train::TrainConfig rsd;       // likewise
  train::TrainConfig endolstm;  // likewise via endolstm_epochs
  train::TrainConfig tempcon;   // iterations derived from the pair count
  int tempcon_pairs_per_video = 500;
  int tempcon_epochs = 2;
  int endolstm_epochs = 100;
  double endolstm_step_frac = 1.0 / 3.0;

  // cross-validation folds
  int n_folds = 2;
  int fold_train = 24, fold_val = 4, fold_test = 8;

  // annotation sweep
  std::vector<double> fractions = {25.0, 50.0, 100.0};
  std::vector<int> subsets_per_fraction = {2, 2, 1};
  std::vector<std::string> modes = {"none", "rsd"};
  std::vector<int> pretrain_amounts = {0, 6, 12, 18};

  double filter_window_s = 5.0;

  ExperimentConfig();

  nn::ArchSpec arch(nn::Variant variant) const;
  void validate() const;

  // Canonical flat key=value rendering; also the hash input.
  std::string canonical() const;
  std::string config_hash() const;
};

ExperimentConfig paper_scale();

// Flat key=value config file ("#" comments). Unknown keys are an error.
// `paper_base` starts from the paper-scale preset even when the file does not
// set `paper_scale = true` itself.
ExperimentConfig load_config(const std::string& path, bool paper_base = false);
void apply_overrides(ExperimentConfig& cfg, const std::map<std::string, std::string>& kv);
void save_config(const ExperimentConfig& cfg, const std::string& path);

}  // namespace phaseforge::expt
