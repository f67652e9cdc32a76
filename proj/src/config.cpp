#include "phaseforge/config.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "phaseforge/rng.hpp"

namespace phaseforge::expt {

using train::Optimizer;

ExperimentConfig::ExperimentConfig() {
  // 7-phase profile: distinct means summing to ~400 s per video. These are
  // artifact defaults, not values from any dataset.
  workflow.num_phases = 7;
  workflow.phase_duration_mean = {30, 90, 60, 90, 40, 40, 50};
  workflow.phase_duration_std = {10, 25, 15, 25, 10, 10, 15};
  workflow.min_phase_duration = 5.0;
  workflow.feature_dim = 16;
  workflow.emission_noise_std = 0.35;
  workflow.fps = 1.0;

  phase_enc = {Optimizer::Sgd, 2000, 1e-3, 800, 0.1, 50, 5e-4};
  prog_enc = {Optimizer::Sgd, 2000, 1e-3, 600, 0.1, 64, 5e-4};
  endon2n = {Optimizer::Adam, 0, 1e-4, 0, 0.25, 1, 5e-4};
  rsd = {Optimizer::Sgd, 0, 1e-3, 0, 0.5, 1, 1e-3};
  endolstm = {Optimizer::Sgd, 0, 1e-3, 0, 0.1, 1, 5e-4};
  tempcon = {Optimizer::Sgd, 0, 5e-4, 0, 1.0, 160, 5e-4};

  seq.subseq_len = 50;
  seq.pad_to = 600;
  seq.epochs = 100;
  seq.step_frac = 0.25;
}

ExperimentConfig paper_scale() {
  ExperimentConfig cfg;
  cfg.n_videos = 120;
  cfg.n_folds = 4;
  cfg.fold_train = 80;
  cfg.fold_val = 10;
  cfg.fold_test = 30;
  // durations stretched to the ~38-minute scale of real procedures
  for (double& m : cfg.workflow.phase_duration_mean) m *= 5.7;
  for (double& s : cfg.workflow.phase_duration_std) s *= 5.7;
  cfg.seq.subseq_len = 500;
  cfg.seq.pad_to = 6000;
  cfg.seq.epochs = 100;      // 80 videos -> 8000 iterations
  cfg.seq.step_frac = 0.25;  // -> step size 2000
  cfg.phase_enc = {Optimizer::Sgd, 50000, 1e-3, 20000, 0.1, 50, 5e-4};
  cfg.prog_enc = {Optimizer::Sgd, 50000, 1e-3, 15000, 0.1, 64, 5e-4};
  cfg.endon2n = {Optimizer::Adam, 0, 1e-4, 0, 0.25, 1, 5e-4};
  cfg.rsd = {Optimizer::Sgd, 0, 1e-3, 0, 0.5, 1, 1e-3};
  cfg.endolstm = {Optimizer::Sgd, 0, 1e-3, 0, 0.1, 1, 5e-4};
  cfg.endolstm_epochs = 375;         // 80 videos -> 30000 iterations
  cfg.endolstm_step_frac = 1.0 / 3;  // -> step size 10000
  cfg.tempcon = {Optimizer::Sgd, 0, 5e-4, 0, 1.0, 160, 5e-4};
  cfg.tempcon_pairs_per_video = 50000;
  cfg.tempcon_epochs = 2;
  cfg.fractions = {10, 20, 25, 40, 50, 80, 100};
  cfg.subsets_per_fraction = {4, 4, 4, 4, 4, 2, 1};
  cfg.pretrain_amounts = {0, 20, 40, 60};
  return cfg;
}

nn::ArchSpec ExperimentConfig::arch(nn::Variant variant) const {
  nn::ArchSpec spec;
  spec.encoder_widths.push_back(workflow.feature_dim);
  for (int w : enc_hidden) spec.encoder_widths.push_back(w);
  spec.encoder_widths.push_back(feature_width);
  spec.lstm_hidden = lstm_hidden;
  spec.num_phases = workflow.num_phases;
  spec.s_norm = s_norm;
  spec.variant = variant;
  return spec;
}

void ExperimentConfig::validate() const {
  workflow.validate();
  arch(nn::Variant::EndoN2NVanilla).validate();
  require(n_videos >= 1, "config: n_videos >= 1");
  require(n_folds >= 1, "config: n_folds >= 1");
  // fold sizes are checked against the dataset where folds are built
  require(fractions.size() == subsets_per_fraction.size(),
          "config: one subset count per fraction");
  for (double f : fractions) require(f > 0.0 && f <= 100.0, "config: fractions in (0,100]");
  for (int c : subsets_per_fraction) require(c >= 1, "config: subset counts >= 1");
  for (const auto& m : modes)
    require(m == "none" || m == "rsd" || m == "tempcon", "config: unknown mode " + m);
  require(seq.subseq_len >= 1 && seq.pad_to >= 1, "config: sequence lengths >= 1");
}

namespace {

std::string join_d(const std::vector<double>& v) {
  std::ostringstream os;
  for (size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
  return os.str();
}
std::string join_i(const std::vector<int>& v) {
  std::ostringstream os;
  for (size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
  return os.str();
}
std::string join_s(const std::vector<std::string>& v) {
  std::ostringstream os;
  for (size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
  return os.str();
}

// Lists accept "," or ":" separators; ":" keeps values usable inside a single
// comma-delimited --set argument.
std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  for (char c : s) {
    if (c == ',' || c == ':') {
      if (!item.empty()) out.push_back(item);
      item.clear();
    } else {
      item += c;
    }
  }
  if (!item.empty()) out.push_back(item);
  return out;
}
std::vector<double> parse_dlist(const std::string& s) {
  std::vector<double> out;
  for (const auto& item : split_list(s)) out.push_back(std::stod(item));
  return out;
}
std::vector<int> parse_ilist(const std::string& s) {
  std::vector<int> out;
  for (const auto& item : split_list(s)) out.push_back(std::stoi(item));
  return out;
}
std::vector<std::string> parse_slist(const std::string& s) { return split_list(s); }

void render_stage(std::ostringstream& os, const std::string& name, const train::TrainConfig& c) {
  os << name << ".optimizer = " << (c.optimizer == Optimizer::Sgd ? "sgd" : "adam") << "\n";
  os << name << ".iterations = " << c.iterations << "\n";
  os << name << ".alpha = " << c.alpha << "\n";
  os << name << ".step_size = " << c.step_size << "\n";
  os << name << ".gamma = " << c.gamma << "\n";
  os << name << ".batch = " << c.batch_size << "\n";
  os << name << ".lambda = " << c.lambda << "\n";
  os << name << ".momentum = " << c.momentum << "\n";
}

bool apply_stage_key(train::TrainConfig& c, const std::string& field, const std::string& value) {
  if (field == "optimizer") {
    require(value == "sgd" || value == "adam", "config: optimizer must be sgd or adam");
    c.optimizer = value == "sgd" ? Optimizer::Sgd : Optimizer::Adam;
  } else if (field == "iterations") {
    c.iterations = std::stoll(value);
  } else if (field == "alpha") {
    c.alpha = std::stod(value);
  } else if (field == "step_size") {
    c.step_size = std::stoll(value);
  } else if (field == "gamma") {
    c.gamma = std::stod(value);
  } else if (field == "batch") {
    c.batch_size = std::stoi(value);
  } else if (field == "lambda") {
    c.lambda = std::stod(value);
  } else if (field == "momentum") {
    c.momentum = std::stod(value);
  } else {
    return false;
  }
  return true;
}

}  // namespace

std::string ExperimentConfig::canonical() const {
  std::ostringstream os;
  os << "seed = " << seed << "\n";
  os << "out_dir = " << out_dir << "\n";
  os << "data.n_videos = " << n_videos << "\n";
  os << "data.num_phases = " << workflow.num_phases << "\n";
  os << "data.feature_dim = " << workflow.feature_dim << "\n";
  os << "data.fps = " << workflow.fps << "\n";
  os << "data.noise_std = " << workflow.emission_noise_std << "\n";
  os << "data.min_phase_s = " << workflow.min_phase_duration << "\n";
  os << "data.skip_prob = " << workflow.skip_prob << "\n";
  os << "data.phase_means = " << join_d(workflow.phase_duration_mean) << "\n";
  os << "data.phase_stds = " << join_d(workflow.phase_duration_std) << "\n";
  os << "arch.enc_hidden = " << join_i(enc_hidden) << "\n";
  os << "arch.feature_width = " << feature_width << "\n";
  os << "arch.lstm_hidden = " << lstm_hidden << "\n";
  os << "arch.s_norm = " << s_norm << "\n";
  os << "seq.subseq_len = " << seq.subseq_len << "\n";
  os << "seq.pad_to = " << seq.pad_to << "\n";
  os << "seq.epochs = " << seq.epochs << "\n";
  os << "seq.step_frac = " << seq.step_frac << "\n";
  render_stage(os, "phase_enc", phase_enc);
  render_stage(os, "prog_enc", prog_enc);
  render_stage(os, "endon2n", endon2n);
  render_stage(os, "rsd", rsd);
  render_stage(os, "endolstm", endolstm);
  render_stage(os, "tempcon", tempcon);
  os << "tempcon.pairs_per_video = " << tempcon_pairs_per_video << "\n";
  os << "tempcon.epochs = " << tempcon_epochs << "\n";
  os << "endolstm.epochs = " << endolstm_epochs << "\n";
  os << "endolstm.step_frac = " << endolstm_step_frac << "\n";
  os << "folds.count = " << n_folds << "\n";
  os << "folds.train = " << fold_train << "\n";
  os << "folds.val = " << fold_val << "\n";
  os << "folds.test = " << fold_test << "\n";
  os << "sweep.fractions = " << join_d(fractions) << "\n";
  os << "sweep.subsets = " << join_i(subsets_per_fraction) << "\n";
  os << "sweep.modes = " << join_s(modes) << "\n";
  os << "sweep.pretrain_amounts = " << join_i(pretrain_amounts) << "\n";
  os << "eval.filter_window_s = " << filter_window_s << "\n";
  return os.str();
}

std::string ExperimentConfig::config_hash() const {
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64(canonical())));
  return buf;
}

void apply_overrides(ExperimentConfig& cfg, const std::map<std::string, std::string>& kv) {
  for (const auto& [key, value] : kv) {
    size_t dot = key.find('.');
    std::string group = dot == std::string::npos ? key : key.substr(0, dot);
    std::string field = dot == std::string::npos ? "" : key.substr(dot + 1);
    if (key == "seed") {
      cfg.seed = std::stoull(value);
    } else if (key == "out_dir") {
      cfg.out_dir = value;
    } else if (group == "data") {
      if (field == "n_videos") cfg.n_videos = std::stoi(value);
      else if (field == "num_phases") cfg.workflow.num_phases = std::stoi(value);
      else if (field == "feature_dim") cfg.workflow.feature_dim = std::stoi(value);
      else if (field == "fps") cfg.workflow.fps = std::stod(value);
      else if (field == "noise_std") cfg.workflow.emission_noise_std = std::stod(value);
      else if (field == "min_phase_s") cfg.workflow.min_phase_duration = std::stod(value);
      else if (field == "skip_prob") cfg.workflow.skip_prob = std::stod(value);
      else if (field == "phase_means") cfg.workflow.phase_duration_mean = parse_dlist(value);
      else if (field == "phase_stds") cfg.workflow.phase_duration_std = parse_dlist(value);
      else throw PhaseforgeError("config: unknown key " + key);
    } else if (group == "arch") {
      if (field == "enc_hidden") cfg.enc_hidden = parse_ilist(value);
      else if (field == "feature_width") cfg.feature_width = std::stoi(value);
      else if (field == "lstm_hidden") cfg.lstm_hidden = std::stoi(value);
      else if (field == "s_norm") cfg.s_norm = std::stod(value);
      else throw PhaseforgeError("config: unknown key " + key);
    } else if (group == "seq") {
      if (field == "subseq_len") cfg.seq.subseq_len = std::stoi(value);
      else if (field == "pad_to") cfg.seq.pad_to = std::stoi(value);
      else if (field == "epochs") cfg.seq.epochs = std::stoi(value);
      else if (field == "step_frac") cfg.seq.step_frac = std::stod(value);
      else throw PhaseforgeError("config: unknown key " + key);
    } else if (group == "phase_enc" && apply_stage_key(cfg.phase_enc, field, value)) {
    } else if (group == "prog_enc" && apply_stage_key(cfg.prog_enc, field, value)) {
    } else if (group == "endon2n" && apply_stage_key(cfg.endon2n, field, value)) {
    } else if (group == "rsd" && apply_stage_key(cfg.rsd, field, value)) {
    } else if (group == "endolstm") {
      if (field == "epochs") cfg.endolstm_epochs = std::stoi(value);
      else if (field == "step_frac") cfg.endolstm_step_frac = std::stod(value);
      else if (!apply_stage_key(cfg.endolstm, field, value))
        throw PhaseforgeError("config: unknown key " + key);
    } else if (group == "tempcon") {
      if (field == "pairs_per_video") cfg.tempcon_pairs_per_video = std::stoi(value);
      else if (field == "epochs") cfg.tempcon_epochs = std::stoi(value);
      else if (!apply_stage_key(cfg.tempcon, field, value))
        throw PhaseforgeError("config: unknown key " + key);
    } else if (group == "folds") {
      if (field == "count") cfg.n_folds = std::stoi(value);
      else if (field == "train") cfg.fold_train = std::stoi(value);
      else if (field == "val") cfg.fold_val = std::stoi(value);
      else if (field == "test") cfg.fold_test = std::stoi(value);
      else throw PhaseforgeError("config: unknown key " + key);
    } else if (group == "sweep") {
      if (field == "fractions") cfg.fractions = parse_dlist(value);
      else if (field == "subsets") cfg.subsets_per_fraction = parse_ilist(value);
      else if (field == "modes") cfg.modes = parse_slist(value);
      else if (field == "pretrain_amounts") cfg.pretrain_amounts = parse_ilist(value);
      else throw PhaseforgeError("config: unknown key " + key);
    } else if (group == "eval") {
      if (field == "filter_window_s") cfg.filter_window_s = std::stod(value);
      else throw PhaseforgeError("config: unknown key " + key);
    } else {
      throw PhaseforgeError("config: unknown key " + key);
    }
  }
}

ExperimentConfig load_config(const std::string& path, bool paper_base) {
  std::ifstream in(path);
  require(in.good(), "config: cannot open " + path);
  std::map<std::string, std::string> kv;
  std::string line;
  bool paper = paper_base;
  while (std::getline(in, line)) {
    size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    size_t eq = line.find('=');
    if (eq == std::string::npos) continue;
    auto trim = [](std::string s) {
      size_t a = s.find_first_not_of(" \t\r");
      size_t b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string{} : s.substr(a, b - a + 1);
    };
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty()) continue;
    if (key == "paper_scale") {
      paper = value == "1" || value == "true";
      continue;
    }
    kv[key] = value;
  }
  ExperimentConfig cfg = paper ? paper_scale() : ExperimentConfig{};
  apply_overrides(cfg, kv);
  return cfg;
}

void save_config(const ExperimentConfig& cfg, const std::string& path) {
  std::ofstream out(path);
  require(out.good(), "config: cannot write " + path);
  out << cfg.canonical();
}

}  // namespace phaseforge::expt
