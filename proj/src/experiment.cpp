#include "phaseforge/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include <json.hpp>

#include "phaseforge/checkpoint.hpp"
#include "phaseforge/nn.hpp"
#include "phaseforge/rng.hpp"

namespace phaseforge::expt {

using nlohmann::json;
namespace fs = std::filesystem;
using nn::ParamStore;
using nn::Variant;

Context::Context(ExperimentConfig config, std::vector<synth::SurgeryRecord> data)
    : cfg(std::move(config)), dataset(std::move(data)) {
  cfg.validate();
  for (const auto& rec : dataset) by_id[rec.video_id] = &rec;
}

const synth::SurgeryRecord& Context::record(const std::string& id) const {
  auto it = by_id.find(id);
  require(it != by_id.end(), "unknown video id: " + id);
  return *it->second;
}

train::Videos Context::records(const std::vector<std::string>& ids) const {
  train::Videos out;
  for (const auto& id : ids) out.push_back(&record(id));
  return out;
}

std::map<std::string, double> Context::durations(const std::vector<std::string>& ids) const {
  std::map<std::string, double> out;
  for (const auto& id : ids) out[id] = record(id).duration_seconds();
  return out;
}

std::vector<FoldSpec> make_folds(const std::vector<std::string>& ids, int n_folds, int n_train,
                                 int n_val, int n_test) {
  const int N = static_cast<int>(ids.size());
  require(n_train + n_val + n_test <= N, "make_folds: fold sizes exceed dataset");
  std::vector<FoldSpec> folds;
  for (int k = 0; k < n_folds; ++k) {
    FoldSpec fold;
    fold.fold_id = k;
    int offset = n_folds > 0 ? k * (N / n_folds) : 0;
    int cursor = 0;
    auto take = [&](int n, std::vector<std::string>& out) {
      for (int i = 0; i < n; ++i) out.push_back(ids[(offset + cursor++) % N]);
    };
    take(n_train, fold.train_ids);
    take(n_val, fold.val_ids);
    take(n_test, fold.test_ids);
    folds.push_back(std::move(fold));
  }
  return folds;
}

std::vector<std::string> subsample_annotated(const std::vector<std::string>& train_ids,
                                             const std::map<std::string, double>& durations,
                                             double fraction_pct, uint64_t seed) {
  const int N = static_cast<int>(train_ids.size());
  require(N % 4 == 0, "subsample_annotated: train pool must divide into 4 quartiles");
  const int n = static_cast<int>(std::llround(fraction_pct / 100.0 * N));
  require(n >= 1 && n <= N, "subsample_annotated: requested size out of range");

  // quartiles by duration rank (ties broken by id for determinism)
  std::vector<std::string> sorted = train_ids;
  std::sort(sorted.begin(), sorted.end(), [&](const std::string& a, const std::string& b) {
    double da = durations.at(a), db = durations.at(b);
    return da != db ? da < db : a < b;
  });
  const int q = N / 4;

  Rng rng(seed);
  int base = n / 4;
  int rem = n % 4;
  std::vector<int> quartile_order = {0, 1, 2, 3};
  rng.shuffle(quartile_order);
  std::vector<int> counts(4, base);
  for (int i = 0; i < rem; ++i) counts[quartile_order[i]] += 1;

  std::vector<std::string> picked;
  for (int qi = 0; qi < 4; ++qi) {
    std::vector<std::string> pool(sorted.begin() + qi * q, sorted.begin() + (qi + 1) * q);
    rng.shuffle(pool);
    require(counts[qi] <= q, "subsample_annotated: quartile exhausted");
    picked.insert(picked.end(), pool.begin(), pool.begin() + counts[qi]);
  }
  std::sort(picked.begin(), picked.end());
  return picked;
}

std::vector<std::string> split_finetune_pool(const std::vector<std::string>& subset_ids,
                                             uint64_t seed) {
  require(subset_ids.size() >= 4, "split_finetune_pool: need at least 4 videos");
  const int n = static_cast<int>(std::llround(0.75 * static_cast<double>(subset_ids.size())));
  std::vector<std::string> pool = subset_ids;
  Rng rng(seed);
  rng.shuffle(pool);
  pool.resize(n);
  std::sort(pool.begin(), pool.end());
  return pool;
}

// ---------------------------------------------------------------------------
// stage chains
// ---------------------------------------------------------------------------

namespace {

train::TrainConfig with_epoch_scaling(train::TrainConfig cfg, int epochs, int n_videos,
                                      double step_frac) {
  cfg.iterations = train::scaled_iterations(epochs, n_videos);
  cfg.step_size = train::scaled_step_size(cfg.iterations, step_frac);
  cfg.batch_size = 1;  // one video per iteration
  return cfg;
}

void persist(const ParamStore& params, const std::string& dir, const std::string& stage) {
  if (dir.empty()) return;
  fs::create_directories(dir);
  nn::save_checkpoint(params, dir + "/" + stage + "-" + std::to_string(params.iteration) + ".ckpt");
}

// Any stage failure aborts the chain with a stage-tagged diagnostic.
template <typename Fn>
auto run_stage(const std::string& stage, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const std::exception& e) {
    throw PhaseforgeError("stage " + stage + " failed: " + e.what());
  }
}

}  // namespace

PretrainCache pretrain_fold(const Context& ctx, const FoldSpec& fold,
                            const std::vector<std::string>& modes, const std::string& out_dir) {
  const ExperimentConfig& cfg = ctx.cfg;
  PretrainCache cache;
  train::Videos train_videos = ctx.records(fold.train_ids);
  const std::string fold_tag = "fold" + std::to_string(fold.fold_id);
  const uint64_t before = synth::label_reads();

  if (std::find(modes.begin(), modes.end(), "rsd") != modes.end()) {
    // progress-regression CNN fine-tuning on all training videos
    ParamStore prog_init = nn::init_params(cfg.arch(Variant::ProgressEncoder),
                                           derive_seed(cfg.seed, fold_tag + "/prog_enc.init"));
    train::TrainLogger prog_log(out_dir.empty() ? train::TrainLogger{}
                                                : train::TrainLogger(out_dir + "/prog_enc_log.csv"));
    ParamStore prog = run_stage("prog_enc", [&] {
      return train::train_progress_encoder(train_videos, cfg.prog_enc, prog_init,
                                           derive_seed(cfg.seed, fold_tag + "/prog_enc"), prog_log);
    });
    persist(prog, out_dir, "prog_enc");
    // multi-task RSD/progress pre-training, end to end
    train::TrainConfig rsd_cfg = with_epoch_scaling(cfg.rsd, cfg.seq.epochs,
                                                    static_cast<int>(train_videos.size()),
                                                    cfg.seq.step_frac);
    train::TrainLogger rsd_log(out_dir.empty() ? train::TrainLogger{}
                                               : train::TrainLogger(out_dir + "/rsd_log.csv"));
    cache.rsd = run_stage("rsd_pretrain", [&] {
      return train::pretrain_rsd(train_videos, rsd_cfg, cfg.seq, prog,
                                 derive_seed(cfg.seed, fold_tag + "/rsd"), rsd_log);
    });
    persist(*cache.rsd, out_dir, "rsd_pretrain");
  }

  if (std::find(modes.begin(), modes.end(), "tempcon") != modes.end()) {
    std::vector<synth::FramePair> pairs;
    for (size_t v = 0; v < train_videos.size(); ++v) {
      auto vp = synth::sample_frame_pairs(
          *train_videos[v], cfg.tempcon_pairs_per_video,
          derive_seed(cfg.seed, fold_tag + "/tempcon.pairs", static_cast<uint64_t>(v)));
      pairs.insert(pairs.end(), vp.begin(), vp.end());
    }
    train::TrainConfig tc_cfg = cfg.tempcon;
    if (tc_cfg.iterations <= 0) {
      int64_t total = static_cast<int64_t>(cfg.tempcon_epochs) * static_cast<int64_t>(pairs.size());
      tc_cfg.iterations = (total + tc_cfg.batch_size - 1) / tc_cfg.batch_size;
    }
    train::TrainLogger tc_log(out_dir.empty() ? train::TrainLogger{}
                                              : train::TrainLogger(out_dir + "/tempcon_log.csv"));
    cache.tempcon = run_stage("tempcon_pretrain", [&] {
      return train::pretrain_tempcon(pairs, tc_cfg, cfg.arch(Variant::TempCon),
                                     derive_seed(cfg.seed, fold_tag + "/tempcon"), tc_log);
    });
    persist(*cache.tempcon, out_dir, "tempcon_pretrain");
  }

  cache.label_reads_during = synth::label_reads() - before;
  require(cache.label_reads_during == 0,
          "pretrain_fold: phase labels were read during self-supervised pre-training");
  return cache;
}

namespace {

FoldRunResult evaluate_on_test(const Context& ctx, const FoldSpec& fold, const ParamStore& model) {
  const ExperimentConfig& cfg = ctx.cfg;
  const int M = cfg.workflow.num_phases;
  const int n = static_cast<int>(fold.test_ids.size());
  std::vector<eval::MetricsReport> reports(n);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i) {
    const synth::SurgeryRecord& rec = ctx.record(fold.test_ids[i]);
    eval::PredictionTrace pred = eval::predict_sequence(model, rec);
    std::vector<int> filtered = eval::causal_mode_filter(pred.labels, cfg.filter_window_s, rec.fps);
    reports[i] = eval::compute_metrics(rec.video_id, pred.labels, filtered, rec.phases(), M, rec.fps);
  }
  FoldRunResult out;
  out.per_video = std::move(reports);
  out.agg = eval::aggregate(out.per_video);
  out.endon2n_arch_tag = model.arch_tag();
  return out;
}

}  // namespace

FoldRunResult run_cell(const Context& ctx, const FoldSpec& fold, const PretrainCache& cache,
                       const std::string& mode, const std::string& pipeline,
                       const std::vector<std::string>& subset_ids, const std::string& cell_tag,
                       const std::string& out_dir) {
  const ExperimentConfig& cfg = ctx.cfg;
  const std::string tag = "fold" + std::to_string(fold.fold_id) + "/" + cell_tag;

  // fold hygiene: no test id may enter any training stage
  {
    std::set<std::string> test(fold.test_ids.begin(), fold.test_ids.end());
    for (const auto& id : subset_ids)
      require(!test.count(id), "run_cell: test video in training subset: " + id);
    for (const auto& id : fold.train_ids)
      require(!test.count(id), "run_cell: test video in fold train pool: " + id);
  }

  train::Videos val_videos = ctx.records(fold.val_ids);

  // encoder fine-tuning pool: 75% of the labeled subset
  std::vector<std::string> ft_ids =
      split_finetune_pool(subset_ids, derive_seed(cfg.seed, tag + "/ftpool"));
  train::Videos ft_videos = ctx.records(ft_ids);

  // stage 1: phase-recognition CNN fine-tuning
  ParamStore phase_init;
  if (mode == "rsd") {
    require(cache.rsd.has_value(), "run_cell: rsd pre-training missing");
    phase_init = train::transfer_weights(*cache.rsd, cfg.arch(Variant::PhaseEncoder),
                                         derive_seed(cfg.seed, tag + "/phase_enc.init"));
  } else if (mode == "tempcon") {
    require(cache.tempcon.has_value(), "run_cell: tempcon pre-training missing");
    phase_init = train::transfer_weights(*cache.tempcon, cfg.arch(Variant::PhaseEncoder),
                                         derive_seed(cfg.seed, tag + "/phase_enc.init"));
  } else {
    require(mode == "none", "run_cell: unknown mode " + mode);
    phase_init = nn::init_params(cfg.arch(Variant::PhaseEncoder),
                                 derive_seed(cfg.seed, tag + "/phase_enc.init"));
  }
  train::TrainLogger pe_log(out_dir.empty() ? train::TrainLogger{}
                                            : train::TrainLogger(out_dir + "/phase_enc_log.csv"));
  ParamStore phase_enc = run_stage("phase_enc", [&] {
    return train::train_phase_encoder(ft_videos, cfg.phase_enc, phase_init,
                                      derive_seed(cfg.seed, tag + "/phase_enc"), pe_log);
  });
  persist(phase_enc, out_dir, "phase_enc");

  train::Videos subset_videos = ctx.records(subset_ids);
  ParamStore model;

  if (pipeline == "endolstm") {
    train::TrainConfig cfg_lstm = with_epoch_scaling(cfg.endolstm, cfg.endolstm_epochs,
                                                     static_cast<int>(subset_videos.size()),
                                                     cfg.endolstm_step_frac);
    cfg_lstm.batch_size = cfg.seq.pad_to;
    train::TrainLogger log(out_dir.empty() ? train::TrainLogger{}
                                           : train::TrainLogger(out_dir + "/endolstm_log.csv"));
    train::SeqTrainResult res = run_stage("endolstm", [&] {
      return train::train_endolstm(subset_videos, val_videos, cfg_lstm, cfg.seq, phase_enc,
                                   derive_seed(cfg.seed, tag + "/endolstm"), log);
    });
    persist(res.final_, out_dir, "endolstm-final");
    persist(res.best, out_dir, "endolstm");
    model = std::move(res.best);
  } else {
    require(pipeline == "endon2n", "run_cell: unknown pipeline " + pipeline);
    const Variant variant = mode == "rsd" ? Variant::EndoN2NUpdated : Variant::EndoN2NVanilla;
    ParamStore n2n_init;
    if (mode == "rsd") {
      // encoder from the phase fine-tuning stage; LSTM and fc_prog_pre from the
      // RSD pre-training; fc_phase fresh
      n2n_init = train::transfer_weights(*cache.rsd, cfg.arch(variant),
                                         derive_seed(cfg.seed, tag + "/endon2n.init"));
      train::overlay_encoder(n2n_init, phase_enc);
    } else {
      n2n_init = train::transfer_weights(phase_enc, cfg.arch(variant),
                                         derive_seed(cfg.seed, tag + "/endon2n.init"));
    }
    train::TrainConfig cfg_n2n = with_epoch_scaling(cfg.endon2n, cfg.seq.epochs,
                                                    static_cast<int>(subset_videos.size()),
                                                    cfg.seq.step_frac);
    train::TrainLogger log(out_dir.empty() ? train::TrainLogger{}
                                           : train::TrainLogger(out_dir + "/endon2n_log.csv"));
    train::SeqTrainResult res = run_stage("endon2n", [&] {
      return train::train_endon2n(subset_videos, val_videos, cfg_n2n, cfg.seq, n2n_init,
                                  derive_seed(cfg.seed, tag + "/endon2n"), log);
    });
    persist(res.final_, out_dir, "endon2n-final");
    persist(res.best, out_dir, "endon2n");
    model = std::move(res.best);
  }

  return evaluate_on_test(ctx, fold, model);
}

FoldRunResult run_fold(const Context& ctx, const FoldSpec& fold, const std::string& pipeline,
                       const std::string& mode, const std::string& out_dir) {
  PretrainCache cache = pretrain_fold(ctx, fold, {mode}, out_dir);
  return run_cell(ctx, fold, cache, mode, pipeline, fold.train_ids, mode + "/frac100/s0", out_dir);
}

// ---------------------------------------------------------------------------
// sweeps
// ---------------------------------------------------------------------------

namespace {

void fill_cells_and_deltas(ResultsTable& table, const ExperimentConfig& cfg) {
  // averages across subsets, then folds (matching the published protocol order)
  for (double fr : cfg.fractions) {
    for (const auto& mode : cfg.modes) {
      Vec fold_acc, fold_f1;
      for (int fold = 0; fold < cfg.n_folds; ++fold) {
        double acc = 0, f1v = 0;
        int n = 0;
        for (const auto& row : table.rows) {
          if (row.fold == fold && row.fraction == fr && row.mode == mode) {
            acc += row.agg.accuracy_mean;
            f1v += row.agg.f1_mean;
            ++n;
          }
        }
        if (n > 0) {
          fold_acc.push_back(acc / n);
          fold_f1.push_back(f1v / n);
        }
      }
      if (fold_acc.empty()) continue;
      double acc = 0, f1v = 0;
      for (size_t i = 0; i < fold_acc.size(); ++i) {
        acc += fold_acc[i];
        f1v += fold_f1[i];
      }
      table.cells.push_back({fr, mode, acc / fold_acc.size(), f1v / fold_f1.size()});
    }
  }
  // pre-trained-at-f vs baseline-at-f' deltas for every f < f'
  auto cell = [&](double fr, const std::string& mode) -> const ResultsTable::Cell* {
    for (const auto& c : table.cells)
      if (c.fraction == fr && c.mode == mode) return &c;
    return nullptr;
  };
  for (const auto& pre_mode : cfg.modes) {
    if (pre_mode == "none") continue;
    for (double f_pre : cfg.fractions) {
      for (double f_base : cfg.fractions) {
        if (f_pre >= f_base) continue;
        const auto* a = cell(f_pre, pre_mode);
        const auto* b = cell(f_base, "none");
        if (a && b)
          table.deltas.push_back({f_pre, f_base, a->accuracy - b->accuracy, a->f1 - b->f1});
      }
    }
  }
}

}  // namespace

ResultsTable run_annotation_sweep(const Context& ctx, const std::string& out_dir) {
  const ExperimentConfig& cfg = ctx.cfg;
  std::vector<std::string> ids;
  for (const auto& rec : ctx.dataset) ids.push_back(rec.video_id);
  std::vector<FoldSpec> folds = make_folds(ids, cfg.n_folds, cfg.fold_train, cfg.fold_val,
                                           cfg.fold_test);
  ResultsTable table;
  table.kind = "annotation_sweep";
  table.root_seed = cfg.seed;
  table.config_hash = cfg.config_hash();

  for (const FoldSpec& fold : folds) {
    const std::string fold_dir =
        out_dir.empty() ? "" : out_dir + "/fold" + std::to_string(fold.fold_id);
    PretrainCache cache = pretrain_fold(ctx, fold, cfg.modes, fold_dir);
    auto durations = ctx.durations(fold.train_ids);
    for (size_t fi = 0; fi < cfg.fractions.size(); ++fi) {
      const double fraction = cfg.fractions[fi];
      const int n_subsets = cfg.subsets_per_fraction[fi];
      for (int subset = 0; subset < n_subsets; ++subset) {
        std::vector<std::string> subset_ids = subsample_annotated(
            fold.train_ids, durations, fraction,
            derive_seed(cfg.seed, "fold" + std::to_string(fold.fold_id) + "/subset",
                        static_cast<uint64_t>(fi * 100 + subset)));
        for (const auto& mode : cfg.modes) {
          std::string cell_tag = mode + "/frac" + std::to_string(static_cast<int>(fraction)) +
                                 "/s" + std::to_string(subset);
          std::string cell_dir = fold_dir.empty() ? "" : fold_dir + "/" + cell_tag;
          FoldRunResult res =
              run_cell(ctx, fold, cache, mode, "endon2n", subset_ids, cell_tag, cell_dir);
          ResultRow row;
          row.fold = fold.fold_id;
          row.fraction = fraction;
          row.subset = subset;
          row.mode = mode;
          row.pipeline = "endon2n";
          row.n_labeled = static_cast<int>(subset_ids.size());
          row.agg = res.agg;
          table.rows.push_back(std::move(row));
        }
      }
    }
  }
  fill_cells_and_deltas(table, cfg);
  return table;
}

ResultsTable run_pretrain_amount_sweep(const Context& ctx, const std::string& out_dir) {
  const ExperimentConfig& cfg = ctx.cfg;
  std::vector<std::string> ids;
  for (const auto& rec : ctx.dataset) ids.push_back(rec.video_id);
  std::vector<FoldSpec> folds = make_folds(ids, cfg.n_folds, cfg.fold_train, cfg.fold_val,
                                           cfg.fold_test);
  ResultsTable table;
  table.kind = "pretrain_amount_sweep";
  table.root_seed = cfg.seed;
  table.config_hash = cfg.config_hash();

  for (const FoldSpec& fold : folds) {
    const std::string fold_tag = "fold" + std::to_string(fold.fold_id);
    const std::string fold_dir = out_dir.empty() ? "" : out_dir + "/" + fold_tag;
    auto durations = ctx.durations(fold.train_ids);
    // fixed labeled fine-tuning set: one quarter of the training pool
    std::vector<std::string> labeled = subsample_annotated(
        fold.train_ids, durations, 25.0, derive_seed(cfg.seed, fold_tag + "/amount.labeled"));
    std::vector<std::string> remaining;
    for (const auto& id : fold.train_ids)
      if (std::find(labeled.begin(), labeled.end(), id) == labeled.end()) remaining.push_back(id);

    for (int amount : cfg.pretrain_amounts) {
      require(amount <= static_cast<int>(remaining.size()),
              "pretrain_amount_sweep: amount exceeds disjoint pool");
      std::string amount_tag = "amount" + std::to_string(amount);
      std::string cell_dir = fold_dir.empty() ? "" : fold_dir + "/" + amount_tag;
      FoldSpec pre_fold = fold;  // same val/test; pre-training pool restricted
      pre_fold.train_ids.assign(remaining.begin(), remaining.begin() + amount);
      // disjointness asserted
      for (const auto& id : pre_fold.train_ids)
        require(std::find(labeled.begin(), labeled.end(), id) == labeled.end(),
                "pretrain_amount_sweep: pools overlap");
      const std::string mode = amount == 0 ? "none" : "rsd";
      PretrainCache cache;
      if (amount > 0) cache = pretrain_fold(ctx, pre_fold, {mode}, cell_dir);
      FoldRunResult res = run_cell(ctx, fold, cache, mode, "endon2n", labeled,
                                   mode + "/" + amount_tag, cell_dir);
      ResultRow row;
      row.fold = fold.fold_id;
      row.fraction = 25.0;
      row.subset = 0;
      row.mode = mode;
      row.pipeline = "endon2n";
      row.n_labeled = static_cast<int>(labeled.size());
      row.pretrain_amount = amount;
      row.agg = res.agg;
      table.rows.push_back(std::move(row));
    }
  }

  for (int amount : cfg.pretrain_amounts) {
    double acc = 0, f1v = 0;
    int n = 0;
    for (const auto& row : table.rows) {
      if (row.pretrain_amount == amount) {
        acc += row.agg.accuracy_mean;
        f1v += row.agg.f1_mean;
        ++n;
      }
    }
    if (n > 0) table.trend.push_back({amount, acc / n, f1v / n});
  }
  int increases = 0;
  for (size_t i = 1; i < table.trend.size(); ++i)
    increases += table.trend[i].accuracy > table.trend[i - 1].accuracy;
  table.trend_increase_fraction =
      table.trend.size() > 1 ? static_cast<double>(increases) / (table.trend.size() - 1) : 0.0;
  return table;
}

// ---------------------------------------------------------------------------
// report emission
// ---------------------------------------------------------------------------

namespace {

json aggregate_to_json(const eval::Aggregate& agg) {
  return json{{"n_videos", agg.n_videos},
              {"accuracy", {{"mean", agg.accuracy_mean}, {"std", agg.accuracy_std}}},
              {"avg_precision", {{"mean", agg.avg_precision_mean}, {"std", agg.avg_precision_std}}},
              {"avg_recall", {{"mean", agg.avg_recall_mean}, {"std", agg.avg_recall_std}}},
              {"f1", {{"mean", agg.f1_mean}, {"std", agg.f1_std}}},
              {"noise", {{"mean", agg.noise_mean}, {"std", agg.noise_std}}},
              {"precision_per_phase", agg.precision_mean},
              {"recall_per_phase", agg.recall_mean},
              {"td_first_per_phase", agg.td_first_mean},
              {"td_closest_per_phase", agg.td_closest_mean},
              {"td_undefined_count", agg.td_undefined_count}};
}

}  // namespace

void emit_report(const ResultsTable& table, const std::string& dir, bool json_out, bool csv_out) {
  fs::create_directories(dir);
  if (json_out) {
    json doc;
    doc["schema_version"] = 1;
    doc["kind"] = table.kind;
    doc["root_seed"] = table.root_seed;
    doc["config_hash"] = table.config_hash;
    doc["rows"] = json::array();
    for (const auto& row : table.rows) {
      json r{{"fold", row.fold},
             {"fraction", row.fraction},
             {"subset", row.subset},
             {"mode", row.mode},
             {"pipeline", row.pipeline},
             {"n_labeled", row.n_labeled},
             {"metrics", aggregate_to_json(row.agg)}};
      if (row.pretrain_amount >= 0) r["pretrain_amount"] = row.pretrain_amount;
      doc["rows"].push_back(std::move(r));
    }
    doc["cells"] = json::array();
    for (const auto& c : table.cells)
      doc["cells"].push_back(
          {{"fraction", c.fraction}, {"mode", c.mode}, {"accuracy", c.accuracy}, {"f1", c.f1}});
    doc["deltas"] = json::array();
    for (const auto& d : table.deltas)
      doc["deltas"].push_back({{"fraction_pre", d.fraction_pre},
                               {"fraction_base", d.fraction_base},
                               {"accuracy_delta", d.accuracy_delta},
                               {"f1_delta", d.f1_delta}});
    doc["trend"] = json::array();
    for (const auto& t : table.trend)
      doc["trend"].push_back({{"amount", t.amount}, {"accuracy", t.accuracy}, {"f1", t.f1}});
    doc["trend_increase_fraction"] = table.trend_increase_fraction;
    std::ofstream out(dir + "/results.json");
    out << doc.dump(2) << "\n";
  }
  if (csv_out) {
    std::ofstream out(dir + "/results.csv");
    out << "fold,fraction,subset,mode,pipeline,n_labeled,pretrain_amount,accuracy_mean,"
           "accuracy_std,avg_precision_mean,avg_recall_mean,f1_mean,f1_std,noise_mean\n";
    for (const auto& row : table.rows) {
      out << row.fold << "," << row.fraction << "," << row.subset << "," << row.mode << ","
          << row.pipeline << "," << row.n_labeled << ","
          << (row.pretrain_amount >= 0 ? std::to_string(row.pretrain_amount) : "") << ","
          << row.agg.accuracy_mean << "," << row.agg.accuracy_std << ","
          << row.agg.avg_precision_mean << "," << row.agg.avg_recall_mean << ","
          << row.agg.f1_mean << "," << row.agg.f1_std << "," << row.agg.noise_mean << "\n";
    }
  }
}

}  // namespace phaseforge::expt
