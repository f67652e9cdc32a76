#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "phaseforge/config.hpp"
#include "phaseforge/eval.hpp"

namespace phaseforge::expt {

struct FoldSpec {
  int fold_id = 0;
  std::vector<std::string> train_ids, val_ids, test_ids;
};

// Dataset bound to a config; owns the id lookup.
struct Context {
  ExperimentConfig cfg;
  std::vector<synth::SurgeryRecord> dataset;
  std::map<std::string, const synth::SurgeryRecord*> by_id;

  Context(ExperimentConfig config, std::vector<synth::SurgeryRecord> data);
  const synth::SurgeryRecord& record(const std::string& id) const;
  train::Videos records(const std::vector<std::string>& ids) const;
  std::map<std::string, double> durations(const std::vector<std::string>& ids) const;
};

std::vector<FoldSpec> make_folds(const std::vector<std::string>& ids, int n_folds, int n_train,
                                 int n_val, int n_test);

// Duration-stratified subsampling: train ids split into four quartiles by
// duration rank, equal counts drawn per quartile, remainder assigned by seed.
std::vector<std::string> subsample_annotated(const std::vector<std::string>& train_ids,
                                             const std::map<std::string, double>& durations,
                                             double fraction_pct, uint64_t seed);

// round(0.75 n) ids for the initial encoder fine-tuning step.
std::vector<std::string> split_finetune_pool(const std::vector<std::string>& subset_ids,
                                             uint64_t seed);

// Self-supervised stages for one fold, trained on every fold-train video with
// the label-read guard active. Results are reusable across fractions/subsets.
struct PretrainCache {
  std::optional<nn::ParamStore> rsd;      // rsd-progress multi-task net
  std::optional<nn::ParamStore> tempcon;  // siamese net (encoder reused)
  uint64_t label_reads_during = 0;        // must stay 0
};
PretrainCache pretrain_fold(const Context& ctx, const FoldSpec& fold,
                            const std::vector<std::string>& modes, const std::string& out_dir);

struct FoldRunResult {
  eval::Aggregate agg;
  std::vector<eval::MetricsReport> per_video;
  std::string endon2n_arch_tag;
};

// One supervised cell: phase-encoder fine-tuning plus EndoN2N (or EndoLSTM)
// on `subset_ids`, evaluated on the fold's test videos.
FoldRunResult run_cell(const Context& ctx, const FoldSpec& fold, const PretrainCache& cache,
                       const std::string& mode, const std::string& pipeline,
                       const std::vector<std::string>& subset_ids, const std::string& cell_tag,
                       const std::string& out_dir);

// Full stage chain for one fold at 100% annotations; sweeps drive
// pretrain_fold + run_cell directly to reuse pre-training across cells.
FoldRunResult run_fold(const Context& ctx, const FoldSpec& fold, const std::string& pipeline,
                       const std::string& mode, const std::string& out_dir);

struct ResultRow {
  int fold = 0;
  double fraction = 100.0;
  int subset = 0;
  std::string mode, pipeline;
  int n_labeled = 0;
  int pretrain_amount = -1;  // pretrain-amount sweep only
  eval::Aggregate agg;
};

struct ResultsTable {
  std::string kind;
  uint64_t root_seed = 0;
  std::string config_hash;
  std::vector<ResultRow> rows;
  struct Cell {  // averaged across subsets, then folds
    double fraction;
    std::string mode;
    double accuracy, f1;
  };
  std::vector<Cell> cells;
  struct Delta {  // pre-trained at f vs baseline at f' > f
    double fraction_pre, fraction_base;
    double accuracy_delta, f1_delta;
  };
  std::vector<Delta> deltas;
  struct TrendPoint {  // pretrain-amount sweep
    int amount;
    double accuracy, f1;
  };
  std::vector<TrendPoint> trend;
  double trend_increase_fraction = 0.0;  // adjacent increases / (n-1), reported only
};

ResultsTable run_annotation_sweep(const Context& ctx, const std::string& out_dir);
ResultsTable run_pretrain_amount_sweep(const Context& ctx, const std::string& out_dir);

// results.json / results.csv (schema documented in docs/report.schema.json)
void emit_report(const ResultsTable& table, const std::string& dir, bool json, bool csv);

}  // namespace phaseforge::expt
