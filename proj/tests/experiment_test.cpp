#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include <json.hpp>

#include "phaseforge/experiment.hpp"
#include "phaseforge/kernels.hpp"
#include "phaseforge/rng.hpp"

using namespace phaseforge;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Miniature protocol: short videos, narrow nets, few epochs.
expt::ExperimentConfig mini_config() {
  expt::ExperimentConfig cfg;
  cfg.seed = 4242;
  cfg.n_videos = 12;
  cfg.workflow.phase_duration_mean = {8, 18, 12, 18, 8, 8, 10};
  cfg.workflow.phase_duration_std = {2, 5, 3, 5, 2, 2, 3};
  cfg.workflow.min_phase_duration = 2.0;
  cfg.lstm_hidden = 32;
  cfg.seq.subseq_len = 25;
  cfg.seq.pad_to = 120;
  cfg.seq.epochs = 6;
  cfg.phase_enc.iterations = 150;
  cfg.phase_enc.step_size = 60;
  cfg.prog_enc.iterations = 150;
  cfg.prog_enc.step_size = 60;
  cfg.tempcon_pairs_per_video = 300;
  cfg.n_folds = 2;
  cfg.fold_train = 8;
  cfg.fold_val = 1;
  cfg.fold_test = 3;
  cfg.fractions = {50.0, 100.0};
  cfg.subsets_per_fraction = {1, 1};
  cfg.modes = {"none", "rsd"};
  cfg.pretrain_amounts = {0, 4};
  return cfg;
}

expt::Context make_context(const expt::ExperimentConfig& cfg) {
  auto ds = synth::generate_dataset(cfg.workflow, cfg.n_videos, derive_seed(cfg.seed, "dataset"));
  return expt::Context(cfg, std::move(ds));
}

std::string tmp_dir(const std::string& name) {
  std::string dir = (fs::temp_directory_path() / name).string();
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

// Minimal structural validator for the subset of JSON Schema the shipped
// schema uses: type / required / properties / items.
bool validate(const json& schema, const json& doc) {
  std::string type = schema.value("type", "");
  if (type == "object") {
    if (!doc.is_object()) return false;
    if (schema.contains("required"))
      for (const auto& key : schema["required"])
        if (!doc.contains(key.get<std::string>())) return false;
    if (schema.contains("properties"))
      for (const auto& [key, sub] : schema["properties"].items())
        if (doc.contains(key) && !validate(sub, doc[key])) return false;
    return true;
  }
  if (type == "array") {
    if (!doc.is_array()) return false;
    if (schema.contains("items"))
      for (const auto& item : doc)
        if (!validate(schema["items"], item)) return false;
    return true;
  }
  if (type == "integer") return doc.is_number_integer() || doc.is_number_unsigned();
  if (type == "number") return doc.is_number();
  if (type == "string") return doc.is_string();
  return true;
}

}  // namespace

TEST_CASE("run_fold completes with populated metrics; rsd uses the updated arch") {
  kernels::configure_threads_from_env();
  expt::ExperimentConfig cfg = mini_config();
  expt::Context ctx = make_context(cfg);
  std::vector<std::string> ids;
  for (const auto& r : ctx.dataset) ids.push_back(r.video_id);
  auto folds = expt::make_folds(ids, cfg.n_folds, cfg.fold_train, cfg.fold_val, cfg.fold_test);

  expt::FoldRunResult none = expt::run_fold(ctx, folds[0], "endon2n", "none", "");
  CHECK(none.endon2n_arch_tag == "endon2n-vanilla");
  CHECK(none.per_video.size() == 3);
  for (const auto& r : none.per_video) {
    CHECK(r.accuracy >= 0.0);
    CHECK(r.accuracy <= 100.0);
    CHECK(r.precision.size() == 7);
    CHECK(r.recall.size() == 7);
    CHECK(r.td_first.size() == 7);
    CHECK(r.f1 == doctest::Approx(eval::f1(r.avg_precision, r.avg_recall)));
  }

  expt::FoldRunResult rsd = expt::run_fold(ctx, folds[0], "endon2n", "rsd", "");
  CHECK(rsd.endon2n_arch_tag == "endon2n-updated");

  // rerun with the same seeds: bit-identical metrics
  expt::FoldRunResult again = expt::run_fold(ctx, folds[0], "endon2n", "none", "");
  CHECK(again.agg.accuracy_mean == none.agg.accuracy_mean);
  CHECK(again.agg.f1_mean == none.agg.f1_mean);
  for (size_t i = 0; i < none.per_video.size(); ++i)
    CHECK(again.per_video[i].accuracy == none.per_video[i].accuracy);
}

TEST_CASE("pre-training stages never read a phase label") {
  expt::ExperimentConfig cfg = mini_config();
  expt::Context ctx = make_context(cfg);
  std::vector<std::string> ids;
  for (const auto& r : ctx.dataset) ids.push_back(r.video_id);
  auto folds = expt::make_folds(ids, cfg.n_folds, cfg.fold_train, cfg.fold_val, cfg.fold_test);
  expt::PretrainCache cache = expt::pretrain_fold(ctx, folds[0], {"rsd", "tempcon"}, "");
  CHECK(cache.label_reads_during == 0);
  CHECK(cache.rsd.has_value());
  CHECK(cache.tempcon.has_value());
  CHECK(cache.rsd->arch_tag() == "rsd-progress");
  CHECK(cache.tempcon->arch_tag() == "tempcon");
}

TEST_CASE("fold hygiene: test ids rejected from training subsets") {
  expt::ExperimentConfig cfg = mini_config();
  expt::Context ctx = make_context(cfg);
  std::vector<std::string> ids;
  for (const auto& r : ctx.dataset) ids.push_back(r.video_id);
  auto folds = expt::make_folds(ids, cfg.n_folds, cfg.fold_train, cfg.fold_val, cfg.fold_test);
  expt::PretrainCache cache;
  std::vector<std::string> poisoned = folds[0].train_ids;
  poisoned[0] = folds[0].test_ids[0];
  CHECK_THROWS(expt::run_cell(ctx, folds[0], cache, "none", "endon2n", poisoned, "x", ""));
}

TEST_CASE("annotation sweep: row count, averaging, determinism of artifacts") {
  kernels::configure_threads_from_env();
  expt::ExperimentConfig cfg = mini_config();
  std::string out1 = tmp_dir("pf_sweep_run1");
  std::string out2 = tmp_dir("pf_sweep_run2");

  expt::Context ctx1 = make_context(cfg);
  expt::ResultsTable t1 = expt::run_annotation_sweep(ctx1, out1);
  expt::emit_report(t1, out1, true, true);

  expt::Context ctx2 = make_context(cfg);
  expt::ResultsTable t2 = expt::run_annotation_sweep(ctx2, out2);
  expt::emit_report(t2, out2, true, true);

  // rows = folds x sum(subsets) x modes
  CHECK(t1.rows.size() == 2u * (1 + 1) * 2);
  // 100% fraction with 1 subset: exactly one run per fold per mode
  int count100 = 0;
  for (const auto& row : t1.rows) count100 += row.fraction == 100.0;
  CHECK(count100 == 2 * 2);

  // averaged cells exist for each (fraction, mode)
  CHECK(t1.cells.size() == 4);
  // deltas: rsd@50 vs none@100
  REQUIRE(t1.deltas.size() == 1);
  CHECK(t1.deltas[0].fraction_pre == 50.0);
  CHECK(t1.deltas[0].fraction_base == 100.0);

  // identical seeds and config: bit-identical result tables and checkpoints
  CHECK(slurp(out1 + "/results.json") == slurp(out2 + "/results.json"));
  CHECK(slurp(out1 + "/results.csv") == slurp(out2 + "/results.csv"));
  int compared = 0;
  for (const auto& entry : fs::recursive_directory_iterator(out1)) {
    if (entry.path().extension() != ".ckpt") continue;
    std::string rel = fs::relative(entry.path(), out1).string();
    CHECK(slurp(entry.path().string()) == slurp(out2 + "/" + rel));
    ++compared;
  }
  CHECK(compared > 0);

  // schema check of the emitted report
  json schema = json::parse(slurp(std::string(PF_SOURCE_DIR) + "/docs/report.schema.json"));
  json doc = json::parse(slurp(out1 + "/results.json"));
  CHECK(validate(schema, doc));
  // csv row count matches the table (plus header)
  std::ifstream csv(out1 + "/results.csv");
  int lines = 0;
  std::string line;
  while (std::getline(csv, line)) ++lines;
  CHECK(lines == static_cast<int>(t1.rows.size()) + 1);

  fs::remove_all(out1);
  fs::remove_all(out2);
}

TEST_CASE("pretrain-amount sweep: amount 0 is the baseline, pools disjoint, trend reported") {
  kernels::configure_threads_from_env();
  expt::ExperimentConfig cfg = mini_config();
  cfg.n_folds = 1;
  cfg.n_videos = 20;
  cfg.fold_train = 16;  // 25% labeled -> 4 videos, the finetune-pool minimum
  expt::Context ctx = make_context(cfg);
  expt::ResultsTable t = expt::run_pretrain_amount_sweep(ctx, "");
  REQUIRE(t.rows.size() == 2);
  CHECK(t.rows[0].pretrain_amount == 0);
  CHECK(t.rows[0].mode == "none");
  CHECK(t.rows[1].pretrain_amount == 4);
  CHECK(t.rows[1].mode == "rsd");
  REQUIRE(t.trend.size() == 2);
  CHECK(t.trend[0].amount == 0);
  CHECK(t.trend[1].amount == 4);
  CHECK(t.trend_increase_fraction >= 0.0);
  CHECK(t.trend_increase_fraction <= 1.0);
}

TEST_CASE("report emission round-trips through JSON") {
  expt::ExperimentConfig cfg = mini_config();
  expt::ResultsTable t;
  t.kind = "annotation_sweep";
  t.root_seed = cfg.seed;
  t.config_hash = cfg.config_hash();
  expt::ResultRow row;
  row.fold = 0;
  row.fraction = 50;
  row.subset = 1;
  row.mode = "rsd";
  row.pipeline = "endon2n";
  row.n_labeled = 4;
  row.agg.n_videos = 3;
  row.agg.accuracy_mean = 91.25;
  row.agg.f1_mean = 88.5;
  row.agg.precision_mean.assign(7, 80);
  row.agg.recall_mean.assign(7, 82);
  row.agg.td_first_mean.assign(7, 3);
  row.agg.td_closest_mean.assign(7, 1);
  row.agg.td_undefined_count.assign(7, 0);
  t.rows.push_back(row);
  std::string dir = tmp_dir("pf_report_test");
  expt::emit_report(t, dir, true, true);
  json doc = json::parse(slurp(dir + "/results.json"));
  CHECK(doc["rows"][0]["metrics"]["accuracy"]["mean"].get<double>() == 91.25);
  CHECK(doc["rows"][0]["mode"].get<std::string>() == "rsd");
  CHECK(doc["config_hash"].get<std::string>() == cfg.config_hash());
  fs::remove_all(dir);
}
