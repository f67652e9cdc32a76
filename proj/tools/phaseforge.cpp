// phaseforge — synthetic surgical-workflow phase recognition experiments.
//
// Subcommands: generate, pretrain-rsd, pretrain-tempcon, train-phase,
// train-endon2n, train-endolstm, evaluate, sweep, gradcheck, report.
// Exit codes: 0 success, 1 configuration error, 2 stage failure.

#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "phaseforge/checkpoint.hpp"
#include "phaseforge/dataset_io.hpp"
#include "phaseforge/experiment.hpp"
#include "phaseforge/kernels.hpp"
#include "phaseforge/nn.hpp"
#include "phaseforge/rng.hpp"
#include "phaseforge/train.hpp"

namespace fs = std::filesystem;
using namespace phaseforge;
using nlohmann::json;

namespace {

struct GlobalOpts {
  std::string config_path;
  std::string out_dir;
  bool paper = false;
  int64_t seed = -1;
  std::vector<std::string> set_args;

  std::map<std::string, std::string> overrides() const {
    std::map<std::string, std::string> kv;
    for (const auto& item : set_args) {
      size_t eq = item.find('=');
      require(eq != std::string::npos, "--set expects key=value, got: " + item);
      kv[item.substr(0, eq)] = item.substr(eq + 1);
    }
    return kv;
  }
};

expt::ExperimentConfig resolve_config(const GlobalOpts& g) {
  expt::ExperimentConfig cfg;
  if (!g.config_path.empty())
    cfg = expt::load_config(g.config_path, g.paper);  // file keys on top of the chosen base
  else if (g.paper)
    cfg = expt::paper_scale();
  expt::apply_overrides(cfg, g.overrides());
  if (g.seed >= 0) cfg.seed = static_cast<uint64_t>(g.seed);
  if (!g.out_dir.empty()) cfg.out_dir = g.out_dir;
  cfg.validate();
  return cfg;
}

std::vector<synth::SurgeryRecord> load_or_generate(const expt::ExperimentConfig& cfg,
                                                   const std::string& data_dir) {
  if (!data_dir.empty() && fs::exists(data_dir + "/manifest.json"))
    return io::load_dataset(data_dir);
  return synth::generate_dataset(cfg.workflow, cfg.n_videos, derive_seed(cfg.seed, "dataset"));
}

train::Videos all_records(const std::vector<synth::SurgeryRecord>& ds) {
  train::Videos v;
  for (const auto& r : ds) v.push_back(&r);
  return v;
}

void write_metrics_files(const std::vector<eval::MetricsReport>& reports,
                         const eval::Aggregate& agg, const std::string& dir) {
  fs::create_directories(dir);
  json per_video = json::array();
  for (const auto& r : reports) {
    per_video.push_back({{"video_id", r.video_id},
                         {"accuracy", r.accuracy},
                         {"avg_precision", r.avg_precision},
                         {"avg_recall", r.avg_recall},
                         {"f1", r.f1},
                         {"noise", r.noise},
                         {"precision", r.precision},
                         {"recall", r.recall},
                         {"td_first", r.td_first},
                         {"td_closest", r.td_closest}});
  }
  json doc{{"videos", per_video},
           {"aggregate",
            {{"n_videos", agg.n_videos},
             {"accuracy_mean", agg.accuracy_mean},
             {"accuracy_std", agg.accuracy_std},
             {"avg_precision_mean", agg.avg_precision_mean},
             {"avg_recall_mean", agg.avg_recall_mean},
             {"f1_mean", agg.f1_mean},
             {"f1_std", agg.f1_std},
             {"noise_mean", agg.noise_mean}}}};
  std::ofstream mjson(dir + "/metrics.json");
  mjson << doc.dump(2) << "\n";
  std::ofstream mcsv(dir + "/metrics.csv");
  mcsv << "video_id,metric,value\n";
  for (const auto& r : reports) {
    mcsv << r.video_id << ",accuracy," << r.accuracy << "\n";
    mcsv << r.video_id << ",avg_precision," << r.avg_precision << "\n";
    mcsv << r.video_id << ",avg_recall," << r.avg_recall << "\n";
    mcsv << r.video_id << ",f1," << r.f1 << "\n";
    mcsv << r.video_id << ",noise," << r.noise << "\n";
  }
}

int run_gradcheck() {
  nn::ArchSpec spec;
  spec.encoder_widths = {8, 12};
  spec.lstm_hidden = 16;
  spec.num_phases = 3;
  spec.variant = nn::Variant::EndoN2NVanilla;
  synth::WorkflowModel wm;
  wm.num_phases = 3;
  wm.phase_duration_mean = {4, 3, 3};
  wm.phase_duration_std = {1, 1, 1};
  wm.min_phase_duration = 1.0;
  wm.feature_dim = 8;
  wm.emission_noise_std = 0.3;
  synth::SurgeryRecord rec = synth::generate_surgery(wm, 71, "gradcheck");
  std::vector<uint8_t> mask(rec.num_frames(), 1);
  std::vector<int> labels(rec.phases().begin(), rec.phases().end());

  double worst = 0.0;
  for (auto variant : {nn::Variant::EndoN2NVanilla, nn::Variant::EndoN2NUpdated}) {
    spec.variant = variant;
    nn::ParamStore params = nn::init_params(spec, 5 + static_cast<int>(variant));
    train::BpttResult analytic =
        train::full_bptt_grads(params, rec.frames, labels, mask, rec.fps);
    TensorMap fd = nn::finite_diff_grads(
        [&](const nn::ParamStore& p) {
          return train::full_bptt_grads(p, rec.frames, labels, mask, rec.fps).loss;
        },
        params, 1e-5);
    double err = max_rel_err(analytic.grads, fd);
    std::cout << "gradcheck " << variant_tag(variant) << ": max rel err " << err << "\n";
    worst = std::max(worst, err);
  }
  std::cout << (worst <= 1e-5 ? "gradcheck PASS" : "gradcheck FAIL") << " (tolerance 1e-5)\n";
  return worst <= 1e-5 ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  kernels::configure_threads_from_env();

  CLI::App app{"Synthetic surgical-workflow phase recognition pipeline"};
  app.require_subcommand(1);
  GlobalOpts g;
  app.add_option("--config", g.config_path, "flat key=value config file");
  app.add_option("--seed", g.seed, "root seed (overrides config)");
  app.add_option("--out", g.out_dir, "output directory");
  app.add_flag("--paper-scale", g.paper, "use the published protocol scale");
  app.add_option("--set", g.set_args, "extra key=value config overrides")->delimiter(',');

  std::string data_dir, ckpt_path, encoder_path, rsd_path, ids_csv, val_csv;
  std::string sweep_kind = "annotation";
  std::string report_in, report_format = "csv";

  auto* c_generate = app.add_subcommand("generate", "generate a synthetic dataset to --out");
  auto* c_prsd = app.add_subcommand("pretrain-rsd", "progress + RSD self-supervised pre-training");
  c_prsd->add_option("--data", data_dir, "dataset directory");
  auto* c_ptc = app.add_subcommand("pretrain-tempcon", "temporal-order siamese pre-training");
  c_ptc->add_option("--data", data_dir, "dataset directory");
  auto* c_tph = app.add_subcommand("train-phase", "phase-recognition encoder fine-tuning");
  c_tph->add_option("--data", data_dir, "dataset directory");
  c_tph->add_option("--ids", ids_csv, "comma-separated training video ids (default: all)");
  c_tph->add_option("--init", ckpt_path, "initial checkpoint (e.g. pre-trained encoder)");
  auto* c_tn2n = app.add_subcommand("train-endon2n", "end-to-end CNN-LSTM training");
  c_tn2n->add_option("--data", data_dir, "dataset directory");
  c_tn2n->add_option("--encoder", encoder_path, "phase-encoder checkpoint")->required();
  c_tn2n->add_option("--rsd", rsd_path, "RSD pre-training checkpoint (updated variant)");
  c_tn2n->add_option("--ids", ids_csv, "training video ids (default: all)");
  c_tn2n->add_option("--val-ids", val_csv, "validation video ids");
  auto* c_tlstm = app.add_subcommand("train-endolstm", "two-step LSTM training, frozen encoder");
  c_tlstm->add_option("--data", data_dir, "dataset directory");
  c_tlstm->add_option("--encoder", encoder_path, "phase-encoder checkpoint")->required();
  c_tlstm->add_option("--ids", ids_csv, "training video ids (default: all)");
  c_tlstm->add_option("--val-ids", val_csv, "validation video ids");
  auto* c_eval = app.add_subcommand("evaluate", "per-video metrics for a checkpoint");
  c_eval->add_option("--data", data_dir, "dataset directory");
  c_eval->add_option("--checkpoint", ckpt_path, "model checkpoint")->required();
  c_eval->add_option("--ids", ids_csv, "video ids to evaluate (default: all)");
  auto* c_sweep = app.add_subcommand("sweep", "annotation-fraction or pretrain-amount sweep");
  c_sweep->add_option("--data", data_dir, "dataset directory (generated when absent)");
  c_sweep->add_option("--kind", sweep_kind, "annotation | pretrain-amount");
  auto* c_grad = app.add_subcommand("gradcheck", "finite-difference gradient verification");
  auto* c_report = app.add_subcommand("report", "convert a results.json to another format");
  c_report->add_option("--in", report_in, "results.json path")->required();
  c_report->add_option("--format", report_format, "csv (default)");

  for (auto* sub : app.get_subcommands({})) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  expt::ExperimentConfig cfg;
  try {
    cfg = resolve_config(g);
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  }

  auto split_ids = [](const std::string& csv) {
    std::vector<std::string> out;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(item);
    return out;
  };

  try {
    const std::string out = cfg.out_dir;
    if (*c_generate) {
      auto ds = synth::generate_dataset(cfg.workflow, cfg.n_videos, derive_seed(cfg.seed, "dataset"));
      io::save_dataset(ds, cfg.workflow.num_phases, out);
      expt::save_config(cfg, out + "/config.txt");
      std::cout << "wrote " << ds.size() << " videos to " << out << "\n";
    } else if (*c_prsd) {
      auto ds = load_or_generate(cfg, data_dir);
      fs::create_directories(out);
      uint64_t before = synth::label_reads();
      nn::ParamStore prog_init = nn::init_params(cfg.arch(nn::Variant::ProgressEncoder),
                                                 derive_seed(cfg.seed, "cli/prog_enc.init"));
      nn::ParamStore prog = train::train_progress_encoder(
          all_records(ds), cfg.prog_enc, prog_init, derive_seed(cfg.seed, "cli/prog_enc"),
          train::TrainLogger(out + "/prog_enc_log.csv"));
      nn::save_checkpoint(prog, out + "/prog_enc-" + std::to_string(prog.iteration) + ".ckpt");
      train::TrainConfig rsd_cfg = cfg.rsd;
      rsd_cfg.iterations = train::scaled_iterations(cfg.seq.epochs, static_cast<int>(ds.size()));
      rsd_cfg.step_size = train::scaled_step_size(rsd_cfg.iterations, cfg.seq.step_frac);
      nn::ParamStore rsd = train::pretrain_rsd(all_records(ds), rsd_cfg, cfg.seq, prog,
                                               derive_seed(cfg.seed, "cli/rsd"),
                                               train::TrainLogger(out + "/rsd_log.csv"));
      nn::save_checkpoint(rsd, out + "/rsd_pretrain-" + std::to_string(rsd.iteration) + ".ckpt");
      require(synth::label_reads() == before, "pre-training read phase labels");
      std::cout << "rsd pre-training complete; 0 phase-label reads\n";
    } else if (*c_ptc) {
      auto ds = load_or_generate(cfg, data_dir);
      fs::create_directories(out);
      uint64_t before = synth::label_reads();
      std::vector<synth::FramePair> pairs;
      for (size_t v = 0; v < ds.size(); ++v) {
        auto vp = synth::sample_frame_pairs(ds[v], cfg.tempcon_pairs_per_video,
                                            derive_seed(cfg.seed, "cli/tempcon.pairs", v));
        pairs.insert(pairs.end(), vp.begin(), vp.end());
      }
      train::TrainConfig tc = cfg.tempcon;
      if (tc.iterations <= 0) {
        int64_t total = static_cast<int64_t>(cfg.tempcon_epochs) * static_cast<int64_t>(pairs.size());
        tc.iterations = (total + tc.batch_size - 1) / tc.batch_size;
      }
      nn::ParamStore tcp = train::pretrain_tempcon(pairs, tc, cfg.arch(nn::Variant::TempCon),
                                                   derive_seed(cfg.seed, "cli/tempcon"),
                                                   train::TrainLogger(out + "/tempcon_log.csv"));
      nn::save_checkpoint(tcp, out + "/tempcon_pretrain-" + std::to_string(tcp.iteration) + ".ckpt");
      require(synth::label_reads() == before, "pre-training read phase labels");
      std::cout << "tempcon pre-training complete; 0 phase-label reads\n";
    } else if (*c_tph) {
      expt::Context ctx(cfg, load_or_generate(cfg, data_dir));
      fs::create_directories(out);
      train::Videos vids =
          ids_csv.empty() ? all_records(ctx.dataset) : ctx.records(split_ids(ids_csv));
      nn::ParamStore init = ckpt_path.empty()
                                ? nn::init_params(cfg.arch(nn::Variant::PhaseEncoder),
                                                  derive_seed(cfg.seed, "cli/phase_enc.init"))
                                : train::transfer_weights(nn::load_checkpoint(ckpt_path),
                                                          cfg.arch(nn::Variant::PhaseEncoder),
                                                          derive_seed(cfg.seed, "cli/phase_enc.init"));
      nn::ParamStore p = train::train_phase_encoder(vids, cfg.phase_enc, init,
                                                    derive_seed(cfg.seed, "cli/phase_enc"),
                                                    train::TrainLogger(out + "/phase_enc_log.csv"));
      nn::save_checkpoint(p, out + "/phase_enc-" + std::to_string(p.iteration) + ".ckpt");
      std::cout << "phase encoder saved\n";
    } else if (*c_tn2n || *c_tlstm) {
      auto ds = load_or_generate(cfg, data_dir);
      expt::Context ctx(cfg, std::move(ds));
      fs::create_directories(out);
      std::vector<std::string> train_ids =
          ids_csv.empty() ? [&] {
            std::vector<std::string> v;
            for (const auto& r : ctx.dataset) v.push_back(r.video_id);
            return v;
          }()
                          : split_ids(ids_csv);
      train::Videos tr = ctx.records(train_ids);
      train::Videos vl = val_csv.empty() ? train::Videos{} : ctx.records(split_ids(val_csv));
      nn::ParamStore enc = nn::load_checkpoint(encoder_path);
      if (*c_tlstm) {
        train::TrainConfig c = cfg.endolstm;
        c.iterations = train::scaled_iterations(cfg.endolstm_epochs, static_cast<int>(tr.size()));
        c.step_size = train::scaled_step_size(c.iterations, cfg.endolstm_step_frac);
        auto res = train::train_endolstm(tr, vl, c, cfg.seq, enc,
                                         derive_seed(cfg.seed, "cli/endolstm"),
                                         train::TrainLogger(out + "/endolstm_log.csv"));
        nn::save_checkpoint(res.best, out + "/endolstm-" + std::to_string(res.best_iter) + ".ckpt");
        if (vl.empty())
          std::cout << "endolstm trained (no validation set)\n";
        else
          std::cout << "endolstm best val accuracy " << res.best_val_accuracy << "\n";
      } else {
        nn::ParamStore init;
        if (!rsd_path.empty()) {
          nn::ParamStore rsd = nn::load_checkpoint(rsd_path);
          init = train::transfer_weights(rsd, cfg.arch(nn::Variant::EndoN2NUpdated),
                                         derive_seed(cfg.seed, "cli/endon2n.init"));
          train::overlay_encoder(init, enc);
        } else {
          init = train::transfer_weights(enc, cfg.arch(nn::Variant::EndoN2NVanilla),
                                         derive_seed(cfg.seed, "cli/endon2n.init"));
        }
        train::TrainConfig c = cfg.endon2n;
        c.iterations = train::scaled_iterations(cfg.seq.epochs, static_cast<int>(tr.size()));
        c.step_size = train::scaled_step_size(c.iterations, cfg.seq.step_frac);
        auto res = train::train_endon2n(tr, vl, c, cfg.seq, init,
                                        derive_seed(cfg.seed, "cli/endon2n"),
                                        train::TrainLogger(out + "/endon2n_log.csv"));
        nn::save_checkpoint(res.best, out + "/endon2n-" + std::to_string(res.best_iter) + ".ckpt");
        if (vl.empty())
          std::cout << "endon2n trained (no validation set)\n";
        else
          std::cout << "endon2n best val accuracy " << res.best_val_accuracy << "\n";
      }
    } else if (*c_eval) {
      auto ds = load_or_generate(cfg, data_dir);
      expt::Context ctx(cfg, std::move(ds));
      nn::ParamStore model = nn::load_checkpoint(ckpt_path);
      std::vector<std::string> ids = ids_csv.empty() ? [&] {
        std::vector<std::string> v;
        for (const auto& r : ctx.dataset) v.push_back(r.video_id);
        return v;
      }()
                                                     : split_ids(ids_csv);
      std::vector<eval::MetricsReport> reports;
      for (const auto& id : ids) {
        const auto& rec = ctx.record(id);
        eval::PredictionTrace pred = eval::predict_sequence(model, rec);
        auto filtered = eval::causal_mode_filter(pred.labels, cfg.filter_window_s, rec.fps);
        reports.push_back(eval::compute_metrics(id, pred.labels, filtered, rec.phases(),
                                                cfg.workflow.num_phases, rec.fps));
      }
      eval::Aggregate agg = eval::aggregate(reports);
      write_metrics_files(reports, agg, out);
      std::cout << "accuracy " << agg.accuracy_mean << " +- " << agg.accuracy_std << ", f1 "
                << agg.f1_mean << "\n";
    } else if (*c_sweep) {
      auto ds = load_or_generate(cfg, data_dir);
      expt::Context ctx(cfg, std::move(ds));
      expt::ResultsTable table = sweep_kind == "pretrain-amount"
                                     ? expt::run_pretrain_amount_sweep(ctx, out)
                                     : expt::run_annotation_sweep(ctx, out);
      expt::emit_report(table, out, true, true);
      std::cout << "sweep complete: " << table.rows.size() << " rows -> " << out << "\n";
    } else if (*c_grad) {
      return run_gradcheck();
    } else if (*c_report) {
      std::ifstream in(report_in);
      require(in.good(), "report: cannot open " + report_in);
      json doc = json::parse(in);
      require(report_format == "csv", "report: unsupported format " + report_format);
      fs::create_directories(out.empty() ? "." : out);
      std::string path = (out.empty() ? "." : out) + "/results.csv";
      std::ofstream o(path);
      o << "fold,fraction,subset,mode,pipeline,n_labeled,accuracy_mean,f1_mean\n";
      for (const auto& row : doc["rows"]) {
        o << row["fold"].get<int>() << "," << row["fraction"].get<double>() << ","
          << row["subset"].get<int>() << "," << row["mode"].get<std::string>() << ","
          << row["pipeline"].get<std::string>() << "," << row["n_labeled"].get<int>() << ","
          << row["metrics"]["accuracy"]["mean"].get<double>() << ","
          << row["metrics"]["f1"]["mean"].get<double>() << "\n";
      }
      std::cout << "wrote " << path << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "stage failure: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
