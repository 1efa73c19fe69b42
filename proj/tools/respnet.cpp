// Command-line front door: ingest -> prep -> train -> eval, plus the
// synthetic-data generator and the layer gradient checker.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <thread>
#include <vector>

#include "respnet/config.hpp"
#include "respnet/dataset.hpp"
#include "respnet/error.hpp"
#include "respnet/gradcheck.hpp"
#include "respnet/model.hpp"
#include "respnet/pipeline.hpp"
#include "respnet/synth.hpp"

namespace fs = std::filesystem;
using namespace respnet;

namespace {

struct GlobalArgs {
  std::string config_file;
  std::string preset;
  int jobs = 0;  // 0: hardware default
  uint64_t seed = 1;
  bool seed_given = false;
};

RunConfig resolve_config(const GlobalArgs& g) {
  RunConfig cfg;
  if (!g.preset.empty()) cfg.apply_preset(g.preset);
  if (!g.config_file.empty()) cfg.load_file(g.config_file);
  cfg.apply_env();
  if (g.jobs > 0) cfg.set("run.jobs", std::to_string(g.jobs));
  if (g.seed_given) cfg.set("run.seed", std::to_string(g.seed));
  return cfg;
}

int effective_jobs(const RunConfig& cfg) {
  int jobs = cfg.get_int("run.jobs", 0);
  if (jobs <= 0) jobs = static_cast<int>(std::thread::hardware_concurrency());
  return std::max(1, jobs);
}

pipeline::PrepConfig prep_config(const RunConfig& cfg, int task, spec::FrontEndKind fe) {
  pipeline::PrepConfig p;
  p.task = task;
  p.frontend = fe;
  p.task1_rate = cfg.get_int("dsp.task1_rate", p.task1_rate);
  p.task2_rate = cfg.get_int("dsp.task2_rate", p.task2_rate);
  p.target_s = cfg.get_double("dsp.target_s", p.target_s);
  p.band_lo = cfg.get_double("dsp.band_lo", p.band_lo);
  p.band_hi = cfg.get_double("dsp.band_hi", p.band_hi);
  p.band_hi_max_frac = cfg.get_double("dsp.band_hi_max_frac", p.band_hi_max_frac);
  p.peak_norm = cfg.get_bool("dsp.peak_norm", p.peak_norm);
  p.fmin = cfg.get_double("dsp.fmin", p.fmin);
  p.fmax = cfg.get_double("dsp.fmax", p.fmax);
  p.n_freq = cfg.get_int("dsp.n_freq", p.n_freq);
  p.gamma_window = cfg.get_int("dsp.gamma_window", p.gamma_window);
  p.gamma_hop = cfg.get_int("dsp.gamma_hop", p.gamma_hop);
  p.jobs = effective_jobs(cfg);
  return p;
}

pipeline::TrainConfig train_config(const RunConfig& cfg) {
  pipeline::TrainConfig t;
  t.epochs = cfg.get_int("train.epochs", t.epochs);
  t.batch_size = cfg.get_int("train.batch", t.batch_size);
  t.lambda = static_cast<float>(cfg.get_double("train.lambda", t.lambda));
  t.mixup_alpha = static_cast<float>(cfg.get_double("train.alpha", t.mixup_alpha));
  t.lr = static_cast<float>(cfg.get_double("train.lr", t.lr));
  t.seed = cfg.get_u64("run.seed", t.seed);
  return t;
}

// Flag wins over config file only when the user actually passed it.
template <typename T>
void flag_override(CLI::Option* opt, RunConfig& cfg, const std::string& key, const T& value) {
  if (opt && opt->count() > 0) cfg.set(key, std::to_string(value));
}
void flag_override_str(CLI::Option* opt, RunConfig& cfg, const std::string& key,
                       const std::string& value) {
  if (opt && opt->count() > 0) cfg.set(key, value);
}

std::vector<spec::FrontEndKind> parse_frontends(const std::string& list) {
  std::vector<spec::FrontEndKind> out;
  std::string cur;
  for (char c : list + ",") {
    if (c == ',') {
      if (!cur.empty()) out.push_back(spec::frontend_from_name(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  require(!out.empty(), Errc::UsageError, "no front ends given");
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"respiratory sound classification pipeline"};
  app.require_subcommand(1);
  app.fallthrough();  // global flags may follow the subcommand

  GlobalArgs g;
  app.add_option("--config", g.config_file, "key=value config file");
  app.add_option("--preset", g.preset, "paper-baseline | paper-final");
  app.add_option("--jobs", g.jobs, "worker threads (default: hardware)");
  auto* seed_opt = app.add_option("--seed", g.seed, "run seed");

  // ---- synth
  auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic tone/noise dataset");
  synth::SynthConfig synth_cfg;
  std::string synth_out;
  synth_cmd->add_option("--out", synth_out, "output directory")->required();
  synth_cmd->add_option("--n-train", synth_cfg.n_train, "training recordings");
  synth_cmd->add_option("--n-test", synth_cfg.n_test, "test recordings");
  synth_cmd->add_option("--rate", synth_cfg.sample_rate, "sample rate");
  synth_cmd->add_option("--synth-seed", synth_cfg.seed, "generator seed");

  // ---- ingest
  auto* ingest_cmd = app.add_subcommand("ingest", "build a manifest from a data directory");
  std::string in_data, in_split, in_diag, in_out;
  ingest_cmd->add_option("--data", in_data, "directory of .wav/.txt pairs")->required();
  ingest_cmd->add_option("--split", in_split, "recording_key<TAB>train|test file")->required();
  ingest_cmd->add_option("--diagnosis", in_diag, "patient_id<TAB>diagnosis file")->required();
  ingest_cmd->add_option("--out", in_out, "manifest output path")->required();

  // ---- prep
  auto* prep_cmd = app.add_subcommand("prep", "compute and cache spectrogram images");
  std::string pr_manifest, pr_frontend = "scal-morse", pr_cache;
  int pr_task = 1;
  prep_cmd->add_option("--manifest", pr_manifest, "manifest file")->required();
  prep_cmd->add_option("--task", pr_task, "1 (cycles) or 2 (recordings)");
  auto* pr_fe_opt =
      prep_cmd->add_option("--frontend", pr_frontend, "scal-morse | scal-amor | gamma");
  prep_cmd->add_option("--cache", pr_cache, "cache directory")->required();

  // ---- train
  auto* train_cmd = app.add_subcommand("train", "train one model on cached patches");
  std::string tr_manifest, tr_frontend = "scal-morse", tr_cache, tr_model = "baseline", tr_out;
  int tr_task = 1, tr_epochs = 100, tr_batch = 100;
  double tr_lr = 1e-4, tr_lambda = 1e-4, tr_alpha = 0.4;
  train_cmd->add_option("--manifest", tr_manifest, "manifest file")->required();
  train_cmd->add_option("--cache", tr_cache, "cache directory")->required();
  train_cmd->add_option("--out", tr_out, "checkpoint output path")->required();
  train_cmd->add_option("--task", tr_task, "1 or 2");
  auto* tr_fe_opt = train_cmd->add_option("--frontend", tr_frontend, "front end");
  auto* tr_model_opt =
      train_cmd->add_option("--model", tr_model, "baseline | inception-01..inception-04");
  auto* tr_epochs_opt = train_cmd->add_option("--epochs", tr_epochs, "training epochs");
  auto* tr_batch_opt = train_cmd->add_option("--batch", tr_batch, "batch size");
  auto* tr_lr_opt = train_cmd->add_option("--lr", tr_lr, "Adam learning rate");
  auto* tr_lambda_opt = train_cmd->add_option("--lambda", tr_lambda, "L2 weight");
  auto* tr_alpha_opt = train_cmd->add_option("--alpha", tr_alpha, "mixup alpha (<=0 disables)");

  // ---- eval
  auto* eval_cmd = app.add_subcommand("eval", "evaluate checkpoints (K-way ensemble)");
  std::string ev_manifest, ev_cache, ev_split = "test", ev_outdir = ".";
  int ev_task = 1;
  std::vector<std::string> ev_ckpts, ev_frontends;
  eval_cmd->add_option("--manifest", ev_manifest, "manifest file")->required();
  eval_cmd->add_option("--cache", ev_cache, "cache directory")->required();
  eval_cmd->add_option("--task", ev_task, "1 or 2");
  eval_cmd->add_option("--split", ev_split, "train | test");
  eval_cmd->add_option("--checkpoint", ev_ckpts, "checkpoint path (repeatable)")->required();
  eval_cmd->add_option("--frontend", ev_frontends, "front end per checkpoint (repeatable)")
      ->required();
  eval_cmd->add_option("--out-dir", ev_outdir, "report output directory");

  // ---- gradcheck
  auto* grad_cmd = app.add_subcommand("gradcheck", "finite-difference checks for every layer");
  int gc_seeds = 20;
  double gc_tol = 1e-3;
  grad_cmd->add_option("--seeds", gc_seeds, "random repetitions per layer");
  grad_cmd->add_option("--tol", gc_tol, "relative error tolerance");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return 2;
  }

  g.seed_given = seed_opt->count() > 0;

  try {
    RunConfig cfg = resolve_config(g);

    if (synth_cmd->parsed()) {
      synth::generate_dataset(synth_out, synth_cfg);
      std::cout << "wrote " << synth_cfg.n_train + synth_cfg.n_test << " recordings to "
                << synth_out << "\n";
      return 0;
    }

    if (ingest_cmd->parsed()) {
      Manifest m = build_manifest(in_data, in_split, in_diag);
      m.save(in_out);
      std::cout << "manifest: " << m.recordings.size() << " recordings";
      if (m.report.n_missing_diagnosis > 0)
        std::cout << " (" << m.report.n_missing_diagnosis << " dropped: no diagnosis entry)";
      std::cout << "\n";
      return 0;
    }

    if (prep_cmd->parsed()) {
      flag_override_str(pr_fe_opt, cfg, "run.frontends", pr_frontend);
      const Manifest m = Manifest::load(pr_manifest);
      for (auto fe : parse_frontends(cfg.get("run.frontends", pr_frontend))) {
        auto pc = prep_config(cfg, pr_task, fe);
        pipeline::prepare_cache(m, pc, pr_cache);
        std::cout << "cached " << spec::frontend_name(fe) << " images under " << pr_cache
                  << "\n";
      }
      cfg.set("run.task", std::to_string(pr_task));
      cfg.save(fs::path(pr_cache) / "prep.cfg");
      return 0;
    }

    if (train_cmd->parsed()) {
      flag_override_str(tr_fe_opt, cfg, "run.frontends", tr_frontend);
      flag_override_str(tr_model_opt, cfg, "run.model", tr_model);
      flag_override(tr_epochs_opt, cfg, "train.epochs", tr_epochs);
      flag_override(tr_batch_opt, cfg, "train.batch", tr_batch);
      flag_override(tr_lr_opt, cfg, "train.lr", tr_lr);
      flag_override(tr_lambda_opt, cfg, "train.lambda", tr_lambda);
      flag_override(tr_alpha_opt, cfg, "train.alpha", tr_alpha);
      cfg.set("run.task", std::to_string(tr_task));

      const Manifest m = Manifest::load(tr_manifest);
      const auto fes = parse_frontends(cfg.get("run.frontends", tr_frontend));
      require(fes.size() == 1, Errc::UsageError, "train uses exactly one front end");
      const auto pc = prep_config(cfg, tr_task, fes[0]);
      const auto data = pipeline::load_patches(m, Split::Train, pc, tr_cache);

      models::ModelConfig mc;
      mc.kind = models::model_kind_from_name(cfg.get("run.model", tr_model));
      mc.n_classes = data.n_classes;
      const auto tc = train_config(cfg);

      std::ofstream log(tr_out + ".log");
      auto result = pipeline::train(data, mc, tc, &log);
      models::save_checkpoint(result.model, tr_out);
      models::save_checkpoint(result.best, tr_out + ".best");
      cfg.save(tr_out + ".cfg");
      std::cout << "final checkpoint: " << tr_out << "\nbest epoch " << result.best_epoch
                << " (loss " << result.best_loss << "): " << tr_out << ".best\n";
      return 0;
    }

    if (eval_cmd->parsed()) {
      require(ev_ckpts.size() == ev_frontends.size(), Errc::UsageError,
              "need one --frontend per --checkpoint");
      require(ev_split == "train" || ev_split == "test", Errc::UsageError,
              "--split must be train or test");
      const Split split = ev_split == "train" ? Split::Train : Split::Test;
      const Manifest m = Manifest::load(ev_manifest);

      std::vector<models::Model> mods;
      std::vector<pipeline::PatchSet> sets;
      for (size_t k = 0; k < ev_ckpts.size(); ++k) {
        mods.push_back(models::load_checkpoint(ev_ckpts[k]));
        const auto pc =
            prep_config(cfg, ev_task, spec::frontend_from_name(ev_frontends[k]));
        sets.push_back(pipeline::load_patches(m, split, pc, ev_cache));
      }
      std::vector<const pipeline::PatchSet*> set_ptrs;
      std::vector<models::Model*> mod_ptrs;
      for (size_t k = 0; k < mods.size(); ++k) {
        set_ptrs.push_back(&sets[k]);
        mod_ptrs.push_back(&mods[k]);
      }
      const int normal_class = ev_task == 1 ? static_cast<int>(CycleClass::Normal)
                                            : static_cast<int>(DiseaseClass::Healthy);
      const std::string task_name = ev_task == 1 ? "task1" : "task2";
      auto outcome =
          pipeline::evaluate(set_ptrs, mod_ptrs, normal_class, task_name, effective_jobs(cfg));

      fs::create_directories(ev_outdir);
      const auto& names = ev_task == 1 ? cycle_class_names() : disease_class_names();
      std::ofstream(fs::path(ev_outdir) / "report.txt")
          << metrics::render_report(outcome.report, names);
      std::ofstream(fs::path(ev_outdir) / "report.tsv")
          << metrics::report_tsv_line(outcome.report) << "\n";
      std::ofstream(fs::path(ev_outdir) / "predictions.tsv")
          << pipeline::predictions_tsv(outcome.records);
      cfg.set("run.task", std::to_string(ev_task));
      cfg.save(fs::path(ev_outdir) / "eval.cfg");
      std::cout << metrics::render_report(outcome.report, names);
      return 0;
    }

    if (grad_cmd->parsed()) {
      bool all_pass = true;
      for (const auto& r : nn::run_gradcheck(gc_seeds, gc_tol)) {
        std::printf("%-16s %s  max rel err %.3e\n", r.layer.c_str(),
                    r.pass ? "PASS" : "FAIL", r.max_rel_err);
        all_pass = all_pass && r.pass;
      }
      return all_pass ? 0 : 1;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.code() == Errc::UsageError ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
