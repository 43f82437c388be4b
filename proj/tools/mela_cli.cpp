// Experiment command line: dataset generation, training, evaluation,
// influence and interactive studies, and end-to-end reproduction recipes.
// Every artifact lands under the chosen output path, stamped with the
// config hash; reruns with the same config byte-match.
#include <CLI11.hpp>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <omp.h>
#include <string>
#include <vector>

#include "mela/baselines.hpp"
#include "mela/checkpoint.hpp"
#include "mela/config.hpp"
#include "mela/dataset_io.hpp"
#include "mela/errors.hpp"
#include "mela/experiments.hpp"
#include "mela/metrics.hpp"
#include "mela/model.hpp"
#include "mela/stats.hpp"
#include "mela/tasks.hpp"
#include "mela/train.hpp"

namespace fs = std::filesystem;
using namespace mela;

namespace {

// Flag values note whether the user set them so precedence stays
// flag > environment > config file > default.
struct ConfigFlags {
  std::string config_file;
  std::string family;
  std::size_t train_count = 0;
  std::size_t heldout_count = 0;
  std::size_t meta_iters = 0;
  double meta_lr = 0.0;
  std::size_t eval_steps = 0;
  double eval_lr = 0.0;
  double horizon = 0.0;
  std::uint64_t seed = 0;
  std::string out_dir;

  CLI::App* app = nullptr;

  void attach(CLI::App& cmd) {
    app = &cmd;
    cmd.add_option("--config", config_file, "config file (key = value sections)");
    cmd.add_option("--family", family, "task family: sinusoid or bounce");
    cmd.add_option("--train-count", train_count, "meta-training ensemble size");
    cmd.add_option("--heldout-count", heldout_count, "held-out ensemble size");
    cmd.add_option("--iters", meta_iters, "meta-training sweeps over the ensemble");
    cmd.add_option("--lr", meta_lr, "meta learning rate");
    cmd.add_option("--eval-steps", eval_steps, "fine-tune steps per held-out task");
    cmd.add_option("--eval-lr", eval_lr, "fine-tune learning rate");
    cmd.add_option("--horizon", horizon, "rollout arc length (bounce)");
    cmd.add_option("--seed", seed, "experiment seed");
    cmd.add_option("--out", out_dir, "output directory");
  }

  harness::ExperimentConfig resolve(const std::string& default_family) const {
    harness::ExperimentConfig cfg;
    cfg.family = default_family;
    if (!config_file.empty())
      cfg = harness::ExperimentConfig::from_file(config_file);
    harness::apply_env_seed(cfg);
    if (app->count("--family")) cfg.family = family;
    if (app->count("--train-count")) cfg.train_count = train_count;
    if (app->count("--heldout-count")) cfg.heldout_count = heldout_count;
    if (app->count("--iters")) cfg.meta_iters = meta_iters;
    if (app->count("--lr")) cfg.meta_lr = meta_lr;
    if (app->count("--eval-steps")) cfg.eval_steps = eval_steps;
    if (app->count("--eval-lr")) cfg.eval_lr = eval_lr;
    if (app->count("--horizon")) cfg.horizon = horizon;
    if (app->count("--seed")) cfg.seed = seed;
    if (app->count("--out")) cfg.out_dir = out_dir;
    cfg.validate();
    return cfg;
  }
};

fs::path ensure_dir(const std::string& dir) {
  fs::path p(dir);
  fs::create_directories(p);
  return p;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw io_error("cannot open " + path.string() + " for writing");
  f << text;
  if (!f) throw io_error("short write to " + path.string());
}

harness::MetricTable loss_table(const std::string& experiment,
                                const std::string& model,
                                const std::string& metric,
                                const std::vector<double>& losses,
                                double abscissa_scale = 1.0) {
  harness::MetricTable t;
  for (std::size_t i = 0; i < losses.size(); ++i)
    t.add(experiment, model, metric, static_cast<double>(i) * abscissa_scale,
          losses[i], 0.0, 1);
  return t;
}

// ------------------------------------------------------------------- train

int cmd_train(const ConfigFlags& flags, const std::string& model_name) {
  const harness::ExperimentConfig cfg = flags.resolve("sinusoid");
  const fs::path out = ensure_dir(cfg.out_dir);
  const std::uint64_t hash = cfg.hash();

  const auto ensemble = tasks::gen_ensemble(
      harness::family_from_name(cfg.family), cfg.train_count,
      harness::stream_seed(cfg.seed, harness::kStreamTrainSet),
      tasks::BounceConfig{cfg.trajectories, cfg.traj_steps});
  const nn::MlpSpec net = harness::family_task_net(cfg.family);

  if (model_name == "mela") {
    MelaSpec spec = MelaSpec::standard(net, cfg.s_pool, cfg.s_code);
    Rng init_rng = Rng(cfg.seed).derive(harness::kStreamInit);
    MelaModel model = MelaModel::init(std::move(spec), init_rng);
    train::MetaTrainConfig mcfg;
    mcfg.meta_iters = cfg.meta_iters;
    mcfg.adam.lr = cfg.meta_lr;
    mcfg.seed = harness::stream_seed(cfg.seed, harness::kStreamMeta);
    const train::MetaTrainResult log = train::meta_train(model, ensemble, mcfg);
    io::save_mela_checkpoint((out / "mela.ckpt").string(), model, cfg.seed,
                             log.updates);
    harness::emit_metrics(
        loss_table("train", "mela", "meta_train_loss", log.loss_history),
        out / "mela_loss.csv", hash);
  } else if (model_name == "pretrained" || model_name == "oracle") {
    baselines::PretrainConfig pcfg;
    pcfg.adam.lr = cfg.meta_lr;
    pcfg.seed = harness::stream_seed(cfg.seed, model_name == "oracle"
                                                   ? harness::kStreamOracle
                                                   : harness::kStreamPretrain);
    const baselines::PretrainResult r =
        model_name == "oracle" ? baselines::oracle_train(net, ensemble, pcfg)
                               : baselines::pretrain(net, ensemble, pcfg);
    const nn::MlpSpec saved_net =
        model_name == "oracle"
            ? baselines::oracle_spec(net, ensemble.front().oracle_hidden().size())
            : net;
    io::save_mlp_checkpoint((out / (model_name + ".ckpt")).string(), saved_net,
                            r.params, cfg.seed, r.steps);
    harness::emit_metrics(
        loss_table("train", model_name, "val_loss", r.val_history,
                   static_cast<double>(pcfg.stop.eval_every)),
        out / (model_name + "_loss.csv"), hash);
  } else if (model_name == "maml_fo") {
    baselines::MamlConfig mcfg;
    mcfg.adam.lr = cfg.meta_lr;
    mcfg.meta_steps = cfg.meta_iters * ensemble.size();
    mcfg.seed = harness::stream_seed(cfg.seed, harness::kStreamMaml);
    const baselines::MamlResult r = baselines::maml_train(net, ensemble, mcfg);
    io::save_mlp_checkpoint((out / "maml_fo.ckpt").string(), net, r.params,
                            cfg.seed, r.best_step);
    harness::emit_metrics(
        loss_table("train", "maml_fo", "meta_train_loss", r.loss_history),
        out / "maml_fo_loss.csv", hash);
  } else {
    throw contract_error("unknown model '" + model_name +
                         "' (mela, pretrained, maml_fo, oracle)");
  }
  return 0;
}

// -------------------------------------------------------------------- eval

int cmd_eval(const ConfigFlags& flags, const std::string& model_name,
             const std::string& checkpoint, const std::string& out_csv) {
  const harness::ExperimentConfig cfg = flags.resolve("sinusoid");
  const auto heldout = tasks::gen_ensemble(
      harness::family_from_name(cfg.family), cfg.heldout_count,
      harness::stream_seed(cfg.seed, harness::kStreamHeldout),
      tasks::BounceConfig{cfg.trajectories, cfg.traj_steps});

  train::TaskModelSource source;
  MelaModel mela_model;  // must outlive the source that references it
  if (model_name == "mela") {
    mela_model = io::load_mela_checkpoint(checkpoint).model;
    source = train::mela_source(mela_model);
  } else if (model_name == "oracle") {
    const io::MlpCheckpoint ck = io::load_mlp_checkpoint(checkpoint);
    source = baselines::oracle_source(ck.spec, ck.params);
  } else {
    const io::MlpCheckpoint ck = io::load_mlp_checkpoint(checkpoint);
    source = baselines::shared_source(model_name, ck.spec, ck.params);
  }

  train::EvalConfig ecfg;
  ecfg.steps = cfg.eval_steps;
  ecfg.adam.lr = cfg.eval_lr;
  const train::EvalCurve curve = train::evaluate(source, heldout, ecfg);

  harness::MetricTable table;
  for (std::size_t k = 0; k < curve.mean.size(); ++k)
    table.add("eval", model_name, "test_mse", static_cast<double>(k),
              curve.mean[k], curve.se[k], curve.tasks);
  harness::emit_metrics(std::move(table), out_csv, cfg.hash());
  return 0;
}

// --------------------------------------------------------------- influence

int cmd_influence(const std::string& checkpoint, const std::string& ensemble_file,
                  std::size_t task_index, const std::string& out_csv) {
  const MelaModel model = io::load_mela_checkpoint(checkpoint).model;
  const std::vector<TaskDataset> ensemble = io::load_ensemble(ensemble_file);
  if (task_index >= ensemble.size())
    throw contract_error("task index " + std::to_string(task_index) +
                         " out of range (ensemble holds " +
                         std::to_string(ensemble.size()) + ")");
  const TaskDataset& d = ensemble[task_index];
  const InfluenceReport rep = influence(model, d.x_train(), d.y_train());

  harness::MetricTable table;
  for (std::size_t i = 0; i < rep.influence.size(); ++i)
    table.add("influence", "mela", "influence", static_cast<double>(i),
              rep.influence[i], 0.0,
              static_cast<std::uint64_t>(rep.wins[i]));
  harness::emit_metrics(std::move(table), out_csv, 0);
  return 0;
}

// ---------------------------------------------------------------- interact

int cmd_interact(const std::string& checkpoint, std::size_t tasks_n,
                 std::uint64_t seed, const std::string& out_csv) {
  const MelaModel model = io::load_mela_checkpoint(checkpoint).model;
  const harness::PairedStudy study =
      harness::run_interact(model, tasks_n, seed);

  harness::MetricTable table;
  for (std::size_t t = 0; t < study.selected.size(); ++t) {
    const double at = static_cast<double>(t);
    table.add("interact", "selected", "sq_error_at_query", at,
              study.selected[t], 0.0, 1);
    table.add("interact", "random", "sq_error_at_query", at, study.random[t],
              0.0, 1);
    table.add("interact", "selected", "before_error", at, study.before[t], 0.0, 1);
    table.add("interact", "selected", "candidate_index", at,
              static_cast<double>(study.picked[t]), 0.0, 1);
  }
  const stats::MeanStderr sel = stats::mean_stderr(study.selected);
  const stats::MeanStderr rnd = stats::mean_stderr(study.random);
  table.add("interact", "selected", "mean_sq_error", 0.0, sel.mean, sel.se, sel.n);
  table.add("interact", "random", "mean_sq_error", 0.0, rnd.mean, rnd.se, rnd.n);
  table.add("interact", "selected_vs_random", "p_less", 0.0, study.p_less, 0.0,
            study.selected.size());
  harness::emit_metrics(std::move(table), out_csv, 0);
  return 0;
}

// --------------------------------------------------------------- reproduce

int cmd_reproduce(const ConfigFlags& flags, const std::string& figure) {
  if (figure == "fig3") {
    const harness::ExperimentConfig cfg = flags.resolve("sinusoid");
    const fs::path out = ensure_dir(cfg.out_dir);
    const harness::SinusoidStudy study = harness::run_fig3(cfg);
    harness::emit_metrics(study.metrics, out / "fig3_eval.csv",
                          study.config_hash);
    harness::emit_metrics(
        loss_table("fig3", "mela", "meta_train_loss", study.meta_loss),
        out / "fig3_meta_loss.csv", study.config_hash);
    io::save_mela_checkpoint((out / "fig3_mela.ckpt").string(), study.model,
                             cfg.seed, study.meta_loss.size());
    write_text(out / "config.txt", cfg.canonical_text());
    return 0;
  }
  if (figure == "fig2") {
    harness::ExperimentConfig cfg = flags.resolve("bounce");
    const fs::path out = ensure_dir(cfg.out_dir);
    const harness::BounceStudy study = harness::run_fig2(cfg);
    harness::emit_metrics(study.metrics, out / "fig2_eval.csv",
                          study.config_hash);
    harness::emit_metrics(
        loss_table("fig2", "mela", "meta_train_loss", study.meta_loss),
        out / "fig2_meta_loss.csv", study.config_hash);
    io::save_mela_checkpoint((out / "fig2_mela.ckpt").string(), study.model,
                             cfg.seed, study.meta_loss.size());
    write_text(out / "config.txt", cfg.canonical_text());
    return 0;
  }
  throw contract_error("unknown figure '" + figure + "' (fig3, fig2)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"meta-learning autoencoder experiments"};
  app.require_subcommand(1);

  int jobs = 0;
  app.add_option("--jobs", jobs, "worker thread cap for evaluation");

  // gen
  auto* gen = app.add_subcommand("gen", "generate a task ensemble file");
  std::string gen_family = "sinusoid", gen_out;
  std::size_t gen_count = 100, gen_traj = 10, gen_steps = 20;
  std::uint64_t gen_seed = 0;
  gen->add_option("--family", gen_family, "sinusoid or bounce");
  gen->add_option("--count", gen_count, "number of datasets");
  gen->add_option("--seed", gen_seed, "ensemble seed");
  gen->add_option("--trajectories", gen_traj, "bounce trajectories per room");
  gen->add_option("--steps", gen_steps, "bounce samples per trajectory");
  gen->add_option("--out", gen_out, "output file")->required();

  // train
  auto* train_cmd = app.add_subcommand("train", "train one model, write checkpoint + loss CSV");
  std::string train_model = "mela";
  train_cmd->add_option("--model", train_model, "mela, pretrained, maml_fo, oracle");
  ConfigFlags train_flags;
  train_flags.attach(*train_cmd);

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "fine-tune curves on held-out tasks");
  std::string eval_model = "mela", eval_ckpt, eval_out = "eval.csv";
  eval_cmd->add_option("--model", eval_model, "mela, pretrained, maml_fo, oracle");
  eval_cmd->add_option("--checkpoint", eval_ckpt, "trained model file")->required();
  eval_cmd->add_option("--out-csv", eval_out, "metrics file");
  ConfigFlags eval_flags;
  eval_flags.attach(*eval_cmd);

  // influence
  auto* infl = app.add_subcommand("influence", "per-example influence table");
  std::string infl_ckpt, infl_ens, infl_out = "influence.csv";
  std::size_t infl_task = 0;
  infl->add_option("--checkpoint", infl_ckpt, "recognition model file")->required();
  infl->add_option("--ensemble", infl_ens, "ensemble file from gen")->required();
  infl->add_option("--task", infl_task, "dataset index within the ensemble");
  infl->add_option("--out-csv", infl_out, "metrics file");

  // interact
  auto* inter = app.add_subcommand("interact", "sensitivity-guided example request study");
  std::string inter_ckpt, inter_out = "interact.csv";
  std::size_t inter_tasks = 200;
  std::uint64_t inter_seed = 0;
  inter->add_option("--checkpoint", inter_ckpt, "recognition model file")->required();
  inter->add_option("--tasks", inter_tasks, "number of paired trials");
  inter->add_option("--seed", inter_seed, "study seed");
  inter->add_option("--out-csv", inter_out, "metrics file");

  // reproduce
  auto* rep = app.add_subcommand("reproduce", "end-to-end desk-scale recipes");
  std::string rep_figure;
  rep->add_option("figure", rep_figure, "fig3 or fig2")->required();
  ConfigFlags rep_flags;
  rep_flags.attach(*rep);

  CLI11_PARSE(app, argc, argv);
  if (jobs > 0) omp_set_num_threads(jobs);

  try {
    if (gen->parsed()) {
      const auto datasets = tasks::gen_ensemble(
          harness::family_from_name(gen_family), gen_count, gen_seed,
          tasks::BounceConfig{gen_traj, gen_steps});
      io::save_ensemble(gen_out, datasets);
      return 0;
    }
    if (train_cmd->parsed()) return cmd_train(train_flags, train_model);
    if (eval_cmd->parsed())
      return cmd_eval(eval_flags, eval_model, eval_ckpt, eval_out);
    if (infl->parsed())
      return cmd_influence(infl_ckpt, infl_ens, infl_task, infl_out);
    if (inter->parsed())
      return cmd_interact(inter_ckpt, inter_tasks, inter_seed, inter_out);
    if (rep->parsed()) return cmd_reproduce(rep_flags, rep_figure);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  std::fprintf(stderr, "error: no subcommand\n");
  return 1;
}
