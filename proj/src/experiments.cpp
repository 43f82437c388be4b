#include "mela/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <utility>

#include "mela/errors.hpp"
#include "mela/rng.hpp"
#include "mela/stats.hpp"

namespace mela::harness {
namespace {

// Fine-tune curves summarized into (model, test_mse, step) rows.
void add_curve_rows(MetricTable& table, const std::string& experiment,
                    const std::string& model, const train::EvalTable& t) {
  const train::EvalCurve curve = train::summarize(t);
  for (std::size_t k = 0; k < curve.mean.size(); ++k)
    table.add(experiment, model, "test_mse", static_cast<double>(k),
              curve.mean[k], curve.se[k], curve.tasks);
}

// Rollout error rows, one per distance, averaged over rooms.
void add_rollout_rows(MetricTable& table, const std::string& model,
                      const std::vector<double>& distances,
                      const std::vector<std::vector<double>>& errors) {
  for (std::size_t k = 0; k < distances.size(); ++k) {
    std::vector<double> at_k;
    at_k.reserve(errors.size());
    for (const auto& room : errors) at_k.push_back(room[k]);
    const stats::MeanStderr m = stats::mean_stderr(at_k);
    table.add("fig2", model, "rollout_error", distances[k], m.mean, m.se, m.n);
  }
}

// Window predictor over a plain network: 3 positions in, next position out.
tasks::StepPredictor net_predictor(const nn::MlpSpec& net,
                                   const nn::ParamSet& params) {
  return [net, params](const std::array<double, 6>& window) {
    const Tensor x(1, 6, std::vector<double>(window.begin(), window.end()));
    const Tensor y = nn::mlp_eval(net, params, x);
    return std::array<double, 2>{y(0, 0), y(0, 1)};
  };
}

// Same, with the room's corner coordinates appended to every input row.
tasks::StepPredictor oracle_predictor(const nn::MlpSpec& net,
                                      const nn::ParamSet& params,
                                      const std::vector<double>& hidden) {
  return [net, params, hidden](const std::array<double, 6>& window) {
    std::vector<double> row(window.begin(), window.end());
    row.insert(row.end(), hidden.begin(), hidden.end());
    const std::size_t width = row.size();  // before the move below
    const Tensor x(1, width, std::move(row));
    const Tensor y = nn::mlp_eval(net, params, x);
    return std::array<double, 2>{y(0, 0), y(0, 1)};
  };
}

}  // namespace

std::uint64_t stream_seed(std::uint64_t root_seed, SeedStream stream) {
  return Rng(root_seed).derive(stream).seed();
}

nn::MlpSpec family_task_net(const std::string& family) {
  if (family == "sinusoid") return nn::MlpSpec{{1, 40, 40, 1}, 0.3};
  if (family == "bounce") return nn::MlpSpec{{6, 40, 40, 40, 2}, 0.3};
  throw contract_error("unknown task family '" + family + "'");
}

TaskFamily family_from_name(const std::string& family) {
  if (family == "sinusoid") return TaskFamily::kSinusoid;
  if (family == "bounce") return TaskFamily::kBounce;
  throw contract_error("unknown task family '" + family + "'");
}

TrainedModels train_all(const ExperimentConfig& cfg,
                        const std::vector<TaskDataset>& ensemble,
                        bool with_oracle) {
  cfg.validate();
  TrainedModels out;
  out.task_net = family_task_net(cfg.family);

  MelaSpec spec = MelaSpec::standard(out.task_net, cfg.s_pool, cfg.s_code);
  Rng init_rng = Rng(cfg.seed).derive(kStreamInit);
  out.mela = MelaModel::init(std::move(spec), init_rng);

  train::MetaTrainConfig mcfg;
  mcfg.meta_iters = cfg.meta_iters;
  mcfg.adam.lr = cfg.meta_lr;
  mcfg.seed = stream_seed(cfg.seed, kStreamMeta);
  out.mela_log = train::meta_train(out.mela, ensemble, mcfg);

  baselines::PretrainConfig pcfg;
  pcfg.adam.lr = cfg.meta_lr;
  pcfg.seed = stream_seed(cfg.seed, kStreamPretrain);
  out.pretrained = baselines::pretrain(out.task_net, ensemble, pcfg);

  baselines::MamlConfig mamlcfg;
  mamlcfg.adam.lr = cfg.meta_lr;
  mamlcfg.meta_steps = cfg.meta_iters * ensemble.size();
  mamlcfg.seed = stream_seed(cfg.seed, kStreamMaml);
  out.maml = baselines::maml_train(out.task_net, ensemble, mamlcfg);

  if (with_oracle) {
    out.oracle_net = baselines::oracle_spec(
        out.task_net, ensemble.front().oracle_hidden().size());
    baselines::PretrainConfig ocfg = pcfg;
    ocfg.seed = stream_seed(cfg.seed, kStreamOracle);
    out.oracle = baselines::oracle_train(out.task_net, ensemble, ocfg);
  }
  return out;
}

SinusoidStudy run_fig3(const ExperimentConfig& cfg) {
  cfg.validate();
  if (cfg.family != "sinusoid")
    throw contract_error("this reproduction runs the sinusoid family, got '" +
                         cfg.family + "'");

  const auto trainset =
      tasks::gen_ensemble(TaskFamily::kSinusoid, cfg.train_count,
                          stream_seed(cfg.seed, kStreamTrainSet));
  const auto heldout =
      tasks::gen_ensemble(TaskFamily::kSinusoid, cfg.heldout_count,
                          stream_seed(cfg.seed, kStreamHeldout));

  TrainedModels models = train_all(cfg, trainset, /*with_oracle=*/false);

  train::EvalConfig ecfg;
  ecfg.steps = cfg.eval_steps;
  ecfg.adam.lr = cfg.eval_lr;

  SinusoidStudy study;
  study.config_hash = cfg.hash();
  study.meta_loss = std::move(models.mela_log.loss_history);
  study.mela = train::evaluate_table(train::mela_source(models.mela), heldout, ecfg);
  study.pretrained = train::evaluate_table(
      baselines::shared_source("pretrained", models.task_net,
                               models.pretrained.params),
      heldout, ecfg);
  study.maml = train::evaluate_table(
      baselines::shared_source("maml_fo", models.task_net, models.maml.params),
      heldout, ecfg);
  study.model = std::move(models.mela);

  add_curve_rows(study.metrics, "fig3", "mela", study.mela);
  add_curve_rows(study.metrics, "fig3", "pretrained", study.pretrained);
  add_curve_rows(study.metrics, "fig3", "maml_fo", study.maml);
  study.metrics.sort_rows();
  return study;
}

BounceStudy run_fig2(const ExperimentConfig& cfg) {
  cfg.validate();
  if (cfg.family != "bounce")
    throw contract_error("this reproduction runs the bounce family, got '" +
                         cfg.family + "'");

  const tasks::BounceConfig bc{cfg.trajectories, cfg.traj_steps};
  const auto trainset =
      tasks::gen_ensemble(TaskFamily::kBounce, cfg.train_count,
                          stream_seed(cfg.seed, kStreamTrainSet), bc);
  BounceStudy study;
  study.config_hash = cfg.hash();
  study.heldout =
      tasks::gen_ensemble(TaskFamily::kBounce, cfg.heldout_count,
                          stream_seed(cfg.seed, kStreamHeldout), bc);

  TrainedModels models = train_all(cfg, trainset, /*with_oracle=*/true);
  study.meta_loss = std::move(models.mela_log.loss_history);

  const std::size_t k_steps = static_cast<std::size_t>(
      std::llround(cfg.horizon / tasks::kSampleSpacing));
  if (k_steps == 0)
    throw contract_error("rollout horizon shorter than the sample spacing");
  for (std::size_t k = 1; k <= k_steps; ++k)
    study.distances.push_back(static_cast<double>(k) * tasks::kSampleSpacing);

  const std::size_t rooms = study.heldout.size();
  study.oracle.assign(rooms, {});
  study.mela.assign(rooms, {});
  study.pretrained.assign(rooms, {});
  study.maml.assign(rooms, {});

  const Rng rollout_root = Rng(stream_seed(cfg.seed, kStreamRollout));
  std::exception_ptr failure;

#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < rooms; ++i) {
    try {
      const TaskDataset& d = study.heldout[i];
      const tasks::PolygonRoom room = tasks::room_from_hidden(d.oracle_hidden());
      Rng room_rng = rollout_root.derive(i);
      const tasks::BallState s0 = tasks::random_state(room, room_rng);

      const nn::ParamSet task_params =
          instantiate(models.mela, d.x_train(), d.y_train()).params;

      study.mela[i] = tasks::rollout_eval(
          net_predictor(models.task_net, task_params), room, s0, cfg.horizon);
      study.pretrained[i] = tasks::rollout_eval(
          net_predictor(models.task_net, models.pretrained.params), room, s0,
          cfg.horizon);
      study.maml[i] = tasks::rollout_eval(
          net_predictor(models.task_net, models.maml.params), room, s0,
          cfg.horizon);
      study.oracle[i] = tasks::rollout_eval(
          oracle_predictor(models.oracle_net, models.oracle.params,
                           d.oracle_hidden()),
          room, s0, cfg.horizon);
    } catch (...) {
#pragma omp critical(fig2_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  study.model = std::move(models.mela);

  add_rollout_rows(study.metrics, "oracle", study.distances, study.oracle);
  add_rollout_rows(study.metrics, "mela", study.distances, study.mela);
  add_rollout_rows(study.metrics, "pretrained", study.distances,
                   study.pretrained);
  add_rollout_rows(study.metrics, "maml_fo", study.distances, study.maml);
  study.metrics.sort_rows();
  return study;
}

PairedStudy run_interact(const MelaModel& model, std::size_t tasks_n,
                         std::uint64_t seed) {
  model.spec.validate();
  if (model.spec.task_net.input_width() != 1 ||
      model.spec.task_net.output_width() != 1)
    throw dimension_error("interactive selection runs on scalar tasks, net is " +
                          std::to_string(model.spec.task_net.input_width()) +
                          "->" +
                          std::to_string(model.spec.task_net.output_width()));
  if (tasks_n < 2) throw contract_error("paired study needs at least 2 tasks");

  PairedStudy study;
  study.selected.assign(tasks_n, 0.0);
  study.random.assign(tasks_n, 0.0);
  study.before.assign(tasks_n, 0.0);
  study.picked.assign(tasks_n, 0);
  const Rng root(seed);
  const Tensor x_star(1, 1, {kInteractQuery});
  std::exception_ptr failure;

#pragma omp parallel for schedule(dynamic)
  for (std::size_t t = 0; t < tasks_n; ++t) {
   try {
    Rng rng = root.derive(t);
    const TaskDataset d = tasks::gen_sinusoid_dataset(rng, t);
    const Tensor x_all = d.x_train();
    const Tensor y_all = d.y_train();

    const std::vector<std::int32_t> given_idx = {0, 1};
    const Tensor x_given = x_all.gather_rows(given_idx);
    const Tensor y_given = y_all.gather_rows(given_idx);

    std::vector<std::int32_t> cand_idx(kInteractCandidates);
    std::iota(cand_idx.begin(), cand_idx.end(),
              static_cast<std::int32_t>(kInteractGiven));
    const Tensor candidates = x_all.gather_rows(cand_idx);

    const SensitivityResult sel =
        sensitivity_select(model, x_given, y_given, x_star, candidates);
    const std::size_t pick_random = rng.below(kInteractCandidates);

    const tasks::SinusoidParams truth{d.oracle_hidden()[0],
                                      d.oracle_hidden()[1]};
    const double y_true_star = truth.value(kInteractQuery);

    {
      const TaskModel tm = instantiate(model, x_given, y_given);
      const double pred = tm.predict(x_star)(0, 0);
      study.before[t] = (pred - y_true_star) * (pred - y_true_star);
    }
    study.picked[t] = sel.selected;

    auto squared_error_with = [&](std::size_t c) {
      const std::vector<std::int32_t> pick = {
          static_cast<std::int32_t>(kInteractGiven + c)};
      const Tensor x3 = Tensor::vstack(x_given, x_all.gather_rows(pick));
      const Tensor y3 = Tensor::vstack(y_given, y_all.gather_rows(pick));
      const TaskModel tm = instantiate(model, x3, y3);
      const double pred = tm.predict(x_star)(0, 0);
      return (pred - y_true_star) * (pred - y_true_star);
    };
    study.selected[t] = squared_error_with(sel.selected);
    study.random[t] = squared_error_with(pick_random);
   } catch (...) {
#pragma omp critical(interact_failure)
    if (!failure) failure = std::current_exception();
   }
  }
  if (failure) std::rethrow_exception(failure);

  study.p_less = stats::paired_t_less(study.selected, study.random);
  return study;
}

PairedStudy run_influence_locality(const MelaModel& model,
                                   const std::vector<TaskDataset>& rooms,
                                   std::uint64_t seed) {
  model.spec.validate();
  if (model.spec.task_net.input_width() != 6)
    throw dimension_error(
        "influence locality expects position-window inputs of width 6");
  if (rooms.size() < 2) throw contract_error("paired study needs at least 2 rooms");

  constexpr std::size_t kTop = 10;
  for (const TaskDataset& d : rooms)
    if (d.train_idx.size() < kTop)
      throw contract_error("room dataset " + std::to_string(d.id) +
                           " has fewer than 10 train examples");

  PairedStudy study;
  study.selected.assign(rooms.size(), 0.0);
  study.random.assign(rooms.size(), 0.0);
  const Rng root(seed);
  std::exception_ptr failure;

#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < rooms.size(); ++i) {
   try {
    const TaskDataset& d = rooms[i];
    const tasks::PolygonRoom room = tasks::room_from_hidden(d.oracle_hidden());
    const Tensor x_tr = d.x_train();
    const Tensor y_tr = d.y_train();
    const std::size_t n = x_tr.rows();

    const InfluenceReport rep = influence(model, x_tr, y_tr);

    // Indices ranked by influence, ties to the lower index.
    std::vector<std::size_t> ranked(n);
    std::iota(ranked.begin(), ranked.end(), std::size_t{0});
    std::stable_sort(ranked.begin(), ranked.end(),
                     [&](std::size_t a, std::size_t b) {
                       return rep.influence[a] > rep.influence[b];
                     });

    auto nearest_vertex = [&](std::size_t row) {
      const tasks::Vec2 p{x_tr(row, 4), x_tr(row, 5)};
      double best = (p - room.corners[0]).norm();
      for (std::size_t c = 1; c < 4; ++c)
        best = std::min(best, (p - room.corners[c]).norm());
      return best;
    };

    double top_sum = 0.0;
    for (std::size_t k = 0; k < kTop; ++k) top_sum += nearest_vertex(ranked[k]);

    // 10 distinct uniform rows via a partial shuffle.
    Rng rng = root.derive(i);
    std::vector<std::size_t> pool(n);
    std::iota(pool.begin(), pool.end(), std::size_t{0});
    double rand_sum = 0.0;
    for (std::size_t k = 0; k < kTop; ++k) {
      const std::size_t j = k + rng.below(n - k);
      std::swap(pool[k], pool[j]);
      rand_sum += nearest_vertex(pool[k]);
    }

    study.selected[i] = top_sum / kTop;
    study.random[i] = rand_sum / kTop;
   } catch (...) {
#pragma omp critical(locality_failure)
    if (!failure) failure = std::current_exception();
   }
  }
  if (failure) std::rethrow_exception(failure);

  study.p_less = stats::paired_t_less(study.selected, study.random);
  return study;
}

}  // namespace mela::harness
