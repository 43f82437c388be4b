#include "mela/train.hpp"

#include <cmath>
#include <numeric>
#include <string>

#include "mela/errors.hpp"
#include "mela/rng.hpp"
#include "mela/tape.hpp"

namespace mela::train {

// ---------------------------------------------------------------- meta-train

MetaTrainResult meta_train(MelaModel& model,
                           const std::vector<TaskDataset>& ensemble,
                           const MetaTrainConfig& cfg) {
  model.spec.validate();
  if (ensemble.empty())
    throw empty_dataset_error("meta-training needs a non-empty ensemble");
  for (const TaskDataset& d : ensemble) {
    if (d.x.cols() != model.spec.task_net.input_width() ||
        d.y.cols() != model.spec.task_net.output_width())
      throw dimension_error("dataset " + std::to_string(d.id) +
                            " is " + d.x.shape_str() + " -> " + d.y.shape_str() +
                            ", task net wants " +
                            std::to_string(model.spec.task_net.input_width()) +
                            " -> " +
                            std::to_string(model.spec.task_net.output_width()));
  }

  MetaTrainResult result;
  result.loss_history.reserve(cfg.meta_iters * ensemble.size());
  result.visit_ids.reserve(cfg.meta_iters * ensemble.size());
  nn::AdamState adam(cfg.adam, model.param_block_sizes());
  Rng rng = Rng(cfg.seed).derive(0x6d657461);  // permutation stream

  std::vector<std::size_t> order(ensemble.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (std::size_t iter = 0; iter < cfg.meta_iters; ++iter) {
    rng.shuffle(order);
    for (std::size_t slot = 0; slot < order.size(); ++slot) {
      const TaskDataset& d = ensemble[order[slot]];
      try {
        LossGraph g = build_loss_graph(model, d.x_train(), d.y_train(),
                                       d.x_test(), d.y_test());
        result.loss_history.push_back(g.tape.value(g.loss)(0, 0));
        result.visit_ids.push_back(d.id);
        const ad::Gradients grads = g.tape.backward(g.loss);
        std::vector<const Tensor*> grad_ptrs;
        grad_ptrs.reserve(g.params.ordered.size());
        for (ad::NodeId id : g.params.ordered) grad_ptrs.push_back(&grads.at(id));
        adam.step(model.param_tensors(), grad_ptrs);
        ++result.updates;
      } catch (const numeric_error& e) {
        throw numeric_error("meta-training diverged at iteration " +
                            std::to_string(iter) + ", task id " +
                            std::to_string(d.id) + ": " + e.what());
      }
    }
  }
  return result;
}

double window_mean(const std::vector<double>& v, std::size_t begin,
                   std::size_t count) {
  if (count == 0 || begin + count > v.size())
    throw contract_error("window [" + std::to_string(begin) + ", " +
                         std::to_string(begin + count) + ") exceeds " +
                         std::to_string(v.size()) + " entries");
  double sum = 0.0;
  for (std::size_t i = begin; i < begin + count; ++i) sum += v[i];
  return sum / static_cast<double>(count);
}

// ---------------------------------------------------------------- evaluation

double mse(const Tensor& pred, const Tensor& target) {
  if (!pred.same_shape(target))
    throw dimension_error("mse over " + pred.shape_str() + " vs " +
                          target.shape_str());
  if (pred.empty()) throw empty_dataset_error("mse over zero examples");
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - target[i];
    sum += d * d;
  }
  return sum / static_cast<double>(pred.size());
}

std::vector<double> fine_tune_curve(const nn::MlpSpec& net, nn::ParamSet params,
                                    const Tensor& x_train, const Tensor& y_train,
                                    const Tensor& x_test, const Tensor& y_test,
                                    std::size_t steps,
                                    const nn::AdamConfig& adam_cfg) {
  std::vector<double> losses;
  losses.reserve(steps + 1);
  losses.push_back(mse(nn::mlp_eval(net, params, x_test), y_test));

  nn::AdamState adam(adam_cfg, nn::param_block_sizes(params));
  for (std::size_t k = 0; k < steps; ++k) {
    ad::Tape tape;
    nn::ParamNodes nodes = nn::to_tape(params, tape);
    const ad::NodeId x = tape.leaf(x_train);
    const ad::NodeId pred = nn::mlp_forward(net, nodes, x, tape);
    const ad::NodeId loss = tape.mse(pred, y_train);
    const ad::Gradients grads = tape.backward(loss);
    nn::ParamSet grad_set;
    for (std::size_t l = 0; l < nodes.weights.size(); ++l) {
      grad_set.weights.push_back(grads.at(nodes.weights[l]));
      grad_set.biases.push_back(grads.at(nodes.biases[l]));
    }
    nn::adam_step(adam, params, grad_set);
    losses.push_back(mse(nn::mlp_eval(net, params, x_test), y_test));
  }
  return losses;
}

TaskModelSource mela_source(const MelaModel& model) {
  TaskModelSource src;
  src.label = "mela";
  src.net = model.spec.task_net;
  src.map_inputs = [](const TaskDataset&, const Tensor& x) { return x; };
  src.instantiate = [&model](const TaskDataset& d) {
    return mela::instantiate(model, d.x_train(), d.y_train()).params;
  };
  return src;
}

EvalTable evaluate_table(const TaskModelSource& source,
                         const std::vector<TaskDataset>& held_out,
                         const EvalConfig& cfg) {
  if (held_out.empty())
    throw empty_dataset_error("evaluation needs at least one task");
  EvalTable table;
  table.losses.assign(held_out.size(), {});

  std::exception_ptr failure;

#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < held_out.size(); ++i) {
    try {
      const TaskDataset& d = held_out[i];
      const Tensor x_tr = source.map_inputs(d, d.x_train());
      const Tensor x_te = source.map_inputs(d, d.x_test());
      table.losses[i] = fine_tune_curve(source.net, source.instantiate(d),
                                        x_tr, d.y_train(), x_te, d.y_test(),
                                        cfg.steps, cfg.adam);
    } catch (...) {
#pragma omp critical(eval_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  return table;
}

EvalCurve summarize(const EvalTable& table) {
  if (table.losses.empty()) throw empty_dataset_error("empty evaluation table");
  const std::size_t points = table.losses.front().size();
  for (const auto& row : table.losses)
    if (row.size() != points)
      throw dimension_error("ragged evaluation table");

  EvalCurve curve;
  curve.tasks = table.losses.size();
  curve.mean.resize(points);
  curve.se.resize(points);
  const auto n = static_cast<double>(curve.tasks);
  for (std::size_t k = 0; k < points; ++k) {
    double sum = 0.0;
    for (const auto& row : table.losses) sum += row[k];
    const double mean = sum / n;
    double sq = 0.0;
    for (const auto& row : table.losses) {
      const double dev = row[k] - mean;
      sq += dev * dev;
    }
    curve.mean[k] = mean;
    curve.se[k] = curve.tasks > 1 ? std::sqrt(sq / (n - 1.0) / n) : 0.0;
  }
  return curve;
}

EvalCurve evaluate(const TaskModelSource& source,
                   const std::vector<TaskDataset>& held_out,
                   const EvalConfig& cfg) {
  return summarize(evaluate_table(source, held_out, cfg));
}

EvalCurve evaluate(const MelaModel& model,
                   const std::vector<TaskDataset>& held_out,
                   const EvalConfig& cfg) {
  return evaluate(mela_source(model), held_out, cfg);
}

}  // namespace mela::train
