#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "mela/dataset.hpp"
#include "mela/model.hpp"
#include "mela/nn.hpp"

namespace mela::train {

// ---------------------------------------------------------------- meta-train

struct MetaTrainConfig {
  std::size_t meta_iters = 1000;  // outer iterations; each visits all datasets
  nn::AdamConfig adam;            // meta-optimizer (learning rate beta)
  std::uint64_t seed = 0;         // drives the per-iteration permutations
};

struct MetaTrainResult {
  std::vector<double> loss_history;  // task-specific test loss, one per update
  std::vector<std::uint64_t> visit_ids;  // dataset id per update, visit order
  std::uint64_t updates = 0;             // == meta_iters * ensemble size
};

// Outer loop: per iteration, visit the ensemble in a fresh random order; per
// dataset, encode the train split, generate the task network, take one Adam
// step on the recognition and generator parameters against the dataset's
// TEST loss. Fully determined by (model, ensemble, cfg).
MetaTrainResult meta_train(MelaModel& model,
                           const std::vector<TaskDataset>& ensemble,
                           const MetaTrainConfig& cfg);

// Mean of v[begin, begin+count); contract_error when the range is invalid.
double window_mean(const std::vector<double>& v, std::size_t begin,
                   std::size_t count);

// ---------------------------------------------------------------- evaluation

struct EvalConfig {
  std::size_t steps = 10;  // fine-tune steps K; curve has K+1 points
  nn::AdamConfig adam;     // fine-tune optimizer for the task parameters
};

struct EvalCurve {
  std::vector<double> mean;  // test loss per gradient step 0..K
  std::vector<double> se;    // standard error of each mean
  std::size_t tasks = 0;
};

// Per-task losses, [task][step]; kept so paired statistics stay possible.
struct EvalTable {
  std::vector<std::vector<double>> losses;
};

// A model under evaluation: how to build the task-specific starting network
// for one dataset. All models share the same fine-tuning harness below, so
// their curves are comparable point for point.
struct TaskModelSource {
  std::string label;  // {mela, pretrained, maml_fo, oracle}
  nn::MlpSpec net;
  // Input adapter (identity for everyone but the oracle, which appends the
  // task's true hidden parameters to every row).
  std::function<Tensor(const TaskDataset&, const Tensor&)> map_inputs;
  // Task-specific initial parameters (generated for the meta-learner, the
  // shared trained set for the baselines).
  std::function<nn::ParamSet(const TaskDataset&)> instantiate;
};

TaskModelSource mela_source(const MelaModel& model);

// Step-0 loss from the instantiated network on the test split, then `steps`
// Adam updates on the task parameters alone against the train split,
// recording the test loss after each. Parallel across tasks; per-task
// results land in their own slots so aggregation is order-independent.
EvalTable evaluate_table(const TaskModelSource& source,
                         const std::vector<TaskDataset>& held_out,
                         const EvalConfig& cfg);

EvalCurve summarize(const EvalTable& table);

EvalCurve evaluate(const TaskModelSource& source,
                   const std::vector<TaskDataset>& held_out,
                   const EvalConfig& cfg);
EvalCurve evaluate(const MelaModel& model,
                   const std::vector<TaskDataset>& held_out,
                   const EvalConfig& cfg);

// Shared fine-tuning inner loop (also used by baseline evaluation): loss
// curve of `params` on the test pair while Adam-stepping on the train pair.
std::vector<double> fine_tune_curve(const nn::MlpSpec& net, nn::ParamSet params,
                                    const Tensor& x_train, const Tensor& y_train,
                                    const Tensor& x_test, const Tensor& y_test,
                                    std::size_t steps,
                                    const nn::AdamConfig& adam);

// Plain mean squared error over all entries (matches the graph loss).
double mse(const Tensor& pred, const Tensor& target);

}  // namespace mela::train
