#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "mela/dataset.hpp"
#include "mela/nn.hpp"
#include "mela/train.hpp"

namespace mela::baselines {

// --------------------------------------------------------------- pretrained

struct TrainStop {
  std::size_t max_steps = 20000;  // optimizer-step cap
  std::size_t eval_every = 100;   // validation cadence, in steps
  std::size_t patience = 10;      // evaluations without a new best
};

struct PretrainConfig {
  nn::AdamConfig adam;
  std::size_t batch = 100;
  TrainStop stop;
  std::uint64_t seed = 0;
};

struct PretrainResult {
  nn::ParamSet params;              // best-validation snapshot
  std::vector<double> val_history;  // validation loss per evaluation
  std::size_t steps = 0;            // optimizer steps actually taken
};

// One network fit to the union of every dataset's train split, shuffled per
// epoch; validation on the union of test splits stops training at a plateau.
PretrainResult pretrain(const nn::MlpSpec& net,
                        const std::vector<TaskDataset>& ensemble,
                        const PretrainConfig& cfg);

// ------------------------------------------------------------------- oracle

// Input width grows by the hidden-parameter width: each row is x with the
// task's true generating parameters appended.
nn::MlpSpec oracle_spec(const nn::MlpSpec& net, std::size_t hidden_width);

Tensor append_hidden(const TaskDataset& d, const Tensor& x);

// Same trainer as pretrain, on (x ++ hidden) -> y rows.
PretrainResult oracle_train(const nn::MlpSpec& net,
                            const std::vector<TaskDataset>& ensemble,
                            const PretrainConfig& cfg);

// ----------------------------------------------------------- first-order maml

struct MamlConfig {
  nn::AdamConfig adam;           // outer optimizer
  double inner_lr = 0.01;        // inner plain-SGD rate
  std::size_t inner_steps = 1;   // adaptation steps per task
  std::size_t meta_steps = 10000;  // total per-task outer updates
  std::uint64_t seed = 0;
};

struct MamlResult {
  nn::ParamSet params;               // best-epoch snapshot (see maml_train)
  std::vector<double> loss_history;  // adapted test loss per outer update
  std::size_t best_step = 0;  // outer updates inside the snapshot
  double best_loss = std::numeric_limits<double>::infinity();  // its epoch mean
};

// First-order variant: inner adaptation by plain SGD on the train split;
// the outer Adam update applies the adapted parameters' test-split gradient
// directly to the shared initialization (adaptation Jacobian treated as
// identity). Outputs are labeled "maml_fo" to keep the approximation visible.
//
// The single-task outer updates make long runs drift-prone, so the returned
// parameters are the snapshot taken at the end of the full pass over the
// ensemble with the lowest mean loss (ties keep the earliest). If no full
// pass completes, the final parameters are returned with best_loss infinite.
// Should the loss turn non-finite after a snapshot exists, the run stops
// there and keeps the snapshot; before any snapshot it is an error.
MamlResult maml_train(const nn::MlpSpec& net,
                      const std::vector<TaskDataset>& ensemble,
                      const MamlConfig& cfg);

// --------------------------------------------------------------- eval sources

// Baselines start every task from the same trained parameters.
train::TaskModelSource shared_source(const std::string& label,
                                     const nn::MlpSpec& net,
                                     const nn::ParamSet& params);

// Oracle source: shared parameters plus the hidden-append input adapter.
train::TaskModelSource oracle_source(const nn::MlpSpec& widened,
                                     const nn::ParamSet& params);

}  // namespace mela::baselines
