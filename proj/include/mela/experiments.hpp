#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mela/baselines.hpp"
#include "mela/config.hpp"
#include "mela/metrics.hpp"
#include "mela/model.hpp"
#include "mela/tasks.hpp"
#include "mela/train.hpp"

namespace mela::harness {

// Named seed streams derived from ExperimentConfig::seed. Central so every
// entry point (CLI, tests, acceptance) replays the same randomness.
enum SeedStream : std::uint64_t {
  kStreamTrainSet = 1,
  kStreamHeldout = 2,
  kStreamInit = 3,
  kStreamMeta = 4,
  kStreamPretrain = 5,
  kStreamMaml = 6,
  kStreamOracle = 7,
  kStreamRollout = 8,
  kStreamInteract = 9,
  kStreamLocality = 10,
};

std::uint64_t stream_seed(std::uint64_t root_seed, SeedStream stream);

// The generated network for each task family: a sinusoid regressor or a
// three-position-window dynamics predictor.
nn::MlpSpec family_task_net(const std::string& family);
TaskFamily family_from_name(const std::string& family);

// ------------------------------------------------------------ shared training

// Every learner trained on the same ensemble, seeds derived from cfg.seed.
// MAML's outer-step budget matches the recognition model's update count
// (meta_iters * ensemble size) so the comparison is update-for-update fair.
struct TrainedModels {
  nn::MlpSpec task_net;
  nn::MlpSpec oracle_net;
  MelaModel mela;
  train::MetaTrainResult mela_log;
  baselines::PretrainResult pretrained;
  baselines::MamlResult maml;
  baselines::PretrainResult oracle;
};

TrainedModels train_all(const ExperimentConfig& cfg,
                        const std::vector<TaskDataset>& ensemble,
                        bool with_oracle);

// ------------------------------------------------------------------ sinusoid

// Held-out fine-tune curves for the recognition model and both shared
// baselines; rows land in a long-format metric table under experiment "fig3".
struct SinusoidStudy {
  MelaModel model;
  std::vector<double> meta_loss;  // per meta-update
  train::EvalTable mela;
  train::EvalTable pretrained;
  train::EvalTable maml;
  MetricTable metrics;
  std::uint64_t config_hash = 0;
};

SinusoidStudy run_fig3(const ExperimentConfig& cfg);

// -------------------------------------------------------------------- bounce

// Closed-loop rollout error per sampled distance, one row of errors per
// held-out room, for four models; metric rows under experiment "fig2".
struct BounceStudy {
  MelaModel model;
  std::vector<double> meta_loss;
  std::vector<double> distances;                // 0.1, 0.2, ..., horizon
  std::vector<std::vector<double>> oracle;      // [room][distance]
  std::vector<std::vector<double>> mela;
  std::vector<std::vector<double>> pretrained;
  std::vector<std::vector<double>> maml;
  std::vector<TaskDataset> heldout;             // the rooms themselves
  MetricTable metrics;
  std::uint64_t config_hash = 0;
};

BounceStudy run_fig2(const ExperimentConfig& cfg);

// --------------------------------------------------------- paired experiments

// Interactive example request on fresh sinusoid tasks: from 2 given examples
// and 8 candidates, add either the sensitivity-selected candidate or a
// uniformly random one (with its true measurement), re-instantiate, and score
// the squared error at the query input. p_less tests selected < random.
struct PairedStudy {
  std::vector<double> selected;
  std::vector<double> random;
  double p_less = 1.0;
  // Interactive study extras (empty for the locality study): the error before
  // any candidate is added, and which candidate the sensitivity score picked.
  std::vector<double> before;
  std::vector<std::size_t> picked;
};

inline constexpr double kInteractQuery = -4.0;
inline constexpr std::size_t kInteractGiven = 2;
inline constexpr std::size_t kInteractCandidates = 8;

PairedStudy run_interact(const MelaModel& model, std::size_t tasks,
                         std::uint64_t seed);

// Influence locality on bounce rooms: mean nearest-vertex distance of the 10
// most influential train examples vs 10 uniformly drawn ones, paired per
// room. An example's position is the most recent one in its input window.
PairedStudy run_influence_locality(const MelaModel& model,
                                   const std::vector<TaskDataset>& rooms,
                                   std::uint64_t seed);

}  // namespace mela::harness
