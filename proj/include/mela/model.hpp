#pragma once

#include <cstdint>
#include <vector>

#include "mela/nn.hpp"
#include "mela/rng.hpp"
#include "mela/tape.hpp"
#include "mela/tensor.hpp"

// The meta-learning autoencoder: a recognition network that compresses a
// dataset (X, Y) into a model code z, and per-layer generator networks that
// expand z into the weights of a task network. The composition
//
//   prediction = f(x; theta),  theta = g(z),  z = m(X, Y)
//
// is one differentiable graph, so meta-training updates the recognition and
// generator parameters through the task network's own loss.
namespace mela {

// ------------------------------------------------------------------- specs

struct MelaSpec {
  nn::MlpSpec task_net;  // the generated network f
  std::size_t s_pool = 200;
  std::size_t s_code = 20;
  nn::MlpSpec block1;    // (s_0 + s_out) -> s_pool, pooled over examples
  nn::MlpSpec block2;    // s_pool -> s_code
  std::vector<nn::MlpSpec> weight_gens;  // s_code -> s_{l-1} * s_l, per layer
  std::vector<nn::MlpSpec> bias_gens;    // s_code -> s_l, per layer

  // The stock layout: block1 hides 3x60, block2 2x60, generators 3x60,
  // all leaky relu 0.3 with linear last layers.
  static MelaSpec standard(nn::MlpSpec task_net, std::size_t s_pool = 200,
                           std::size_t s_code = 20);
  void validate() const;
  std::size_t param_count() const;  // total trainable scalars (mu + gamma)
};

// --------------------------------------------------------------- parameters

struct MelaModel {
  MelaSpec spec;
  nn::ParamSet mu1, mu2;               // recognition blocks
  std::vector<nn::ParamSet> gen_w;     // per task-net layer
  std::vector<nn::ParamSet> gen_b;

  static MelaModel init(MelaSpec spec, Rng& rng);

  // Canonical traversal order: mu1, mu2, then genW/genB per task layer,
  // each as W0, b0, W1, b1, ... This order is shared by the optimizer,
  // flattening, and gradient extraction.
  std::vector<Tensor*> param_tensors();
  std::vector<const Tensor*> param_tensors() const;
  std::vector<std::size_t> param_block_sizes() const;

  Tensor flatten() const;                 // 1 x param_count, canonical order
  void load_flat(const Tensor& flat);     // inverse of flatten
};

// Model parameters pushed onto a tape as leaves. `ordered` mirrors the
// canonical traversal so gradients can be read back positionally.
struct MelaNodes {
  nn::ParamNodes mu1, mu2;
  std::vector<nn::ParamNodes> gen_w, gen_b;
  std::vector<ad::NodeId> ordered;
};

MelaNodes push_params(const MelaModel& model, ad::Tape& tape);

// ------------------------------------------------------------ graph builders

struct Recognition {
  ad::NodeId z;       // 1 x s_code
  ad::NodeId pooled;  // 1 x s_pool
  std::vector<ad::ArgmaxRecord> records;
};

// concat(X, Y) -> block1 -> row max-pool -> block2. x/y are tape nodes so
// callers can differentiate z w.r.t. the examples themselves.
Recognition recognize_graph(const MelaSpec& spec, const MelaNodes& params,
                            ad::NodeId x, ad::NodeId y, ad::Tape& tape);

// z -> per-layer generator MLPs -> reshaped weight/bias nodes.
nn::ParamNodes generate_graph(const MelaSpec& spec, const MelaNodes& params,
                              ad::NodeId z, ad::Tape& tape);

// The full composed chain on one tape: recognize on the train split,
// generate theta, predict the test inputs, mse against the test targets.
struct LossGraph {
  ad::Tape tape;
  MelaNodes params;
  Recognition rec;
  nn::ParamNodes theta;
  ad::NodeId x_train, y_train, x_test;  // leaves
  ad::NodeId pred;
  ad::NodeId loss;  // scalar
};

LossGraph build_loss_graph(const MelaModel& model, const Tensor& x_train,
                           const Tensor& y_train, const Tensor& x_test,
                           const Tensor& y_test);

// -------------------------------------------------------------- inference

// A materialized task network produced from one example set.
struct TaskModel {
  nn::MlpSpec net;
  nn::ParamSet params;
  Tensor z;
  std::vector<ad::ArgmaxRecord> records;  // pool winners over the examples

  Tensor predict(const Tensor& x) const { return nn::mlp_eval(net, params, x); }
};

TaskModel instantiate(const MelaModel& model, const Tensor& x, const Tensor& y);

// Convenience: z value only (fresh throwaway tape).
Tensor recognize(const MelaModel& model, const Tensor& x, const Tensor& y);

// ---------------------------------------------------------------- influence

// Per-example share of won pool columns; integer counts are exact.
struct InfluenceReport {
  std::vector<std::int32_t> wins;     // per example, sums to s_pool
  std::vector<double> influence;      // wins / s_pool, sums to 1
};

InfluenceReport influence_from_records(const std::vector<ad::ArgmaxRecord>& records,
                                       std::size_t n_examples, std::size_t s_pool);
InfluenceReport influence(const MelaModel& model, const Tensor& x, const Tensor& y);

// Keep only the k most influential examples (ties to the lower index) and
// re-instantiate from that subset.
struct SubsetModel {
  TaskModel model;
  std::vector<std::int32_t> kept;  // indices into the original example set
};

SubsetModel predict_from_subset(const MelaModel& model, const Tensor& x,
                                const Tensor& y, std::size_t k);

// ------------------------------------------------------------- sensitivity

// Which candidate measurement would pin down the prediction at x_star the
// most: S_i = J * dz/dy'_i where J = d f(x_star) / dz, scored by |det S_i|.
struct SensitivityResult {
  std::vector<Tensor> matrices;  // s_out x s_out per candidate
  std::vector<double> scores;    // |det|
  std::size_t selected = 0;      // argmax score, smallest index on ties
};

SensitivityResult sensitivity_select(const MelaModel& model, const Tensor& x_given,
                                     const Tensor& y_given, const Tensor& x_star,
                                     const Tensor& candidates);

// Same quantity via one backward sweep through the whole composed graph
// (no factorization). Kept as an independent route for cross-checking.
SensitivityResult sensitivity_direct(const MelaModel& model, const Tensor& x_given,
                                     const Tensor& y_given, const Tensor& x_star,
                                     const Tensor& candidates);

}  // namespace mela
