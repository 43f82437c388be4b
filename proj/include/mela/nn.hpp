#pragma once

#include <cstdint>
#include <vector>

#include "mela/rng.hpp"
#include "mela/tape.hpp"
#include "mela/tensor.hpp"

// Feedforward building blocks. The same forward pass serves networks that
// own their parameters (leaves) and networks whose parameters were produced
// by another network on the tape (the hypernetwork hook): both are just
// node ids.
namespace mela::nn {

// Layer widths [s_0, ..., s_out]; hidden layers use leaky relu, the last
// layer is linear.
struct MlpSpec {
  std::vector<std::size_t> sizes;
  double slope = 0.3;

  std::size_t layer_count() const { return sizes.size() - 1; }
  std::size_t input_width() const { return sizes.front(); }
  std::size_t output_width() const { return sizes.back(); }
  // Total scalar parameters: sum of s_{l-1} * s_l + s_l.
  std::size_t param_count() const;
  void validate() const;  // contract error on empty/zero sizes

  bool operator==(const MlpSpec& o) const = default;
};

// Owned parameter values for one MlpSpec: weights[l] is s_{l-1} x s_l,
// biases[l] is 1 x s_l.
struct ParamSet {
  std::vector<Tensor> weights;
  std::vector<Tensor> biases;

  std::size_t layer_count() const { return weights.size(); }
};

// Tape-resident parameters: same layout, but node ids (leaves or generated).
struct ParamNodes {
  std::vector<ad::NodeId> weights;
  std::vector<ad::NodeId> biases;
};

// Pushes every tensor of the set as a leaf onto the tape.
ParamNodes to_tape(const ParamSet& params, ad::Tape& tape);

// Affine + leaky relu per hidden layer, linear last layer. Works for any
// parameter provenance; gradients flow into whatever produced the nodes.
ad::NodeId mlp_forward(const MlpSpec& spec, const ParamNodes& params, ad::NodeId x,
                       ad::Tape& tape);

// Plain forward pass outside any tape, for prediction-only paths.
Tensor mlp_eval(const MlpSpec& spec, const ParamSet& params, const Tensor& x);

// Glorot-uniform weights (strictly inside the bound), biases exactly zero.
ParamSet init_params(const MlpSpec& spec, Rng& rng);

// ----------------------------------------------------------------- optimizer

struct AdamConfig {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Moment accumulators over a list of flat parameter blocks.
class AdamState {
public:
  AdamState(AdamConfig config, const std::vector<std::size_t>& block_sizes);

  // One update over all blocks; param/grad lists must match the block
  // layout given at construction. Raises numeric error on non-finite grads.
  void step(std::vector<Tensor*> params, const std::vector<const Tensor*>& grads);

  std::int64_t steps_taken() const { return t_; }
  const AdamConfig& config() const { return config_; }

private:
  AdamConfig config_;
  std::int64_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

// AdamState layout helper for a ParamSet (weights and biases interleaved
// per layer: W0, b0, W1, b1, ...).
std::vector<std::size_t> param_block_sizes(const ParamSet& params);
void adam_step(AdamState& state, ParamSet& params, const ParamSet& grads);

// ------------------------------------------------------------ flat transport

// Layer-major, row-major: W0 then b0 then W1 then b1, ... as a 1 x P row.
Tensor flatten_params(const ParamSet& params);
ParamSet unflatten_params(const MlpSpec& spec, const Tensor& flat);

}  // namespace mela::nn
