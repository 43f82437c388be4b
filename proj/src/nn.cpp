#include "mela/nn.hpp"

#include <cmath>
#include <string>

#include "mela/errors.hpp"
#include "mela/kernels.hpp"

namespace mela::nn {

// --------------------------------------------------------------------- spec

std::size_t MlpSpec::param_count() const {
  std::size_t total = 0;
  for (std::size_t l = 1; l < sizes.size(); ++l)
    total += sizes[l - 1] * sizes[l] + sizes[l];
  return total;
}

void MlpSpec::validate() const {
  if (sizes.size() < 2)
    throw contract_error("mlp needs at least input and output sizes");
  for (std::size_t s : sizes)
    if (s == 0) throw contract_error("mlp layer size must be >= 1");
  if (!(slope > 0.0 && slope <= 1.0))
    throw contract_error("mlp slope must lie in (0, 1]");
}

// ------------------------------------------------------------------ forward

ParamNodes to_tape(const ParamSet& params, ad::Tape& tape) {
  ParamNodes nodes;
  nodes.weights.reserve(params.weights.size());
  nodes.biases.reserve(params.biases.size());
  for (const Tensor& w : params.weights) nodes.weights.push_back(tape.leaf(w));
  for (const Tensor& b : params.biases) nodes.biases.push_back(tape.leaf(b));
  return nodes;
}

ad::NodeId mlp_forward(const MlpSpec& spec, const ParamNodes& params, ad::NodeId x,
                       ad::Tape& tape) {
  spec.validate();
  const std::size_t layers = spec.layer_count();
  if (params.weights.size() != layers || params.biases.size() != layers)
    throw dimension_error("parameter layer count does not match spec");
  if (tape.value(x).cols() != spec.input_width())
    throw dimension_error("input width " + tape.value(x).shape_str() +
                          " does not match spec s_0 = " +
                          std::to_string(spec.input_width()));

  ad::NodeId h = x;
  for (std::size_t l = 0; l < layers; ++l) {
    const Tensor& w = tape.value(params.weights[l]);
    if (w.rows() != spec.sizes[l] || w.cols() != spec.sizes[l + 1])
      throw dimension_error("layer " + std::to_string(l) + " weight shape " +
                            w.shape_str() + " does not match spec");
    h = tape.add_bias(tape.matmul(h, params.weights[l]), params.biases[l]);
    if (l + 1 < layers) h = tape.leaky_relu(h, spec.slope);
  }
  return h;
}

Tensor mlp_eval(const MlpSpec& spec, const ParamSet& params, const Tensor& x) {
  spec.validate();
  if (x.cols() != spec.input_width())
    throw dimension_error("input width " + x.shape_str() +
                          " does not match spec s_0 = " +
                          std::to_string(spec.input_width()));
  Tensor h = x;
  const std::size_t layers = spec.layer_count();
  for (std::size_t l = 0; l < layers; ++l) {
    const Tensor& w = params.weights[l];
    const Tensor& b = params.biases[l];
    Tensor next(h.rows(), w.cols());
    kern::matmul_nn(h.data(), w.data(), next.data(), h.rows(), h.cols(), w.cols(), false);
    kern::add_bias(next.data(), b.data(), next.data(), next.rows(), next.cols());
    if (l + 1 < layers)
      kern::leaky_relu(next.data(), next.data(), next.size(), spec.slope);
    h = std::move(next);
  }
  return h;
}

// --------------------------------------------------------------------- init

ParamSet init_params(const MlpSpec& spec, Rng& rng) {
  spec.validate();
  ParamSet p;
  for (std::size_t l = 1; l < spec.sizes.size(); ++l) {
    const std::size_t fan_in = spec.sizes[l - 1];
    const std::size_t fan_out = spec.sizes[l];
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Tensor w(fan_in, fan_out);
    for (double& v : w.flat()) {
      do {
        v = rng.uniform(-bound, bound);
      } while (v == -bound);  // keep samples strictly inside the bound
    }
    p.weights.push_back(std::move(w));
    p.biases.emplace_back(1, fan_out);  // exactly zero
  }
  return p;
}

// --------------------------------------------------------------------- adam

AdamState::AdamState(AdamConfig config, const std::vector<std::size_t>& block_sizes)
    : config_(config) {
  m_.reserve(block_sizes.size());
  v_.reserve(block_sizes.size());
  for (std::size_t n : block_sizes) {
    m_.emplace_back(n, 0.0);
    v_.emplace_back(n, 0.0);
  }
}

void AdamState::step(std::vector<Tensor*> params,
                     const std::vector<const Tensor*>& grads) {
  if (params.size() != m_.size() || grads.size() != m_.size())
    throw contract_error("adam block count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i]->size() != m_[i].size() || grads[i]->size() != m_[i].size())
      throw dimension_error("adam block " + std::to_string(i) + " size mismatch");
    if (!grads[i]->all_finite())
      throw numeric_error("non-finite gradient in adam block " + std::to_string(i));
  }
  ++t_;
  const double corr1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double corr2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i)
    kern::adam_update(params[i]->data(), grads[i]->data(), m_[i].data(), v_[i].data(),
                      m_[i].size(), config_.lr, config_.beta1, config_.beta2,
                      config_.eps, corr1, corr2);
}

std::vector<std::size_t> param_block_sizes(const ParamSet& params) {
  std::vector<std::size_t> sizes;
  for (std::size_t l = 0; l < params.layer_count(); ++l) {
    sizes.push_back(params.weights[l].size());
    sizes.push_back(params.biases[l].size());
  }
  return sizes;
}

void adam_step(AdamState& state, ParamSet& params, const ParamSet& grads) {
  std::vector<Tensor*> p;
  std::vector<const Tensor*> g;
  for (std::size_t l = 0; l < params.layer_count(); ++l) {
    p.push_back(&params.weights[l]);
    p.push_back(&params.biases[l]);
    g.push_back(&grads.weights[l]);
    g.push_back(&grads.biases[l]);
  }
  state.step(std::move(p), g);
}

// ----------------------------------------------------------- flat transport

Tensor flatten_params(const ParamSet& params) {
  std::size_t total = 0;
  for (std::size_t l = 0; l < params.layer_count(); ++l)
    total += params.weights[l].size() + params.biases[l].size();
  Tensor flat(1, total);
  std::size_t at = 0;
  for (std::size_t l = 0; l < params.layer_count(); ++l) {
    for (double v : params.weights[l].flat()) flat[at++] = v;
    for (double v : params.biases[l].flat()) flat[at++] = v;
  }
  return flat;
}

ParamSet unflatten_params(const MlpSpec& spec, const Tensor& flat) {
  spec.validate();
  if (flat.size() != spec.param_count())
    throw dimension_error("flat parameter length " + std::to_string(flat.size()) +
                          " does not match spec P = " +
                          std::to_string(spec.param_count()));
  ParamSet p;
  std::size_t at = 0;
  for (std::size_t l = 1; l < spec.sizes.size(); ++l) {
    Tensor w(spec.sizes[l - 1], spec.sizes[l]);
    for (double& v : w.flat()) v = flat[at++];
    Tensor b(1, spec.sizes[l]);
    for (double& v : b.flat()) v = flat[at++];
    p.weights.push_back(std::move(w));
    p.biases.push_back(std::move(b));
  }
  return p;
}

}  // namespace mela::nn
