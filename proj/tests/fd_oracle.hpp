#pragma once

#include <functional>
#include <vector>

#include "mela/tensor.hpp"

// Central finite differences as an independent gradient oracle. The scalar
// function is re-evaluated from scratch at every perturbed input, so the
// oracle shares no code path with the tape's backward sweep.
namespace mela::testutil {

inline constexpr double kFdStep = 1e-5;

using ScalarFn = std::function<double(const std::vector<Tensor>&)>;

inline std::vector<Tensor> fd_gradients(const ScalarFn& f, std::vector<Tensor> inputs,
                                        double step = kFdStep) {
  std::vector<Tensor> grads;
  grads.reserve(inputs.size());
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    Tensor g(inputs[t].rows(), inputs[t].cols());
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double keep = inputs[t][i];
      inputs[t][i] = keep + step;
      const double hi = f(inputs);
      inputs[t][i] = keep - step;
      const double lo = f(inputs);
      inputs[t][i] = keep;
      g[i] = (hi - lo) / (2.0 * step);
    }
    grads.push_back(std::move(g));
  }
  return grads;
}

// Elementwise relative error with a floor so near-zero gradients compare
// on an absolute scale instead of dividing by noise.
inline double rel_err(double a, double b) {
  const double scale = std::max({std::abs(a), std::abs(b), 1e-3});
  return std::abs(a - b) / scale;
}

inline double max_rel_err(const std::vector<Tensor>& analytic,
                          const std::vector<Tensor>& fd) {
  double worst = 0.0;
  for (std::size_t t = 0; t < analytic.size(); ++t)
    for (std::size_t i = 0; i < analytic[t].size(); ++i)
      worst = std::max(worst, rel_err(analytic[t][i], fd[t][i]));
  return worst;
}

}  // namespace mela::testutil
