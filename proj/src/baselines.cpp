#include "mela/baselines.hpp"

#include <cstring>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <utility>

#include "mela/errors.hpp"
#include "mela/rng.hpp"
#include "mela/tape.hpp"

namespace mela::baselines {
namespace {

constexpr std::uint64_t kInitStream = 0x696e6974;   // parameter init
constexpr std::uint64_t kOrderStream = 0x6f726472;  // visit order / batches

struct SplitUnion {
  Tensor x;
  Tensor y;
};

// Every dataset's chosen split, input-mapped and stacked in ensemble order.
template <typename MapFn>
SplitUnion stack_split(const std::vector<TaskDataset>& ensemble, bool train,
                       MapFn&& map, const char* what) {
  std::vector<std::pair<Tensor, Tensor>> parts;
  parts.reserve(ensemble.size());
  std::size_t rows = 0;
  for (const TaskDataset& d : ensemble) {
    Tensor xm = map(d, train ? d.x_train() : d.x_test());
    Tensor ym = train ? d.y_train() : d.y_test();
    rows += ym.rows();
    parts.emplace_back(std::move(xm), std::move(ym));
  }
  if (rows == 0)
    throw empty_dataset_error(std::string(what) + " union has no rows");

  SplitUnion u{Tensor(rows, parts.front().first.cols()),
               Tensor(rows, parts.front().second.cols())};
  std::size_t at = 0;
  for (const auto& [xs, ys] : parts) {
    if (xs.cols() != u.x.cols() || ys.cols() != u.y.cols())
      throw dimension_error(std::string(what) +
                            " union mixes row widths: " + xs.shape_str() +
                            " x / " + ys.shape_str() + " y");
    std::memcpy(u.x.data() + at * u.x.cols(), xs.data(),
                xs.size() * sizeof(double));
    std::memcpy(u.y.data() + at * u.y.cols(), ys.data(),
                ys.size() * sizeof(double));
    at += ys.rows();
  }
  return u;
}

// One backward pass: parameter gradients of the mean-squared loss, and
// optionally the loss value itself.
nn::ParamSet loss_grads(const nn::MlpSpec& net, const nn::ParamSet& params,
                        const Tensor& x_in, const Tensor& y_in,
                        double* loss_out) {
  ad::Tape tape;
  nn::ParamNodes nodes = nn::to_tape(params, tape);
  const ad::NodeId x = tape.leaf(x_in);
  const ad::NodeId pred = nn::mlp_forward(net, nodes, x, tape);
  const ad::NodeId loss = tape.mse(pred, y_in);
  if (loss_out != nullptr) *loss_out = tape.value(loss)(0, 0);
  const ad::Gradients grads = tape.backward(loss);
  nn::ParamSet g;
  g.weights.reserve(nodes.weights.size());
  g.biases.reserve(nodes.biases.size());
  for (std::size_t l = 0; l < nodes.weights.size(); ++l) {
    g.weights.push_back(grads.at(nodes.weights[l]));
    g.biases.push_back(grads.at(nodes.biases[l]));
  }
  return g;
}

void sgd_step(nn::ParamSet& params, const nn::ParamSet& grads, double lr) {
  for (std::size_t l = 0; l < params.weights.size(); ++l) {
    auto pw = params.weights[l].flat();
    auto gw = grads.weights[l].flat();
    for (std::size_t i = 0; i < pw.size(); ++i) pw[i] -= lr * gw[i];
    auto pb = params.biases[l].flat();
    auto gb = grads.biases[l].flat();
    for (std::size_t i = 0; i < pb.size(); ++i) pb[i] -= lr * gb[i];
  }
}

// Shared mini-batch trainer used by both pretrain and oracle_train once the
// row unions are built.
PretrainResult fit_shared(const nn::MlpSpec& net, const SplitUnion& train,
                          const SplitUnion& val, const PretrainConfig& cfg) {
  net.validate();
  if (cfg.batch == 0) throw contract_error("batch size must be positive");
  if (cfg.stop.eval_every == 0)
    throw contract_error("validation cadence must be positive");
  if (net.input_width() != train.x.cols() ||
      net.output_width() != train.y.cols())
    throw dimension_error("network " + std::to_string(net.input_width()) +
                          "->" + std::to_string(net.output_width()) +
                          " does not fit rows " + train.x.shape_str() + " -> " +
                          train.y.shape_str());

  const Rng root(cfg.seed);
  Rng init_rng = root.derive(kInitStream);
  Rng order_rng = root.derive(kOrderStream);
  nn::ParamSet params = nn::init_params(net, init_rng);
  nn::AdamState adam(cfg.adam, nn::param_block_sizes(params));

  const std::size_t n = train.x.rows();
  std::vector<std::int32_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = n;  // forces a shuffle before the first batch

  PretrainResult out;
  double best = std::numeric_limits<double>::infinity();
  std::size_t stale = 0;

  for (std::size_t step = 0; step < cfg.stop.max_steps; ++step) {
    if (cursor >= n) {  // epoch boundary
      order_rng.shuffle(order);
      cursor = 0;
    }
    const std::size_t take = std::min(cfg.batch, n - cursor);
    const std::span<const std::int32_t> idx(order.data() + cursor, take);
    cursor += take;

    try {
      const Tensor xb = train.x.gather_rows(idx);
      const Tensor yb = train.y.gather_rows(idx);
      nn::ParamSet grads = loss_grads(net, params, xb, yb, nullptr);
      nn::adam_step(adam, params, grads);
    } catch (const numeric_error& e) {
      throw numeric_error("training diverged at step " + std::to_string(step) +
                          ": " + e.what());
    }
    ++out.steps;

    if ((step + 1) % cfg.stop.eval_every == 0) {
      const double v =
          train::mse(nn::mlp_eval(net, params, val.x), val.y);
      out.val_history.push_back(v);
      if (v < best) {
        best = v;
        out.params = params;
        stale = 0;
      } else if (++stale >= cfg.stop.patience) {
        return out;
      }
    }
  }
  // Cap reached (or cap below the first evaluation): keep the best snapshot
  // when one exists, else the final parameters.
  if (out.val_history.empty()) out.params = std::move(params);
  return out;
}

std::size_t common_hidden_width(const std::vector<TaskDataset>& ensemble) {
  const std::size_t h = ensemble.front().oracle_hidden().size();
  for (const TaskDataset& d : ensemble)
    if (d.oracle_hidden().size() != h)
      throw dimension_error("hidden-parameter width varies across ensemble: " +
                            std::to_string(h) + " vs " +
                            std::to_string(d.oracle_hidden().size()));
  return h;
}

}  // namespace

PretrainResult pretrain(const nn::MlpSpec& net,
                        const std::vector<TaskDataset>& ensemble,
                        const PretrainConfig& cfg) {
  if (ensemble.empty())
    throw empty_dataset_error("pretraining needs at least one dataset");
  auto identity = [](const TaskDataset&, Tensor x) { return x; };
  const SplitUnion train = stack_split(ensemble, true, identity, "train");
  const SplitUnion val = stack_split(ensemble, false, identity, "validation");
  return fit_shared(net, train, val, cfg);
}

nn::MlpSpec oracle_spec(const nn::MlpSpec& net, std::size_t hidden_width) {
  nn::MlpSpec widened = net;
  widened.sizes.front() += hidden_width;
  widened.validate();
  return widened;
}

Tensor append_hidden(const TaskDataset& d, const Tensor& x) {
  const std::vector<double>& h = d.oracle_hidden();
  Tensor out(x.rows(), x.cols() + h.size());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    std::memcpy(out.data() + r * out.cols(), x.data() + r * x.cols(),
                x.cols() * sizeof(double));
    std::memcpy(out.data() + r * out.cols() + x.cols(), h.data(),
                h.size() * sizeof(double));
  }
  return out;
}

PretrainResult oracle_train(const nn::MlpSpec& net,
                            const std::vector<TaskDataset>& ensemble,
                            const PretrainConfig& cfg) {
  if (ensemble.empty())
    throw empty_dataset_error("oracle training needs at least one dataset");
  const nn::MlpSpec widened = oracle_spec(net, common_hidden_width(ensemble));
  auto widen = [](const TaskDataset& d, Tensor x) {
    return append_hidden(d, x);
  };
  const SplitUnion train = stack_split(ensemble, true, widen, "train");
  const SplitUnion val = stack_split(ensemble, false, widen, "validation");
  return fit_shared(widened, train, val, cfg);
}

MamlResult maml_train(const nn::MlpSpec& net,
                      const std::vector<TaskDataset>& ensemble,
                      const MamlConfig& cfg) {
  net.validate();
  if (ensemble.empty())
    throw empty_dataset_error("meta-training needs at least one dataset");
  for (const TaskDataset& d : ensemble)
    if (d.x.cols() != net.input_width() || d.y.cols() != net.output_width())
      throw dimension_error("dataset id " + std::to_string(d.id) +
                            " rows " + d.x.shape_str() + " -> " +
                            d.y.shape_str() + " do not fit network " +
                            std::to_string(net.input_width()) + "->" +
                            std::to_string(net.output_width()));

  const Rng root(cfg.seed);
  Rng init_rng = root.derive(kInitStream);
  Rng order_rng = root.derive(kOrderStream);
  nn::ParamSet params = nn::init_params(net, init_rng);
  nn::AdamState adam(cfg.adam, nn::param_block_sizes(params));

  MamlResult out;
  out.loss_history.reserve(cfg.meta_steps);
  out.best_step = cfg.meta_steps;

  const std::size_t a = ensemble.size();
  std::vector<std::size_t> order(a);
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = a;  // forces a shuffle before the first visit

  nn::ParamSet best;
  bool have_best = false;
  double epoch_sum = 0.0;

  for (std::size_t step = 0; step < cfg.meta_steps; ++step) {
    if (cursor >= a) {
      order_rng.shuffle(order);
      cursor = 0;
    }
    const TaskDataset& d = ensemble[order[cursor++]];
    try {
      // Inner adaptation: plain SGD on the train split.
      nn::ParamSet adapted = params;
      if (cfg.inner_steps > 0) {
        const Tensor x_tr = d.x_train();
        const Tensor y_tr = d.y_train();
        for (std::size_t s = 0; s < cfg.inner_steps; ++s)
          sgd_step(adapted, loss_grads(net, adapted, x_tr, y_tr, nullptr),
                   cfg.inner_lr);
      }
      // Outer update: the adapted parameters' test-split gradient is applied
      // to the shared initialization unchanged (first-order approximation).
      double test_loss = 0.0;
      nn::ParamSet grads =
          loss_grads(net, adapted, d.x_test(), d.y_test(), &test_loss);
      out.loss_history.push_back(test_loss);
      epoch_sum += test_loss;
      nn::adam_step(adam, params, grads);
    } catch (const numeric_error& e) {
      if (!have_best)
        throw numeric_error("meta-training diverged at step " +
                            std::to_string(step) + ", task id " +
                            std::to_string(d.id) + ": " + e.what());
      break;  // late blow-up: the best snapshot below is still usable
    }
    if (cursor == a) {  // one full pass over the ensemble just finished
      const double epoch_mean = epoch_sum / static_cast<double>(a);
      epoch_sum = 0.0;
      if (epoch_mean < out.best_loss) {
        out.best_loss = epoch_mean;
        out.best_step = step + 1;
        best = params;
        have_best = true;
      }
    }
  }
  out.params = have_best ? std::move(best) : std::move(params);
  return out;
}

train::TaskModelSource shared_source(const std::string& label,
                                     const nn::MlpSpec& net,
                                     const nn::ParamSet& params) {
  train::TaskModelSource src;
  src.label = label;
  src.net = net;
  src.map_inputs = [](const TaskDataset&, const Tensor& x) { return x; };
  src.instantiate = [params](const TaskDataset&) { return params; };
  return src;
}

train::TaskModelSource oracle_source(const nn::MlpSpec& widened,
                                     const nn::ParamSet& params) {
  train::TaskModelSource src;
  src.label = "oracle";
  src.net = widened;
  src.map_inputs = [](const TaskDataset& d, const Tensor& x) {
    return append_hidden(d, x);
  };
  src.instantiate = [params](const TaskDataset&) { return params; };
  return src;
}

}  // namespace mela::baselines
