#include "mela/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "mela/errors.hpp"
#include "mela/kernels.hpp"

namespace mela {

// -------------------------------------------------------------------- specs

MelaSpec MelaSpec::standard(nn::MlpSpec task_net, std::size_t s_pool,
                            std::size_t s_code) {
  task_net.validate();
  MelaSpec spec;
  spec.task_net = task_net;
  spec.s_pool = s_pool;
  spec.s_code = s_code;
  const std::size_t s0 = task_net.input_width();
  const std::size_t sout = task_net.output_width();
  spec.block1 = {{s0 + sout, 60, 60, 60, s_pool}, 0.3};
  spec.block2 = {{s_pool, 60, 60, s_code}, 0.3};
  for (std::size_t l = 1; l < task_net.sizes.size(); ++l) {
    const std::size_t w_count = task_net.sizes[l - 1] * task_net.sizes[l];
    const std::size_t b_count = task_net.sizes[l];
    spec.weight_gens.push_back({{s_code, 60, 60, 60, w_count}, 0.3});
    spec.bias_gens.push_back({{s_code, 60, 60, 60, b_count}, 0.3});
  }
  return spec;
}

void MelaSpec::validate() const {
  task_net.validate();
  block1.validate();
  block2.validate();
  if (s_pool < 1 || s_code < 1)
    throw contract_error("s_pool and s_code must be >= 1");
  if (block1.input_width() != task_net.input_width() + task_net.output_width())
    throw contract_error("block1 input width must be s_0 + s_out");
  if (block1.output_width() != s_pool || block2.input_width() != s_pool)
    throw contract_error("pool width disagreement between block1 and block2");
  if (block2.output_width() != s_code)
    throw contract_error("block2 must end at s_code");
  const std::size_t layers = task_net.layer_count();
  if (weight_gens.size() != layers || bias_gens.size() != layers)
    throw contract_error("one weight and one bias generator per task layer");
  std::size_t covered = 0;
  for (std::size_t l = 0; l < layers; ++l) {
    weight_gens[l].validate();
    bias_gens[l].validate();
    if (weight_gens[l].input_width() != s_code || bias_gens[l].input_width() != s_code)
      throw contract_error("generators must read a 1 x s_code input");
    const std::size_t w_count = task_net.sizes[l] * task_net.sizes[l + 1];
    const std::size_t b_count = task_net.sizes[l + 1];
    if (weight_gens[l].output_width() != w_count)
      throw contract_error("weight generator " + std::to_string(l) +
                           " output does not cover the layer");
    if (bias_gens[l].output_width() != b_count)
      throw contract_error("bias generator " + std::to_string(l) +
                           " output does not cover the layer");
    covered += w_count + b_count;
  }
  if (covered != task_net.param_count())
    throw contract_error("generator outputs do not cover the task net exactly");
}

std::size_t MelaSpec::param_count() const {
  std::size_t total = block1.param_count() + block2.param_count();
  for (const nn::MlpSpec& g : weight_gens) total += g.param_count();
  for (const nn::MlpSpec& g : bias_gens) total += g.param_count();
  return total;
}

// --------------------------------------------------------------- parameters

MelaModel MelaModel::init(MelaSpec spec, Rng& rng) {
  spec.validate();
  MelaModel m;
  m.spec = std::move(spec);
  m.mu1 = nn::init_params(m.spec.block1, rng);
  m.mu2 = nn::init_params(m.spec.block2, rng);
  for (std::size_t l = 0; l < m.spec.task_net.layer_count(); ++l) {
    m.gen_w.push_back(nn::init_params(m.spec.weight_gens[l], rng));
    m.gen_b.push_back(nn::init_params(m.spec.bias_gens[l], rng));
  }
  return m;
}

namespace {

template <typename Model, typename Ptr>
std::vector<Ptr> collect_params(Model& m) {
  std::vector<Ptr> out;
  auto push_set = [&out](auto& set) {
    for (std::size_t l = 0; l < set.layer_count(); ++l) {
      out.push_back(&set.weights[l]);
      out.push_back(&set.biases[l]);
    }
  };
  push_set(m.mu1);
  push_set(m.mu2);
  for (std::size_t l = 0; l < m.gen_w.size(); ++l) {
    push_set(m.gen_w[l]);
    push_set(m.gen_b[l]);
  }
  return out;
}

}  // namespace

std::vector<Tensor*> MelaModel::param_tensors() {
  return collect_params<MelaModel, Tensor*>(*this);
}

std::vector<const Tensor*> MelaModel::param_tensors() const {
  return collect_params<const MelaModel, const Tensor*>(*this);
}

std::vector<std::size_t> MelaModel::param_block_sizes() const {
  std::vector<std::size_t> sizes;
  for (const Tensor* t : param_tensors()) sizes.push_back(t->size());
  return sizes;
}

Tensor MelaModel::flatten() const {
  Tensor flat(1, spec.param_count());
  std::size_t at = 0;
  for (const Tensor* t : param_tensors())
    for (double v : t->flat()) flat[at++] = v;
  return flat;
}

void MelaModel::load_flat(const Tensor& flat) {
  if (flat.size() != spec.param_count())
    throw dimension_error("flat parameter length " + std::to_string(flat.size()) +
                          " does not match model P = " +
                          std::to_string(spec.param_count()));
  std::size_t at = 0;
  for (Tensor* t : param_tensors())
    for (double& v : t->flat()) v = flat[at++];
}

MelaNodes push_params(const MelaModel& model, ad::Tape& tape) {
  MelaNodes nodes;
  auto push_set = [&](const nn::ParamSet& set) {
    nn::ParamNodes pn = nn::to_tape(set, tape);
    for (std::size_t l = 0; l < pn.weights.size(); ++l) {
      nodes.ordered.push_back(pn.weights[l]);
      nodes.ordered.push_back(pn.biases[l]);
    }
    return pn;
  };
  nodes.mu1 = push_set(model.mu1);
  nodes.mu2 = push_set(model.mu2);
  for (std::size_t l = 0; l < model.gen_w.size(); ++l) {
    nodes.gen_w.push_back(push_set(model.gen_w[l]));
    nodes.gen_b.push_back(push_set(model.gen_b[l]));
  }
  return nodes;
}

// ------------------------------------------------------------ graph builders

Recognition recognize_graph(const MelaSpec& spec, const MelaNodes& params,
                            ad::NodeId x, ad::NodeId y, ad::Tape& tape) {
  const Tensor& xv = tape.value(x);
  const Tensor& yv = tape.value(y);
  if (xv.rows() == 0) throw empty_dataset_error("recognize needs at least one example");
  if (xv.rows() != yv.rows())
    throw dimension_error("X and Y row counts disagree: " + xv.shape_str() +
                          " vs " + yv.shape_str());
  if (xv.cols() != spec.task_net.input_width() ||
      yv.cols() != spec.task_net.output_width())
    throw dimension_error("example widths do not match the task net");

  ad::NodeId joined = tape.concat_cols(x, y);
  ad::NodeId features = nn::mlp_forward(spec.block1, params.mu1, joined, tape);
  ad::NodeId pooled = tape.maxpool_rows(features);
  ad::NodeId z = nn::mlp_forward(spec.block2, params.mu2, pooled, tape);

  Recognition rec;
  rec.z = z;
  rec.pooled = pooled;
  rec.records = tape.records(pooled);
  return rec;
}

nn::ParamNodes generate_graph(const MelaSpec& spec, const MelaNodes& params,
                              ad::NodeId z, ad::Tape& tape) {
  if (tape.value(z).rows() != 1 || tape.value(z).cols() != spec.s_code)
    throw dimension_error("model code must be 1 x s_code, got " +
                          tape.value(z).shape_str());
  nn::ParamNodes theta;
  for (std::size_t l = 0; l < spec.task_net.layer_count(); ++l) {
    ad::NodeId w_flat = nn::mlp_forward(spec.weight_gens[l], params.gen_w[l], z, tape);
    theta.weights.push_back(
        tape.reshape(w_flat, spec.task_net.sizes[l], spec.task_net.sizes[l + 1]));
    // Bias generator output is already the right 1 x s_l shape.
    theta.biases.push_back(nn::mlp_forward(spec.bias_gens[l], params.gen_b[l], z, tape));
  }
  return theta;
}

LossGraph build_loss_graph(const MelaModel& model, const Tensor& x_train,
                           const Tensor& y_train, const Tensor& x_test,
                           const Tensor& y_test) {
  LossGraph g;
  g.params = push_params(model, g.tape);
  g.x_train = g.tape.leaf(x_train);
  g.y_train = g.tape.leaf(y_train);
  g.x_test = g.tape.leaf(x_test);
  g.rec = recognize_graph(model.spec, g.params, g.x_train, g.y_train, g.tape);
  g.theta = generate_graph(model.spec, g.params, g.rec.z, g.tape);
  g.pred = nn::mlp_forward(model.spec.task_net, g.theta, g.x_test, g.tape);
  g.loss = g.tape.mse(g.pred, y_test);
  return g;
}

// ---------------------------------------------------------------- inference

TaskModel instantiate(const MelaModel& model, const Tensor& x, const Tensor& y) {
  ad::Tape tape;
  MelaNodes params = push_params(model, tape);
  ad::NodeId xl = tape.leaf(x);
  ad::NodeId yl = tape.leaf(y);
  Recognition rec = recognize_graph(model.spec, params, xl, yl, tape);
  nn::ParamNodes theta = generate_graph(model.spec, params, rec.z, tape);

  TaskModel tm;
  tm.net = model.spec.task_net;
  tm.z = tape.value(rec.z);
  tm.records = rec.records;
  for (std::size_t l = 0; l < theta.weights.size(); ++l) {
    tm.params.weights.push_back(tape.value(theta.weights[l]));
    tm.params.biases.push_back(tape.value(theta.biases[l]));
  }
  return tm;
}

Tensor recognize(const MelaModel& model, const Tensor& x, const Tensor& y) {
  ad::Tape tape;
  MelaNodes params = push_params(model, tape);
  Recognition rec =
      recognize_graph(model.spec, params, tape.leaf(x), tape.leaf(y), tape);
  return tape.value(rec.z);
}

// ---------------------------------------------------------------- influence

InfluenceReport influence_from_records(const std::vector<ad::ArgmaxRecord>& records,
                                       std::size_t n_examples, std::size_t s_pool) {
  if (records.size() != s_pool)
    throw contract_error("expected one argmax record per pool column");
  InfluenceReport report;
  report.wins.assign(n_examples, 0);
  for (const ad::ArgmaxRecord& r : records) {
    if (r.winner_row < 0 || static_cast<std::size_t>(r.winner_row) >= n_examples)
      throw contract_error("argmax winner out of range");
    ++report.wins[static_cast<std::size_t>(r.winner_row)];
  }
  report.influence.reserve(n_examples);
  for (std::int32_t w : report.wins)
    report.influence.push_back(static_cast<double>(w) / static_cast<double>(s_pool));
  return report;
}

InfluenceReport influence(const MelaModel& model, const Tensor& x, const Tensor& y) {
  TaskModel tm = instantiate(model, x, y);
  return influence_from_records(tm.records, x.rows(), model.spec.s_pool);
}

SubsetModel predict_from_subset(const MelaModel& model, const Tensor& x,
                                const Tensor& y, std::size_t k) {
  const std::size_t n = x.rows();
  if (k < 1 || k > n)
    throw contract_error("subset size k = " + std::to_string(k) +
                         " outside [1, " + std::to_string(n) + "]");
  InfluenceReport report = influence(model, x, y);

  std::vector<std::int32_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::int32_t a, std::int32_t b) {
    return report.wins[static_cast<std::size_t>(a)] >
           report.wins[static_cast<std::size_t>(b)];
  });
  order.resize(k);
  std::sort(order.begin(), order.end());  // keep original example order

  SubsetModel out;
  out.kept = order;
  Tensor xs = x.gather_rows(order);
  Tensor ys = y.gather_rows(order);
  out.model = instantiate(model, xs, ys);
  return out;
}

// -------------------------------------------------------------- sensitivity

namespace {

// |det| via LU with partial pivoting; tiny matrices only.
double abs_det(Tensor a) {
  const std::size_t n = a.rows();
  if (a.cols() != n) throw contract_error("determinant of a non-square matrix");
  double det = 1.0;
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t pivot = c;
    for (std::size_t r = c + 1; r < n; ++r)
      if (std::abs(a(r, c)) > std::abs(a(pivot, c))) pivot = r;
    if (a(pivot, c) == 0.0) return 0.0;
    if (pivot != c)
      for (std::size_t j = 0; j < n; ++j) std::swap(a(pivot, j), a(c, j));
    det *= a(c, c);
    for (std::size_t r = c + 1; r < n; ++r) {
      const double f = a(r, c) / a(c, c);
      for (std::size_t j = c; j < n; ++j) a(r, j) -= f * a(c, j);
    }
  }
  return std::abs(det);
}

std::size_t argmax_score(const std::vector<double>& scores) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i)
    if (scores[i] > scores[best]) best = i;  // strict: ties keep the smaller index
  return best;
}

struct AugmentedSet {
  Tensor x_aug, y_aug;
  std::size_t n_given;
};

// Current model predicts stand-in outputs for the unmeasured candidates.
AugmentedSet augment_with_predictions(const MelaModel& model, const Tensor& x_given,
                                      const Tensor& y_given, const Tensor& candidates,
                                      const Tensor& x_star) {
  if (candidates.rows() == 0) throw contract_error("no candidate inputs supplied");
  if (x_star.rows() != 1 || x_star.cols() != model.spec.task_net.input_width())
    throw contract_error("query must be a single 1 x s_0 row, got " +
                         x_star.shape_str());
  TaskModel current = instantiate(model, x_given, y_given);
  Tensor y_hat = current.predict(candidates);
  AugmentedSet aug;
  aug.x_aug = Tensor::vstack(x_given, candidates);
  aug.y_aug = Tensor::vstack(y_given, y_hat);
  aug.n_given = x_given.rows();
  return aug;
}

}  // namespace

SensitivityResult sensitivity_select(const MelaModel& model, const Tensor& x_given,
                                     const Tensor& y_given, const Tensor& x_star,
                                     const Tensor& candidates) {
  const std::size_t s_code = model.spec.s_code;
  const std::size_t s_out = model.spec.task_net.output_width();
  AugmentedSet aug = augment_with_predictions(model, x_given, y_given, candidates, x_star);
  const std::size_t n_cand = candidates.rows();

  // Recognition tape over the augmented set: dz/dY via one seeded backward
  // pass per code component.
  ad::Tape rec_tape;
  MelaNodes rec_params = push_params(model, rec_tape);
  ad::NodeId xl = rec_tape.leaf(aug.x_aug);
  ad::NodeId yl = rec_tape.leaf(aug.y_aug);
  Recognition rec = recognize_graph(model.spec, rec_params, xl, yl, rec_tape);

  // dz_dy[i] is s_code x s_out for candidate i.
  std::vector<Tensor> dz_dy(n_cand, Tensor(s_code, s_out));
  for (std::size_t c = 0; c < s_code; ++c) {
    Tensor seed(1, s_code);
    seed(0, c) = 1.0;
    ad::Gradients g = rec_tape.backward(rec.z, seed);
    const Tensor& dy = g.at(yl);
    for (std::size_t i = 0; i < n_cand; ++i)
      for (std::size_t d = 0; d < s_out; ++d)
        dz_dy[i](c, d) = dy(aug.n_given + i, d);
  }

  // Generation tape with z as its own leaf: J = d f(x_star) / dz, one seeded
  // backward pass per output dimension.
  ad::Tape gen_tape;
  MelaNodes gen_params = push_params(model, gen_tape);
  ad::NodeId zl = gen_tape.leaf(rec_tape.value(rec.z));
  nn::ParamNodes theta = generate_graph(model.spec, gen_params, zl, gen_tape);
  ad::NodeId y_star = nn::mlp_forward(model.spec.task_net, theta,
                                      gen_tape.leaf(x_star), gen_tape);
  Tensor jac(s_out, s_code);
  for (std::size_t d = 0; d < s_out; ++d) {
    Tensor seed(1, s_out);
    seed(0, d) = 1.0;
    ad::Gradients g = gen_tape.backward(y_star, seed);
    const Tensor& dz = g.at(zl);
    for (std::size_t c = 0; c < s_code; ++c) jac(d, c) = dz(0, c);
  }

  SensitivityResult result;
  for (std::size_t i = 0; i < n_cand; ++i) {
    Tensor s(s_out, s_out);
    kern::matmul_nn(jac.data(), dz_dy[i].data(), s.data(), s_out, s_code, s_out,
                    false);
    result.scores.push_back(abs_det(s));
    result.matrices.push_back(std::move(s));
  }
  result.selected = argmax_score(result.scores);
  return result;
}

SensitivityResult sensitivity_direct(const MelaModel& model, const Tensor& x_given,
                                     const Tensor& y_given, const Tensor& x_star,
                                     const Tensor& candidates) {
  const std::size_t s_out = model.spec.task_net.output_width();
  AugmentedSet aug = augment_with_predictions(model, x_given, y_given, candidates, x_star);
  const std::size_t n_cand = candidates.rows();

  // One tape for the whole chain; dy*/dY read off the Y leaf directly.
  ad::Tape tape;
  MelaNodes params = push_params(model, tape);
  ad::NodeId xl = tape.leaf(aug.x_aug);
  ad::NodeId yl = tape.leaf(aug.y_aug);
  Recognition rec = recognize_graph(model.spec, params, xl, yl, tape);
  nn::ParamNodes theta = generate_graph(model.spec, params, rec.z, tape);
  ad::NodeId y_star = nn::mlp_forward(model.spec.task_net, theta,
                                      tape.leaf(x_star), tape);

  std::vector<Tensor> s(n_cand, Tensor(s_out, s_out));
  for (std::size_t d = 0; d < s_out; ++d) {
    Tensor seed(1, s_out);
    seed(0, d) = 1.0;
    ad::Gradients g = tape.backward(y_star, seed);
    const Tensor& dy = g.at(yl);
    for (std::size_t i = 0; i < n_cand; ++i)
      for (std::size_t e = 0; e < s_out; ++e)
        s[i](d, e) = dy(aug.n_given + i, e);
  }

  SensitivityResult result;
  for (std::size_t i = 0; i < n_cand; ++i) {
    result.scores.push_back(abs_det(s[i]));
    result.matrices.push_back(std::move(s[i]));
  }
  result.selected = argmax_score(result.scores);
  return result;
}

}  // namespace mela
