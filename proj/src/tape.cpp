#include "mela/tape.hpp"

#include <string>

#include "mela/errors.hpp"
#include "mela/kernels.hpp"

namespace mela::ad {

// ------------------------------------------------------------------ plumbing

const Node& Tape::at(NodeId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size())
    throw contract_error("node id " + std::to_string(id) + " not on this tape");
  return nodes_[static_cast<std::size_t>(id)];
}

NodeId Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  return static_cast<NodeId>(nodes_.size() - 1);
}

const std::vector<ArgmaxRecord>& Tape::records(NodeId id) const {
  const Node& n = at(id);
  if (n.op != Op::kMaxPoolRows)
    throw contract_error("argmax records requested from a non-maxpool node");
  return n.records;
}

const Tensor& Gradients::at(NodeId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= grads_.size())
    throw contract_error("gradient id " + std::to_string(id) + " out of range");
  return grads_[static_cast<std::size_t>(id)];
}

// ------------------------------------------------------------------- forward

NodeId Tape::leaf(Tensor value) {
  Node n;
  n.value = std::move(value);
  return push(std::move(n));
}

NodeId Tape::matmul(NodeId a, NodeId b) {
  const Tensor& av = at(a).value;
  const Tensor& bv = at(b).value;
  if (av.cols() != bv.rows())
    throw dimension_error("matmul inner dimensions disagree: " + av.shape_str() +
                          " vs " + bv.shape_str());
  Node n;
  n.op = Op::kMatMul;
  n.lhs = a;
  n.rhs = b;
  n.value = Tensor(av.rows(), bv.cols());
  kern::matmul_nn(av.data(), bv.data(), n.value.data(), av.rows(), av.cols(),
                  bv.cols(), false);
  return push(std::move(n));
}

NodeId Tape::add_bias(NodeId x, NodeId bias) {
  const Tensor& xv = at(x).value;
  const Tensor& bv = at(bias).value;
  if (bv.rows() != 1 || bv.cols() != xv.cols())
    throw dimension_error("bias shape " + bv.shape_str() +
                          " does not broadcast over " + xv.shape_str());
  Node n;
  n.op = Op::kAddBias;
  n.lhs = x;
  n.rhs = bias;
  n.value = Tensor(xv.rows(), xv.cols());
  kern::add_bias(xv.data(), bv.data(), n.value.data(), xv.rows(), xv.cols());
  return push(std::move(n));
}

NodeId Tape::leaky_relu(NodeId x, double slope) {
  if (!(slope > 0.0 && slope <= 1.0))
    throw contract_error("leaky relu slope must lie in (0, 1], got " +
                         std::to_string(slope));
  const Tensor& xv = at(x).value;
  Node n;
  n.op = Op::kLeakyRelu;
  n.lhs = x;
  n.slope = slope;
  n.value = Tensor(xv.rows(), xv.cols());
  kern::leaky_relu(xv.data(), n.value.data(), xv.size(), slope);
  return push(std::move(n));
}

NodeId Tape::maxpool_rows(NodeId x) {
  const Tensor& xv = at(x).value;
  if (xv.rows() == 0) throw empty_dataset_error("max-pool over zero rows");
  Node n;
  n.op = Op::kMaxPoolRows;
  n.lhs = x;
  n.value = Tensor(1, xv.cols());
  n.records.resize(xv.cols());
  for (std::size_t c = 0; c < xv.cols(); ++c) {
    // Strict > keeps the smallest row index on ties.
    std::size_t best = 0;
    for (std::size_t r = 1; r < xv.rows(); ++r)
      if (xv(r, c) > xv(best, c)) best = r;
    n.value(0, c) = xv(best, c);
    n.records[c] = {static_cast<std::int32_t>(c), static_cast<std::int32_t>(best)};
  }
  return push(std::move(n));
}

NodeId Tape::mse(NodeId pred, const Tensor& target) {
  const Tensor& pv = at(pred).value;
  if (!pv.same_shape(target))
    throw dimension_error("mse shapes disagree: " + pv.shape_str() + " vs " +
                          target.shape_str());
  Node n;
  n.op = Op::kMse;
  n.lhs = pred;
  n.target = target;
  double acc = 0.0;
  for (std::size_t i = 0; i < pv.size(); ++i) {
    const double d = pv[i] - target[i];
    acc += d * d;
  }
  n.value = Tensor::scalar(acc / static_cast<double>(pv.size()));
  return push(std::move(n));
}

NodeId Tape::concat_cols(NodeId a, NodeId b) {
  const Tensor& av = at(a).value;
  const Tensor& bv = at(b).value;
  if (av.rows() != bv.rows())
    throw dimension_error("concat row counts disagree: " + av.shape_str() +
                          " vs " + bv.shape_str());
  Node n;
  n.op = Op::kConcatCols;
  n.lhs = a;
  n.rhs = b;
  n.value = Tensor(av.rows(), av.cols() + bv.cols());
  for (std::size_t r = 0; r < av.rows(); ++r) {
    double* dst = n.value.data() + r * n.value.cols();
    const double* pa = av.data() + r * av.cols();
    const double* pb = bv.data() + r * bv.cols();
    std::copy(pa, pa + av.cols(), dst);
    std::copy(pb, pb + bv.cols(), dst + av.cols());
  }
  return push(std::move(n));
}

NodeId Tape::reshape(NodeId x, std::size_t rows, std::size_t cols) {
  const Tensor& xv = at(x).value;
  if (xv.size() != rows * cols)
    throw dimension_error("reshape of " + xv.shape_str() + " to " +
                          std::to_string(rows) + "x" + std::to_string(cols) +
                          " changes element count");
  Node n;
  n.op = Op::kReshape;
  n.lhs = x;
  n.value = Tensor(rows, cols, std::vector<double>(xv.flat().begin(), xv.flat().end()));
  return push(std::move(n));
}

// ------------------------------------------------------------------ backward

namespace {

Tensor& grad_slot(std::vector<Tensor>& grads, NodeId id, const Tensor& like) {
  Tensor& g = grads[static_cast<std::size_t>(id)];
  if (g.empty()) g = Tensor(like.rows(), like.cols());
  return g;
}

}  // namespace

Gradients Tape::backward(NodeId root) const {
  const Tensor& rv = at(root).value;
  if (rv.rows() != 1 || rv.cols() != 1)
    throw contract_error("backward root must be scalar, got " + rv.shape_str());
  return backward(root, Tensor::scalar(1.0));
}

Gradients Tape::backward(NodeId root, const Tensor& seed) const {
  const Node& rootn = at(root);
  if (!rootn.value.same_shape(seed))
    throw contract_error("backward seed shape " + seed.shape_str() +
                         " does not match root " + rootn.value.shape_str());

  Gradients out;
  out.grads_.resize(nodes_.size());
  out.grads_[static_cast<std::size_t>(root)] = seed;

  for (NodeId id = root; id >= 0; --id) {
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    Tensor& g = out.grads_[static_cast<std::size_t>(id)];
    if (g.empty()) continue;  // not reachable from the root
    if (!n.value.all_finite())
      throw numeric_error("non-finite forward value at node " + std::to_string(id));
    if (!g.all_finite())
      throw numeric_error("non-finite gradient at node " + std::to_string(id));

    switch (n.op) {
      case Op::kLeaf:
        break;
      case Op::kMatMul: {
        const Tensor& a = nodes_[static_cast<std::size_t>(n.lhs)].value;
        const Tensor& b = nodes_[static_cast<std::size_t>(n.rhs)].value;
        // dA = g . B^T, dB = A^T . g
        Tensor& da = grad_slot(out.grads_, n.lhs, a);
        kern::matmul_nt(g.data(), b.data(), da.data(), g.rows(), g.cols(),
                        b.rows(), true);
        Tensor& db = grad_slot(out.grads_, n.rhs, b);
        kern::matmul_tn(a.data(), g.data(), db.data(), a.cols(), a.rows(),
                        g.cols(), true);
        break;
      }
      case Op::kAddBias: {
        const Tensor& x = nodes_[static_cast<std::size_t>(n.lhs)].value;
        Tensor& dx = grad_slot(out.grads_, n.lhs, x);
        kern::add_into_serial(g.data(), dx.data(), g.size());
        const Tensor& b = nodes_[static_cast<std::size_t>(n.rhs)].value;
        Tensor& db = grad_slot(out.grads_, n.rhs, b);
        kern::bias_grad_serial(g.data(), db.data(), g.rows(), g.cols());
        break;
      }
      case Op::kLeakyRelu: {
        const Tensor& x = nodes_[static_cast<std::size_t>(n.lhs)].value;
        Tensor& dx = grad_slot(out.grads_, n.lhs, x);
        kern::leaky_relu_grad(x.data(), g.data(), dx.data(), x.size(), n.slope);
        break;
      }
      case Op::kMaxPoolRows: {
        const Tensor& x = nodes_[static_cast<std::size_t>(n.lhs)].value;
        Tensor& dx = grad_slot(out.grads_, n.lhs, x);
        for (const ArgmaxRecord& rec : n.records)
          dx(static_cast<std::size_t>(rec.winner_row),
             static_cast<std::size_t>(rec.column)) += g(0, static_cast<std::size_t>(rec.column));
        break;
      }
      case Op::kMse: {
        const Tensor& p = nodes_[static_cast<std::size_t>(n.lhs)].value;
        Tensor& dp = grad_slot(out.grads_, n.lhs, p);
        const double scale = 2.0 * g(0, 0) / static_cast<double>(p.size());
        for (std::size_t i = 0; i < p.size(); ++i)
          dp[i] += scale * (p[i] - n.target[i]);
        break;
      }
      case Op::kReshape: {
        const Tensor& x = nodes_[static_cast<std::size_t>(n.lhs)].value;
        Tensor& dx = grad_slot(out.grads_, n.lhs, x);
        kern::add_into_serial(g.data(), dx.data(), g.size());
        break;
      }
      case Op::kConcatCols: {
        const Tensor& a = nodes_[static_cast<std::size_t>(n.lhs)].value;
        const Tensor& b = nodes_[static_cast<std::size_t>(n.rhs)].value;
        Tensor& da = grad_slot(out.grads_, n.lhs, a);
        Tensor& db = grad_slot(out.grads_, n.rhs, b);
        for (std::size_t r = 0; r < g.rows(); ++r) {
          const double* gr = g.data() + r * g.cols();
          double* dar = da.data() + r * a.cols();
          double* dbr = db.data() + r * b.cols();
          for (std::size_t c = 0; c < a.cols(); ++c) dar[c] += gr[c];
          for (std::size_t c = 0; c < b.cols(); ++c) dbr[c] += gr[a.cols() + c];
        }
        break;
      }
    }
  }

  // Untouched slots (unreachable from the root) report zero gradients.
  for (std::size_t i = 0; i < nodes_.size(); ++i)
    if (out.grads_[i].empty())
      out.grads_[i] = Tensor(nodes_[i].value.rows(), nodes_[i].value.cols());
  return out;
}

}  // namespace mela::ad
