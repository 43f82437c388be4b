#pragma once

#include <cstdint>
#include <deque>
#include <vector>

#include "mela/tensor.hpp"

// Reverse-mode automatic differentiation over a flat, append-only tape.
// Insertion order is topological order: every op node references only
// earlier ids, so one reverse sweep from the root visits nodes in valid
// reverse-topological order with no explicit sort.
//
// A Tape is single-threaded while being built; a completed tape is
// immutable and backward() is const, so independent tapes can run on
// different threads freely.
namespace mela::ad {

using NodeId = std::int32_t;

enum class Op : std::uint8_t {
  kLeaf,
  kMatMul,
  kAddBias,
  kLeakyRelu,
  kMaxPoolRows,
  kMse,
  kConcatCols,
  kReshape,
};

// Which row won a column's max. Consumed by the backward pass (gradient
// routing) and by influence accounting one module up.
struct ArgmaxRecord {
  std::int32_t column;
  std::int32_t winner_row;

  bool operator==(const ArgmaxRecord&) const = default;
};

struct Node {
  Tensor value;
  Op op = Op::kLeaf;
  NodeId lhs = -1;
  NodeId rhs = -1;
  double slope = 0.0;                 // leaky relu only
  std::vector<ArgmaxRecord> records;  // maxpool only
  Tensor target;                      // mse only
};

// Per-node gradients produced by one backward sweep. Nodes the root never
// reached report zeros of the node's shape.
class Gradients {
public:
  const Tensor& at(NodeId id) const;

private:
  friend class Tape;
  std::vector<Tensor> grads_;
};

class Tape {
public:
  // Differentiable input. Callers that only need a constant still use a
  // leaf and simply never read its gradient.
  NodeId leaf(Tensor value);

  NodeId matmul(NodeId a, NodeId b);
  NodeId add_bias(NodeId x, NodeId bias);
  NodeId leaky_relu(NodeId x, double slope);
  NodeId maxpool_rows(NodeId x);
  NodeId mse(NodeId pred, const Tensor& target);
  NodeId concat_cols(NodeId a, NodeId b);
  // Same flat data under a new shape (row-major, element count preserved);
  // realizes the hypernetwork's flat-output-to-weight-matrix step.
  NodeId reshape(NodeId x, std::size_t rows, std::size_t cols);

  const Tensor& value(NodeId id) const { return at(id).value; }
  // Max-pool winners for a maxpool node (contract error otherwise).
  const std::vector<ArgmaxRecord>& records(NodeId id) const;

  // Reverse sweep from a scalar (1x1) root with implicit seed 1.
  Gradients backward(NodeId root) const;
  // Reverse sweep from any node with an explicit seed of the root's shape
  // (one call per Jacobian row when differentiating vector outputs).
  Gradients backward(NodeId root, const Tensor& seed) const;

  std::size_t size() const { return nodes_.size(); }

private:
  const Node& at(NodeId id) const;
  NodeId push(Node n);

  // Deque keeps value() references stable while later ops grow the tape.
  std::deque<Node> nodes_;
};

}  // namespace mela::ad
