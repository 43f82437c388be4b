#pragma once

#include <stdexcept>
#include <string>

namespace mela {

// Shape disagreement between tensors/operands. Messages name both shapes.
class dimension_error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Non-finite value observed where finite math is required (divergence,
// bad gradients). Raised instead of silently propagating NaN/Inf.
class numeric_error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// API contract violation (bad argument, wrong tape, out-of-range k, ...).
class contract_error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// An operation that needs at least one example received none.
class empty_dataset_error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Rejection-sampling budget exhausted while generating a task.
class generator_error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Physics simulation made no forward progress (degenerate contact).
class simulation_error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// File/serialization failure.
class io_error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

}  // namespace mela
