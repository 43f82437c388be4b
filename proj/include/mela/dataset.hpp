#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mela/errors.hpp"
#include "mela/tensor.hpp"

namespace mela {

enum class TaskFamily : std::uint8_t { kSinusoid = 0, kBounce = 1 };

inline std::string family_name(TaskFamily f) {
  return f == TaskFamily::kSinusoid ? "sinusoid" : "bounce";
}

// One task: N examples with disjoint train/test row splits covering all rows.
// The generating parameters are kept private so learners cannot consume them;
// only the oracle baseline reads them, through oracle_hidden().
class TaskDataset {
public:
  TaskDataset() = default;
  TaskDataset(TaskFamily family, std::uint64_t seed, std::uint64_t id, Tensor x,
              Tensor y, std::vector<std::int32_t> train_idx,
              std::vector<std::int32_t> test_idx, std::vector<double> hidden)
      : family(family),
        seed(seed),
        id(id),
        x(std::move(x)),
        y(std::move(y)),
        train_idx(std::move(train_idx)),
        test_idx(std::move(test_idx)),
        hidden_(std::move(hidden)) {
    validate();
  }

  TaskFamily family = TaskFamily::kSinusoid;
  std::uint64_t seed = 0;  // per-task generator seed (replayable)
  std::uint64_t id = 0;    // position within its ensemble
  Tensor x;                // N x s_0
  Tensor y;                // N x s_out
  std::vector<std::int32_t> train_idx;
  std::vector<std::int32_t> test_idx;

  const std::vector<double>& oracle_hidden() const { return hidden_; }

  Tensor x_train() const { return x.gather_rows(train_idx); }
  Tensor y_train() const { return y.gather_rows(train_idx); }
  Tensor x_test() const { return x.gather_rows(test_idx); }
  Tensor y_test() const { return y.gather_rows(test_idx); }

  // Splits must partition the rows: disjoint, in range, covering all of them.
  void validate() const;

  // Order-sensitive digest of (N, train_idx, test_idx); comparisons between
  // models assert equal hashes so every learner sees the same split.
  std::uint64_t split_hash() const;

private:
  friend class DatasetCodec;  // serialization needs raw access
  std::vector<double> hidden_;
};

// FNV-1a over raw bytes; used for split digests and config stamps.
std::uint64_t fnv1a64(const void* data, std::size_t len);

}  // namespace mela
