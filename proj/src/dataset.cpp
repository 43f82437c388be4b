#include "mela/dataset.hpp"

#include <string>
#include <vector>

namespace mela {

std::uint64_t fnv1a64(const void* data, std::size_t len) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = 1469598103934665603ULL;
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 1099511628211ULL;
  }
  return h;
}

void TaskDataset::validate() const {
  if (x.rows() != y.rows())
    throw dimension_error("dataset X has " + std::to_string(x.rows()) +
                          " rows but Y has " + std::to_string(y.rows()));
  const std::size_t n = x.rows();
  std::vector<char> seen(n, 0);
  auto mark = [&](const std::vector<std::int32_t>& idx, const char* name) {
    for (std::int32_t i : idx) {
      if (i < 0 || static_cast<std::size_t>(i) >= n)
        throw contract_error(std::string(name) + " index " +
                             std::to_string(i) + " out of range for " +
                             std::to_string(n) + " rows");
      if (seen[static_cast<std::size_t>(i)])
        throw contract_error("row " + std::to_string(i) +
                             " appears in more than one split");
      seen[static_cast<std::size_t>(i)] = 1;
    }
  };
  mark(train_idx, "train");
  mark(test_idx, "test");
  if (train_idx.size() + test_idx.size() != n)
    throw contract_error("splits cover " +
                         std::to_string(train_idx.size() + test_idx.size()) +
                         " of " + std::to_string(n) + " rows");
  if (train_idx.empty())
    throw contract_error("train split must hold at least one example");
}

std::uint64_t TaskDataset::split_hash() const {
  std::uint64_t h = fnv1a64(nullptr, 0);
  auto mix_u64 = [&h](std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    for (int i = 0; i < 8; ++i) {
      h ^= b[i];
      h *= 1099511628211ULL;
    }
  };
  mix_u64(x.rows());
  mix_u64(train_idx.size());
  for (std::int32_t i : train_idx) mix_u64(static_cast<std::uint64_t>(i));
  for (std::int32_t i : test_idx) mix_u64(static_cast<std::uint64_t>(i));
  return h;
}

}  // namespace mela
