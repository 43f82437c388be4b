#pragma once

#include <cstddef>
#include <span>

namespace mela::stats {

struct MeanStderr {
  double mean = 0.0;
  double se = 0.0;  // sample standard error; 0 when n == 1
  std::size_t n = 0;
};

MeanStderr mean_stderr(std::span<const double> v);

// One-sided paired t-test of the alternative mean(a - b) < 0, i.e. evidence
// that a runs below b. Returns the p-value from the Student-t distribution
// with n - 1 degrees of freedom. A zero-variance difference vector is decided
// by its sign alone (p of 0, 1, or 0.5).
double paired_t_less(std::span<const double> a, std::span<const double> b);

}  // namespace mela::stats
