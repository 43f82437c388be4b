#include "mela/stats.hpp"

#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <string>
#include <vector>

#include "mela/errors.hpp"

namespace mela::stats {

MeanStderr mean_stderr(std::span<const double> v) {
  if (v.empty()) throw empty_dataset_error("mean of zero samples");
  MeanStderr out;
  out.n = v.size();
  double sum = 0.0;
  for (double x : v) sum += x;
  out.mean = sum / static_cast<double>(out.n);
  if (out.n == 1) return out;
  double sq = 0.0;
  for (double x : v) {
    const double d = x - out.mean;
    sq += d * d;
  }
  out.se = std::sqrt(sq / static_cast<double>(out.n - 1) /
                     static_cast<double>(out.n));
  return out;
}

double paired_t_less(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size())
    throw dimension_error("paired test over " + std::to_string(a.size()) +
                          " vs " + std::to_string(b.size()) + " samples");
  if (a.size() < 2)
    throw contract_error("paired test needs at least two pairs");

  std::vector<double> diff(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) diff[i] = a[i] - b[i];
  const MeanStderr d = mean_stderr(diff);
  if (d.se == 0.0) return d.mean < 0.0 ? 0.0 : (d.mean > 0.0 ? 1.0 : 0.5);

  const double t = d.mean / d.se;
  const boost::math::students_t dist(static_cast<double>(a.size() - 1));
  return boost::math::cdf(dist, t);  // lower tail: small when mean(a-b) << 0
}

}  // namespace mela::stats
