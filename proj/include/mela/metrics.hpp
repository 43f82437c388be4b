#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace mela::harness {

// One long-format measurement row.
struct MetricRow {
  std::string experiment;
  std::string model;
  std::string metric;
  double abscissa = 0.0;  // step count, distance, example index, ...
  double value = 0.0;
  double se = 0.0;
  std::uint64_t n = 0;  // samples behind the value

  bool operator==(const MetricRow&) const = default;
};

struct MetricTable {
  std::vector<MetricRow> rows;

  void add(std::string experiment, std::string model, std::string metric,
           double abscissa, double value, double se, std::uint64_t n);

  // No NaNs, no delimiter characters inside labels.
  void validate() const;

  // Stable sort by (model, metric, abscissa): emission order is canonical no
  // matter how many workers produced the rows.
  void sort_rows();
};

// Writes `# config-hash: <16 hex>`, the fixed header, then one sorted row per
// line with every double at 17 significant digits (round-trip exact).
void emit_metrics(MetricTable table, const std::filesystem::path& path,
                  std::uint64_t config_hash);

struct ParsedMetrics {
  std::uint64_t config_hash = 0;
  MetricTable table;
};

ParsedMetrics parse_metrics(const std::filesystem::path& path);

}  // namespace mela::harness
