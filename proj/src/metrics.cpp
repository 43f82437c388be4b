#include "mela/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <tuple>

#include "mela/errors.hpp"

namespace mela::harness {
namespace {

constexpr char kHeader[] = "experiment,model,metric,abscissa,value,stderr,n";

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void check_label(const std::string& s, const char* field) {
  if (s.empty())
    throw contract_error(std::string("metric row has an empty ") + field);
  for (char c : s)
    if (c == ',' || c == '\n' || c == '\r' || c == '#')
      throw contract_error(std::string(field) + " '" + s +
                           "' contains a delimiter character");
}

// std::from_chars rather than stod: locale-free, no exceptions, and exact on
// subnormals (stod throws out_of_range on values emit_metrics can write).
double parse_double(const std::string& s, const std::string& where) {
  double v = 0.0;
  const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || end != s.data() + s.size())
    throw io_error("bad number '" + s + "' in " + where);
  return v;
}

}  // namespace

void MetricTable::add(std::string experiment, std::string model,
                      std::string metric, double abscissa, double value,
                      double se, std::uint64_t n) {
  rows.push_back(MetricRow{std::move(experiment), std::move(model),
                           std::move(metric), abscissa, value, se, n});
}

void MetricTable::validate() const {
  for (const MetricRow& r : rows) {
    check_label(r.experiment, "experiment");
    check_label(r.model, "model");
    check_label(r.metric, "metric");
    if (std::isnan(r.abscissa) || std::isnan(r.value) || std::isnan(r.se))
      throw numeric_error("NaN in metric row " + r.experiment + "/" + r.model +
                          "/" + r.metric);
  }
}

void MetricTable::sort_rows() {
  std::stable_sort(rows.begin(), rows.end(),
                   [](const MetricRow& a, const MetricRow& b) {
                     return std::tie(a.model, a.metric, a.abscissa) <
                            std::tie(b.model, b.metric, b.abscissa);
                   });
}

void emit_metrics(MetricTable table, const std::filesystem::path& path,
                  std::uint64_t config_hash) {
  table.validate();
  table.sort_rows();

  std::ostringstream out;
  char hash_hex[17];
  std::snprintf(hash_hex, sizeof hash_hex, "%016" PRIx64, config_hash);
  out << "# config-hash: " << hash_hex << "\n" << kHeader << "\n";
  for (const MetricRow& r : table.rows)
    out << r.experiment << ',' << r.model << ',' << r.metric << ','
        << fmt17(r.abscissa) << ',' << fmt17(r.value) << ',' << fmt17(r.se)
        << ',' << r.n << "\n";

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw io_error("cannot open " + path.string() + " for writing");
  f << out.str();
  if (!f) throw io_error("short write to " + path.string());
}

ParsedMetrics parse_metrics(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw io_error("cannot open " + path.string());

  ParsedMetrics out;
  std::string line;
  if (!std::getline(f, line) || !line.starts_with("# config-hash: "))
    throw io_error(path.string() + " is missing the config-hash stamp");
  {
    const std::string hex = line.substr(15);
    if (hex.size() != 16) throw io_error("malformed config hash in " + path.string());
    out.config_hash = std::stoull(hex, nullptr, 16);
  }
  if (!std::getline(f, line) || line != kHeader)
    throw io_error(path.string() + " is missing the metric header");

  std::size_t lineno = 2;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(row, cell, ',')) cells.push_back(cell);
    if (cells.size() != 7)
      throw io_error(path.string() + ":" + std::to_string(lineno) +
                     ": expected 7 fields, got " + std::to_string(cells.size()));
    const std::string where = path.string() + ":" + std::to_string(lineno);
    MetricRow r;
    r.experiment = cells[0];
    r.model = cells[1];
    r.metric = cells[2];
    r.abscissa = parse_double(cells[3], where);
    r.value = parse_double(cells[4], where);
    r.se = parse_double(cells[5], where);
    r.n = std::stoull(cells[6]);
    out.table.rows.push_back(std::move(r));
  }
  return out;
}

}  // namespace mela::harness
