#include "mela/config.hpp"

#include <cctype>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "mela/dataset.hpp"  // fnv1a64
#include "mela/errors.hpp"

namespace mela::harness {
namespace {

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

[[noreturn]] void bad(const std::string& origin, std::size_t line,
                      const std::string& what) {
  throw contract_error(origin + ":" + std::to_string(line) + ": " + what);
}

std::size_t to_size(const std::string& v, const std::string& origin,
                    std::size_t line, const std::string& key) {
  try {
    std::size_t used = 0;
    const unsigned long long x = std::stoull(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return static_cast<std::size_t>(x);
  } catch (const std::exception&) {
    bad(origin, line, "field '" + key + "' wants a nonnegative integer, got '" + v + "'");
  }
}

double to_double(const std::string& v, const std::string& origin,
                 std::size_t line, const std::string& key) {
  try {
    std::size_t used = 0;
    const double x = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    bad(origin, line, "field '" + key + "' wants a number, got '" + v + "'");
  }
}

}  // namespace

void ExperimentConfig::validate() const {
  if (family != "sinusoid" && family != "bounce")
    throw contract_error("unknown task family '" + family + "'");
  if (train_count == 0 || heldout_count == 0)
    throw contract_error("ensemble sizes must be positive");
  if (trajectories == 0 || traj_steps < 4)
    throw contract_error("bounce generation needs >= 1 trajectory of >= 4 samples");
  if (s_pool == 0 || s_code == 0)
    throw contract_error("pool and code widths must be positive");
  if (meta_lr <= 0.0 || eval_lr <= 0.0)
    throw contract_error("learning rates must be positive");
  if (horizon <= 0.0) throw contract_error("rollout horizon must be positive");
}

std::string ExperimentConfig::canonical_text() const {
  std::ostringstream out;
  out << "[task]\n"
      << "family = " << family << "\n"
      << "train_count = " << train_count << "\n"
      << "heldout_count = " << heldout_count << "\n"
      << "trajectories = " << trajectories << "\n"
      << "traj_steps = " << traj_steps << "\n"
      << "[model]\n"
      << "s_pool = " << s_pool << "\n"
      << "s_code = " << s_code << "\n"
      << "[train]\n"
      << "meta_iters = " << meta_iters << "\n"
      << "meta_lr = " << fmt17(meta_lr) << "\n"
      << "[eval]\n"
      << "eval_steps = " << eval_steps << "\n"
      << "eval_lr = " << fmt17(eval_lr) << "\n"
      << "horizon = " << fmt17(horizon) << "\n"
      << "[run]\n"
      << "seed = " << seed << "\n";
  return out.str();
}

std::uint64_t ExperimentConfig::hash() const {
  const std::string text = canonical_text();
  return fnv1a64(text.data(), text.size());
}

ExperimentConfig ExperimentConfig::parse(std::string_view text,
                                         const std::string& origin) {
  ExperimentConfig cfg;
  std::istringstream in{std::string(text)};
  std::string line;
  std::string section;
  std::size_t lineno = 0;

  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    if (t.front() == '[') {
      if (t.back() != ']') bad(origin, lineno, "unterminated section header");
      section = t.substr(1, t.size() - 2);
      if (section != "task" && section != "model" && section != "train" &&
          section != "eval" && section != "run")
        bad(origin, lineno, "unknown section [" + section + "]");
      continue;
    }
    const std::size_t eq = t.find('=');
    if (eq == std::string::npos)
      bad(origin, lineno, "expected 'key = value', got '" + t + "'");
    const std::string key = trim(std::string_view(t).substr(0, eq));
    const std::string val = trim(std::string_view(t).substr(eq + 1));
    if (key.empty()) bad(origin, lineno, "empty key");

    const std::string qual = section.empty() ? key : section + "." + key;
    if (qual == "task.family") cfg.family = val;
    else if (qual == "task.train_count") cfg.train_count = to_size(val, origin, lineno, key);
    else if (qual == "task.heldout_count") cfg.heldout_count = to_size(val, origin, lineno, key);
    else if (qual == "task.trajectories") cfg.trajectories = to_size(val, origin, lineno, key);
    else if (qual == "task.traj_steps") cfg.traj_steps = to_size(val, origin, lineno, key);
    else if (qual == "model.s_pool") cfg.s_pool = to_size(val, origin, lineno, key);
    else if (qual == "model.s_code") cfg.s_code = to_size(val, origin, lineno, key);
    else if (qual == "train.meta_iters") cfg.meta_iters = to_size(val, origin, lineno, key);
    else if (qual == "train.meta_lr") cfg.meta_lr = to_double(val, origin, lineno, key);
    else if (qual == "eval.eval_steps") cfg.eval_steps = to_size(val, origin, lineno, key);
    else if (qual == "eval.eval_lr") cfg.eval_lr = to_double(val, origin, lineno, key);
    else if (qual == "eval.horizon") cfg.horizon = to_double(val, origin, lineno, key);
    else if (qual == "run.seed" || qual == "seed") cfg.seed = to_size(val, origin, lineno, key);
    else if (qual == "run.out_dir" || qual == "out_dir") cfg.out_dir = val;
    else bad(origin, lineno, "unknown field '" + qual + "'");
  }

  cfg.validate();
  return cfg;
}

ExperimentConfig ExperimentConfig::from_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw io_error("cannot open config " + path.string());
  std::ostringstream buf;
  buf << f.rdbuf();
  return parse(buf.str(), path.string());
}

void apply_env_seed(ExperimentConfig& cfg) {
  const char* env = std::getenv("MELA_SEED");
  if (env == nullptr || *env == '\0') return;
  const std::string v(env);
  try {
    std::size_t used = 0;
    cfg.seed = std::stoull(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
  } catch (const std::exception&) {
    throw contract_error("MELA_SEED wants a nonnegative integer, got '" + v + "'");
  }
}

}  // namespace mela::harness
