#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace mela::harness {

// Flat experiment configuration. The canonical text form fixes section and
// key order, so its hash stamps output files reproducibly. The output
// directory is deliberately not part of the canonical form: it says where
// results land, not what they are.
struct ExperimentConfig {
  // [task]
  std::string family = "sinusoid";  // "sinusoid" or "bounce"
  std::size_t train_count = 100;    // meta-training ensemble size
  std::size_t heldout_count = 1000; // evaluation ensemble size
  std::size_t trajectories = 10;    // bounce family only
  std::size_t traj_steps = 20;      // samples per trajectory

  // [model]
  std::size_t s_pool = 200;
  std::size_t s_code = 20;

  // [train]
  std::size_t meta_iters = 250;  // outer sweeps over the train ensemble
  double meta_lr = 0.001;

  // [eval]
  std::size_t eval_steps = 10;
  double eval_lr = 0.001;
  double horizon = 1.0;  // rollout arc length, bounce family

  // [run]
  std::uint64_t seed = 0;

  std::string out_dir = "out";  // not hashed

  void validate() const;
  std::string canonical_text() const;
  std::uint64_t hash() const;

  // Parse `key = value` lines with [section] headers and # comments.
  // `origin` names the source in diagnostics (file path or "<flags>").
  static ExperimentConfig parse(std::string_view text, const std::string& origin);
  static ExperimentConfig from_file(const std::filesystem::path& path);
};

// MELA_SEED in the environment overrides the config seed (flags still beat
// the environment; the caller applies them afterwards).
void apply_env_seed(ExperimentConfig& cfg);

}  // namespace mela::harness
