#pragma once

#include <cstdint>
#include <string>

#include "mela/model.hpp"
#include "mela/nn.hpp"

// Binary checkpoints, little-endian on any host. Exact byte layouts are
// documented in docs/FORMATS.md and exercised by round-trip tests.
namespace mela::io {

struct MlpCheckpoint {
  nn::MlpSpec spec;
  nn::ParamSet params;
  std::uint64_t seed = 0;
  std::uint64_t step = 0;
};

void save_mlp_checkpoint(const std::string& path, const nn::MlpSpec& spec,
                         const nn::ParamSet& params, std::uint64_t seed,
                         std::uint64_t step);
MlpCheckpoint load_mlp_checkpoint(const std::string& path);

struct MelaCheckpoint {
  MelaModel model;
  std::uint64_t seed = 0;
  std::uint64_t step = 0;
};

void save_mela_checkpoint(const std::string& path, const MelaModel& model,
                          std::uint64_t seed, std::uint64_t step);
MelaCheckpoint load_mela_checkpoint(const std::string& path);

}  // namespace mela::io
