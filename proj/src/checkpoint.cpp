#include "mela/checkpoint.hpp"

#include <fstream>

#include "mela/errors.hpp"
#include "mela/wire.hpp"

namespace mela::io {

namespace {

constexpr char kMlpMagic[9] = "MLPCKPT\x01";
constexpr char kMelaMagic[9] = "MELACKP\x01";

}  // namespace

// ----------------------------------------------------------------- mlp form

void save_mlp_checkpoint(const std::string& path, const nn::MlpSpec& spec,
                         const nn::ParamSet& params, std::uint64_t seed,
                         std::uint64_t step) {
  std::ofstream out = open_out(path);
  put_magic(out, kMlpMagic);
  put_spec(out, spec);
  put_flat(out, nn::flatten_params(params));
  put_u64(out, seed);
  put_u64(out, step);
  if (!out) throw io_error("short write to " + path);
}

MlpCheckpoint load_mlp_checkpoint(const std::string& path) {
  std::ifstream in = open_in(path);
  expect_magic(in, kMlpMagic, "network");
  MlpCheckpoint ck;
  ck.spec = get_spec(in);
  ck.params = nn::unflatten_params(ck.spec, get_flat(in, ck.spec.param_count()));
  ck.seed = get_u64(in);
  ck.step = get_u64(in);
  return ck;
}

// ---------------------------------------------------------------- mela form

void save_mela_checkpoint(const std::string& path, const MelaModel& model,
                          std::uint64_t seed, std::uint64_t step) {
  model.spec.validate();
  std::ofstream out = open_out(path);
  put_magic(out, kMelaMagic);
  put_spec(out, model.spec.task_net);
  put_u64(out, model.spec.s_pool);
  put_u64(out, model.spec.s_code);
  put_flat(out, model.flatten());
  put_u64(out, seed);
  put_u64(out, step);
  if (!out) throw io_error("short write to " + path);
}

MelaCheckpoint load_mela_checkpoint(const std::string& path) {
  std::ifstream in = open_in(path);
  expect_magic(in, kMelaMagic, "meta-model");
  nn::MlpSpec task_net = get_spec(in);
  const std::size_t s_pool = static_cast<std::size_t>(get_u64(in));
  const std::size_t s_code = static_cast<std::size_t>(get_u64(in));

  MelaCheckpoint ck;
  ck.model.spec = MelaSpec::standard(task_net, s_pool, s_code);
  // Allocate shaped storage, then overwrite from the flat payload.
  Rng scratch(0);
  ck.model = MelaModel::init(ck.model.spec, scratch);
  ck.model.load_flat(get_flat(in, ck.model.spec.param_count()));
  ck.seed = get_u64(in);
  ck.step = get_u64(in);
  return ck;
}

}  // namespace mela::io
