#include "mela/dataset_io.hpp"

#include <fstream>

#include "mela/errors.hpp"
#include "mela/wire.hpp"

namespace mela {

// Serialization is the one consumer allowed raw access to hidden params.
class DatasetCodec {
public:
  static void put(std::ostream& out, const TaskDataset& d) {
    io::put_u64(out, static_cast<std::uint64_t>(d.family));
    io::put_u64(out, d.seed);
    io::put_u64(out, d.id);
    io::put_u64(out, d.x.rows());
    io::put_u64(out, d.x.cols());
    io::put_u64(out, d.y.cols());
    for (double v : d.x.flat()) io::put_f64(out, v);
    for (double v : d.y.flat()) io::put_f64(out, v);
    io::put_u64(out, d.train_idx.size());
    for (std::int32_t i : d.train_idx)
      io::put_u64(out, static_cast<std::uint64_t>(i));
    io::put_u64(out, d.test_idx.size());
    for (std::int32_t i : d.test_idx)
      io::put_u64(out, static_cast<std::uint64_t>(i));
    io::put_u64(out, d.hidden_.size());
    for (double v : d.hidden_) io::put_f64(out, v);
  }

  static TaskDataset get(std::istream& in) {
    const std::uint64_t family = io::get_u64(in);
    if (family > 1) throw io_error("unknown task family tag");
    const std::uint64_t seed = io::get_u64(in);
    const std::uint64_t id = io::get_u64(in);
    const auto rows = static_cast<std::size_t>(io::get_u64(in));
    const auto s0 = static_cast<std::size_t>(io::get_u64(in));
    const auto sout = static_cast<std::size_t>(io::get_u64(in));
    constexpr std::size_t kMaxSide = 1u << 24;
    if (rows > kMaxSide || s0 > kMaxSide || sout > kMaxSide)
      throw io_error("implausible dataset dimensions");
    Tensor x(rows, s0), y(rows, sout);
    for (double& v : x.flat()) v = io::get_f64(in);
    for (double& v : y.flat()) v = io::get_f64(in);
    auto read_idx = [&in, rows]() {
      const auto n = static_cast<std::size_t>(io::get_u64(in));
      if (n > rows) throw io_error("split larger than the dataset");
      std::vector<std::int32_t> idx(n);
      for (std::int32_t& i : idx) i = static_cast<std::int32_t>(io::get_u64(in));
      return idx;
    };
    std::vector<std::int32_t> train = read_idx();
    std::vector<std::int32_t> test = read_idx();
    const auto n_hidden = static_cast<std::size_t>(io::get_u64(in));
    if (n_hidden > kMaxSide) throw io_error("implausible hidden-param count");
    std::vector<double> hidden(n_hidden);
    for (double& v : hidden) v = io::get_f64(in);
    return TaskDataset(static_cast<TaskFamily>(family), seed, id, std::move(x),
                       std::move(y), std::move(train), std::move(test),
                       std::move(hidden));
  }
};

}  // namespace mela

namespace mela::io {

namespace {
constexpr char kEnsembleMagic[9] = "DSETENS\x01";
}

void save_ensemble(const std::string& path,
                   const std::vector<TaskDataset>& datasets) {
  std::ofstream out = open_out(path);
  put_magic(out, kEnsembleMagic);
  put_u64(out, datasets.size());
  for (const TaskDataset& d : datasets) DatasetCodec::put(out, d);
  if (!out) throw io_error("short write to " + path);
}

std::vector<TaskDataset> load_ensemble(const std::string& path) {
  std::ifstream in = open_in(path);
  expect_magic(in, kEnsembleMagic, "task ensemble");
  const auto count = static_cast<std::size_t>(get_u64(in));
  if (count > (1u << 24)) throw io_error("implausible ensemble size");
  std::vector<TaskDataset> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(DatasetCodec::get(in));
  return out;
}

}  // namespace mela::io
