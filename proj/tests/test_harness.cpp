#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "mela/config.hpp"
#include "mela/errors.hpp"
#include "mela/experiments.hpp"
#include "mela/metrics.hpp"
#include "mela/model.hpp"
#include "mela/stats.hpp"
#include "mela/tasks.hpp"

using namespace mela;

namespace {

namespace fs = std::filesystem;

fs::path temp_file(const char* name) {
  return fs::temp_directory_path() / name;
}

// Closed-form Student-t CDFs for 1 and 2 degrees of freedom; independent of
// the distribution code the implementation relies on.
double t_cdf_dof1(double t) {
  return 0.5 + std::atan(t) / std::numbers::pi;
}
double t_cdf_dof2(double t) {
  return 0.5 * (1.0 + t / std::sqrt(2.0 + t * t));
}

harness::ExperimentConfig tiny_sinusoid_config() {
  harness::ExperimentConfig cfg;
  cfg.family = "sinusoid";
  cfg.train_count = 4;
  cfg.heldout_count = 3;
  cfg.s_pool = 6;
  cfg.s_code = 2;
  cfg.meta_iters = 1;
  cfg.eval_steps = 2;
  cfg.seed = 21;
  return cfg;
}

}  // namespace

// -------------------------------------------------------------------- stats

TEST_CASE("mean and standard error match hand arithmetic") {
  const std::vector<double> v{2.0, 4.0, 6.0};
  const stats::MeanStderr m = stats::mean_stderr(v);
  CHECK(m.mean == doctest::Approx(4.0));
  CHECK(m.se == doctest::Approx(2.0 / std::sqrt(3.0)));
  CHECK(m.n == 3);

  const std::vector<double> one{7.5};
  const stats::MeanStderr s = stats::mean_stderr(one);
  CHECK(s.mean == doctest::Approx(7.5));
  CHECK(s.se == 0.0);
  CHECK(s.n == 1);

  CHECK_THROWS_AS(stats::mean_stderr(std::vector<double>{}),
                  empty_dataset_error);
}

TEST_CASE("paired t-test matches closed-form t distributions") {
  // n = 2: one degree of freedom, the Cauchy distribution.
  // d = a - b = {-2, 1}: mean -0.5, se 1.5, t = -1/3.
  const std::vector<double> a2{1.0, 2.0}, b2{3.0, 1.0};
  CHECK(stats::paired_t_less(a2, b2) ==
        doctest::Approx(t_cdf_dof1(-1.0 / 3.0)).epsilon(1e-12));

  // n = 3: two degrees of freedom.
  // d = {-1, -2, 1}: mean -2/3, se sqrt(7)/3, t = -2/sqrt(7).
  const std::vector<double> a3{1.0, 2.0, 3.0}, b3{2.0, 4.0, 2.0};
  CHECK(stats::paired_t_less(a3, b3) ==
        doctest::Approx(t_cdf_dof2(-2.0 / std::sqrt(7.0))).epsilon(1e-12));

  // The two one-sided p-values complement each other.
  const double p_ab = stats::paired_t_less(a3, b3);
  const double p_ba = stats::paired_t_less(b3, a3);
  CHECK(p_ab + p_ba == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("zero-variance differences are decided by sign") {
  const std::vector<double> base{1.0, 2.0, 3.0};
  std::vector<double> lower(base), higher(base);
  for (double& x : lower) x -= 0.5;
  for (double& x : higher) x += 0.5;
  CHECK(stats::paired_t_less(lower, base) == 0.0);
  CHECK(stats::paired_t_less(higher, base) == 1.0);
  CHECK(stats::paired_t_less(base, base) == 0.5);
}

TEST_CASE("paired t-test rejects bad shapes") {
  const std::vector<double> a{1.0, 2.0, 3.0}, b{1.0, 2.0};
  CHECK_THROWS_AS(stats::paired_t_less(a, b), dimension_error);
  const std::vector<double> one{1.0};
  CHECK_THROWS_AS(stats::paired_t_less(one, one), contract_error);
}

// ------------------------------------------------------------------- metrics

TEST_CASE("metric files round-trip bitwise") {
  harness::MetricTable t;
  t.add("exp", "beta", "loss", 1.0 / 3.0, 0.1 + 0.2, 1e-17, 3);
  t.add("exp", "alpha", "loss", 2.0, -1e300, 0.0, 1);
  t.add("exp", "alpha", "loss", -0.5, 4.0, 2.0, 100);
  t.add("exp", "alpha", "err", 7.0, 1e-310, 0.5, 2);  // subnormal survives

  const fs::path path = temp_file("mela_metrics_roundtrip.csv");
  harness::emit_metrics(t, path, 0xDEADBEEFCAFEF00Dull);
  const harness::ParsedMetrics parsed = harness::parse_metrics(path);

  CHECK(parsed.config_hash == 0xDEADBEEFCAFEF00Dull);
  harness::MetricTable expected = t;
  expected.sort_rows();
  REQUIRE(parsed.table.rows.size() == expected.rows.size());
  for (std::size_t i = 0; i < expected.rows.size(); ++i)
    CHECK(parsed.table.rows[i] == expected.rows[i]);  // doubles exact
  fs::remove(path);
}

TEST_CASE("emission sorts rows by model, metric, abscissa") {
  harness::MetricTable t;
  t.add("e", "zeta", "m", 0.0, 1.0, 0.0, 1);
  t.add("e", "alpha", "z_metric", 0.0, 2.0, 0.0, 1);
  t.add("e", "alpha", "a_metric", 5.0, 3.0, 0.0, 1);
  t.add("e", "alpha", "a_metric", -1.0, 4.0, 0.0, 1);

  const fs::path path = temp_file("mela_metrics_sorted.csv");
  harness::emit_metrics(t, path, 0);
  const auto rows = harness::parse_metrics(path).table.rows;
  REQUIRE(rows.size() == 4);
  CHECK(rows[0].value == 4.0);  // alpha / a_metric / -1
  CHECK(rows[1].value == 3.0);  // alpha / a_metric / 5
  CHECK(rows[2].value == 2.0);  // alpha / z_metric
  CHECK(rows[3].value == 1.0);  // zeta
  fs::remove(path);
}

TEST_CASE("equal sort keys keep insertion order") {
  harness::MetricTable t;
  t.add("first", "m", "k", 1.0, 10.0, 0.0, 1);
  t.add("second", "m", "k", 1.0, 20.0, 0.0, 1);
  t.add("third", "m", "k", 1.0, 30.0, 0.0, 1);
  t.sort_rows();
  CHECK(t.rows[0].experiment == "first");
  CHECK(t.rows[1].experiment == "second");
  CHECK(t.rows[2].experiment == "third");
}

TEST_CASE("metric validation rejects NaN and delimiter labels") {
  const fs::path path = temp_file("mela_metrics_reject.csv");
  {
    harness::MetricTable t;
    t.add("e", "m", "k", 0.0, std::nan(""), 0.0, 1);
    CHECK_THROWS_AS(harness::emit_metrics(t, path, 0), numeric_error);
  }
  {
    harness::MetricTable t;
    t.add("e", "bad,label", "k", 0.0, 1.0, 0.0, 1);
    CHECK_THROWS_AS(harness::emit_metrics(t, path, 0), contract_error);
  }
  {
    harness::MetricTable t;
    t.add("e", "m", "#k", 0.0, 1.0, 0.0, 1);
    CHECK_THROWS_AS(harness::emit_metrics(t, path, 0), contract_error);
  }
  {
    harness::MetricTable t;
    t.add("", "m", "k", 0.0, 1.0, 0.0, 1);
    CHECK_THROWS_AS(harness::emit_metrics(t, path, 0), contract_error);
  }
  // Infinity is representable and round-trips; only NaN is rejected.
  {
    harness::MetricTable t;
    t.add("e", "m", "k", 0.0, std::numeric_limits<double>::infinity(), 0.0, 1);
    harness::emit_metrics(t, path, 0);
    CHECK(harness::parse_metrics(path).table.rows[0].value ==
          std::numeric_limits<double>::infinity());
  }
  fs::remove(path);
}

TEST_CASE("empty tables still carry the stamp and header") {
  const fs::path path = temp_file("mela_metrics_empty.csv");
  harness::emit_metrics(harness::MetricTable{}, path, 0x42);

  std::ifstream f(path);
  std::string line1, line2, line3;
  REQUIRE(std::getline(f, line1));
  REQUIRE(std::getline(f, line2));
  CHECK(line1 == "# config-hash: 0000000000000042");
  CHECK(line2 == "experiment,model,metric,abscissa,value,stderr,n");
  CHECK_FALSE(std::getline(f, line3));

  const harness::ParsedMetrics parsed = harness::parse_metrics(path);
  CHECK(parsed.config_hash == 0x42);
  CHECK(parsed.table.rows.empty());
  fs::remove(path);
}

TEST_CASE("metric parsing reports the offending line") {
  const fs::path path = temp_file("mela_metrics_corrupt.csv");
  {
    std::ofstream f(path, std::ios::binary);
    f << "# config-hash: 0000000000000001\n"
      << "experiment,model,metric,abscissa,value,stderr,n\n"
      << "e,m,k,0,1,0,1\n"
      << "e,m,k,0,1\n";  // five fields
  }
  CHECK_THROWS_WITH_AS(harness::parse_metrics(path),
                       doctest::Contains(":4: expected 7 fields"), io_error);

  {
    std::ofstream f(path, std::ios::binary);
    f << "not a stamp\n";
  }
  CHECK_THROWS_WITH_AS(harness::parse_metrics(path),
                       doctest::Contains("config-hash stamp"), io_error);

  {
    std::ofstream f(path, std::ios::binary);
    f << "# config-hash: 0000000000000001\n"
      << "wrong,header\n";
  }
  CHECK_THROWS_WITH_AS(harness::parse_metrics(path),
                       doctest::Contains("metric header"), io_error);
  fs::remove(path);
}

// -------------------------------------------------------------------- config

TEST_CASE("canonical text is a parse fixed point") {
  harness::ExperimentConfig cfg;
  cfg.family = "bounce";
  cfg.train_count = 7;
  cfg.meta_lr = 0.00123456789012345;
  cfg.horizon = 2.5;
  cfg.seed = 99;

  const std::string text = cfg.canonical_text();
  const harness::ExperimentConfig back =
      harness::ExperimentConfig::parse(text, "<test>");
  CHECK(back.canonical_text() == text);
  CHECK(back.hash() == cfg.hash());
}

TEST_CASE("the hash tracks every canonical field and ignores out_dir") {
  const harness::ExperimentConfig base;
  const std::uint64_t h0 = base.hash();

  harness::ExperimentConfig c = base;
  c.out_dir = "elsewhere/deeper";
  CHECK(c.hash() == h0);  // where results land, not what they are

  c = base; c.family = "bounce";      CHECK(c.hash() != h0);
  c = base; c.train_count = 101;      CHECK(c.hash() != h0);
  c = base; c.heldout_count = 999;    CHECK(c.hash() != h0);
  c = base; c.trajectories = 11;      CHECK(c.hash() != h0);
  c = base; c.traj_steps = 21;        CHECK(c.hash() != h0);
  c = base; c.s_pool = 100;           CHECK(c.hash() != h0);
  c = base; c.s_code = 10;            CHECK(c.hash() != h0);
  c = base; c.meta_iters = 251;       CHECK(c.hash() != h0);
  c = base; c.meta_lr = 0.002;        CHECK(c.hash() != h0);
  c = base; c.eval_steps = 11;        CHECK(c.hash() != h0);
  c = base; c.eval_lr = 0.002;        CHECK(c.hash() != h0);
  c = base; c.horizon = 0.5;          CHECK(c.hash() != h0);
  c = base; c.seed = 1;               CHECK(c.hash() != h0);
}

TEST_CASE("config parsing reports file and line in diagnostics") {
  CHECK_THROWS_WITH_AS(
      harness::ExperimentConfig::parse("[task]\nbogus = 1\n", "cfg.txt"),
      doctest::Contains("cfg.txt:2: unknown field 'task.bogus'"),
      contract_error);
  CHECK_THROWS_WITH_AS(
      harness::ExperimentConfig::parse("[nope]\n", "cfg.txt"),
      doctest::Contains("cfg.txt:1: unknown section"), contract_error);
  CHECK_THROWS_WITH_AS(
      harness::ExperimentConfig::parse("[train]\nmeta_iters = soon\n", "c"),
      doctest::Contains("c:2:"), contract_error);
  CHECK_THROWS_WITH_AS(
      harness::ExperimentConfig::parse("[run]\nseed\n", "c"),
      doctest::Contains("expected 'key = value'"), contract_error);
  // Comments, blanks, and unsectioned seed/out_dir are accepted.
  const harness::ExperimentConfig cfg = harness::ExperimentConfig::parse(
      "# a comment\n\nseed = 12\nout_dir = results\n", "<test>");
  CHECK(cfg.seed == 12);
  CHECK(cfg.out_dir == "results");
}

TEST_CASE("config validation rejects unusable settings") {
  harness::ExperimentConfig cfg;
  cfg.family = "pendulum";
  CHECK_THROWS_AS(cfg.validate(), contract_error);
  cfg = {}; cfg.train_count = 0;  CHECK_THROWS_AS(cfg.validate(), contract_error);
  cfg = {}; cfg.traj_steps = 3;   CHECK_THROWS_AS(cfg.validate(), contract_error);
  cfg = {}; cfg.meta_lr = 0.0;    CHECK_THROWS_AS(cfg.validate(), contract_error);
  cfg = {}; cfg.horizon = -1.0;   CHECK_THROWS_AS(cfg.validate(), contract_error);
  cfg = {}; CHECK_NOTHROW(cfg.validate());
}

TEST_CASE("MELA_SEED overrides the config seed") {
  harness::ExperimentConfig cfg;
  cfg.seed = 5;

  setenv("MELA_SEED", "321", 1);
  harness::apply_env_seed(cfg);
  CHECK(cfg.seed == 321);

  setenv("MELA_SEED", "12x", 1);
  CHECK_THROWS_AS(harness::apply_env_seed(cfg), contract_error);

  unsetenv("MELA_SEED");
  cfg.seed = 5;
  harness::apply_env_seed(cfg);
  CHECK(cfg.seed == 5);
}

// --------------------------------------------------------------- experiments

TEST_CASE("seed streams are deterministic and distinct") {
  const harness::SeedStream streams[] = {
      harness::kStreamTrainSet, harness::kStreamHeldout, harness::kStreamInit,
      harness::kStreamMeta,     harness::kStreamPretrain, harness::kStreamMaml,
      harness::kStreamOracle,   harness::kStreamRollout, harness::kStreamInteract,
      harness::kStreamLocality};
  for (std::uint64_t root : {0ull, 7ull, 123456789ull}) {
    std::vector<std::uint64_t> seeds;
    for (harness::SeedStream s : streams) {
      CHECK(harness::stream_seed(root, s) == harness::stream_seed(root, s));
      seeds.push_back(harness::stream_seed(root, s));
    }
    std::sort(seeds.begin(), seeds.end());
    CHECK(std::adjacent_find(seeds.begin(), seeds.end()) == seeds.end());
  }
  CHECK(harness::stream_seed(1, harness::kStreamMeta) !=
        harness::stream_seed(2, harness::kStreamMeta));
}

TEST_CASE("task families map to their generated networks") {
  const nn::MlpSpec sin = harness::family_task_net("sinusoid");
  CHECK(sin.sizes == std::vector<std::size_t>{1, 40, 40, 1});
  CHECK(sin.slope == doctest::Approx(0.3));
  const nn::MlpSpec bounce = harness::family_task_net("bounce");
  CHECK(bounce.sizes == std::vector<std::size_t>{6, 40, 40, 40, 2});
  CHECK_THROWS_AS(harness::family_task_net("pendulum"), contract_error);

  CHECK(harness::family_from_name("sinusoid") == TaskFamily::kSinusoid);
  CHECK(harness::family_from_name("bounce") == TaskFamily::kBounce);
  CHECK_THROWS_AS(harness::family_from_name("pendulum"), contract_error);
}

TEST_CASE("the sinusoid study produces a full comparison table") {
  const harness::ExperimentConfig cfg = tiny_sinusoid_config();
  const harness::SinusoidStudy study = harness::run_fig3(cfg);

  CHECK(study.meta_loss.size() == cfg.meta_iters * cfg.train_count);
  CHECK(study.mela.losses.size() == cfg.heldout_count);
  CHECK(study.pretrained.losses.size() == cfg.heldout_count);
  CHECK(study.maml.losses.size() == cfg.heldout_count);
  for (const auto& row : study.mela.losses)
    CHECK(row.size() == cfg.eval_steps + 1);
  CHECK(study.config_hash == cfg.hash());

  // One mean row per model and step.
  CHECK(study.metrics.rows.size() == 3 * (cfg.eval_steps + 1));
  for (const auto& row : study.metrics.rows) {
    CHECK(row.experiment == "fig3");
    CHECK(row.n == cfg.heldout_count);
    CHECK(std::isfinite(row.value));
  }

  // Same config, same study, bit for bit.
  const harness::SinusoidStudy again = harness::run_fig3(cfg);
  REQUIRE(again.metrics.rows.size() == study.metrics.rows.size());
  for (std::size_t i = 0; i < study.metrics.rows.size(); ++i)
    CHECK(again.metrics.rows[i] == study.metrics.rows[i]);
}

TEST_CASE("the bounce study rolls four models over every distance") {
  harness::ExperimentConfig cfg;
  cfg.family = "bounce";
  cfg.train_count = 3;
  cfg.heldout_count = 2;
  cfg.trajectories = 4;
  cfg.traj_steps = 8;
  cfg.s_pool = 6;
  cfg.s_code = 2;
  cfg.meta_iters = 1;
  cfg.horizon = 0.3;
  cfg.seed = 5;

  const harness::BounceStudy study = harness::run_fig2(cfg);
  const std::vector<double> expect_d{0.1, 0.2, 0.3};
  REQUIRE(study.distances.size() == 3);
  for (std::size_t k = 0; k < 3; ++k)
    CHECK(study.distances[k] == doctest::Approx(expect_d[k]));

  for (const auto* table : {&study.oracle, &study.mela, &study.pretrained,
                            &study.maml}) {
    REQUIRE(table->size() == cfg.heldout_count);
    for (const auto& room : *table) {
      REQUIRE(room.size() == 3);
      for (double e : room) {
        CHECK(std::isfinite(e));
        CHECK(e >= 0.0);
      }
    }
  }
  CHECK(study.heldout.size() == cfg.heldout_count);
  CHECK(study.metrics.rows.size() == 4 * 3);  // four models, three distances
}

TEST_CASE("the interactive study pairs selected against random additions") {
  const harness::ExperimentConfig cfg = tiny_sinusoid_config();
  const auto ensemble = tasks::gen_ensemble(
      TaskFamily::kSinusoid, cfg.train_count,
      harness::stream_seed(cfg.seed, harness::kStreamTrainSet));
  const harness::TrainedModels models = harness::train_all(cfg, ensemble, false);

  const harness::PairedStudy study =
      harness::run_interact(models.mela, 5, 77);
  CHECK(study.selected.size() == 5);
  CHECK(study.random.size() == 5);
  CHECK(study.before.size() == 5);
  CHECK(study.picked.size() == 5);
  for (std::size_t t = 0; t < 5; ++t) {
    CHECK(study.selected[t] >= 0.0);
    CHECK(study.random[t] >= 0.0);
    CHECK(study.before[t] >= 0.0);
    CHECK(study.picked[t] < harness::kInteractCandidates);
  }
  CHECK(study.p_less >= 0.0);
  CHECK(study.p_less <= 1.0);

  const harness::PairedStudy again = harness::run_interact(models.mela, 5, 77);
  CHECK(again.selected == study.selected);
  CHECK(again.random == study.random);
  CHECK(again.before == study.before);
  CHECK(again.picked == study.picked);
  CHECK(again.p_less == study.p_less);

  CHECK_THROWS_AS(harness::run_interact(models.mela, 1, 77), contract_error);
}

TEST_CASE("influence locality compares top examples against uniform draws") {
  // An untrained recognition model suffices: the study only needs influence
  // scores and geometry, not a good predictor.
  const nn::MlpSpec bounce_net{{6, 8, 2}, 0.3};
  MelaSpec spec = MelaSpec::standard(bounce_net, 6, 2);
  Rng rng(3);
  const MelaModel model = MelaModel::init(std::move(spec), rng);

  const auto rooms = tasks::gen_ensemble(TaskFamily::kBounce, 3, 11,
                                         tasks::BounceConfig{4, 10});
  const harness::PairedStudy study =
      harness::run_influence_locality(model, rooms, 13);
  CHECK(study.selected.size() == 3);
  CHECK(study.random.size() == 3);
  CHECK(study.before.empty());
  CHECK(study.picked.empty());
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(study.selected[i] >= 0.0);
    CHECK(study.random[i] >= 0.0);
  }

  const harness::PairedStudy again =
      harness::run_influence_locality(model, rooms, 13);
  CHECK(again.selected == study.selected);
  CHECK(again.random == study.random);

  // Rooms with fewer than 10 train examples cannot rank a top ten.
  const auto starved = tasks::gen_ensemble(TaskFamily::kBounce, 2, 11,
                                           tasks::BounceConfig{1, 6});
  CHECK_THROWS_AS(harness::run_influence_locality(model, starved, 13),
                  contract_error);
}

TEST_CASE("the interactive protocol constants stay pinned") {
  CHECK(harness::kInteractQuery == -4.0);
  CHECK(harness::kInteractGiven == 2);
  CHECK(harness::kInteractCandidates == 8);
}
