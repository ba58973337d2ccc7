#include <gtest/gtest.h>

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "epoet/runner.hpp"
#include "support.hpp"

using namespace epoet;
using testing_support::StubBackend;
using testing_support::StubLearner;
using testing_support::stub_config;

namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("epoet_harness_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

RestoreOptions stub_restore() {
  RestoreOptions o;
  o.backend = std::make_shared<StubBackend>();
  o.make_learner = [](const RunConfig& c) { return std::make_unique<StubLearner>(es::policy_shape(c.es)); };
  return o;
}

std::unique_ptr<poet::Engine> stub_engine(const RunConfig& c) {
  return std::make_unique<poet::Engine>(c, std::make_shared<StubBackend>(),
                                        std::make_unique<StubLearner>(es::policy_shape(c.es)));
}

int run_cli(const std::string& args) {
  const int rc = std::system((std::string(EPOET_CLI_PATH) + " " + args + " >/dev/null 2>&1").c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

}  // namespace

TEST(Config, DefaultsFromTables) {
  RunConfig c;
  EXPECT_EQ(c.mode, RunMode::epoet_sac);
  EXPECT_EQ(c.num_workers, 10);
  EXPECT_EQ(c.poet.max_num_envs, 40);
  EXPECT_EQ(c.poet.mutation_interval, 75);
  EXPECT_EQ(c.poet.iterations_before_transfer, 15);
  EXPECT_EQ(c.poet.mc_lower, 500.0);
  EXPECT_EQ(c.poet.mc_upper, 3000.0);
  EXPECT_EQ(c.poet.repro_threshold, 2000.0);
  EXPECT_NO_THROW(c.validate());
}

TEST(Config, JsonRoundTrip) {
  RunConfig c = stub_config();
  c.es.hidden = {7, 5};
  const json j = config_to_json(c);
  EXPECT_EQ(config_to_json(config_from_json(j)), j);
}

TEST(Config, UnknownKeyIsConfigError) {
  try {
    config_from_json(json{{"bogus_key", 1}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::config);
    EXPECT_NE(std::string(e.what()).find("bogus_key"), std::string::npos);
  }
}

TEST(Config, OverridesParseJsonValues) {
  RunConfig c;
  apply_override(c, "es_hidden_shape=[8,8]");
  apply_override(c, "mode=sac-only");
  apply_override(c, "poet_repro_threshold=12.5");
  EXPECT_EQ(c.es.hidden, (std::vector<int>{8, 8}));
  EXPECT_EQ(c.mode, RunMode::sac_only);
  EXPECT_EQ(c.poet.repro_threshold, 12.5);
  EXPECT_THROW(apply_override(c, "no_equals_sign"), Error);
  EXPECT_THROW(apply_override(c, "mode=walking"), Error);
}

TEST(Config, InvalidValuesRejected) {
  EXPECT_THROW(config_from_json(json{{"poet_mc_lower", 10}, {"poet_mc_upper", 5}}), Error);
  EXPECT_THROW(config_from_json(json{{"num_workers", 0}}), Error);
}

TEST(Config, ShippedConfigsLoad) {
  const RunConfig d = load_config(std::string(EPOET_SOURCE_DIR) + "/configs/default.json");
  EXPECT_EQ(config_to_json(d), config_to_json(RunConfig{}));
  const RunConfig t = load_config(std::string(EPOET_SOURCE_DIR) + "/configs/tiny.json");
  EXPECT_EQ(t.num_workers, 2);
  EXPECT_EQ(t.es.num_samples, 20);
  EXPECT_EQ(t.terrain.resolution, 16);
  EXPECT_EQ(t.es.hidden, (std::vector<int>{8, 8}));
  EXPECT_EQ(t.sac.hidden, (std::vector<int>{16, 16}));
  EXPECT_EQ(t.iterations, 160);
}

TEST(WorkerPoolTest, ResultsInIndexOrder) {
  WorkerPool pool(4);
  const auto out = pool.map(1000, [](std::size_t i) { return i * i; });
  for (std::size_t i = 0; i < out.size(); ++i) ASSERT_EQ(out[i], i * i);
  EXPECT_TRUE(pool.map(0, [](std::size_t i) { return i; }).empty());
}

TEST(WorkerPoolTest, LowestFailingIndexRethrown) {
  WorkerPool pool(3);
  std::atomic<int> ran{0};
  try {
    pool.map(50, [&](std::size_t i) -> int {
      ++ran;
      if (i == 7 || i == 30) throw std::runtime_error("job " + std::to_string(i));
      return 0;
    });
    FAIL();
  } catch (const std::runtime_error& e) {
    EXPECT_STREQ(e.what(), "job 7");
  }
  EXPECT_EQ(ran.load(), 50);
  EXPECT_EQ(pool.map(3, [](std::size_t i) { return int(i); }), (std::vector<int>{0, 1, 2}));
}

TEST(Checkpoint, SaveRestoreSaveIsByteIdentical) {
  const fs::path d = fresh_dir("rt");
  auto e = stub_engine(stub_config());
  e->initialize();
  e->run_until(20);
  save_checkpoint(*e, (d / "a.json").string());
  auto back = restore_checkpoint((d / "a.json").string(), stub_restore());
  save_checkpoint(*back, (d / "b.json").string());
  EXPECT_EQ(slurp(d / "a.json"), slurp(d / "b.json"));
  EXPECT_EQ(back->next_iteration(), 20);
}

TEST(Checkpoint, CorruptBundleIsIoError) {
  const fs::path d = fresh_dir("corrupt");
  auto e = stub_engine(stub_config());
  e->initialize();
  save_checkpoint(*e, (d / "c.json").string());
  std::string text = slurp(d / "c.json");
  text.replace(text.find("\"next_iteration\": 0"), 19, "\"next_iteration\": 9");
  std::ofstream(d / "c.json", std::ios::trunc) << text;
  try {
    restore_checkpoint((d / "c.json").string(), stub_restore());
    FAIL();
  } catch (const Error& err) {
    EXPECT_EQ(err.kind(), ErrorKind::io);
  }
  std::ofstream(d / "junk.json") << "{not json";
  EXPECT_THROW(restore_checkpoint((d / "junk.json").string(), stub_restore()), Error);
  EXPECT_THROW(restore_checkpoint((d / "missing.json").string(), stub_restore()), Error);
}

TEST(Checkpoint, VersionMismatchIsVersionError) {
  const fs::path d = fresh_dir("version");
  auto e = stub_engine(stub_config());
  e->initialize();
  json bundle = make_bundle(*e);
  bundle["version"] = kCheckpointVersion + 1;
  std::ofstream(d / "v.json") << bundle.dump();
  try {
    restore_checkpoint((d / "v.json").string(), stub_restore());
    FAIL();
  } catch (const Error& err) {
    EXPECT_EQ(err.kind(), ErrorKind::version);
  }
}

TEST(Checkpoint, ResumeMatchesUninterruptedRun) {
  RunConfig c = stub_config();
  c.iterations = 90;
  c.checkpoint_interval = 0;
  const fs::path full_dir = fresh_dir("full"), split_dir = fresh_dir("split");

  auto full = stub_engine(c);
  Runner(*full, full_dir).start();

  RunConfig half = c;
  half.iterations = 45;
  auto first = stub_engine(half);
  Runner(*first, split_dir).start();
  auto resumed = restore_checkpoint((split_dir / "checkpoint.json").string(), [] {
    RestoreOptions o = stub_restore();
    o.adjust_config = [](RunConfig& rc) { rc.iterations = 90; };
    return o;
  }());
  Runner(*resumed, split_dir).resume();

  EXPECT_EQ(slurp(full_dir / "run_log.csv"), slurp(split_dir / "run_log.csv"));
  EXPECT_EQ(slurp(full_dir / "events.csv"), slurp(split_dir / "events.csv"));
  EXPECT_EQ(full->state_to_json(), resumed->state_to_json());
  EXPECT_TRUE(fs::exists(full_dir / "terrains" / "pair_0.pgm"));
}

TEST(Checkpoint, ReplaySidecarRoundTrip) {
  const fs::path d = fresh_dir("replay");
  RunConfig c = stub_config();
  c.es.hidden = {4};
  c.sac.hidden = {8};
  c.sac.batch_size = 16;
  c.sac.replay_buffer_size = 1000;
  c.poet.sac_steps_per_iteration = 20;
  c.walker.trajectory_length = 20;
  c.checkpoint_replay_buffer = true;
  poet::Engine e(c, std::make_shared<StubBackend>());
  e.initialize();
  e.run_until(3);
  save_checkpoint(e, (d / "r.json").string());
  EXPECT_TRUE(fs::exists(d / "r.json.replay"));
  RestoreOptions o;
  o.backend = std::make_shared<StubBackend>();
  auto back = restore_checkpoint((d / "r.json").string(), o);
  EXPECT_EQ(back->learner()->buffer_size(), e.learner()->buffer_size());
  EXPECT_GT(back->learner()->buffer_size(), 0);
  e.run_until(6);
  back->run_until(6);
  EXPECT_EQ(e.state_to_json(), back->state_to_json());
}

TEST(EvalSuite, BinsByVarianceTertile) {
  EXPECT_EQ(eval::difficulty_bins({0.3, 0.1, 0.2}), (std::vector<int>{2, 0, 1}));
  EXPECT_EQ(eval::difficulty_bins({5, 4, 3, 2, 1, 0}), (std::vector<int>{2, 2, 1, 1, 0, 0}));
}

TEST(EvalSuite, SummaryArithmetic) {
  eval::EvalReport r;
  r.bin = {0, 1, 2};
  for (int env = 0; env < 3; ++env)
    for (int run = 0; run < 5; ++run) r.entries.push_back({env, run, double(10 * env + run), true, env == 0 || run == 0});
  eval::summarize(r);
  EXPECT_EQ(r.total_runs, 15);
  EXPECT_EQ(r.total_solved, 7);
  EXPECT_DOUBLE_EQ(r.success_rate, 7.0 / 15);
  EXPECT_DOUBLE_EQ(r.bins[0].success_rate, 1.0);
  EXPECT_DOUBLE_EQ(r.bins[1].success_rate, 0.2);
  EXPECT_DOUBLE_EQ(r.mean_return, 12.0);
  EXPECT_DOUBLE_EQ(r.max_return, 24.0);
}

TEST(EvalSuite, FiveRunsPerEnvironmentAndJsonRoundTrip) {
  std::vector<terrain::TerrainSpec> envs;
  for (std::uint64_t s = 0; s < 3; ++s) {
    terrain::TerrainSpec spec;
    spec.genome = neat::initial_genome(s, {});
    spec.terrain_seed = s;
    spec.settings.resolution = 16;
    spec.settings.bowl_coarse_resolution = 4;
    envs.push_back(spec);
  }
  walker::WalkerConfig wc;
  wc.trajectory_length = 40;
  es::EsConfig ec;
  ec.hidden = {4};
  const auto theta = es::initial_state(1, ec).theta;
  WorkerPool pool(2);
  const auto a = eval::evaluate_suite(theta, envs, wc, 7, &pool);
  const auto b = eval::evaluate_suite(theta, envs, wc, 7);
  ASSERT_EQ(a.entries.size(), 15u);
  EXPECT_TRUE(a == b);
  for (std::size_t i = 0; i < a.entries.size(); ++i) {
    EXPECT_EQ(a.entries[i].env_index, int(i / 5));
    EXPECT_FALSE(a.entries[i].solved);
  }
  EXPECT_TRUE(eval::report_from_json(eval::to_json(a)) == a);
  EXPECT_THROW(eval::evaluate_suite(theta, {}, wc, 7), Error);
}

TEST(Cli, ExitCodes) {
  const fs::path d = fresh_dir("cli");
  EXPECT_EQ(run_cli("--help"), 0);
  EXPECT_EQ(run_cli("frobnicate"), 2);
  EXPECT_EQ(run_cli("run --set bogus=1"), 2);
  EXPECT_EQ(run_cli("run --print-config"), 0);
  EXPECT_EQ(run_cli("inspect-checkpoint " + (d / "missing.json").string()), 3);
  EXPECT_EQ(run_cli("export-terrain --config " + std::string(EPOET_SOURCE_DIR) + "/configs/tiny.json --iteration 3 --out " +
                    (d / "t.pgm").string() + " --format pgm"),
            0);
  EXPECT_EQ(terrain::import_pgm_levels((d / "t.pgm").string()).size(), 256u);
}
