// epoet command-line front end.
//
//   epoet run [--config FILE] [--set key=value]... [--print-config]
//   epoet resume CHECKPOINT [--set key=value]...
//   epoet eval CHECKPOINT [--envs CHECKPOINT] [--seed N] [--out FILE]
//   epoet export-terrain (--checkpoint FILE --pair ID | --config FILE) [--iteration T] [--format csv|pgm] --out FILE
//   epoet inspect-checkpoint CHECKPOINT
//
// Exit codes: 0 success, 2 configuration/usage error, 3 runtime error.

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "epoet/epoet.hpp"
#include "epoet/runner.hpp"

namespace {

using namespace epoet;

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

RunConfig build_config(const std::string& config_path, const std::vector<std::string>& overrides) {
  RunConfig cfg = config_path.empty() ? RunConfig{} : load_config(resolve_data_path(config_path));
  for (const auto& o : overrides) apply_override(cfg, o);
  cfg.validate();
  return cfg;
}

void print_progress(const poet::Engine& engine, std::int64_t t) {
  const poet::EAPair* best = engine.best_pair();
  std::printf("iter %lld  pairs %zu  best %s\n", static_cast<long long>(t), engine.pairs().size(),
              best ? format_double(best->score).c_str() : "-");
  std::fflush(stdout);
}

int cmd_run(const std::string& config_path, const std::vector<std::string>& overrides, bool print_config) {
  const RunConfig cfg = build_config(config_path, overrides);
  if (print_config) {
    std::cout << config_to_json(cfg).dump(2) << "\n";
    return 0;
  }
  poet::Engine engine(cfg);
  Runner runner(engine, resolve_data_path(cfg.output_dir));
  runner.on_iteration = [&](std::int64_t t) { print_progress(engine, t); };
  runner.start();
  std::printf("done: %s\n", runner.paths().dir.string().c_str());
  return 0;
}

int cmd_resume(const std::string& checkpoint, const std::vector<std::string>& overrides) {
  RestoreOptions opts;
  opts.adjust_config = [&](RunConfig& c) {
    for (const auto& o : overrides) apply_override(c, o);
  };
  const std::string path = resolve_data_path(checkpoint);
  auto engine = restore_checkpoint(path, opts);
  Runner runner(*engine, std::filesystem::path(path).parent_path());
  runner.on_iteration = [&](std::int64_t t) { print_progress(*engine, t); };
  runner.resume();
  std::printf("done: %s\n", runner.paths().dir.string().c_str());
  return 0;
}

std::vector<terrain::TerrainSpec> checkpoint_envs(const poet::Engine& engine) {
  std::vector<terrain::TerrainSpec> envs;
  auto add = [&](const poet::EAPair& p) {
    terrain::TerrainSpec s = p.env.at_iteration(engine.next_iteration());
    s.settings = engine.config().terrain;
    envs.push_back(s);
  };
  for (const auto& p : engine.archived_pairs()) add(p);
  for (const auto& p : engine.pairs()) add(p);
  return envs;
}

int cmd_eval(const std::string& checkpoint, const std::string& env_checkpoint, std::uint64_t seed,
             const std::string& out_path) {
  auto engine = restore_checkpoint(resolve_data_path(checkpoint));
  const poet::EAPair* best = engine->best_pair();
  require(best != nullptr, ErrorKind::precondition, "checkpoint has no scored pair");
  PolicyParams theta = engine->config().mode == RunMode::sac_only ? engine->learner()->actor_policy()
                                                                   : best->agent.theta;
  std::vector<terrain::TerrainSpec> envs;
  if (env_checkpoint.empty()) {
    envs = checkpoint_envs(*engine);
  } else {
    envs = checkpoint_envs(*restore_checkpoint(resolve_data_path(env_checkpoint)));
  }
  WorkerPool pool(engine->config().num_workers);
  const eval::EvalReport rep = eval::evaluate_suite(theta, envs, engine->config().walker, seed, &pool);
  const std::string text = eval::to_json(rep).dump(2) + "\n";
  if (out_path.empty()) {
    std::cout << text;
  } else {
    write_text_atomic(resolve_data_path(out_path), text);
    std::printf("environments %zu  runs %d  solved %d  mean %s  max %s\n", envs.size(), rep.total_runs,
                rep.total_solved, format_double(rep.mean_return).c_str(), format_double(rep.max_return).c_str());
  }
  return 0;
}

int cmd_export(const std::string& checkpoint, std::optional<std::int64_t> pair_id, const std::string& config_path,
               const std::vector<std::string>& overrides, std::optional<std::int64_t> iteration,
               const std::string& format, const std::string& out_path) {
  const terrain::ExportFormat fmt = terrain::parse_export_format(format);
  terrain::Heightmap map;
  if (!checkpoint.empty()) {
    require(pair_id.has_value(), ErrorKind::argument, "--pair is required with --checkpoint");
    auto engine = restore_checkpoint(resolve_data_path(checkpoint));
    const poet::EAPair* found = nullptr;
    for (const auto* list : {&engine->pairs(), &engine->archived_pairs()})
      for (const auto& p : *list)
        if (p.id == *pair_id) found = &p;
    require(found != nullptr, ErrorKind::argument, "no pair with id " + std::to_string(*pair_id));
    map = engine->realize(*found, iteration.value_or(engine->next_iteration()));
  } else {
    poet::Engine engine(build_config(config_path, overrides));
    poet::EAPair p;
    p.env.genome = neat::initial_genome(derive_seed(engine.config().seed, Stream::genome_init), engine.config().neat);
    p.env.terrain_seed = derive_seed(engine.config().seed, Stream::terrain, {0});
    map = engine.realize(p, iteration.value_or(0));
  }
  terrain::export_heightmap(map, resolve_data_path(out_path), fmt);
  std::printf("wrote %s (%dx%d, elevation %s)\n", out_path.c_str(), map.resolution, map.resolution,
              format_double(map.elevation_z).c_str());
  return 0;
}

int cmd_inspect(const std::string& checkpoint) {
  const json payload = read_bundle(resolve_data_path(checkpoint));
  const json& e = payload.at("engine");
  json summary;
  summary["mode"] = payload.at("config").at("mode");
  summary["seed"] = payload.at("config").at("seed");
  summary["next_iteration"] = e.at("next_iteration");
  summary["active_pairs"] = json::array();
  for (const auto& p : e.at("pairs"))
    summary["active_pairs"].push_back({{"id", p.at("id")},
                                       {"parent_id", p.at("parent_id")},
                                       {"origin", p.at("origin")},
                                       {"created_iteration", p.at("created_iteration")},
                                       {"score", p.at("score")},
                                       {"best_score", p.at("best_score")},
                                       {"eligibility_score", p.at("eligibility_score")}});
  summary["archived_pairs"] = e.at("archived_pairs").size();
  summary["archived_agents"] = e.at("agent_archive").size();
  summary["sac"] = e.at("sac").is_null() ? json(nullptr)
                                         : json{{"train_calls", e["sac"].at("train_calls")},
                                                {"updates", e["sac"].at("updates")},
                                                {"env_steps", e["sac"].at("env_steps")}};
  std::cout << summary.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ePOET / ePOET-SAC terrain and agent coevolution"};
  app.require_subcommand(1);

  std::string config_path, checkpoint, env_checkpoint, out_path, format = "pgm";
  std::vector<std::string> overrides;
  std::uint64_t eval_seed = 0;
  std::optional<std::int64_t> pair_id, iteration;
  bool print_config = false;

  auto* run = app.add_subcommand("run", "start a run");
  run->add_option("--config", config_path, "JSON config file");
  run->add_option("--set", overrides, "override, key=value (repeatable)");
  run->add_flag("--print-config", print_config, "print the effective config and exit");

  auto* resume = app.add_subcommand("resume", "continue a run from its checkpoint");
  resume->add_option("checkpoint", checkpoint, "checkpoint bundle")->required();
  resume->add_option("--set", overrides, "override, key=value (repeatable)");

  auto* ev = app.add_subcommand("eval", "evaluate the best agent of a checkpoint");
  ev->add_option("checkpoint", checkpoint, "checkpoint bundle")->required();
  ev->add_option("--envs", env_checkpoint, "take environments from this checkpoint instead");
  ev->add_option("--seed", eval_seed, "evaluation seed");
  ev->add_option("--out", out_path, "report path (JSON); stdout if omitted");

  auto* ex = app.add_subcommand("export-terrain", "write a heightmap as CSV or PGM");
  ex->add_option("--checkpoint", checkpoint, "checkpoint bundle");
  ex->add_option("--pair", pair_id, "pair id within the checkpoint");
  ex->add_option("--config", config_path, "config for the initial terrain");
  ex->add_option("--set", overrides, "override, key=value (repeatable)");
  ex->add_option("--iteration", iteration, "iteration (bowl seed and elevation)");
  ex->add_option("--format", format, "csv or pgm")->check(CLI::IsMember({"csv", "pgm"}));
  ex->add_option("--out", out_path, "output file")->required();

  auto* in = app.add_subcommand("inspect-checkpoint", "summarize a checkpoint");
  in->add_option("checkpoint", checkpoint, "checkpoint bundle")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  try {
    if (*run) return cmd_run(config_path, overrides, print_config);
    if (*resume) return cmd_resume(checkpoint, overrides);
    if (*ev) return cmd_eval(checkpoint, env_checkpoint, eval_seed, out_path);
    if (*ex) return cmd_export(checkpoint, pair_id, config_path, overrides, iteration, format, out_path);
    if (*in) return cmd_inspect(checkpoint);
  } catch (const Error& e) {
    std::cerr << "epoet: " << e.what() << "\n";
    return e.kind() == ErrorKind::config || e.kind() == ErrorKind::argument ? kExitConfig : kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "epoet: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitRuntime;
}
