#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "epoet/error.hpp"
#include "epoet/mlp.hpp"
#include "epoet/numeric.hpp"
#include "epoet/random.hpp"
#include "epoet/terrain.hpp"
#include "epoet/walker.hpp"
#include "epoet/worker_pool.hpp"

namespace epoet::eval {

using json = nlohmann::json;

inline constexpr int kRunsPerEnvironment = 5;
inline const std::vector<std::string> kBinNames = {"easy", "medium", "hard"};

struct EvalEntry {
  int env_index = 0;
  int run = 0;
  double total_return = 0.0;
  bool finished = false;
  bool solved = false;

  bool operator==(const EvalEntry&) const = default;
};

struct BinSummary {
  std::string name;
  int environments = 0;
  int runs = 0;
  int solved = 0;
  double success_rate = 0.0;

  bool operator==(const BinSummary&) const = default;
};

struct EvalReport {
  std::vector<EvalEntry> entries;
  std::vector<double> height_variance;  // per environment
  std::vector<int> bin;                 // per environment, index into kBinNames
  std::vector<BinSummary> bins;
  int total_runs = 0;
  int total_solved = 0;
  double success_rate = 0.0;
  double mean_return = 0.0;
  double stdev_return = 0.0;
  double max_return = 0.0;

  bool operator==(const EvalReport&) const = default;
};

/// Bin by variance rank: lowest third easy, middle third medium, top third hard.
inline std::vector<int> difficulty_bins(const std::vector<double>& variance) {
  const std::size_t n = variance.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return variance[a] < variance[b]; });
  std::vector<int> bin(n);
  for (std::size_t r = 0; r < n; ++r) bin[order[r]] = static_cast<int>(r * kBinNames.size() / n);
  return bin;
}

/// Aggregates from raw entries, variances and bins.
inline void summarize(EvalReport& rep) {
  rep.bins.clear();
  for (const auto& name : kBinNames) rep.bins.push_back({name});
  for (int b : rep.bin) ++rep.bins[static_cast<std::size_t>(b)].environments;
  std::vector<double> returns;
  rep.total_runs = 0;
  rep.total_solved = 0;
  for (const auto& e : rep.entries) {
    auto& s = rep.bins[static_cast<std::size_t>(rep.bin[static_cast<std::size_t>(e.env_index)])];
    ++s.runs;
    s.solved += e.solved;
    ++rep.total_runs;
    rep.total_solved += e.solved;
    returns.push_back(e.total_return);
  }
  for (auto& s : rep.bins) s.success_rate = s.runs ? static_cast<double>(s.solved) / s.runs : 0.0;
  rep.success_rate = rep.total_runs ? static_cast<double>(rep.total_solved) / rep.total_runs : 0.0;
  rep.mean_return = returns.empty() ? 0.0 : mean(returns);
  rep.stdev_return = returns.empty() ? 0.0 : std::sqrt(population_variance(returns));
  rep.max_return = returns.empty() ? 0.0 : *std::max_element(returns.begin(), returns.end());
}

/// Runs `theta` kRunsPerEnvironment times on every environment with fixed seeds.
inline EvalReport evaluate_suite(const PolicyParams& theta, const std::vector<terrain::TerrainSpec>& envs,
                                 const walker::WalkerConfig& wc, std::uint64_t seed, WorkerPool* pool = nullptr,
                                 double solve_threshold = 2000.0) {
  require(!envs.empty(), ErrorKind::argument, "evaluation needs at least one environment");
  require(theta.shape.input_dim() == walker::kObservationDim && theta.shape.output_dim() == walker::kActionDim,
          ErrorKind::structural, "policy does not match the walker observation/action sizes");
  EvalReport rep;
  std::vector<terrain::Heightmap> maps;
  for (const auto& e : envs) {
    maps.push_back(terrain::compose_heightmap(e));
    rep.height_variance.push_back(terrain::height_variance(maps.back()));
  }
  const std::size_t jobs = envs.size() * kRunsPerEnvironment;
  auto run = [&](std::size_t j) {
    const int env = static_cast<int>(j / kRunsPerEnvironment), r = static_cast<int>(j % kRunsPerEnvironment);
    const auto res = walker::rollout(theta, maps[static_cast<std::size_t>(env)],
                                     derive_seed(seed, Stream::suite, {static_cast<std::uint64_t>(env),
                                                                       static_cast<std::uint64_t>(r)}),
                                     wc);
    return EvalEntry{env, r, res.total_return, res.finished, res.finished && res.total_return >= solve_threshold};
  };
  if (pool) {
    rep.entries = pool->map(jobs, run);
  } else {
    for (std::size_t j = 0; j < jobs; ++j) rep.entries.push_back(run(j));
  }
  rep.bin = difficulty_bins(rep.height_variance);
  summarize(rep);
  return rep;
}

inline json to_json(const EvalReport& r) {
  json j;
  j["entries"] = json::array();
  for (const auto& e : r.entries)
    j["entries"].push_back({{"env", e.env_index},
                            {"run", e.run},
                            {"return", e.total_return},
                            {"finished", e.finished},
                            {"solved", e.solved}});
  j["height_variance"] = r.height_variance;
  j["bin"] = r.bin;
  j["bins"] = json::array();
  for (const auto& b : r.bins)
    j["bins"].push_back({{"name", b.name},
                         {"environments", b.environments},
                         {"runs", b.runs},
                         {"solved", b.solved},
                         {"success_rate", b.success_rate}});
  j["total_runs"] = r.total_runs;
  j["total_solved"] = r.total_solved;
  j["success_rate"] = r.success_rate;
  j["mean_return"] = r.mean_return;
  j["stdev_return"] = r.stdev_return;
  j["max_return"] = r.max_return;
  return j;
}

inline EvalReport report_from_json(const json& j) {
  EvalReport r;
  for (const auto& e : j.at("entries"))
    r.entries.push_back({e.at("env").get<int>(), e.at("run").get<int>(), e.at("return").get<double>(),
                         e.at("finished").get<bool>(), e.at("solved").get<bool>()});
  r.height_variance = j.at("height_variance").get<std::vector<double>>();
  r.bin = j.at("bin").get<std::vector<int>>();
  for (const auto& b : j.at("bins"))
    r.bins.push_back({b.at("name").get<std::string>(), b.at("environments").get<int>(), b.at("runs").get<int>(),
                      b.at("solved").get<int>(), b.at("success_rate").get<double>()});
  r.total_runs = j.at("total_runs").get<int>();
  r.total_solved = j.at("total_solved").get<int>();
  r.success_rate = j.at("success_rate").get<double>();
  r.mean_return = j.at("mean_return").get<double>();
  r.stdev_return = j.at("stdev_return").get<double>();
  r.max_return = j.at("max_return").get<double>();
  return r;
}

}  // namespace epoet::eval
