#pragma once

// Drives an Engine and owns its on-disk artifacts:
//   <dir>/run_log.csv, <dir>/events.csv, <dir>/checkpoint.json[.replay], <dir>/terrains/

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include "epoet/checkpoint.hpp"
#include "epoet/error.hpp"
#include "epoet/orchestrator.hpp"
#include "epoet/terrain.hpp"

namespace epoet {

/// Relative paths resolve against $EPOET_DATA_DIR when it is set.
inline std::string resolve_data_path(const std::string& path) {
  const char* root = std::getenv("EPOET_DATA_DIR");
  if (!root || !*root || std::filesystem::path(path).is_absolute()) return path;
  return (std::filesystem::path(root) / path).string();
}

struct RunPaths {
  std::filesystem::path dir;

  std::string run_log() const { return (dir / "run_log.csv").string(); }
  std::string events() const { return (dir / "events.csv").string(); }
  std::string checkpoint() const { return (dir / "checkpoint.json").string(); }
  std::filesystem::path terrains() const { return dir / "terrains"; }
};

namespace detail {

/// Keeps the header and rows whose leading iteration field is < `end`.
inline void truncate_log(const std::string& path, const std::string& header, std::int64_t end) {
  std::vector<std::string> keep;
  if (std::ifstream in(path); in) {
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      if (std::stoll(line.substr(0, line.find(','))) < end) keep.push_back(line);
    }
  }
  std::ofstream out(path, std::ios::trunc);
  require(static_cast<bool>(out), ErrorKind::io, "cannot write " + path);
  out << header << '\n';
  for (const auto& l : keep) out << l << '\n';
}

}  // namespace detail

class Runner {
 public:
  Runner(poet::Engine& engine, std::filesystem::path dir) : engine_(engine), paths_{std::move(dir)} {
    std::filesystem::create_directories(paths_.dir);
  }

  const RunPaths& paths() const { return paths_; }

  /// Per-iteration callback, e.g. for progress output.
  std::function<void(std::int64_t)> on_iteration;

  /// Fresh run: initialize, then iterate to config().iterations.
  void start() {
    detail::truncate_log(paths_.run_log(), poet::run_log_header(), 0);
    detail::truncate_log(paths_.events(), poet::event_log_header(), 0);
    engine_.initialize();
    flush();
    run_to(engine_.config().iterations);
  }

  /// Continue a restored engine; logs past the checkpoint are dropped first.
  void resume() {
    detail::truncate_log(paths_.run_log(), poet::run_log_header(), engine_.next_iteration());
    detail::truncate_log(paths_.events(), poet::event_log_header(), engine_.next_iteration());
    engine_.clear_logs();
    run_to(engine_.config().iterations);
  }

  void run_to(std::int64_t end) {
    const int every = engine_.config().checkpoint_interval;
    while (engine_.next_iteration() < end) {
      const std::int64_t t = engine_.next_iteration();
      engine_.run_iteration();
      flush();
      if (on_iteration) on_iteration(t);
      if (every > 0 && (t + 1) % every == 0) checkpoint();
    }
    checkpoint();
    export_terrains();
  }

  void checkpoint() const { save_checkpoint(engine_, paths_.checkpoint()); }

  void export_terrains() const {
    std::filesystem::create_directories(paths_.terrains());
    const std::int64_t t = engine_.next_iteration();
    for (const auto& p : engine_.pairs()) {
      const terrain::Heightmap map = engine_.realize(p, t);
      const std::string stem = (paths_.terrains() / ("pair_" + std::to_string(p.id))).string();
      terrain::export_heightmap(map, stem + ".csv", terrain::ExportFormat::csv);
      terrain::export_heightmap(map, stem + ".pgm", terrain::ExportFormat::pgm);
    }
  }

 private:
  void flush() {
    {
      std::ofstream out(paths_.run_log(), std::ios::app);
      for (const auto& r : engine_.run_log()) out << poet::to_csv(r) << '\n';
    }
    {
      std::ofstream out(paths_.events(), std::ios::app);
      for (const auto& e : engine_.events()) out << poet::to_csv(e) << '\n';
    }
    engine_.clear_logs();
  }

  poet::Engine& engine_;
  RunPaths paths_;
};

}  // namespace epoet
