#pragma once

// Checkpoint bundle: {"format", "version", "checksum", "payload"}.
// The checksum is FNV-1a over the serialized payload. The replay buffer, when
// enabled, lives in a binary sidecar next to the bundle.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <sstream>
#include <string>

#include <json.hpp>

#include "epoet/config.hpp"
#include "epoet/error.hpp"
#include "epoet/numeric.hpp"
#include "epoet/orchestrator.hpp"

namespace epoet {

inline constexpr const char* kCheckpointFormat = "epoet-checkpoint";
inline constexpr int kCheckpointVersion = 1;

inline std::string replay_sidecar_path(const std::string& bundle_path) { return bundle_path + ".replay"; }

inline std::string checksum_hex(const std::string& text) {
  std::ostringstream os;
  os << std::hex << fnv1a64(text);
  return os.str();
}

inline json make_bundle(const poet::Engine& engine) {
  json payload = {{"config", config_to_json(engine.config())}, {"engine", engine.state_to_json()}};
  const std::string text = payload.dump();
  return {{"format", kCheckpointFormat},
          {"version", kCheckpointVersion},
          {"checksum", checksum_hex(text)},
          {"payload", std::move(payload)}};
}

inline void write_text_atomic(const std::string& path, const std::string& text) {
  const std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(out), ErrorKind::io, "cannot write " + tmp);
    out << text;
    require(static_cast<bool>(out), ErrorKind::io, "write failed: " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

inline void save_checkpoint(const poet::Engine& engine, const std::string& path) {
  if (engine.config().checkpoint_replay_buffer && engine.learner())
    engine.learner()->save_buffer(replay_sidecar_path(path));
  write_text_atomic(path, make_bundle(engine).dump(1) + "\n");
}

/// Validated payload of a bundle file.
inline json read_bundle(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::io, "cannot open checkpoint " + path);
  json bundle = json::parse(in, nullptr, /*allow_exceptions=*/false);
  require(!bundle.is_discarded() && bundle.is_object(), ErrorKind::io, "checkpoint is not valid JSON: " + path);
  require(bundle.value("format", "") == kCheckpointFormat, ErrorKind::io, "not a checkpoint bundle: " + path);
  require(bundle.contains("version") && bundle["version"].is_number_integer(), ErrorKind::io,
          "checkpoint has no version");
  const int version = bundle["version"].get<int>();
  require(version == kCheckpointVersion, ErrorKind::version,
          "checkpoint version " + std::to_string(version) + " is not supported (expected " +
              std::to_string(kCheckpointVersion) + ")");
  require(bundle.contains("payload") && bundle.contains("checksum"), ErrorKind::io, "checkpoint is incomplete");
  require(bundle["checksum"] == checksum_hex(bundle["payload"].dump()), ErrorKind::io,
          "checkpoint checksum mismatch: " + path);
  return std::move(bundle["payload"]);
}

struct RestoreOptions {
  std::function<void(RunConfig&)> adjust_config;  // e.g. worker count or iteration overrides
  std::shared_ptr<const poet::RolloutBackend> backend;
  std::function<std::unique_ptr<poet::SacLearner>(const RunConfig&)> make_learner;
};

/// Fully built engine from a bundle. Throws before returning anything on any inconsistency.
inline std::unique_ptr<poet::Engine> restore_checkpoint(const std::string& path, const RestoreOptions& opts = {}) {
  json payload = read_bundle(path);
  RunConfig cfg = config_from_json(payload.at("config"));
  if (opts.adjust_config) {
    opts.adjust_config(cfg);
    cfg.validate();
  }
  std::unique_ptr<poet::SacLearner> learner = opts.make_learner ? opts.make_learner(cfg) : nullptr;
  auto engine = std::make_unique<poet::Engine>(cfg, opts.backend, std::move(learner));
  try {
    engine->state_from_json(payload.at("engine"));
  } catch (const json::exception& e) {
    fail(ErrorKind::io, std::string("checkpoint payload is malformed: ") + e.what());
  }
  if (cfg.checkpoint_replay_buffer && engine->learner() && std::filesystem::exists(replay_sidecar_path(path)))
    engine->learner()->load_buffer(replay_sidecar_path(path));
  return engine;
}

}  // namespace epoet
