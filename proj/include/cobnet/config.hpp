#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "cobnet/backbone.hpp"
#include "cobnet/episodes.hpp"
#include "cobnet/trainer.hpp"

namespace cobnet {

/// Everything a command needs, resolved from a key=value file plus overrides.
struct RunConfig {
  TrainConfig train;
  BackboneConfig backbone;
  std::size_t image_side = 64;
  bool matched_backgrounds = false;
  std::size_t shots = 1;           // evaluation k
  bool weak = false;               // evaluation without support annotation
  std::size_t episodes = 1000;     // evaluation episodes per fold
  std::uint64_t eval_seed = 2024;
  int fold = -1;                   // -1: every fold
  std::size_t threads = 1;
  std::string out_dir = "runs";

  SamplerConfig sampler() const;
};

/// Parses `key = value` lines; '#' starts a comment. Unknown keys and
/// malformed values raise ConfigError.
RunConfig parse_config(const std::string& text, RunConfig base = {});
RunConfig load_config(const std::filesystem::path& path);
void apply_setting(RunConfig& config, const std::string& key, const std::string& value);

/// Canonical text form; parse_config(to_text(c)) reproduces c.
std::string to_text(const RunConfig& config);

struct Checkpoint {
  RunConfig config;
  std::size_t fold = 0;
  CobNet model;
};

/// Directory of CBT1 parameter files plus manifest.txt naming each
/// parameter with its shape and the resolved configuration.
void save_checkpoint(const std::filesystem::path& dir, const RunConfig& config, std::size_t fold, const CobNet& model);
Checkpoint load_checkpoint(const std::filesystem::path& dir);

/// FNV-1a digest over the parameter values, for identity checks.
std::string model_digest(const CobNet& model);

}  // namespace cobnet
