#pragma once

// Flat key = value run configuration. Values come from defaults, then an
// optional config file, then command-line flags.

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ragroute/baselines.hpp"
#include "ragroute/trainer.hpp"

namespace ragroute {

struct RunConfig {
  std::uint64_t seed = 1;
  std::string out = "run";
  std::string data = "data";
  std::string checkpoint;  // empty: <out>/checkpoint.bin

  // simulate
  std::size_t models = 15;
  std::size_t topics = 16;
  std::size_t queries = 2300;
  std::size_t test_queries = 300;
  std::array<double, 4> noise_mix = {0.25, 0.25, 0.25, 0.25};

  // base embeddings
  std::size_t base_dim = 256;
  std::string embeddings;  // precomputed manifest; empty: feature hashing

  TrainConfig train;

  // baselines
  std::size_t knn_k = 16;
  std::size_t mf_rank = 64;
  std::size_t mf_epochs = 200;
  double mf_lr = 1e-3;

  // sweep
  double theta_step = 1e-4;
  double window_s = 1.0;

  RunConfig();

  /// Throws ValidationError for an unknown key or an unparsable value.
  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;
  /// Every key with its current value, in file syntax.
  std::string dump() const;
  void validate() const;

  TrainConfig train_config() const;
  MfConfig mf_config() const;
  std::string checkpoint_path() const;
};

struct ConfigKey {
  std::string name;
  std::string help;
};
const std::vector<ConfigKey>& config_keys();

/// Applies a config file on top of `config`. Sections and unknown keys are rejected.
void apply_config_file(RunConfig& config, const std::string& path);
void apply_config_text(RunConfig& config, const std::string& text, const std::string& origin = "<config>");

}  // namespace ragroute
