#pragma once

// Command implementations behind the ragroute executable. Each command reads
// its inputs from a RunConfig and writes its artifacts under config.out.

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ragroute/run_config.hpp"

namespace ragroute {

struct SimulateResult {
  std::string digest;
  std::size_t train_size = 0;
  std::size_t test_size = 0;
  double flip_fraction = 0.0;
};
/// Writes registry.json, train.jsonl, test.jsonl, latents.json and manifest.json.
SimulateResult cmd_simulate(const RunConfig& config);

/// Digest over registry.json, train.jsonl and test.jsonl in `dir`.
std::string dataset_digest(const std::string& dir);

/// Trains on <data>/train.jsonl; writes the checkpoint and <out>/train_manifest.json.
TrainResult cmd_train(const RunConfig& config, std::ostream& log);

nlohmann::ordered_json cmd_route(const RunConfig& config, const std::string& query,
                                 const std::optional<std::string>& doc, const std::string& id = {});

inline const std::vector<std::string> kEvalMethods = {"ragrouter", "random",   "weighted", "oracle",
                                                      "oracle_single_best", "knn", "mf"};
/// Evaluates one method on `dataset` (default <data>/test.jsonl).
nlohmann::ordered_json cmd_eval(const RunConfig& config, const std::string& method,
                                const std::string& dataset = {});

/// Writes <out>/curve.csv and <out>/metrics.json; returns the metrics.
nlohmann::ordered_json cmd_sweep(const RunConfig& config, const std::string& dataset = {});

/// Writes <out>/report.csv and <out>/report.svg; returns the text table.
std::string cmd_report(const RunConfig& config, const std::vector<std::string>& metrics_files);

/// Full command-line entry point. Returns the process exit code.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace ragroute
