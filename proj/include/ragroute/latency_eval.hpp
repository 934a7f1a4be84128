#pragma once

// Score-threshold routing, the accuracy/latency sweep and evaluation metrics.

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ragroute/core_data.hpp"

namespace ragroute {

/// Walk from the most efficient model towards the argmax and stop at the
/// first model whose score is within `theta` of the best.
ModelId threshold_route(std::span<const double> scores, double theta);

struct SweepPoint {
  double theta = 0.0;
  double theta_end = 0.0;  // last grid theta covered when collapsed
  double mean_latency_s = 0.0;
  double accuracy = 0.0;
};

struct AccuracyLatencyCurve {
  std::vector<SweepPoint> points;
  double grid_step = 1e-4;
  std::size_t evaluations = 0;
};

struct SweepOptions {
  double grid_step = 1e-4;
  bool collapse = true;
};

/// `scores[q]` are sigmoid scores for query q in registry order; `labels[q][m]`
/// the correctness of model m on q under the setting being evaluated.
AccuracyLatencyCurve sweep(const std::vector<std::vector<double>>& scores,
                           const std::vector<std::vector<double>>& labels, const ModelRegistry& registry,
                           const SweepOptions& options = {});

/// Best accuracy reachable at or below each latency, integrated over the window.
double area(const AccuracyLatencyCurve& curve, double window_s = 1.0);
double peak_acc(const AccuracyLatencyCurve& curve, double window_s = 1.0);

struct BestSingle {
  double accuracy = 0.0;
  double latency_s = 0.0;
};
/// Latency saved relative to the best single model; empty when the curve
/// never reaches its accuracy.
std::optional<double> gap_to_match(const AccuracyLatencyCurve& curve, BestSingle best);

double accuracy(std::span<const ModelId> decisions, const std::vector<std::vector<double>>& labels);

struct AggregateRow {
  std::string method;
  std::vector<double> per_task;
  double average = 0.0;
};
AggregateRow aggregate_table(const std::string& method, std::span<const double> per_task);

std::optional<double> positive_gain_rate(std::span<const double> no_rag, std::span<const double> rag);
std::optional<double> negative_interference_rate(std::span<const double> no_rag, std::span<const double> rag);

struct GainCounts {
  std::size_t gain = 0;          // 0 -> 1
  std::size_t interference = 0;  // 1 -> 0
  std::size_t no_rag_wrong = 0;
  std::size_t no_rag_right = 0;
  std::size_t pairs = 0;
  std::optional<double> gain_rate() const;
  std::optional<double> interference_rate() const;
  double flip_fraction() const;
};
/// Counts over every (query, model) pair; restrict to one model with `model`.
GainCounts count_gain(const ResponseDataset& ds, std::optional<ModelId> model = std::nullopt);

std::string curve_csv(const AccuracyLatencyCurve& curve);
std::string metrics_json(const AccuracyLatencyCurve& curve, std::optional<BestSingle> best, double window_s = 1.0);

/// Per record, every model's label in the setting the record is evaluated
/// under: RAG when it carries a document, no-RAG otherwise.
std::vector<std::vector<double>> setting_labels(const ResponseDataset& ds);

/// Sigmoid of each similarity.
std::vector<double> sigmoid_scores(std::span<const double> similarities);

}  // namespace ragroute
