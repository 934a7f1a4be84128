#include "ragroute/latency_eval.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <json.hpp>

#include "ragroute/errors.hpp"
#include "ragroute/router_model.hpp"

namespace ragroute {

ModelId threshold_route(std::span<const double> scores, double theta) {
  if (scores.empty()) throw ValidationError("threshold_route: empty scores");
  if (!(theta >= 0.0)) throw ValidationError("threshold_route: theta must be >= 0");
  const ModelId best = argmax_lowest(scores);
  for (ModelId j = 0; j < best; ++j)
    if (scores[best] - scores[j] <= theta) return j;
  return best;
}

AccuracyLatencyCurve sweep(const std::vector<std::vector<double>>& scores,
                           const std::vector<std::vector<double>>& labels, const ModelRegistry& registry,
                           const SweepOptions& options) {
  if (scores.empty()) throw ValidationError("sweep: empty test set");
  if (scores.size() != labels.size()) throw ValidationError("sweep: scores/labels length mismatch");
  if (!(options.grid_step > 0.0) || options.grid_step > 1.0) throw ValidationError("sweep: grid step must be in (0, 1]");
  for (std::size_t q = 0; q < scores.size(); ++q)
    if (scores[q].size() != registry.size() || labels[q].size() != registry.size())
      throw ValidationError("sweep: row " + std::to_string(q) + " does not cover every model");

  AccuracyLatencyCurve curve;
  curve.grid_step = options.grid_step;
  const auto steps = static_cast<std::size_t>(std::llround(1.0 / options.grid_step));
  const double n = static_cast<double>(scores.size());
  for (std::size_t i = 0; i <= steps; ++i) {
    const double theta = static_cast<double>(i) * options.grid_step;
    double correct = 0.0, latency = 0.0;
    for (std::size_t q = 0; q < scores.size(); ++q) {
      const ModelId m = threshold_route(scores[q], theta);
      correct += labels[q][m];
      latency += registry[m].latency_ms / 1000.0;
    }
    SweepPoint p{theta, theta, latency / n, correct / n};
    ++curve.evaluations;
    if (options.collapse && !curve.points.empty() && curve.points.back().mean_latency_s == p.mean_latency_s &&
        curve.points.back().accuracy == p.accuracy) {
      curve.points.back().theta_end = theta;
      continue;
    }
    curve.points.push_back(p);
  }
  return curve;
}

namespace {

std::vector<std::pair<double, double>> frontier(const AccuracyLatencyCurve& curve) {
  std::vector<std::pair<double, double>> pts;
  for (const auto& p : curve.points) pts.emplace_back(p.mean_latency_s, p.accuracy);
  std::sort(pts.begin(), pts.end());
  std::vector<std::pair<double, double>> out;
  for (const auto& [lat, acc] : pts) {
    const double best = out.empty() ? 0.0 : out.back().second;
    if (acc > best) out.emplace_back(lat, acc);
  }
  return out;
}

}  // namespace

double area(const AccuracyLatencyCurve& curve, double window_s) {
  if (curve.points.empty()) throw ValidationError("area: empty curve");
  if (!(window_s > 0.0)) throw ValidationError("area: window must be positive");
  const auto f = frontier(curve);
  double integral = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    const double start = f[i].first;
    if (start >= window_s) break;
    const double end = i + 1 < f.size() ? std::min(f[i + 1].first, window_s) : window_s;
    integral += f[i].second * (end - start);
  }
  return 100.0 * integral / window_s;
}

double peak_acc(const AccuracyLatencyCurve& curve, double window_s) {
  if (curve.points.empty()) throw ValidationError("peak_acc: empty curve");
  double best = 0.0;
  for (const auto& p : curve.points)
    if (p.mean_latency_s <= window_s) best = std::max(best, p.accuracy);
  return 100.0 * best;
}

std::optional<double> gap_to_match(const AccuracyLatencyCurve& curve, BestSingle best) {
  std::optional<double> fastest;
  for (const auto& p : curve.points)
    if (p.accuracy >= best.accuracy && (!fastest || p.mean_latency_s < *fastest)) fastest = p.mean_latency_s;
  if (!fastest) return std::nullopt;
  return best.latency_s - *fastest;
}

double accuracy(std::span<const ModelId> decisions, const std::vector<std::vector<double>>& labels) {
  if (decisions.size() != labels.size()) throw ValidationError("accuracy: decisions/labels length mismatch");
  if (decisions.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t q = 0; q < decisions.size(); ++q) {
    if (decisions[q] >= labels[q].size()) throw ValidationError("accuracy: decision out of range");
    total += labels[q][decisions[q]];
  }
  return total / static_cast<double>(decisions.size());
}

AggregateRow aggregate_table(const std::string& method, std::span<const double> per_task) {
  if (per_task.empty()) throw ValidationError("aggregate_table: no tasks");
  AggregateRow row{method, {per_task.begin(), per_task.end()}, 0.0};
  for (double a : per_task) row.average += a;
  row.average /= static_cast<double>(per_task.size());
  return row;
}

namespace {

GainCounts count_pairs(std::span<const double> no_rag, std::span<const double> rag) {
  if (no_rag.size() != rag.size()) throw ValidationError("gain rate: label length mismatch");
  GainCounts c;
  for (std::size_t i = 0; i < no_rag.size(); ++i) {
    const bool before = no_rag[i] >= 0.5, after = rag[i] >= 0.5;
    ++c.pairs;
    if (before) {
      ++c.no_rag_right;
      if (!after) ++c.interference;
    } else {
      ++c.no_rag_wrong;
      if (after) ++c.gain;
    }
  }
  return c;
}

}  // namespace

std::optional<double> GainCounts::gain_rate() const {
  if (no_rag_wrong == 0) return std::nullopt;
  return static_cast<double>(gain) / static_cast<double>(no_rag_wrong);
}

std::optional<double> GainCounts::interference_rate() const {
  if (no_rag_right == 0) return std::nullopt;
  return static_cast<double>(interference) / static_cast<double>(no_rag_right);
}

double GainCounts::flip_fraction() const {
  return pairs == 0 ? 0.0 : static_cast<double>(gain + interference) / static_cast<double>(pairs);
}

std::optional<double> positive_gain_rate(std::span<const double> no_rag, std::span<const double> rag) {
  return count_pairs(no_rag, rag).gain_rate();
}

std::optional<double> negative_interference_rate(std::span<const double> no_rag, std::span<const double> rag) {
  return count_pairs(no_rag, rag).interference_rate();
}

GainCounts count_gain(const ResponseDataset& ds, std::optional<ModelId> model) {
  std::vector<double> before, after;
  for (const auto& r : ds.records) {
    for (ModelId m = 0; m < r.outcomes.size(); ++m) {
      if (model && *model != m) continue;
      before.push_back(r.outcomes[m].no_rag);
      after.push_back(r.outcomes[m].rag);
    }
  }
  return count_pairs(before, after);
}

std::string curve_csv(const AccuracyLatencyCurve& curve) {
  std::ostringstream out;
  out.precision(17);
  out << "theta,mean_latency_s,accuracy\n";
  for (const auto& p : curve.points) out << p.theta << ',' << p.mean_latency_s << ',' << p.accuracy << '\n';
  return out.str();
}

std::string metrics_json(const AccuracyLatencyCurve& curve, std::optional<BestSingle> best, double window_s) {
  nlohmann::ordered_json j;
  j["area"] = area(curve, window_s);
  j["peak_acc"] = peak_acc(curve, window_s);
  const auto gap = best ? gap_to_match(curve, *best) : std::nullopt;
  j["gap_to_match"] = gap ? nlohmann::ordered_json(*gap) : nlohmann::ordered_json(nullptr);
  j["theta_grid_step"] = curve.grid_step;
  return j.dump(2) + "\n";
}

std::vector<std::vector<double>> setting_labels(const ResponseDataset& ds) {
  std::vector<std::vector<double>> out;
  out.reserve(ds.size());
  for (const auto& r : ds.records) {
    std::vector<double> row;
    for (const auto& o : r.outcomes) row.push_back(r.doc_text ? o.rag : o.no_rag);
    out.push_back(std::move(row));
  }
  return out;
}

std::vector<double> sigmoid_scores(std::span<const double> similarities) {
  std::vector<double> out;
  out.reserve(similarities.size());
  for (double s : similarities) out.push_back(1.0 / (1.0 + std::exp(-s)));
  return out;
}

}  // namespace ragroute
