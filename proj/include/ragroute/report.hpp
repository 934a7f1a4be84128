#pragma once

// Comparison tables and a static SVG accuracy/latency plot from sweep outputs.

#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace ragroute {

struct MethodMetrics {
  std::string method;
  double area = 0.0;
  double peak_acc = 0.0;
  std::optional<double> gap_to_match;
  std::vector<std::pair<double, double>> curve;  // (mean_latency_s, accuracy)
};

/// Reads a metrics JSON file and, when it names one, the curve CSV beside it.
MethodMetrics load_method_metrics(const std::string& path);

/// Fixed-width text table; an unmatched gap renders as "–".
std::string render_table(const std::vector<MethodMetrics>& rows);
std::string render_csv(const std::vector<MethodMetrics>& rows);
std::string render_svg(const std::vector<MethodMetrics>& rows, double window_s = 1.0);

}  // namespace ragroute
