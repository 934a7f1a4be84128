#include "ragroute/report.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "ragroute/errors.hpp"

namespace ragroute {

namespace {

constexpr const char* kUnmatched = "–";

std::string fixed2(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '&') out += "&amp;";
    else if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else out += c;
  }
  return out;
}

std::string gap_cell(const std::optional<double>& g) { return g ? fixed2(*g) : kUnmatched; }

std::vector<std::pair<double, double>> read_curve_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read curve " + path);
  std::string line;
  std::getline(in, line);
  if (line != "theta,mean_latency_s,accuracy") throw ValidationError(path + ": unexpected curve header");
  std::vector<std::pair<double, double>> out;
  for (std::size_t n = 2; std::getline(in, line); ++n) {
    if (line.empty()) continue;
    double theta = 0, lat = 0, acc = 0;
    if (std::sscanf(line.c_str(), "%lf,%lf,%lf", &theta, &lat, &acc) != 3)
      throw ValidationError(path + ": malformed row at line " + std::to_string(n));
    out.emplace_back(lat, acc);
  }
  return out;
}

}  // namespace

MethodMetrics load_method_metrics(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read metrics file " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("malformed metrics file " + path + ": " + e.what());
  }
  MethodMetrics m;
  try {
    m.method = j.value("method", std::filesystem::path(path).stem().string());
    m.area = j.at("area").get<double>();
    m.peak_acc = j.at("peak_acc").get<double>();
    const auto& gap = j.at("gap_to_match");
    if (!gap.is_null()) m.gap_to_match = gap.get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("malformed metrics file " + path + ": " + e.what());
  }
  if (j.contains("curve") && j["curve"].is_string())
    m.curve = read_curve_csv((std::filesystem::path(path).parent_path() / j["curve"].get<std::string>()).string());
  return m;
}

std::string render_table(const std::vector<MethodMetrics>& rows) {
  std::size_t width = 6;
  for (const auto& r : rows) width = std::max(width, r.method.size());
  std::ostringstream out;
  auto pad = [](const std::string& s, std::size_t w, std::size_t display) { return s + std::string(w - display, ' '); };
  out << pad("Method", width, 6) << "  " << "   Area" << "     PA" << "      G" << '\n';
  for (const auto& r : rows) {
    const std::string g = gap_cell(r.gap_to_match);
    const std::size_t g_display = r.gap_to_match ? g.size() : 1;
    out << pad(r.method, width, r.method.size()) << "  ";
    out << std::string(7 - fixed2(r.area).size(), ' ') << fixed2(r.area);
    out << std::string(7 - fixed2(r.peak_acc).size(), ' ') << fixed2(r.peak_acc);
    out << std::string(7 - g_display, ' ') << g << '\n';
  }
  return out.str();
}

std::string render_csv(const std::vector<MethodMetrics>& rows) {
  std::ostringstream out;
  out << "method,area,peak_acc,gap_to_match\n";
  for (const auto& r : rows)
    out << r.method << ',' << fixed2(r.area) << ',' << fixed2(r.peak_acc) << ',' << gap_cell(r.gap_to_match) << '\n';
  return out.str();
}

std::string render_svg(const std::vector<MethodMetrics>& rows, double window_s) {
  constexpr double kW = 640, kH = 400, kLeft = 60, kRight = 20, kTop = 20, kBottom = 50;
  static const char* kColours[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};
  double x_max = window_s;
  for (const auto& r : rows)
    for (const auto& [lat, acc] : r.curve) x_max = std::max(x_max, lat);
  auto sx = [&](double lat) { return kLeft + lat / x_max * (kW - kLeft - kRight); };
  auto sy = [&](double acc) { return kH - kBottom - acc * (kH - kTop - kBottom); };
  auto num = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.1f", v);
    return std::string(buf);
  };

  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<line x1=\"" << kLeft << "\" y1=\"" << sy(0) << "\" x2=\"" << kW - kRight << "\" y2=\"" << sy(0)
      << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << kLeft << "\" y1=\"" << sy(0) << "\" x2=\"" << kLeft << "\" y2=\"" << sy(1)
      << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << num(sx(window_s)) << "\" y1=\"" << sy(0) << "\" x2=\"" << num(sx(window_s)) << "\" y2=\""
      << sy(1) << "\" stroke=\"#999\" stroke-dasharray=\"4 4\"/>\n";
  out << "<text x=\"" << kW / 2 << "\" y=\"" << kH - 12 << "\" text-anchor=\"middle\">mean latency (s)</text>\n";
  out << "<text x=\"16\" y=\"" << kH / 2 << "\" transform=\"rotate(-90 16 " << kH / 2
      << ")\" text-anchor=\"middle\">accuracy</text>\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const char* colour = kColours[i % std::size(kColours)];
    auto pts = rows[i].curve;
    std::sort(pts.begin(), pts.end());
    if (!pts.empty()) {
      out << "<polyline fill=\"none\" stroke=\"" << colour << "\" points=\"";
      for (std::size_t k = 0; k < pts.size(); ++k)
        out << (k ? " " : "") << num(sx(pts[k].first)) << ',' << num(sy(pts[k].second));
      out << "\"/>\n";
    }
    out << "<text x=\"" << kLeft + 10 << "\" y=\"" << kTop + 16 * (i + 1) << "\" fill=\"" << colour << "\">"
        << xml_escape(rows[i].method) << "</text>\n";
  }
  out << "</svg>\n";
  return out.str();
}

}  // namespace ragroute
