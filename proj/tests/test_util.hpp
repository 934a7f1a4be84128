#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "ragroute/core_data.hpp"
#include "ragroute/diffmath.hpp"
#include "ragroute/rng.hpp"

namespace testutil {

namespace fs = std::filesystem;

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = fs::temp_directory_path() / ("ragroute_" + tag + "_" + std::to_string(::getpid()) + "_" +
                                         std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  fs::path operator/(const std::string& name) const { return path_ / name; }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

inline void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

inline std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline ragroute::Tensor2 random_tensor(std::size_t r, std::size_t c, ragroute::Rng& rng, double scale = 1.0) {
  ragroute::Tensor2 t(r, c);
  for (double& x : t.data) x = rng.uniform(-scale, scale);
  return t;
}

inline ragroute::Vec random_vec(std::size_t n, ragroute::Rng& rng, double scale = 1.0) {
  ragroute::Vec v(n);
  for (double& x : v) x = rng.uniform(-scale, scale);
  return v;
}

inline ragroute::ModelRegistry registry_of(std::size_t n) {
  std::vector<ragroute::LLMProfile> profiles;
  for (std::size_t i = 0; i < n; ++i)
    profiles.push_back({0, "m" + std::to_string(i), 1.0 + static_cast<double>(i), 100.0 * static_cast<double>(i + 1), std::nullopt});
  return ragroute::ModelRegistry::from_profiles(profiles);
}

inline std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(read_file(p));
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    rows.push_back(std::move(cells));
  }
  return rows;
}

/// Published single-model accuracy table (percent) for 15 models on 7 tasks,
/// with per-task sizes.
struct Table2 {
  std::vector<ragroute::LLMProfile> models;  // table order
  std::vector<std::string> tasks;
  std::vector<std::size_t> sizes;
  std::vector<std::vector<double>> accuracy;  // [model][task], percent
};

inline Table2 load_table2() {
  const fs::path dir = RAGROUTE_FIXTURE_DIR;
  Table2 t;
  const auto acc = read_csv(dir / "table2_accuracy.csv");
  for (std::size_t c = 3; c < acc[0].size(); ++c) t.tasks.push_back(acc[0][c]);
  for (std::size_t r = 1; r < acc.size(); ++r) {
    t.models.push_back({0, acc[r][0], std::stod(acc[r][1]), std::stod(acc[r][2]), std::nullopt});
    std::vector<double> row;
    for (std::size_t c = 3; c < acc[r].size(); ++c) row.push_back(std::stod(acc[r][c]));
    t.accuracy.push_back(std::move(row));
  }
  for (const auto& row : read_csv(dir / "table2_sizes.csv"))
    if (row[0] != "task") t.sizes.push_back(std::stoul(row[1]));
  return t;
}

/// Label matrix realizing the table: model m answers round(acc * n / 100)
/// queries of each task, spread by a per-model offset. Both settings carry
/// the same label and every query has a document.
inline ragroute::ResponseDataset table2_dataset(const Table2& t) {
  ragroute::ResponseDataset ds;
  ds.registry = ragroute::ModelRegistry::from_profiles(t.models);
  for (std::size_t k = 0; k < t.tasks.size(); ++k) {
    const std::size_t n = t.sizes[k];
    for (std::size_t q = 0; q < n; ++q) {
      ragroute::ResponseRecord r;
      r.query_id = t.tasks[k] + "-" + std::to_string(q);
      r.task = t.tasks[k];
      r.query_text = "question " + std::to_string(q) + " about " + t.tasks[k];
      r.doc_text = "passage " + std::to_string(q) + " for " + t.tasks[k];
      r.outcomes.resize(t.models.size());
      for (std::size_t m = 0; m < t.models.size(); ++m) {
        const auto id = ds.registry.id_of(t.models[m].name);
        const auto correct = static_cast<std::size_t>(std::llround(t.accuracy[m][k] * static_cast<double>(n) / 100.0));
        const double y = (q + 37 * m) % n < correct ? 1.0 : 0.0;
        r.outcomes[id] = {y, y};
      }
      ds.records.push_back(std::move(r));
    }
  }
  return ds;
}

}  // namespace testutil
