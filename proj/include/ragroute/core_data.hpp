#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace ragroute {

using ModelId = std::size_t;

/// Whether a model answers with (kRag) or without (kNoRag) the retrieved document.
enum class Setting { kNoRag, kRag };

struct LLMProfile {
  ModelId model_id = 0;
  std::string name;
  double params_b = 0.0;
  double latency_ms = 0.0;
  std::optional<int> rank;  // explicit efficiency rank, overrides the default order

  bool operator==(const LLMProfile&) const = default;
};

/// Candidate models sorted from most to least efficient. Position i is the
/// model's id; every downstream table is indexed the same way.
class ModelRegistry {
 public:
  ModelRegistry() = default;

  /// Sorts by (rank if any, latency_ms, params_b, name) and assigns ids.
  static ModelRegistry from_profiles(std::vector<LLMProfile> profiles);
  static ModelRegistry load(const std::string& path);
  void save(const std::string& path) const;

  std::size_t size() const { return profiles_.size(); }
  const LLMProfile& operator[](ModelId id) const { return profiles_.at(id); }
  const std::vector<LLMProfile>& profiles() const { return profiles_; }

  /// Throws ValidationError naming the model if it is not registered.
  ModelId id_of(const std::string& name) const;
  std::optional<ModelId> find(const std::string& name) const;

  bool operator==(const ModelRegistry&) const = default;

 private:
  std::vector<LLMProfile> profiles_;
};

struct Outcome {
  double no_rag = 0.0;
  double rag = 0.0;

  bool operator==(const Outcome&) const = default;
};

struct ResponseRecord {
  std::string query_id;
  std::string task;
  std::string query_text;
  std::optional<std::string> doc_text;
  std::vector<Outcome> outcomes;  // indexed by ModelId

  bool operator==(const ResponseRecord&) const = default;
};

struct ResponseDataset {
  std::vector<ResponseRecord> records;
  ModelRegistry registry;

  std::size_t size() const { return records.size(); }
  bool empty() const { return records.empty(); }
  bool operator==(const ResponseDataset&) const = default;
};

enum class LabelType { kBinary, kContinuous };

struct ValidationReport {
  std::size_t record_count = 0;
  std::size_t missing_doc = 0;
  std::vector<std::size_t> no_rag_positives;  // per model, labels counted at >= 0.5
  std::vector<std::size_t> rag_positives;
  std::map<std::string, LabelType> label_type;  // per task
};

ResponseDataset load_response_dataset(const std::string& path, const ModelRegistry& registry);
ResponseDataset parse_response_dataset(const std::string& jsonl, const ModelRegistry& registry);

/// Writes JSONL using registry names; load(save(ds)) == ds.
void save_response_dataset(const ResponseDataset& ds, const std::string& path);
std::string serialize_response_dataset(const ResponseDataset& ds);

/// Deterministic partition keyed on sorted query_id, so input order does not
/// affect which ids land in test. Records keep their input order.
std::pair<ResponseDataset, ResponseDataset> split_dataset(const ResponseDataset& ds,
                                                          double test_fraction,
                                                          std::uint64_t seed);

ValidationReport validate_dataset(const ResponseDataset& ds);

/// Records restricted to one task tag, in order.
ResponseDataset filter_task(const ResponseDataset& ds, const std::string& task);
std::vector<std::string> task_names(const ResponseDataset& ds);

}  // namespace ragroute
