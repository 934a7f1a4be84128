#include "ragroute/core_data.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>

#include <json.hpp>

#include "ragroute/errors.hpp"
#include "ragroute/hashing.hpp"
#include "ragroute/rng.hpp"

namespace ragroute {

using nlohmann::json;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeFailure("cannot write " + path);
  out << content;
  if (!out) throw RuntimeFailure("write failed for " + path);
}

bool is_binary_label(double v) { return v == 0.0 || v == 1.0; }

}  // namespace

std::string hex64(std::uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(value));
  return buf;
}

std::string file_digest(const std::string& path) { return hex64(fnv1a64(read_file(path))); }

// ---------------------------------------------------------------------------
// ModelRegistry

ModelRegistry ModelRegistry::from_profiles(std::vector<LLMProfile> profiles) {
  std::set<std::string> names;
  for (const auto& p : profiles) {
    if (p.name.empty()) throw ValidationError("registry: model with empty name");
    if (!(p.latency_ms > 0.0)) throw ValidationError("registry: latency_ms must be > 0 for " + p.name);
    if (!(p.params_b > 0.0)) throw ValidationError("registry: params_b must be > 0 for " + p.name);
    if (!names.insert(p.name).second) throw ValidationError("registry: duplicate model " + p.name);
  }
  // Ranked entries first (by rank), then the default latency/size order.
  std::sort(profiles.begin(), profiles.end(), [](const LLMProfile& a, const LLMProfile& b) {
    const bool ra = a.rank.has_value();
    const bool rb = b.rank.has_value();
    if (ra != rb) return ra;
    if (ra && *a.rank != *b.rank) return *a.rank < *b.rank;
    if (a.latency_ms != b.latency_ms) return a.latency_ms < b.latency_ms;
    if (a.params_b != b.params_b) return a.params_b < b.params_b;
    return a.name < b.name;
  });
  ModelRegistry reg;
  for (std::size_t i = 0; i < profiles.size(); ++i) profiles[i].model_id = i;
  reg.profiles_ = std::move(profiles);
  return reg;
}

ModelRegistry ModelRegistry::load(const std::string& path) {
  json doc;
  try {
    doc = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw ValidationError("registry " + path + ": " + e.what());
  }
  if (!doc.contains("models") || !doc["models"].is_array())
    throw ValidationError("registry " + path + ": missing \"models\" array");
  std::vector<LLMProfile> profiles;
  try {
    for (const auto& m : doc["models"]) {
      LLMProfile p;
      p.name = m.at("name").get<std::string>();
      p.params_b = m.at("params_b").get<double>();
      p.latency_ms = m.at("latency_ms").get<double>();
      if (m.contains("rank") && !m["rank"].is_null()) p.rank = m["rank"].get<int>();
      profiles.push_back(std::move(p));
    }
  } catch (const json::exception& e) {
    throw ValidationError("registry " + path + ": " + e.what());
  }
  if (profiles.empty()) throw ValidationError("registry " + path + ": no models");
  return from_profiles(std::move(profiles));
}

void ModelRegistry::save(const std::string& path) const {
  json models = json::array();
  for (const auto& p : profiles_) {
    models.push_back({{"name", p.name},
                      {"params_b", p.params_b},
                      {"latency_ms", p.latency_ms},
                      {"rank", p.rank ? json(*p.rank) : json(nullptr)}});
  }
  write_file(path, json{{"models", models}}.dump(2) + "\n");
}

std::optional<ModelId> ModelRegistry::find(const std::string& name) const {
  for (const auto& p : profiles_)
    if (p.name == name) return p.model_id;
  return std::nullopt;
}

ModelId ModelRegistry::id_of(const std::string& name) const {
  if (auto id = find(name)) return *id;
  throw ValidationError("unknown model \"" + name + "\"");
}

// ---------------------------------------------------------------------------
// Dataset I/O

ResponseDataset parse_response_dataset(const std::string& jsonl, const ModelRegistry& registry) {
  ResponseDataset ds;
  ds.registry = registry;
  std::set<std::string> seen;
  std::istringstream in(jsonl);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string at = " at line " + std::to_string(line_no);
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::exception&) {
      throw ValidationError("malformed record" + at);
    }
    ResponseRecord rec;
    try {
      rec.query_id = obj.at("query_id").get<std::string>();
      rec.task = obj.at("task").get<std::string>();
      rec.query_text = obj.at("query_text").get<std::string>();
      if (obj.contains("doc_text") && !obj["doc_text"].is_null())
        rec.doc_text = obj["doc_text"].get<std::string>();
      const json& outs = obj.at("outcomes");
      if (!outs.is_object()) throw ValidationError("outcomes must be an object" + at);
      std::vector<std::optional<Outcome>> slots(registry.size());
      for (const auto& [name, o] : outs.items()) {
        auto id = registry.find(name);
        if (!id) throw ValidationError("unknown model \"" + name + "\"" + at);
        Outcome out{o.at("no_rag").get<double>(), o.at("rag").get<double>()};
        for (double v : {out.no_rag, out.rag})
          if (!(v >= 0.0 && v <= 1.0)) throw ValidationError("label out of range" + at);
        slots[*id] = out;
      }
      for (std::size_t i = 0; i < slots.size(); ++i) {
        if (!slots[i]) throw ValidationError("missing outcome for model \"" + registry[i].name + "\"" + at);
        rec.outcomes.push_back(*slots[i]);
      }
    } catch (const json::exception& e) {
      throw ValidationError(std::string("malformed record") + at + ": " + e.what());
    }
    if (!seen.insert(rec.query_id).second)
      throw ValidationError("duplicate query_id \"" + rec.query_id + "\"" + at);
    ds.records.push_back(std::move(rec));
  }
  return ds;
}

ResponseDataset load_response_dataset(const std::string& path, const ModelRegistry& registry) {
  try {
    return parse_response_dataset(read_file(path), registry);
  } catch (const ValidationError& e) {
    throw ValidationError(path + ": " + e.what());
  }
}

std::string serialize_response_dataset(const ResponseDataset& ds) {
  std::string out;
  for (const auto& rec : ds.records) {
    json outs = json::object();
    for (std::size_t i = 0; i < rec.outcomes.size(); ++i)
      outs[ds.registry[i].name] = {{"no_rag", rec.outcomes[i].no_rag}, {"rag", rec.outcomes[i].rag}};
    // ordered_json keeps the declared field order in the file.
    nlohmann::ordered_json obj;
    obj["query_id"] = rec.query_id;
    obj["task"] = rec.task;
    obj["query_text"] = rec.query_text;
    obj["doc_text"] = rec.doc_text ? nlohmann::ordered_json(*rec.doc_text) : nlohmann::ordered_json(nullptr);
    obj["outcomes"] = outs;
    out += obj.dump();
    out += '\n';
  }
  return out;
}

void save_response_dataset(const ResponseDataset& ds, const std::string& path) {
  write_file(path, serialize_response_dataset(ds));
}

// ---------------------------------------------------------------------------

std::pair<ResponseDataset, ResponseDataset> split_dataset(const ResponseDataset& ds,
                                                          double test_fraction,
                                                          std::uint64_t seed) {
  if (ds.empty()) throw ValidationError("split_dataset: empty dataset");
  if (!(test_fraction > 0.0 && test_fraction < 1.0))
    throw ValidationError("split_dataset: test_fraction must be in (0,1)");

  std::vector<std::string> ids;
  ids.reserve(ds.size());
  for (const auto& r : ds.records) ids.push_back(r.query_id);
  std::sort(ids.begin(), ids.end());
  Rng rng(seed);
  rng.shuffle(std::span<std::string>(ids));

  const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(ds.size())));
  const std::set<std::string> test_ids(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_test));

  ResponseDataset train{{}, ds.registry};
  ResponseDataset test{{}, ds.registry};
  for (const auto& r : ds.records) (test_ids.count(r.query_id) ? test : train).records.push_back(r);
  return {std::move(train), std::move(test)};
}

ValidationReport validate_dataset(const ResponseDataset& ds) {
  ValidationReport rep;
  const std::size_t n = ds.registry.size();
  rep.record_count = ds.size();
  rep.no_rag_positives.assign(n, 0);
  rep.rag_positives.assign(n, 0);
  for (const auto& r : ds.records) {
    if (!r.doc_text) ++rep.missing_doc;
    bool binary = true;
    for (std::size_t i = 0; i < r.outcomes.size() && i < n; ++i) {
      const auto& o = r.outcomes[i];
      if (o.no_rag >= 0.5) ++rep.no_rag_positives[i];
      if (o.rag >= 0.5) ++rep.rag_positives[i];
      binary = binary && is_binary_label(o.no_rag) && is_binary_label(o.rag);
    }
    auto [it, inserted] = rep.label_type.try_emplace(r.task, binary ? LabelType::kBinary : LabelType::kContinuous);
    if (!inserted && !binary) it->second = LabelType::kContinuous;
  }
  return rep;
}

ResponseDataset filter_task(const ResponseDataset& ds, const std::string& task) {
  ResponseDataset out{{}, ds.registry};
  for (const auto& r : ds.records)
    if (r.task == task) out.records.push_back(r);
  return out;
}

std::vector<std::string> task_names(const ResponseDataset& ds) {
  std::vector<std::string> names;
  for (const auto& r : ds.records)
    if (std::find(names.begin(), names.end(), r.task) == names.end()) names.push_back(r.task);
  return names;
}

}  // namespace ragroute
