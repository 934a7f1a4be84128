#include "ragroute/run_config.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <sstream>

#include <CLI11.hpp>

#include "ragroute/errors.hpp"

namespace ragroute {

namespace {

struct Binding {
  std::string help;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

std::string fmt_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  std::string out(buf, res.ptr);
  if (out.find_first_of(".eEn") == std::string::npos) out += ".0";
  return out;
}

std::string quote(const std::string& s) { return "\"" + s + "\""; }

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || v.empty())
    throw ValidationError("config key " + key + ": expected a non-negative integer, got \"" + v + "\"");
  return out;
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double out = std::stod(v, &used);
    if (used == v.size()) return out;
  } catch (const std::exception&) {
  }
  throw ValidationError("config key " + key + ": expected a number, got \"" + v + "\"");
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ValidationError("config key " + key + ": expected true or false, got \"" + v + "\"");
}

std::string strip_quotes(const std::string& v) {
  if (v.size() >= 2 && (v.front() == '"' || v.front() == '\'') && v.back() == v.front()) return v.substr(1, v.size() - 2);
  return v;
}

const std::map<std::string, Binding>& bindings() {
  static const std::map<std::string, Binding> table = [] {
    std::map<std::string, Binding> t;
    auto str = [&](const std::string& name, std::string help, std::string RunConfig::*field) {
      t[name] = {std::move(help), [field](RunConfig& c, const std::string& v) { c.*field = strip_quotes(v); },
                 [field](const RunConfig& c) { return quote(c.*field); }};
    };
    auto real = [&](const std::string& name, std::string help, auto getter) {
      t[name] = {std::move(help),
                 [name, getter](RunConfig& c, const std::string& v) { getter(c) = parse_double(name, v); },
                 [getter](const RunConfig& c) { return fmt_double(getter(const_cast<RunConfig&>(c))); }};
    };
    auto count = [&](const std::string& name, std::string help, auto getter) {
      t[name] = {std::move(help),
                 [name, getter](RunConfig& c, const std::string& v) {
                   getter(c) = static_cast<std::size_t>(parse_u64(name, v));
                 },
                 [getter](const RunConfig& c) { return std::to_string(getter(const_cast<RunConfig&>(c))); }};
    };
    auto flag = [&](const std::string& name, std::string help, auto getter) {
      t[name] = {std::move(help), [name, getter](RunConfig& c, const std::string& v) { getter(c) = parse_bool(name, v); },
                 [getter](const RunConfig& c) { return getter(const_cast<RunConfig&>(c)) ? "true" : "false"; }};
    };

    t["seed"] = {"master seed for data generation, splitting and training",
                 [](RunConfig& c, const std::string& v) { c.seed = parse_u64("seed", v); },
                 [](const RunConfig& c) { return std::to_string(c.seed); }};
    str("out", "output directory", &RunConfig::out);
    str("data", "dataset directory (registry.json, train.jsonl, test.jsonl)", &RunConfig::data);
    str("checkpoint", "router checkpoint path (default <out>/checkpoint.bin)", &RunConfig::checkpoint);
    count("models", "synthetic pool size", [](RunConfig& c) -> std::size_t& { return c.models; });
    count("topics", "synthetic topic count", [](RunConfig& c) -> std::size_t& { return c.topics; });
    count("queries", "synthetic queries before the split", [](RunConfig& c) -> std::size_t& { return c.queries; });
    count("test_queries", "queries held out for test", [](RunConfig& c) -> std::size_t& { return c.test_queries; });
    t["noise_mix"] = {"weights of golden, relevant_noise, irrelevant_noise, counterfactual",
                      [](RunConfig& c, const std::string& v) {
                        std::string s = v;
                        for (char& ch : s)
                          if (ch == '[' || ch == ']' || ch == ',') ch = ' ';
                        std::istringstream in(s);
                        std::vector<std::string> parts;
                        for (std::string p; in >> p;) parts.push_back(p);
                        if (parts.size() != 4) throw ValidationError("config key noise_mix: expected 4 weights");
                        for (std::size_t i = 0; i < 4; ++i) c.noise_mix[i] = parse_double("noise_mix", parts[i]);
                      },
                      [](const RunConfig& c) {
                        std::string out = "[";
                        for (std::size_t i = 0; i < 4; ++i) out += (i ? ", " : "") + fmt_double(c.noise_mix[i]);
                        return out + "]";
                      }};
    count("base_dim", "feature-hash dimension", [](RunConfig& c) -> std::size_t& { return c.base_dim; });
    str("embeddings", "precomputed embedding manifest (empty: feature hashing)", &RunConfig::embeddings);

    count("dim", "router hidden dimension", [](RunConfig& c) -> std::size_t& { return c.train.dim; });
    count("heads", "attention heads", [](RunConfig& c) -> std::size_t& { return c.train.heads; });
    real("tau", "contrastive temperature", [](RunConfig& c) -> double& { return c.train.tau; });
    real("lambda", "classification loss weight", [](RunConfig& c) -> double& { return c.train.lambda; });
    real("lr", "learning rate", [](RunConfig& c) -> double& { return c.train.lr; });
    count("batch_size", "queries per optimizer step", [](RunConfig& c) -> std::size_t& { return c.train.batch_size; });
    count("epochs", "training epochs", [](RunConfig& c) -> std::size_t& { return c.train.epochs; });
    t["label_mode"] = {"binary or probabilistic",
                       [](RunConfig& c, const std::string& v) { c.train.label_mode = parse_label_mode(strip_quotes(v)); },
                       [](const RunConfig& c) { return quote(to_string(c.train.label_mode)); }};
    t["contrast"] = {"pooled, csc_only, isc_only or none",
                     [](RunConfig& c, const std::string& v) { c.train.contrast = parse_contrast_mode(strip_quotes(v)); },
                     [](const RunConfig& c) { return quote(to_string(c.train.contrast)); }};
    flag("drop_cross_encoder", "leave the cross-encoder output out of the attention",
         [](RunConfig& c) -> bool& { return c.train.arch.drop_cross_encoder; });
    flag("drop_capability_table", "attend with the knowledge row instead of the capability row",
         [](RunConfig& c) -> bool& { return c.train.arch.drop_capability_table; });
    real("beta1", "AdamW beta1", [](RunConfig& c) -> double& { return c.train.beta1; });
    real("beta2", "AdamW beta2", [](RunConfig& c) -> double& { return c.train.beta2; });
    real("adam_eps", "AdamW epsilon", [](RunConfig& c) -> double& { return c.train.adam_eps; });
    real("weight_decay", "AdamW decoupled weight decay", [](RunConfig& c) -> double& { return c.train.weight_decay; });

    count("knn_k", "KNN neighbours", [](RunConfig& c) -> std::size_t& { return c.knn_k; });
    count("mf_rank", "matrix factorization rank", [](RunConfig& c) -> std::size_t& { return c.mf_rank; });
    count("mf_epochs", "matrix factorization epochs", [](RunConfig& c) -> std::size_t& { return c.mf_epochs; });
    real("mf_lr", "matrix factorization learning rate", [](RunConfig& c) -> double& { return c.mf_lr; });
    real("theta_step", "sweep grid step", [](RunConfig& c) -> double& { return c.theta_step; });
    real("window_s", "latency window for Area and Peak Acc", [](RunConfig& c) -> double& { return c.window_s; });
    return t;
  }();
  return table;
}

}  // namespace

RunConfig::RunConfig() { train.seed = seed; }

void RunConfig::set(const std::string& key, const std::string& value) {
  const auto it = bindings().find(key);
  if (it == bindings().end()) throw ValidationError("unknown config key \"" + key + "\"");
  it->second.set(*this, value);
}

std::string RunConfig::get(const std::string& key) const {
  const auto it = bindings().find(key);
  if (it == bindings().end()) throw ValidationError("unknown config key \"" + key + "\"");
  return it->second.get(*this);
}

std::string RunConfig::dump() const {
  std::string out;
  for (const auto& key : config_keys()) out += "# " + key.help + "\n" + key.name + " = " + get(key.name) + "\n";
  return out;
}

void RunConfig::validate() const {
  if (models < 2) throw ValidationError("models must be >= 2");
  if (topics < 1) throw ValidationError("topics must be >= 1");
  if (test_queries >= queries) throw ValidationError("test_queries must be smaller than queries");
  if (base_dim < 1) throw ValidationError("base_dim must be >= 1");
  if (knn_k < 1) throw ValidationError("knn_k must be >= 1");
  if (mf_rank < 1) throw ValidationError("mf_rank must be >= 1");
  if (!(theta_step > 0.0) || theta_step > 1.0) throw ValidationError("theta_step must be in (0, 1]");
  if (!(window_s > 0.0)) throw ValidationError("window_s must be positive");
  train_config().validate();
}

TrainConfig RunConfig::train_config() const {
  TrainConfig c = train;
  c.seed = seed;
  return c;
}

MfConfig RunConfig::mf_config() const { return {mf_rank, mf_epochs, mf_lr, train.batch_size, seed}; }

std::string RunConfig::checkpoint_path() const { return checkpoint.empty() ? out + "/checkpoint.bin" : checkpoint; }

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = [] {
    // Dump order follows the struct layout rather than the alphabet.
    const char* order[] = {"seed",  "out",        "data",       "checkpoint", "models",  "topics",
                           "queries", "test_queries", "noise_mix", "base_dim", "embeddings", "dim",
                           "heads", "tau",        "lambda",     "lr",         "batch_size", "epochs",
                           "label_mode", "contrast", "drop_cross_encoder", "drop_capability_table", "beta1",
                           "beta2", "adam_eps",   "weight_decay", "knn_k",    "mf_rank", "mf_epochs",
                           "mf_lr", "theta_step", "window_s"};
    std::vector<ConfigKey> out;
    for (const char* name : order) out.push_back({name, bindings().at(name).help});
    return out;
  }();
  return keys;
}

void apply_config_text(RunConfig& config, const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::vector<CLI::ConfigItem> items;
  try {
    items = CLI::ConfigTOML().from_config(in);
  } catch (const CLI::Error& e) {
    throw ValidationError(origin + ": " + e.what());
  }
  for (const auto& item : items) {
    if (item.name == "++" || item.name == "--") continue;  // section markers
    if (!item.parents.empty() && !(item.parents.size() == 1 && item.parents[0] == "default"))
      throw ValidationError(origin + ": sections are not supported (key " + item.fullname() + ")");
    std::string value;
    for (std::size_t i = 0; i < item.inputs.size(); ++i) value += (i ? "," : "") + item.inputs[i];
    try {
      config.set(item.name, value);
    } catch (const ValidationError& e) {
      throw ValidationError(origin + ": " + e.what());
    }
  }
}

void apply_config_file(RunConfig& config, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read config file " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  apply_config_text(config, buf.str(), path);
}

}  // namespace ragroute
