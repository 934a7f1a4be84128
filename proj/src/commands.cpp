#include "ragroute/commands.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>

#include "ragroute/baselines.hpp"
#include "ragroute/errors.hpp"
#include "ragroute/hashing.hpp"
#include "ragroute/latency_eval.hpp"
#include "ragroute/report.hpp"
#include "ragroute/synth_bench.hpp"

namespace ragroute {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeFailure("cannot write " + path.string());
  out << text;
  if (!out) throw RuntimeFailure("write failed for " + path.string());
}

std::string data_file(const RunConfig& c, const std::string& name) { return (fs::path(c.data) / name).string(); }

ModelRegistry load_registry(const RunConfig& c) { return ModelRegistry::load(data_file(c, "registry.json")); }

EmbeddingProvider make_provider(const RunConfig& c, std::size_t base_dim) {
  if (!c.embeddings.empty()) return load_precomputed(c.embeddings);
  return EmbeddingProvider::feature_hash(base_dim);
}

std::map<std::string, double> per_task_accuracy(const ResponseDataset& ds, const std::vector<double>& correct) {
  std::map<std::string, std::pair<double, std::size_t>> sums;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    auto& [s, n] = sums[ds.records[i].task];
    s += correct[i];
    ++n;
  }
  std::map<std::string, double> out;
  for (const auto& [task, sn] : sums) out[task] = sn.first / static_cast<double>(sn.second);
  return out;
}

ojson accuracy_report(const std::string& method, const ResponseDataset& ds, const std::vector<double>& correct) {
  ojson j;
  j["method"] = method;
  j["n"] = ds.size();
  double total = 0.0;
  for (double c : correct) total += c;
  j["accuracy"] = ds.empty() ? 0.0 : total / static_cast<double>(ds.size());
  const auto tasks = task_names(ds);
  const auto acc = per_task_accuracy(ds, correct);
  ojson per = ojson::object();
  std::vector<double> row;
  for (const auto& t : tasks) {
    per[t] = acc.at(t);
    row.push_back(acc.at(t));
  }
  j["per_task"] = per;
  j["macro_average"] = aggregate_table(method, row).average;
  return j;
}

std::vector<double> correctness(const std::vector<ModelId>& decisions, const std::vector<std::vector<double>>& labels) {
  std::vector<double> out;
  for (std::size_t i = 0; i < decisions.size(); ++i) out.push_back(labels[i][decisions[i]]);
  return out;
}

std::vector<ModelId> router_decisions(const RouterParams& params, const EmbeddingProvider& provider,
                                      const ResponseDataset& ds) {
  std::vector<ModelId> out;
  for (const auto& scores : score_dataset(params, provider, ds)) out.push_back(argmax_lowest(scores));
  return out;
}

}  // namespace

std::string dataset_digest(const std::string& dir) {
  std::string joined;
  for (const char* name : {"registry.json", "train.jsonl", "test.jsonl"}) joined += file_digest((fs::path(dir) / name).string());
  return hex64(fnv1a64(joined));
}

SimulateResult cmd_simulate(const RunConfig& config) {
  config.validate();
  const SynthPool pool = generate_pool(config.models, config.topics, config.seed);
  const SynthDataset synth = generate_dataset(pool, config.queries, derive_seed(config.seed, 100), config.noise_mix);
  const double test_fraction = static_cast<double>(config.test_queries) / static_cast<double>(config.queries);
  auto [train_set, test_set] = split_dataset(synth.dataset, test_fraction, config.seed);

  const fs::path out(config.out);
  fs::create_directories(out);
  pool.registry.save((out / "registry.json").string());
  save_response_dataset(train_set, (out / "train.jsonl").string());
  save_response_dataset(test_set, (out / "test.jsonl").string());
  save_latents((out / "latents.json").string(), pool, synth.queries);

  SimulateResult res{dataset_digest(config.out), train_set.size(), test_set.size(), flip_fraction(synth.dataset)};
  ojson manifest;
  manifest["kind"] = "synthetic_dataset";
  manifest["seed"] = config.seed;
  manifest["models"] = config.models;
  manifest["topics"] = config.topics;
  manifest["queries"] = config.queries;
  manifest["test_queries"] = config.test_queries;
  manifest["noise_mix"] = config.noise_mix;
  manifest["train_size"] = res.train_size;
  manifest["test_size"] = res.test_size;
  manifest["flip_fraction"] = res.flip_fraction;
  manifest["digest"] = res.digest;
  write_text(out / "manifest.json", manifest.dump(2) + "\n");
  return res;
}

TrainResult cmd_train(const RunConfig& config, std::ostream& log) {
  config.validate();
  const ModelRegistry registry = load_registry(config);
  const ResponseDataset train_set = load_response_dataset(data_file(config, "train.jsonl"), registry);
  const EmbeddingProvider provider = make_provider(config, config.base_dim);
  const TrainConfig tc = config.train_config();

  TrainResult res = train(train_set, provider, tc, [&](std::size_t epoch, const TrainReport& r, const RouterParams&) {
    log << "epoch " << epoch + 1 << "/" << tc.epochs << " loss " << r.epoch_loss.back() << " train_acc "
        << r.epoch_train_accuracy.back() << '\n';
  });

  const std::string ckpt = config.checkpoint_path();
  if (fs::path(ckpt).has_parent_path()) fs::create_directories(fs::path(ckpt).parent_path());
  save_router_checkpoint(res.params, ckpt);

  ojson manifest;
  manifest["kind"] = "train_run";
  manifest["seed"] = config.seed;
  manifest["hyperparameters"] = tc.to_json();
  manifest["base_dim"] = provider.dim();
  manifest["embeddings"] = config.embeddings.empty() ? "feature_hash" : config.embeddings;
  manifest["train_set"] = data_file(config, "train.jsonl");
  manifest["train_digest"] = hex64(fnv1a64(file_digest(data_file(config, "registry.json")) +
                                           file_digest(data_file(config, "train.jsonl"))));
  manifest["train_size"] = train_set.size();
  manifest["epoch_loss"] = res.report.epoch_loss;
  manifest["epoch_train_accuracy"] = res.report.epoch_train_accuracy;
  manifest["optimizer_steps"] = res.report.optimizer_steps;
  manifest["checkpoint"] = ckpt;
  manifest["checkpoint_digest"] = file_digest(ckpt);
  write_text(fs::path(config.out) / "train_manifest.json", manifest.dump(2) + "\n");
  return res;
}

ojson cmd_route(const RunConfig& config, const std::string& query, const std::optional<std::string>& doc,
                const std::string& id) {
  if (query.empty()) throw ValidationError("route: empty query");
  const RouterParams params = load_router_checkpoint(config.checkpoint_path());
  const EmbeddingProvider provider = make_provider(config, params.base_dim);
  const RoutingDecision d =
      route(score_models(params, provider, query, doc, id), doc ? Setting::kRag : Setting::kNoRag);
  ojson j;
  j["setting"] = d.setting == Setting::kRag ? "rag" : "no_rag";
  j["chosen"] = d.chosen;
  if (fs::exists(data_file(config, "registry.json"))) {
    const ModelRegistry registry = load_registry(config);
    if (registry.size() == params.num_models) j["model"] = registry[d.chosen].name;
  }
  j["scores"] = d.scores;
  return j;
}

ojson cmd_eval(const RunConfig& config, const std::string& method, const std::string& dataset) {
  config.validate();
  const ModelRegistry registry = load_registry(config);
  const std::string path = dataset.empty() ? data_file(config, "test.jsonl") : dataset;
  const ResponseDataset ds = load_response_dataset(path, registry);
  if (ds.empty()) throw ValidationError("eval: empty dataset " + path);
  const auto labels = setting_labels(ds);

  auto train_set = [&] { return load_response_dataset(data_file(config, "train.jsonl"), registry); };
  std::vector<ModelId> decisions;
  ojson extra = ojson::object();

  if (method == "ragrouter") {
    const RouterParams params = load_router_checkpoint(config.checkpoint_path());
    decisions = router_decisions(params, make_provider(config, params.base_dim), ds);
  } else if (method == "random") {
    Rng rng(derive_seed(config.seed, 4));
    for (std::size_t i = 0; i < ds.size(); ++i) decisions.push_back(random_route(registry.size(), rng));
  } else if (method == "weighted") {
    const RouterParams params = load_router_checkpoint(config.checkpoint_path());
    const ResponseDataset tr = train_set();
    std::vector<double> dist(registry.size(), 0.0);
    for (ModelId m : router_decisions(params, make_provider(config, params.base_dim), tr)) dist[m] += 1.0;
    for (double& p : dist) p /= static_cast<double>(tr.size());
    extra["distribution"] = dist;
    Rng rng(derive_seed(config.seed, 5));
    for (std::size_t i = 0; i < ds.size(); ++i) decisions.push_back(weighted_route(dist, rng));
  } else if (method == "oracle") {
    for (const auto& row : labels) decisions.push_back(argmax_lowest(row));
  } else if (method == "oracle_single_best") {
    const SingleBestResult best = oracle_single_best(ds);
    std::map<std::string, ModelId> pick;
    ojson models = ojson::object();
    for (const auto& tb : best.per_task) {
      pick[tb.task] = tb.model;
      models[tb.task] = registry[tb.model].name;
    }
    for (const auto& r : ds.records) decisions.push_back(pick.at(r.task));
    extra["per_task_model"] = models;
  } else if (method == "knn") {
    const EmbeddingProvider provider = make_provider(config, config.base_dim);
    const KnnIndex index = KnnIndex::build(train_set(), provider, config.knn_k);
    for (const auto& r : ds.records) decisions.push_back(knn_route(index, query_features(provider, r)));
    extra["k"] = config.knn_k;
  } else if (method == "mf") {
    const EmbeddingProvider provider = make_provider(config, config.base_dim);
    const MfModel model = mf_train(train_set(), provider, config.mf_config());
    save_mf_checkpoint(model, (fs::path(config.out) / "mf.bin").string());
    for (const auto& r : ds.records) decisions.push_back(mf_route(model, query_features(provider, r)));
    extra["rank"] = config.mf_rank;
  } else {
    throw ValidationError("eval: unknown method \"" + method + "\"");
  }

  ojson j = accuracy_report(method, ds, correctness(decisions, labels));
  j["dataset"] = path;
  for (auto& [k, v] : extra.items()) j[k] = v;
  return j;
}

ojson cmd_sweep(const RunConfig& config, const std::string& dataset) {
  config.validate();
  const ModelRegistry registry = load_registry(config);
  const std::string path = dataset.empty() ? data_file(config, "test.jsonl") : dataset;
  const ResponseDataset ds = load_response_dataset(path, registry);
  if (ds.empty()) throw ValidationError("sweep: empty dataset " + path);
  const RouterParams params = load_router_checkpoint(config.checkpoint_path());
  if (params.num_models != registry.size()) throw ValidationError("sweep: checkpoint and registry disagree on N");
  const EmbeddingProvider provider = make_provider(config, params.base_dim);

  std::vector<std::vector<double>> scores;
  for (const auto& sims : score_dataset(params, provider, ds)) scores.push_back(sigmoid_scores(sims));
  const AccuracyLatencyCurve curve = sweep(scores, setting_labels(ds), registry, {config.theta_step, true});
  const BestSingleModel best = best_single_model(ds);

  const fs::path out(config.out);
  write_text(out / "curve.csv", curve_csv(curve));
  ojson j = ojson::parse(metrics_json(curve, BestSingle{best.accuracy, best.latency_s}, config.window_s));
  j["method"] = "ragrouter";
  j["curve"] = "curve.csv";
  j["evaluations"] = curve.evaluations;
  j["best_single"] = {{"model", registry[best.model].name}, {"accuracy", best.accuracy}, {"latency_s", best.latency_s}};
  write_text(out / "metrics.json", j.dump(2) + "\n");
  return j;
}

std::string cmd_report(const RunConfig& config, const std::vector<std::string>& metrics_files) {
  if (metrics_files.empty()) throw ValidationError("report: at least one metrics file is required");
  std::vector<MethodMetrics> rows;
  for (const auto& f : metrics_files) rows.push_back(load_method_metrics(f));
  const fs::path out(config.out);
  write_text(out / "report.csv", render_csv(rows));
  write_text(out / "report.svg", render_svg(rows, config.window_s));
  return render_table(rows);
}

// ---------------------------------------------------------------------------
// Command line

namespace {

struct KeyFlags {
  std::map<std::string, std::string> values;
  std::map<std::string, std::vector<CLI::Option*>> options;
};

void add_keys(CLI::App* cmd, KeyFlags& flags, std::initializer_list<const char*> keys) {
  for (const char* key : keys) {
    std::string help;
    for (const auto& k : config_keys())
      if (k.name == key) help = k.help;
    std::string names = std::string("--") + key;
    std::string dashed = key;
    std::replace(dashed.begin(), dashed.end(), '_', '-');
    if (dashed != key) names += ",--" + dashed;
    flags.options[key].push_back(cmd->add_option(names, flags.values[key], help));
  }
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Retrieval-aware LLM routing: synthetic data, training, routing and evaluation", "ragroute"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  KeyFlags flags;
  app.add_option("--config", config_path, "flat key = value config file");
  flags.options["seed"].push_back(app.add_option("--seed", flags.values["seed"], "master seed"));
  flags.options["out"].push_back(app.add_option("--out", flags.values["out"], "output directory"));

  const std::initializer_list<const char*> model_keys = {"data", "checkpoint", "embeddings", "base_dim"};

  auto* simulate = app.add_subcommand("simulate", "generate a synthetic dataset and print its digest");
  add_keys(simulate, flags, {"models", "topics", "queries", "test_queries", "noise_mix"});

  auto* train_cmd = app.add_subcommand("train", "train the router on <data>/train.jsonl");
  add_keys(train_cmd, flags, model_keys);
  add_keys(train_cmd, flags,
           {"dim", "heads", "tau", "lambda", "lr", "batch_size", "epochs", "label_mode", "contrast",
            "drop_cross_encoder", "drop_capability_table", "beta1", "beta2", "adam_eps", "weight_decay"});

  std::string query, doc, query_id;
  auto* route_cmd = app.add_subcommand("route", "route one query (and optional document)");
  add_keys(route_cmd, flags, model_keys);
  route_cmd->add_option("--query", query, "query text")->required();
  auto* doc_opt = route_cmd->add_option("--doc", doc, "retrieved document text");
  route_cmd->add_option("--id", query_id, "id for precomputed embeddings");

  std::string method = "ragrouter", dataset;
  auto* eval_cmd = app.add_subcommand("eval", "accuracy of the router or a baseline on a dataset");
  add_keys(eval_cmd, flags, model_keys);
  add_keys(eval_cmd, flags, {"knn_k", "mf_rank", "mf_epochs", "mf_lr"});
  eval_cmd->add_option("--method", method, "ragrouter, random, weighted, oracle, oracle_single_best, knn or mf")
      ->capture_default_str();
  eval_cmd->add_option("--dataset", dataset, "JSONL to evaluate (default <data>/test.jsonl)");

  auto* sweep_cmd = app.add_subcommand("sweep", "accuracy/latency curve over the score threshold");
  add_keys(sweep_cmd, flags, model_keys);
  add_keys(sweep_cmd, flags, {"theta_step", "window_s"});
  sweep_cmd->add_option("--dataset", dataset, "JSONL to sweep (default <data>/test.jsonl)");

  std::vector<std::string> metrics_files;
  auto* report_cmd = app.add_subcommand("report", "comparison table and plot from metrics files");
  add_keys(report_cmd, flags, {"window_s"});
  report_cmd->add_option("metrics", metrics_files, "metrics JSON files")->required();

  bool dump_defaults = false;
  auto* config_cmd = app.add_subcommand("config", "print the effective configuration");
  config_cmd->add_flag("--dump-defaults", dump_defaults, "print built-in defaults and ignore --config");
  for (const auto& key : config_keys())
    if (key.name != "seed" && key.name != "out") add_keys(config_cmd, flags, {key.name.c_str()});

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  try {
    if (config_cmd->parsed() && dump_defaults) {
      out << RunConfig().dump();
      return 0;
    }
    RunConfig config;
    if (!config_path.empty()) apply_config_file(config, config_path);
    for (const auto& [key, opts] : flags.options)
      for (const CLI::Option* opt : opts)
        if (opt->count() > 0) config.set(key, flags.values[key]);

    if (simulate->parsed()) {
      const SimulateResult r = cmd_simulate(config);
      out << "train " << r.train_size << " test " << r.test_size << " flip_fraction " << r.flip_fraction << '\n';
      out << "dataset digest " << r.digest << '\n';
    } else if (train_cmd->parsed()) {
      cmd_train(config, out);
      out << "checkpoint " << config.checkpoint_path() << " digest " << file_digest(config.checkpoint_path()) << '\n';
    } else if (route_cmd->parsed()) {
      const std::optional<std::string> d = doc_opt->count() > 0 ? std::optional<std::string>(doc) : std::nullopt;
      out << cmd_route(config, query, d, query_id).dump(2) << '\n';
    } else if (eval_cmd->parsed()) {
      const ojson j = cmd_eval(config, method, dataset);
      write_text(fs::path(config.out) / ("eval_" + method + ".json"), j.dump(2) + "\n");
      out << j.dump(2) << '\n';
    } else if (sweep_cmd->parsed()) {
      out << cmd_sweep(config, dataset).dump(2) << '\n';
    } else if (report_cmd->parsed()) {
      out << cmd_report(config, metrics_files);
    } else if (config_cmd->parsed()) {
      config.validate();
      out << config.dump();
    }
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const RuntimeFailure& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}

}  // namespace ragroute
