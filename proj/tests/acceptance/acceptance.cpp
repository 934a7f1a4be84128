// Acceptance gate: one PASS/FAIL line per criterion. Tolerances live here.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "ragroute/baselines.hpp"
#include "ragroute/commands.hpp"
#include "ragroute/errors.hpp"
#include "ragroute/latency_eval.hpp"
#include "ragroute/synth_bench.hpp"
#include "ragroute/trainer.hpp"
#include "../test_util.hpp"

using namespace ragroute;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

struct Outcome_ {
  bool pass = true;
  std::vector<std::string> notes;

  void require(bool ok, const std::string& what) {
    if (!ok) pass = false;
    notes.push_back(std::string(ok ? "" : "FAILED ") + what);
  }
};

// ---------------------------------------------------------------------------
// Criterion 1

constexpr double kGradTol = 1e-4;
constexpr double kGradEps = 1e-4;
constexpr double kGradBudgetS = 30.0;

Outcome_ gradient_correctness() {
  Outcome_ o;
  const auto t0 = Clock::now();
  const auto provider = EmbeddingProvider::feature_hash(16);
  double worst = 0.0;
  Rng rng(2024);
  for (std::uint64_t trial = 0; trial < 4; ++trial) {
    RouterParams params = init_params(3, 8, 2, 16, 100 + trial);
    for (auto& [name, t] : params.tensors())
      for (double& x : t->data) x += rng.uniform(-0.3, 0.3);
    ResponseRecord rec;
    rec.query_id = "g" + std::to_string(trial);
    rec.query_text = "query tokens " + std::to_string(rng.below(1000)) + " about topic " + std::to_string(trial);
    rec.doc_text = "document words " + std::to_string(rng.below(1000)) + " topic " + std::to_string(trial);
    std::vector<ResolvedLabels> labels(3);
    for (auto& l : labels) l = {static_cast<int>(rng.below(2)), static_cast<int>(rng.below(2))};
    labels[0].rag = 1;  // at least one positive so the contrastive term is live
    TrainConfig cfg;
    cfg.dim = 8;
    cfg.heads = 2;
    worst = std::max(worst, gradient_check(params, provider, rec, labels, cfg, kGradEps).max_rel_error);
  }
  const double elapsed = seconds_since(t0);
  o.require(worst < kGradTol, "max rel error " + fmt("%.2e", worst) + " < 1e-4");
  o.require(elapsed < kGradBudgetS, "runtime " + fmt("%.2f", elapsed) + " s < 30 s");
  return o;
}

// ---------------------------------------------------------------------------
// Criterion 2

Var unit_at(Tape& tape, double c) { return tape.constant({c, std::sqrt(1.0 - c * c)}); }

Outcome_ loss_fixtures() {
  Outcome_ o;
  Tape tape;
  Var v_q = tape.constant({1.0, 0.0});

  ContrastSets only_pos;
  only_pos.positives = {{unit_at(tape, 0.5), 0, Setting::kNoRag}};
  const double empty_neg = tape.scalar(contrastive_loss(tape, v_q, only_pos, 0.2));
  o.require(empty_neg == 0.0, "CT with no negatives = " + fmt("%.3g", empty_neg));

  ContrastSets pair;
  pair.positives = {{unit_at(tape, 0.5), 0, Setting::kNoRag}};
  pair.negatives = {{unit_at(tape, 0.0), 1, Setting::kRag}};
  const double ct = tape.scalar(contrastive_loss(tape, v_q, pair, 0.2));
  const double ct_expected = std::log(1.0 + std::exp(-2.5));
  o.require(std::abs(ct - ct_expected) <= 1e-6, "single-pair CT " + fmt("%.7f", ct) + " vs log(1+e^-2.5) " +
                                                    fmt("%.7f", ct_expected) + " (+-1e-6)");

  const std::pair<Var, int> ortho[] = {{tape.constant({0.0, 1.0}), 1}};
  const double cls = tape.scalar(classification_loss(tape, v_q, ortho));
  o.require(std::abs(cls - std::log(2.0)) <= 1e-9, "CLS at sim 0, y 1 = " + fmt("%.10f", cls) + " (ln 2 +-1e-9)");

  // total = CT + lambda * CLS with the default lambda, on a real record.
  const TrainConfig defaults;
  o.require(defaults.lambda == 2.0, "default lambda = " + fmt("%g", defaults.lambda));
  const auto provider = EmbeddingProvider::feature_hash(16);
  TrainConfig cfg;
  cfg.dim = 8;
  cfg.heads = 2;
  const RouterParams params = init_params(3, 8, 2, 16, 5);
  ResponseRecord rec{"t0", "t", "a small query", std::string("a small document"), {}};
  const ResolvedLabels labels[] = {{1, 0}, {0, 1}, {0, 0}};
  Tape t2;
  RouterGraph graph(t2, params, provider);
  const LossTerms terms = total_loss(graph, rec, labels, cfg);
  const double total = t2.scalar(terms.total);
  o.require(total == terms.contrastive + 2.0 * terms.classification,
            "total " + fmt("%.12f", total) + " == CT + 2*CLS exactly");
  return o;
}

// ---------------------------------------------------------------------------
// Criterion 3

constexpr double kTableTol = 0.005;

Outcome_ table_fixtures() {
  Outcome_ o;
  const double small[] = {45.19, 51.11, 25.93, 34.81, 27.08, 38.75, 39.17};
  const double router[] = {48.52, 52.59, 71.48, 74.44, 56.67, 56.67, 90.83};
  const double a = aggregate_table("Qwen2.5-0.5B-Instruct", small).average;
  const double b = aggregate_table("RAGRouter", router).average;
  o.require(std::abs(a - 37.43) <= kTableTol, "0.5B row average " + fmt("%.4f", a) + " vs 37.43");
  o.require(std::abs(b - 64.46) <= kTableTol, "router row average " + fmt("%.4f", b) + " vs 64.46");
  const auto table = testutil::load_table2();
  const double osb = 100.0 * oracle_single_best(testutil::table2_dataset(table)).macro_average;
  o.require(std::abs(osb - 61.22) <= kTableTol, "oracle single best from labels " + fmt("%.4f", osb) + " vs 61.22");
  return o;
}

// ---------------------------------------------------------------------------
// Criteria 4 and 7: the synthetic benchmark

constexpr std::uint64_t kSeeds[] = {1, 2, 3};
constexpr std::array<double, 4> kFlipHeavyMix = {0.05, 0.15, 0.4, 0.4};
constexpr double kOsbMargin = 2.0;
constexpr double kRandomMargin = 10.0;
constexpr double kMinFlip = 0.30;
constexpr double kRunBudgetS = 600.0;
constexpr double kAblationMargin = 0.5;

struct SeedResult {
  std::uint64_t seed = 0;
  double flip = 0.0;
  double gain_rate = 0.0;
  double interference_rate = 0.0;
  double router = 0.0, router_no_ct = 0.0, osb = 0.0, random = 0.0, knn = 0.0, mf = 0.0;
  double seconds = 0.0;
};

// Macro average over task tags of the chosen models' labels, in points.
double macro_points(const ResponseDataset& ds, const std::vector<ModelId>& chosen) {
  const auto labels = setting_labels(ds);
  std::vector<double> per_task;
  for (const auto& task : task_names(ds)) {
    double hit = 0, n = 0;
    for (std::size_t i = 0; i < ds.size(); ++i)
      if (ds.records[i].task == task) {
        hit += labels[i][chosen[i]];
        ++n;
      }
    per_task.push_back(100.0 * hit / n);
  }
  return aggregate_table("", per_task).average;
}

std::vector<ModelId> router_choices(const RouterParams& p, const EmbeddingProvider& provider, const ResponseDataset& ds) {
  std::vector<ModelId> out;
  for (const auto& s : score_dataset(p, provider, ds)) out.push_back(argmax_lowest(s));
  return out;
}

SeedResult run_seed(std::uint64_t seed) {
  const auto t0 = Clock::now();
  SeedResult r;
  r.seed = seed;
  const SynthPool pool = generate_pool(15, 16, seed);
  const SynthDataset synth = generate_dataset(pool, 2300, derive_seed(seed, 100), kFlipHeavyMix);
  const auto [train_set, test_set] = split_dataset(synth.dataset, 300.0 / 2300.0, seed);
  if (train_set.size() != 2000 || test_set.size() != 300) throw RuntimeFailure("unexpected split sizes");

  const GainCounts counts = count_gain(synth.dataset);
  r.flip = counts.flip_fraction();
  r.gain_rate = counts.gain_rate().value_or(0.0);
  r.interference_rate = counts.interference_rate().value_or(0.0);

  const auto provider = EmbeddingProvider::feature_hash(256);
  TrainConfig cfg;  // lr 5e-5, batch 64, 10 epochs, tau 0.2, lambda 2
  cfg.dim = 128;
  cfg.heads = 8;
  cfg.seed = seed;
  r.router = macro_points(test_set, router_choices(train(train_set, provider, cfg).params, provider, test_set));

  const SingleBestResult osb = oracle_single_best(test_set);
  r.osb = 100.0 * osb.macro_average;

  Rng rng(derive_seed(seed, 4));
  std::vector<ModelId> rnd;
  for (std::size_t i = 0; i < test_set.size(); ++i) rnd.push_back(random_route(15, rng));
  r.random = macro_points(test_set, rnd);

  const KnnIndex index = KnnIndex::build(train_set, provider, 16);
  std::vector<ModelId> knn;
  for (const auto& rec : test_set.records) knn.push_back(knn_route(index, query_features(provider, rec)));
  r.knn = macro_points(test_set, knn);

  MfConfig mf_cfg;
  mf_cfg.seed = seed;
  const MfModel mf = mf_train(train_set, provider, mf_cfg);
  std::vector<ModelId> mfc;
  for (const auto& rec : test_set.records) mfc.push_back(mf_route(mf, query_features(provider, rec)));
  r.mf = macro_points(test_set, mfc);
  r.seconds = seconds_since(t0);

  // Ablation: contrastive term off, classification only. Not counted in the runtime budget.
  TrainConfig no_ct = cfg;
  no_ct.contrast = ContrastMode::kNone;
  r.router_no_ct = macro_points(test_set, router_choices(train(train_set, provider, no_ct).params, provider, test_set));
  return r;
}

Outcome_ end_to_end(const std::vector<SeedResult>& runs) {
  Outcome_ o;
  for (const auto& r : runs) {
    const std::string s = "seed " + std::to_string(r.seed) + ": ";
    o.require(r.flip >= kMinFlip, s + "flip fraction " + fmt("%.3f", r.flip) + " >= 0.30 (gain rate " +
                                      fmt("%.3f", r.gain_rate) + ", interference rate " +
                                      fmt("%.3f", r.interference_rate) + ")");
    o.require(r.router >= r.osb + kOsbMargin,
              s + "router " + fmt("%.2f", r.router) + " >= oracle single best " + fmt("%.2f", r.osb) + " + 2");
    o.require(r.router >= r.random + kRandomMargin,
              s + "router " + fmt("%.2f", r.router) + " >= random " + fmt("%.2f", r.random) + " + 10");
    o.require(r.router >= r.knn, s + "router " + fmt("%.2f", r.router) + " >= knn " + fmt("%.2f", r.knn));
    o.require(r.router >= r.mf, s + "router " + fmt("%.2f", r.router) + " >= mf " + fmt("%.2f", r.mf));
    o.require(r.seconds < kRunBudgetS, s + "runtime " + fmt("%.1f", r.seconds) + " s < 600 s");
  }
  return o;
}

Outcome_ ablation(const std::vector<SeedResult>& runs) {
  Outcome_ o;
  double full = 0, none = 0;
  for (const auto& r : runs) {
    full += r.router / runs.size();
    none += r.router_no_ct / runs.size();
    o.notes.push_back("seed " + std::to_string(r.seed) + ": full " + fmt("%.2f", r.router) + ", no contrastive " +
                      fmt("%.2f", r.router_no_ct));
  }
  o.require(full - none >= kAblationMargin,
            "mean drop " + fmt("%.2f", full - none) + " points >= 0.5 (full " + fmt("%.2f", full) + ", none " +
                fmt("%.2f", none) + ")");
  return o;
}

// ---------------------------------------------------------------------------
// Criterion 5

Outcome_ threshold_invariants() {
  Outcome_ o;
  Rng rng(55);
  const auto reg = testutil::registry_of(6);
  std::vector<std::vector<double>> scores(200), labels(200);
  for (std::size_t q = 0; q < 200; ++q)
    for (int m = 0; m < 6; ++m) {
      scores[q].push_back(1.0 / (1.0 + std::exp(-rng.uniform(-1.0, 1.0))));
      labels[q].push_back(rng.bernoulli(0.5) ? 1.0 : 0.0);
    }
  const auto curve = sweep(scores, labels, reg);
  std::vector<ModelId> argmax;
  double lat = 0.0;
  for (const auto& s : scores) {
    argmax.push_back(argmax_lowest(s));
    lat += reg[argmax.back()].latency_ms / 1000.0;
  }
  const auto& first = curve.points.front();
  o.require(first.theta == 0.0 && first.accuracy == accuracy(argmax, labels) &&
                std::abs(first.mean_latency_s - lat / 200.0) <= 1e-12,
            "theta 0 point equals argmax routing");
  bool all_zero = true;
  for (const auto& s : scores) all_zero = all_zero && threshold_route(s, 1.0) == 0;
  // The mean of 200 equal latencies carries summation rounding.
  o.require(all_zero && std::abs(curve.points.back().mean_latency_s - reg[0].latency_ms / 1000.0) <= 1e-12,
            "theta 1 routes every query to the most efficient model");

  std::size_t violations = 0;
  for (int v = 0; v < 1000; ++v) {
    std::vector<double> s(1 + rng.below(15));
    for (double& x : s) x = rng.uniform();
    ModelId prev = threshold_route(s, 0.0);
    for (int i = 1; i <= 1000; ++i) {
      const ModelId cur = threshold_route(s, i * 1e-3);
      if (cur > prev) ++violations;
      prev = cur;
    }
  }
  o.require(violations == 0, "monotone in theta over 1000 random vectors (" + std::to_string(violations) + " violations)");
  return o;
}

// ---------------------------------------------------------------------------
// Criterion 6

AccuracyLatencyCurve curve_of(std::initializer_list<std::pair<double, double>> pts) {
  AccuracyLatencyCurve c;
  for (auto [lat, acc] : pts) c.points.push_back({0.0, 0.0, lat, acc});
  return c;
}

Outcome_ metric_fixtures() {
  Outcome_ o;
  const double a = area(curve_of({{0.2, 0.5}, {0.6, 0.8}}));
  o.require(std::abs(a - 52.0) <= 1e-9, "area " + fmt("%.6f", a) + " = 52.0");
  const BestSingle best{0.80, 0.9};
  const auto g = gap_to_match(curve_of({{0.2, 0.5}, {0.6, 0.8}}), best);
  o.require(g && std::abs(*g - 0.3) <= 1e-9, "gap to match 0.3 s");
  o.require(!gap_to_match(curve_of({{0.2, 0.5}, {0.6, 0.7}}), best).has_value(), "unmatched sentinel");
  const auto neg = gap_to_match(curve_of({{0.2, 0.5}, {1.4, 0.8}}), best);
  o.require(neg && std::abs(*neg + 0.5) <= 1e-9, "negative gap -0.50");

  const double no_rag[] = {0, 0, 1, 1}, rag[] = {1, 0, 1, 0};
  const auto gain = positive_gain_rate(no_rag, rag), inter = negative_interference_rate(no_rag, rag);
  o.require(gain && inter && *gain == 0.5 && *inter == 0.5, "hand fixture gain/interference 0.5/0.5");

  // Recount from the generator latents.
  const SynthPool pool = generate_pool(15, 16, 7);
  const SynthDataset synth = generate_dataset(pool, 2300, 8, kFlipHeavyMix);
  std::size_t gains = 0, inters = 0, wrong = 0, right = 0;
  for (const auto& q : synth.queries)
    for (const auto& m : pool.models) {
      const double k = m.knowledge[q.topic];
      const bool before = k >= q.difficulty;
      const bool after = std::max(k, m.extraction * q.doc_help) - q.doc_mislead * (1.0 - m.robustness) >= q.difficulty;
      (before ? right : wrong)++;
      gains += !before && after;
      inters += before && !after;
    }
  const GainCounts c = count_gain(synth.dataset);
  o.require(c.gain == gains && c.interference == inters && c.no_rag_wrong == wrong && c.no_rag_right == right,
            "counting oracle on " + std::to_string(c.pairs) + " pairs (gain " + fmt("%.4f", *c.gain_rate()) +
                ", interference " + fmt("%.4f", *c.interference_rate()) + ")");
  return o;
}

// ---------------------------------------------------------------------------
// Criterion 8

Outcome_ determinism() {
  Outcome_ o;
  testutil::TempDir dir("acceptance_det");
  RunConfig sim;
  sim.seed = 9;
  sim.models = 5;
  sim.topics = 4;
  sim.queries = 120;
  sim.test_queries = 20;
  sim.out = (dir / "data_a").string();
  const auto first = cmd_simulate(sim);
  sim.out = (dir / "data_b").string();
  const auto second = cmd_simulate(sim);
  o.require(first.digest == second.digest && dataset_digest((dir / "data_a").string()) == first.digest,
            "dataset digest " + first.digest + " stable across regeneration");

  RunConfig cfg = sim;
  cfg.data = (dir / "data_a").string();
  cfg.base_dim = 64;
  cfg.train.dim = 32;
  cfg.train.heads = 4;
  cfg.train.epochs = 2;
  cfg.train.batch_size = 16;
  std::ostringstream log;
  cfg.out = (dir / "run_a").string();
  cmd_train(cfg, log);
  cfg.out = (dir / "run_b").string();
  cmd_train(cfg, log);
  const std::string a = testutil::read_file(dir / "run_a" / "checkpoint.bin");
  const std::string b = testutil::read_file(dir / "run_b" / "checkpoint.bin");
  o.require(!a.empty() && a == b, "two training runs give bit-identical checkpoints (" + std::to_string(a.size()) + " bytes)");
  const std::string ma = testutil::read_file(dir / "run_a" / "train_manifest.json");
  const std::string mb = testutil::read_file(dir / "run_b" / "train_manifest.json");
  o.require(ma.substr(0, ma.find("\"checkpoint\"")) == mb.substr(0, mb.find("\"checkpoint\"")),
            "training manifests agree apart from output paths");
  return o;
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    std::function<Outcome_()> run;
  };
  std::vector<SeedResult> runs;
  auto synthetic = [&]() -> const std::vector<SeedResult>& {
    if (runs.empty())
      for (auto seed : kSeeds) {
        runs.push_back(run_seed(seed));
        std::cerr << "  synthetic seed " << seed << " done in " << fmt("%.1f", runs.back().seconds) << " s\n";
      }
    return runs;
  };

  const std::vector<Criterion> criteria = {
      {1, "gradient correctness", gradient_correctness},
      {2, "loss fixtures", loss_fixtures},
      {3, "table fixture reproduction", table_fixtures},
      {4, "synthetic end-to-end margins", [&] { return end_to_end(synthetic()); }},
      {5, "threshold routing invariants", threshold_invariants},
      {6, "metric fixtures", metric_fixtures},
      {7, "contrastive ablation direction", [&] { return ablation(synthetic()); }},
      {8, "determinism", determinism},
  };

  int failures = 0;
  for (const auto& c : criteria) {
    Outcome_ o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.notes.push_back(std::string("exception: ") + e.what());
    }
    std::cout << (o.pass ? "PASS" : "FAIL") << "  criterion " << c.id << ": " << c.name << '\n';
    for (const auto& n : o.notes) std::cout << "        " << n << '\n';
    std::cout.flush();
    failures += !o.pass;
  }
  std::cout << (failures ? "FAILED " : "ALL PASSED ") << "(" << criteria.size() - failures << "/" << criteria.size()
            << ")\n";
  return failures ? 1 : 0;
}
