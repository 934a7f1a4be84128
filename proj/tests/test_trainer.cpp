#include <doctest.h>

#include <cmath>
#include <numbers>

#include "ragroute/errors.hpp"
#include "ragroute/synth_bench.hpp"
#include "ragroute/trainer.hpp"
#include "test_util.hpp"

using namespace ragroute;

namespace {

// Unit vector at angle theta; its cosine to [1, 0] is cos(theta).
Var at_cos(Tape& tape, double c) { return tape.constant({c, std::sqrt(std::max(0.0, 1.0 - c * c))}); }

ContrastEntry entry(Var v, ModelId m, Setting s) { return {v, m, s}; }

double softplus(double x) { return std::log1p(std::exp(x)); }

// -log(e^{p/t} / (e^{p/t} + sum e^{n/t})) summed over positives, naive form.
double ct_oracle(const std::vector<double>& pos, const std::vector<double>& neg, double tau) {
  double total = 0.0;
  for (double p : pos) {
    double denom = std::exp(p / tau);
    for (double n : neg) denom += std::exp(n / tau);
    total += -std::log(std::exp(p / tau) / denom);
  }
  return total;
}

ResponseRecord small_record(std::size_t n) {
  ResponseRecord r;
  r.query_id = "q0";
  r.task = "t";
  r.query_text = "who wrote the treatise on optics";
  r.doc_text = "the treatise on optics was written in cairo";
  r.outcomes.assign(n, Outcome{});
  return r;
}

RouterParams randomized(std::size_t n, std::size_t d, std::size_t h, std::size_t base, std::uint64_t seed) {
  RouterParams p = init_params(n, d, h, base, seed);
  Rng rng(seed + 99);
  for (auto& [name, t] : p.tensors())
    for (double& x : t->data) x += rng.uniform(-0.3, 0.3);
  return p;
}

TrainConfig tiny_config() {
  TrainConfig c;
  c.dim = 16;
  c.heads = 2;
  c.epochs = 2;
  c.batch_size = 4;
  c.seed = 7;
  return c;
}

}  // namespace

TEST_CASE("resolve_labels: binary passes through, probabilistic draws") {
  Rng rng(1);
  auto r = resolve_labels({0.0, 1.0}, LabelMode::kBinary, rng);
  CHECK(r.no_rag == 0);
  CHECK(r.rag == 1);
  CHECK_THROWS_AS(resolve_labels({0.5, 1.0}, LabelMode::kBinary, rng), ValidationError);
  CHECK_THROWS_AS(resolve_labels({1.5, 1.0}, LabelMode::kProbabilistic, rng), ValidationError);

  auto p = resolve_labels({1.0, 0.0}, LabelMode::kProbabilistic, rng);
  CHECK(p.no_rag == 1);
  CHECK(p.rag == 0);

  int ones = 0;
  const int draws = 10000;
  for (int i = 0; i < draws; ++i) ones += resolve_labels({0.7, 0.7}, LabelMode::kProbabilistic, rng).no_rag;
  CHECK(std::abs(ones / double(draws) - 0.7) <= 0.02);
}

TEST_CASE("build_contrast_sets places each representation by its own label") {
  const auto provider = EmbeddingProvider::feature_hash(16);
  const RouterParams params = init_params(2, 8, 2, 16, 3);
  Tape tape;
  RouterGraph graph(tape, params, provider);
  const auto rec = small_record(2);

  const ResolvedLabels mixed[] = {{1, 0}, {0, 1}};
  auto sets = build_contrast_sets(graph, rec, mixed);
  REQUIRE(sets.positives.size() == 2);
  CHECK(sets.positives[0].model == 0);
  CHECK(sets.positives[0].setting == Setting::kNoRag);
  CHECK(sets.positives[1].model == 1);
  CHECK(sets.positives[1].setting == Setting::kRag);
  CHECK(tape.value(sets.positives[0].rep) == Vec(params.knowledge.row(0).begin(), params.knowledge.row(0).end()));
  CHECK(sets.negatives.size() == 2);

  const ResolvedLabels all_ones[] = {{1, 1}, {1, 1}};
  auto full = build_contrast_sets(graph, rec, all_ones);
  CHECK(full.positives.size() == 4);
  CHECK(full.negatives.empty());

  const ResolvedLabels wrong_count[] = {{1, 1}};
  CHECK_THROWS_AS(build_contrast_sets(graph, rec, wrong_count), ValidationError);
  auto no_doc = rec;
  no_doc.doc_text.reset();
  CHECK_THROWS_AS(build_contrast_sets(graph, no_doc, mixed), ValidationError);
}

TEST_CASE("build_contrast_sets always partitions 2N representations") {
  const auto provider = EmbeddingProvider::feature_hash(16);
  const RouterParams params = init_params(5, 8, 2, 16, 4);
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<ResolvedLabels> labels(5);
    for (auto& l : labels) l = {int(rng.below(2)), int(rng.below(2))};
    Tape tape;
    RouterGraph graph(tape, params, provider);
    auto sets = build_contrast_sets(graph, small_record(5), labels);
    CHECK(sets.positives.size() + sets.negatives.size() == 10);
  }
}

TEST_CASE("contrastive_loss: worked values") {
  Tape tape;
  Var v_q = tape.constant({1.0, 0.0});

  ContrastSets only_pos;
  only_pos.positives = {entry(at_cos(tape, 1.0), 0, Setting::kNoRag)};
  CHECK(tape.scalar(contrastive_loss(tape, v_q, only_pos, 0.2)) == doctest::Approx(0.0));

  ContrastSets pair;
  pair.positives = {entry(at_cos(tape, 0.5), 0, Setting::kNoRag)};
  pair.negatives = {entry(at_cos(tape, 0.0), 1, Setting::kRag)};
  const double l02 = tape.scalar(contrastive_loss(tape, v_q, pair, 0.2));
  // log(1 + e^-2.5) = 0.0788897...
  CHECK(std::abs(l02 - std::log1p(std::exp(-2.5))) < 1e-12);
  CHECK(std::abs(l02 - 0.0788897) < 1e-6);
  CHECK(tape.scalar(contrastive_loss(tape, v_q, pair, 0.4)) > l02);
  CHECK_THROWS_AS(contrastive_loss(tape, v_q, pair, 0.0), ValidationError);
  CHECK(tape.scalar(contrastive_loss(tape, v_q, pair, 0.2, ContrastMode::kNone)) == 0.0);
}

TEST_CASE("contrastive_loss matches a naive oracle on random similarities") {
  Rng rng(11);
  for (int trial = 0; trial < 30; ++trial) {
    Tape tape;
    Var v_q = tape.constant({1.0, 0.0});
    ContrastSets sets;
    std::vector<double> pos, neg;
    const std::size_t np = 1 + rng.below(4), nn = rng.below(5);
    for (std::size_t i = 0; i < np; ++i) {
      pos.push_back(rng.uniform(-1, 1));
      sets.positives.push_back(entry(at_cos(tape, pos.back()), i, Setting::kNoRag));
    }
    for (std::size_t i = 0; i < nn; ++i) {
      neg.push_back(rng.uniform(-1, 1));
      sets.negatives.push_back(entry(at_cos(tape, neg.back()), i, Setting::kRag));
    }
    const double tau = rng.uniform(0.05, 1.0);
    CHECK(tape.scalar(contrastive_loss(tape, v_q, sets, tau)) == doctest::Approx(ct_oracle(pos, neg, tau)).epsilon(1e-9));
  }
}

TEST_CASE("contrastive_loss: restricted modes only see their negatives") {
  Tape tape;
  Var v_q = tape.constant({1.0, 0.0});
  ContrastSets sets;
  sets.positives = {entry(at_cos(tape, 0.9), 0, Setting::kNoRag)};
  sets.negatives = {entry(at_cos(tape, 0.3), 1, Setting::kNoRag), entry(at_cos(tape, -0.2), 2, Setting::kRag)};
  const double tau = 0.2;
  CHECK(tape.scalar(contrastive_loss(tape, v_q, sets, tau, ContrastMode::kPooled)) ==
        doctest::Approx(ct_oracle({0.9}, {0.3, -0.2}, tau)));
  CHECK(tape.scalar(contrastive_loss(tape, v_q, sets, tau, ContrastMode::kIscOnly)) ==
        doctest::Approx(ct_oracle({0.9}, {0.3}, tau)));
  CHECK(tape.scalar(contrastive_loss(tape, v_q, sets, tau, ContrastMode::kCscOnly)) ==
        doctest::Approx(ct_oracle({0.9}, {-0.2}, tau)));
}

TEST_CASE("classification_loss: worked values") {
  Tape tape;
  Var v_q = tape.constant({1.0, 0.0});
  Var ortho = tape.constant({0.0, 1.0});
  const std::pair<Var, int> pos[] = {{ortho, 1}};
  const std::pair<Var, int> neg[] = {{ortho, 0}};
  CHECK(tape.scalar(classification_loss(tape, v_q, pos)) == doctest::Approx(std::log(2.0)));
  CHECK(tape.scalar(classification_loss(tape, v_q, neg)) == doctest::Approx(std::log(2.0)));

  const std::pair<Var, int> two[] = {{tape.constant({1.0, 0.0}), 1}, {tape.constant({-1.0, 0.0}), 0}};
  CHECK(tape.scalar(classification_loss(tape, v_q, two)) == doctest::Approx(2 * softplus(-1.0)));
  CHECK(tape.scalar(classification_loss(tape, v_q, two)) == doctest::Approx(0.626523).epsilon(1e-6));
  CHECK_THROWS_AS(classification_loss(tape, v_q, std::span<const std::pair<Var, int>>{}), ValidationError);
}

TEST_CASE("total loss combines the two terms with lambda") {
  // The worked combination: single contrastive pair plus an orthogonal entry of each label.
  Tape tape;
  Var v_q = tape.constant({1.0, 0.0});
  ContrastSets pair;
  pair.positives = {entry(at_cos(tape, 0.5), 0, Setting::kNoRag)};
  pair.negatives = {entry(at_cos(tape, 0.0), 1, Setting::kRag)};
  Var ct = contrastive_loss(tape, v_q, pair, 0.2);
  const std::pair<Var, int> cls_entries[] = {{tape.constant({0.0, 1.0}), 1}};
  Var cls = classification_loss(tape, v_q, cls_entries);
  const Var parts[] = {ct, scale(tape, cls, 2.0)};
  CHECK(std::abs(tape.scalar(sum(tape, parts)) - (std::log1p(std::exp(-2.5)) + 2 * std::log(2.0))) < 1e-12);
  CHECK(std::abs(tape.scalar(sum(tape, parts)) - 1.4651841) < 1e-6);

  const auto provider = EmbeddingProvider::feature_hash(16);
  const RouterParams params = init_params(3, 8, 2, 16, 2);
  const ResolvedLabels labels[] = {{1, 0}, {0, 1}, {1, 1}};
  TrainConfig cfg = tiny_config();
  for (double lambda : {0.0, 0.5, 2.0}) {
    cfg.lambda = lambda;
    Tape t;
    RouterGraph graph(t, params, provider);
    const LossTerms terms = total_loss(graph, small_record(3), labels, cfg);
    CHECK(terms.contrastive > 0.0);
    CHECK(terms.classification > 0.0);
    CHECK(t.scalar(terms.total) == doctest::Approx(terms.contrastive + lambda * terms.classification));
  }
}

TEST_CASE("total_loss gradients agree with finite differences") {
  const auto provider = EmbeddingProvider::feature_hash(16);
  RouterParams params = randomized(3, 8, 2, 16, 21);
  const ResolvedLabels labels[] = {{1, 0}, {0, 1}, {1, 1}};
  TrainConfig cfg = tiny_config();
  for (auto mode : {ContrastMode::kPooled, ContrastMode::kCscOnly, ContrastMode::kIscOnly}) {
    cfg.contrast = mode;
    const auto res = gradient_check(params, provider, small_record(3), labels, cfg, 1e-4);
    INFO(to_string(mode), " worst tensor ", res.worst_tensor, " index ", res.worst_index);
    CHECK(res.max_rel_error < 1e-4);
  }
  RouterParams ablated = params;
  ablated.arch.drop_cross_encoder = true;
  CHECK(gradient_check(ablated, provider, small_record(3), labels, tiny_config(), 1e-5).max_rel_error < 1e-4);
}

TEST_CASE("train is deterministic and validates its input") {
  const auto pool = generate_pool(4, 4, 3);
  const auto data = generate_dataset(pool, 12, 5).dataset;
  const auto provider = EmbeddingProvider::feature_hash(32);
  const TrainConfig cfg = tiny_config();

  const auto a = train(data, provider, cfg);
  const auto b = train(data, provider, cfg);
  CHECK(a.params == b.params);
  CHECK(a.report.epoch_loss == b.report.epoch_loss);
  CHECK(a.report.epoch_loss.size() == 2);
  CHECK(a.report.optimizer_steps == 6);

  TrainConfig no_cls = cfg;
  no_cls.lambda = 0.0;
  CHECK_FALSE(train(data, provider, no_cls).params == a.params);

  ResponseDataset empty{{}, data.registry};
  CHECK_THROWS_AS(train(empty, provider, cfg), ValidationError);

  auto missing_doc = data;
  missing_doc.records[3].doc_text.reset();
  CHECK_THROWS_AS(train(missing_doc, provider, cfg), ValidationError);

  TrainConfig bad = cfg;
  bad.tau = 0.0;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad = cfg;
  bad.heads = 3;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad = cfg;
  bad.batch_size = 0;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad = cfg;
  bad.lambda = -1.0;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
}

TEST_CASE("training loss falls over the first epochs") {
  const auto pool = generate_pool(5, 4, 8);
  const auto data = generate_dataset(pool, 120, 9).dataset;
  const auto provider = EmbeddingProvider::feature_hash(64);
  TrainConfig cfg = tiny_config();
  cfg.dim = 32;
  cfg.heads = 4;
  cfg.epochs = 4;
  cfg.batch_size = 16;
  cfg.lr = 1e-3;
  std::size_t callbacks = 0;
  const auto res = train(data, provider, cfg, [&](std::size_t e, const TrainReport& r, const RouterParams&) {
    CHECK(r.epoch_loss.size() == e + 1);
    ++callbacks;
  });
  CHECK(callbacks == 4);
  const auto& loss = res.report.epoch_loss;
  int inversions = 0;
  for (std::size_t e = 1; e < loss.size(); ++e) {
    if (loss[e] > loss[e - 1]) {
      ++inversions;
      CHECK(loss[e] <= loss[e - 1] * 1.05);
    }
  }
  CHECK(inversions <= 1);
  CHECK(loss.back() < loss.front());
}

TEST_CASE("probabilistic labels are drawn once per run") {
  const auto pool = generate_pool(3, 2, 1);
  auto data = generate_dataset(pool, 8, 2).dataset;
  for (auto& r : data.records)
    for (auto& o : r.outcomes) o = {0.5, 0.5};
  const auto provider = EmbeddingProvider::feature_hash(32);
  TrainConfig cfg = tiny_config();
  cfg.label_mode = LabelMode::kProbabilistic;
  CHECK(train(data, provider, cfg).params == train(data, provider, cfg).params);
  cfg.label_mode = LabelMode::kBinary;
  CHECK_THROWS_AS(train(data, provider, cfg), ValidationError);
}

TEST_CASE("mode names round-trip") {
  for (auto m : {ContrastMode::kPooled, ContrastMode::kCscOnly, ContrastMode::kIscOnly, ContrastMode::kNone})
    CHECK(parse_contrast_mode(to_string(m)) == m);
  CHECK(parse_label_mode("probabilistic") == LabelMode::kProbabilistic);
  CHECK_THROWS_AS(parse_contrast_mode("both"), ValidationError);
}
