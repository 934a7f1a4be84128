#include "ragroute/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ragroute/errors.hpp"

namespace ragroute {

std::string to_string(LabelMode m) { return m == LabelMode::kBinary ? "binary" : "probabilistic"; }

std::string to_string(ContrastMode m) {
  switch (m) {
    case ContrastMode::kPooled: return "pooled";
    case ContrastMode::kCscOnly: return "csc_only";
    case ContrastMode::kIscOnly: return "isc_only";
    case ContrastMode::kNone: return "none";
  }
  return "?";
}

LabelMode parse_label_mode(const std::string& s) {
  if (s == "binary") return LabelMode::kBinary;
  if (s == "probabilistic") return LabelMode::kProbabilistic;
  throw ValidationError("unknown label mode \"" + s + "\"");
}

ContrastMode parse_contrast_mode(const std::string& s) {
  for (auto m : {ContrastMode::kPooled, ContrastMode::kCscOnly, ContrastMode::kIscOnly, ContrastMode::kNone})
    if (to_string(m) == s) return m;
  throw ValidationError("unknown contrast mode \"" + s + "\"");
}

void TrainConfig::validate() const {
  if (!(tau > 0.0)) throw ValidationError("tau must be > 0");
  if (!(lambda >= 0.0)) throw ValidationError("lambda must be >= 0");
  if (!(lr > 0.0)) throw ValidationError("lr must be > 0");
  if (batch_size == 0) throw ValidationError("batch_size must be >= 1");
  if (heads == 0 || dim % heads != 0) throw ValidationError("dim must be divisible by heads");
}

nlohmann::json TrainConfig::to_json() const {
  return {{"tau", tau},
          {"lambda", lambda},
          {"lr", lr},
          {"batch_size", batch_size},
          {"epochs", epochs},
          {"seed", seed},
          {"label_mode", to_string(label_mode)},
          {"contrast", to_string(contrast)},
          {"beta1", beta1},
          {"beta2", beta2},
          {"adam_eps", adam_eps},
          {"weight_decay", weight_decay},
          {"dim", dim},
          {"heads", heads},
          {"drop_cross_encoder", arch.drop_cross_encoder},
          {"drop_capability_table", arch.drop_capability_table}};
}

ResolvedLabels resolve_labels(const Outcome& outcome, LabelMode mode, Rng& rng) {
  auto one = [&](double s) -> int {
    if (!(s >= 0.0 && s <= 1.0)) throw ValidationError("label outside [0,1]");
    if (mode == LabelMode::kBinary) {
      if (s != 0.0 && s != 1.0) throw ValidationError("fractional label in binary label mode");
      return static_cast<int>(s);
    }
    return rng.bernoulli(s) ? 1 : 0;
  };
  ResolvedLabels r;
  r.no_rag = one(outcome.no_rag);
  r.rag = one(outcome.rag);
  return r;
}

ContrastSets build_contrast_sets(RouterGraph& graph, const ResponseRecord& record,
                                 std::span<const ResolvedLabels> labels) {
  if (!record.doc_text) throw ValidationError("record " + record.query_id + " has no document");
  const std::size_t n = graph.params().num_models;
  if (labels.size() != n) throw ValidationError("label count does not match model count");
  Var v_d = graph.document(*record.doc_text, record.query_id);
  Var v_c = graph.params().arch.drop_cross_encoder ? v_d
                                                    : graph.cross(*record.doc_text, record.query_text, record.query_id);
  const auto rag_reps = graph.rag_representations(v_d, v_c);
  ContrastSets sets;
  for (ModelId i = 0; i < n; ++i) {
    ContrastEntry plain{graph.knowledge(i), i, Setting::kNoRag};
    (labels[i].no_rag ? sets.positives : sets.negatives).push_back(plain);
  }
  for (ModelId i = 0; i < n; ++i) {
    ContrastEntry shifted{rag_reps[i], i, Setting::kRag};
    (labels[i].rag ? sets.positives : sets.negatives).push_back(shifted);
  }
  return sets;
}

namespace {

bool pair_allowed(const ContrastEntry& pos, const ContrastEntry& neg, ContrastMode mode) {
  switch (mode) {
    case ContrastMode::kPooled: return true;
    case ContrastMode::kCscOnly: return pos.setting != neg.setting;
    case ContrastMode::kIscOnly: return pos.setting == neg.setting;
    case ContrastMode::kNone: return false;
  }
  return false;
}

}  // namespace

Var contrastive_loss(Tape& tape, Var v_q, const ContrastSets& sets, double tau, ContrastMode mode) {
  if (!(tau > 0.0)) throw ValidationError("contrastive_loss: tau must be > 0");
  if (mode == ContrastMode::kNone || sets.positives.empty()) return tape.constant({0.0});

  std::vector<Var> sims;
  for (const auto& e : sets.positives) sims.push_back(cosine_sim(tape, v_q, e.rep));
  for (const auto& e : sets.negatives) sims.push_back(cosine_sim(tape, v_q, e.rep));
  Var s = concat(tape, sims);

  const std::size_t n_pos = sets.positives.size();
  std::vector<std::vector<std::size_t>> allowed(n_pos);
  for (std::size_t p = 0; p < n_pos; ++p)
    for (std::size_t k = 0; k < sets.negatives.size(); ++k)
      if (pair_allowed(sets.positives[p], sets.negatives[k], mode)) allowed[p].push_back(n_pos + k);

  // Each positive's denominator holds that positive and its allowed negatives only.
  const Vec& sv = tape.value(s);
  double loss = 0.0;
  std::vector<Vec> probs(n_pos);
  for (std::size_t p = 0; p < n_pos; ++p) {
    double mx = sv[p] / tau;
    for (std::size_t k : allowed[p]) mx = std::max(mx, sv[k] / tau);
    double z = std::exp(sv[p] / tau - mx);
    for (std::size_t k : allowed[p]) z += std::exp(sv[k] / tau - mx);
    loss += -(sv[p] / tau - mx) + std::log(z);
    probs[p].push_back(std::exp(sv[p] / tau - mx) / z);
    for (std::size_t k : allowed[p]) probs[p].push_back(std::exp(sv[k] / tau - mx) / z);
  }
  return tape.record({loss}, [s, tau, allowed = std::move(allowed), probs = std::move(probs)](Tape& t, const Vec& g) {
    Vec& ds = t.grad(s);
    for (std::size_t p = 0; p < allowed.size(); ++p) {
      ds[p] += g[0] * (probs[p][0] - 1.0) / tau;
      for (std::size_t a = 0; a < allowed[p].size(); ++a) ds[allowed[p][a]] += g[0] * probs[p][a + 1] / tau;
    }
  });
}

Var classification_loss(Tape& tape, Var v_q, std::span<const std::pair<Var, int>> entries) {
  if (entries.empty()) throw ValidationError("classification_loss: empty entry list");
  std::vector<Var> sims;
  std::vector<int> ys;
  for (const auto& [v, y] : entries) {
    sims.push_back(cosine_sim(tape, v, v_q));
    ys.push_back(y);
  }
  Var s = concat(tape, sims);
  const Vec& sv = tape.value(s);
  // -[y log sig(x) + (1-y) log(1-sig(x))] == softplus(x) - y*x, stable form
  auto softplus = [](double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); };
  double loss = 0.0;
  Vec sig(sv.size());
  for (std::size_t i = 0; i < sv.size(); ++i) {
    loss += softplus(sv[i]) - ys[i] * sv[i];
    sig[i] = 1.0 / (1.0 + std::exp(-sv[i]));
  }
  return tape.record({loss}, [s, ys = std::move(ys), sig = std::move(sig)](Tape& t, const Vec& g) {
    Vec& ds = t.grad(s);
    for (std::size_t i = 0; i < ys.size(); ++i) ds[i] += g[0] * (sig[i] - ys[i]);
  });
}

LossTerms total_loss(RouterGraph& graph, const ResponseRecord& record, std::span<const ResolvedLabels> labels,
                     const TrainConfig& config) {
  Tape& tape = graph.tape();
  Var v_q = graph.query(record.query_text, record.query_id);
  const ContrastSets sets = build_contrast_sets(graph, record, labels);

  Var ct = contrastive_loss(tape, v_q, sets, config.tau, config.contrast);
  std::vector<std::pair<Var, int>> entries;
  for (const auto& e : sets.positives) entries.emplace_back(e.rep, 1);
  for (const auto& e : sets.negatives) entries.emplace_back(e.rep, 0);
  Var cls = classification_loss(tape, v_q, entries);

  const Var parts[] = {ct, scale(tape, cls, config.lambda)};
  LossTerms terms{sum(tape, parts), tape.scalar(ct), tape.scalar(cls)};
  return terms;
}

FiniteDiffResult gradient_check(RouterParams& params, const EmbeddingProvider& provider, const ResponseRecord& record,
                                std::span<const ResolvedLabels> labels, const TrainConfig& config, double eps) {
  RouterParams grads = params.zeros_like();
  {
    Tape tape;
    RouterGraph graph(tape, params, provider, &grads);
    tape.backward(total_loss(graph, record, labels, config).total);
  }
  std::vector<Tensor2*> values;
  std::vector<Tensor2> analytic;
  for (auto& [name, t] : params.tensors()) values.push_back(t);
  for (auto& [name, t] : grads.tensors()) analytic.push_back(*t);
  return finite_diff_check(values, analytic, [&] {
    Tape tape;
    RouterGraph graph(tape, params, provider);
    return tape.scalar(total_loss(graph, record, labels, config).total);
  }, eps);
}

// ---------------------------------------------------------------------------

std::vector<std::vector<double>> score_dataset(const RouterParams& params, const EmbeddingProvider& provider,
                                               const ResponseDataset& ds) {
  std::vector<std::vector<double>> out;
  out.reserve(ds.size());
  for (const auto& r : ds.records) out.push_back(score_models(params, provider, r.query_text, r.doc_text, r.query_id));
  return out;
}

double routing_accuracy(const RouterParams& params, const EmbeddingProvider& provider, const ResponseDataset& ds) {
  if (ds.empty()) return 0.0;
  double total = 0.0;
  for (const auto& r : ds.records) {
    const ModelId chosen = argmax_lowest(score_models(params, provider, r.query_text, r.doc_text, r.query_id));
    total += r.outcomes[chosen].rag;
  }
  return total / static_cast<double>(ds.size());
}

namespace {

std::vector<Tensor2*> tensor_ptrs(RouterParams& p) {
  std::vector<Tensor2*> out;
  for (auto& [name, t] : p.tensors()) out.push_back(t);
  return out;
}

void zero(RouterParams& g) {
  for (auto& [name, t] : g.tensors()) std::fill(t->data.begin(), t->data.end(), 0.0);
}

}  // namespace

TrainResult train(const ResponseDataset& train_set, const EmbeddingProvider& provider, const TrainConfig& config,
                  const EpochCallback& on_epoch) {
  config.validate();
  if (train_set.empty()) throw ValidationError("train: empty training set");
  const std::size_t n_models = train_set.registry.size();
  for (const auto& r : train_set.records) {
    if (!r.doc_text) throw ValidationError("train: record " + r.query_id + " has no document");
    if (r.outcomes.size() != n_models) throw ValidationError("train: record " + r.query_id + " has incomplete labels");
  }

  // Labels are resolved once per run, so probabilistic mode sees one fixed draw.
  Rng label_rng(derive_seed(config.seed, 2));
  std::vector<std::vector<ResolvedLabels>> labels;
  labels.reserve(train_set.size());
  for (const auto& r : train_set.records) {
    std::vector<ResolvedLabels> row;
    for (const auto& o : r.outcomes) row.push_back(resolve_labels(o, config.label_mode, label_rng));
    labels.push_back(std::move(row));
  }

  TrainResult result{init_params(n_models, config.dim, config.heads, provider.dim(), config.seed, config.arch), {}};
  RouterParams& params = result.params;
  RouterParams grads = params.zeros_like();
  AdamW opt({config.lr, config.beta1, config.beta2, config.adam_eps, config.weight_decay});
  const auto param_ptrs = tensor_ptrs(params);
  const auto grad_ptrs = tensor_ptrs(grads);
  const std::vector<const Tensor2*> grad_cptrs(grad_ptrs.begin(), grad_ptrs.end());

  Rng order_rng(derive_seed(config.seed, 1));
  std::vector<std::size_t> order(train_set.size());
  for (std::size_t e = 0; e < config.epochs; ++e) {
    std::iota(order.begin(), order.end(), 0);
    order_rng.shuffle(std::span<std::size_t>(order));
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      const double inv_batch = 1.0 / static_cast<double>(end - start);
      zero(grads);
      for (std::size_t b = start; b < end; ++b) {
        const auto& rec = train_set.records[order[b]];
        Tape tape;
        RouterGraph graph(tape, params, provider, &grads);
        const LossTerms terms = total_loss(graph, rec, labels[order[b]], config);
        const double value = tape.scalar(terms.total);
        if (!std::isfinite(value))
          throw RuntimeFailure("non-finite loss at epoch " + std::to_string(e) + ", query " + rec.query_id +
                               " (contrastive " + std::to_string(terms.contrastive) + ", classification " +
                               std::to_string(terms.classification) + ")");
        epoch_loss += value;
        tape.backward(terms.total, inv_batch);
      }
      opt.step(param_ptrs, grad_cptrs);
    }
    if (!params.all_finite()) throw RuntimeFailure("parameters became non-finite at epoch " + std::to_string(e));
    result.report.epoch_loss.push_back(epoch_loss / static_cast<double>(train_set.size()));
    result.report.epoch_train_accuracy.push_back(routing_accuracy(params, provider, train_set));
    if (on_epoch) on_epoch(e, result.report, params);
  }
  result.report.optimizer_steps = opt.steps();
  return result;
}

}  // namespace ragroute
