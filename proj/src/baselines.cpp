#include "ragroute/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ragroute/checkpoint.hpp"
#include "ragroute/errors.hpp"
#include "ragroute/router_model.hpp"

namespace ragroute {

ModelId random_route(std::size_t num_models, Rng& rng) {
  if (num_models == 0) throw ValidationError("random_route: no models");
  return static_cast<ModelId>(rng.below(num_models));
}

ModelId weighted_route(std::span<const double> distribution, Rng& rng) {
  if (distribution.empty()) throw ValidationError("weighted_route: empty distribution");
  double total = 0.0;
  for (double p : distribution) {
    if (!(p >= 0.0) || !std::isfinite(p)) throw ValidationError("weighted_route: negative or non-finite weight");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ValidationError("weighted_route: distribution does not sum to 1");
  const double u = rng.uniform();
  double acc = 0.0;
  ModelId last_positive = 0;
  for (ModelId i = 0; i < distribution.size(); ++i) {
    if (distribution[i] <= 0.0) continue;
    last_positive = i;
    acc += distribution[i];
    if (u < acc) return i;
  }
  return last_positive;  // rounding left u just above the cumulative total
}

SingleBestResult oracle_single_best(const std::vector<std::string>& tasks,
                                    const std::vector<std::vector<double>>& accuracy) {
  if (tasks.empty() || tasks.size() != accuracy.size())
    throw ValidationError("oracle_single_best: task list and accuracy table disagree");
  SingleBestResult res;
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    if (accuracy[t].empty()) throw ValidationError("oracle_single_best: empty task " + tasks[t]);
    const ModelId best = static_cast<ModelId>(std::max_element(accuracy[t].begin(), accuracy[t].end()) - accuracy[t].begin());
    res.per_task.push_back({tasks[t], best, accuracy[t][best]});
    res.macro_average += accuracy[t][best];
  }
  res.macro_average /= static_cast<double>(tasks.size());
  return res;
}

SingleBestResult oracle_single_best(const ResponseDataset& ds) {
  const auto tasks = task_names(ds);
  if (tasks.empty()) throw ValidationError("oracle_single_best: empty dataset");
  std::vector<std::vector<double>> acc;
  for (const auto& task : tasks) {
    std::vector<double> row(ds.registry.size(), 0.0);
    std::size_t n = 0;
    for (const auto& r : ds.records) {
      if (r.task != task) continue;
      ++n;
      for (ModelId i = 0; i < row.size(); ++i) row[i] += r.outcomes[i].rag;
    }
    for (double& x : row) x /= static_cast<double>(n);
    acc.push_back(std::move(row));
  }
  return oracle_single_best(tasks, acc);
}

double oracle_accuracy(const ResponseDataset& ds) {
  if (ds.empty()) return 0.0;
  double total = 0.0;
  for (const auto& r : ds.records) {
    double best = 0.0;
    for (const auto& o : r.outcomes) best = std::max(best, o.rag);
    total += best;
  }
  return total / static_cast<double>(ds.size());
}

BestSingleModel best_single_model(const ResponseDataset& ds) {
  if (ds.empty()) throw ValidationError("best_single_model: empty dataset");
  std::vector<double> acc(ds.registry.size(), 0.0);
  for (const auto& r : ds.records)
    for (ModelId i = 0; i < acc.size(); ++i) acc[i] += r.outcomes[i].rag;
  const ModelId best = static_cast<ModelId>(std::max_element(acc.begin(), acc.end()) - acc.begin());
  return {best, acc[best] / static_cast<double>(ds.size()), ds.registry[best].latency_ms / 1000.0};
}

Vec query_features(const EmbeddingProvider& provider, const ResponseRecord& record) {
  return provider.text_embedding(Channel::kQuery, record.query_text, record.query_id).values;
}

// ---------------------------------------------------------------------------
// KNN

KnnIndex::KnnIndex(std::vector<Vec> embeddings, std::vector<Vec> correctness, std::size_t k)
    : embeddings_(std::move(embeddings)), correctness_(std::move(correctness)), k_(k) {
  if (k_ < 1) throw ValidationError("knn: k must be >= 1");
  if (embeddings_.size() != correctness_.size()) throw ValidationError("knn: embeddings/labels length mismatch");
}

KnnIndex KnnIndex::build(const ResponseDataset& train, const EmbeddingProvider& provider, std::size_t k) {
  std::vector<Vec> emb, corr;
  for (const auto& r : train.records) {
    emb.push_back(query_features(provider, r));
    Vec row;
    for (const auto& o : r.outcomes) row.push_back(o.rag);
    corr.push_back(std::move(row));
  }
  return KnnIndex(std::move(emb), std::move(corr), k);
}

std::vector<std::size_t> KnnIndex::neighbours(const Vec& query) const {
  if (embeddings_.empty()) throw ValidationError("knn: empty index");
  // Embeddings are unit norm, so the dot product is the cosine.
  std::vector<std::pair<double, std::size_t>> sims;
  sims.reserve(embeddings_.size());
  for (std::size_t i = 0; i < embeddings_.size(); ++i) {
    const Vec& e = embeddings_[i];
    if (e.size() != query.size()) throw ValidationError("knn: embedding dimension mismatch");
    double s = 0.0;
    for (std::size_t j = 0; j < e.size(); ++j) s += e[j] * query[j];
    sims.emplace_back(-s, i);
  }
  const std::size_t k = std::min(k_, sims.size());
  std::partial_sort(sims.begin(), sims.begin() + static_cast<std::ptrdiff_t>(k), sims.end());
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < k; ++i) out.push_back(sims[i].second);
  return out;
}

Vec KnnIndex::scores(const Vec& query) const {
  const auto nb = neighbours(query);
  Vec s(correctness_.front().size(), 0.0);
  for (std::size_t i : nb)
    for (std::size_t m = 0; m < s.size(); ++m) s[m] += correctness_[i][m];
  for (double& x : s) x /= static_cast<double>(nb.size());
  return s;
}

ModelId knn_route(const KnnIndex& index, const Vec& query_embedding) {
  return argmax_lowest(index.scores(query_embedding));
}

// ---------------------------------------------------------------------------
// Matrix factorization

Vec MfModel::scores(const Vec& e) const {
  if (e.size() != map_w.cols) throw ValidationError("mf: embedding dimension mismatch");
  const std::size_t r = rank();
  Vec u(r);
  for (std::size_t a = 0; a < r; ++a) {
    double s = map_b.data[a];
    auto w = map_w.row(a);
    for (std::size_t j = 0; j < e.size(); ++j) s += w[j] * e[j];
    u[a] = s;
  }
  Vec out(latents.rows);
  for (std::size_t i = 0; i < latents.rows; ++i) {
    auto l = latents.row(i);
    double s = 0.0;
    for (std::size_t a = 0; a < r; ++a) s += l[a] * u[a];
    out[i] = s;
  }
  return out;
}

MfModel mf_train(const std::vector<Vec>& query_embeddings, const std::vector<std::vector<double>>& labels,
                 const MfConfig& config) {
  if (config.rank < 1) throw ValidationError("mf: rank must be >= 1");
  if (query_embeddings.empty()) throw ValidationError("mf: empty training data");
  if (query_embeddings.size() != labels.size()) throw ValidationError("mf: embeddings/labels length mismatch");
  const std::size_t n_models = labels.front().size();
  const std::size_t base_dim = query_embeddings.front().size();
  for (const auto& row : labels) {
    if (row.size() != n_models) throw ValidationError("mf: ragged label matrix");
    for (double y : row)
      if (y != 0.0 && y != 1.0) throw ValidationError("mf: labels must be binary");
  }

  MfModel m{Tensor2(n_models, config.rank), Tensor2(config.rank, base_dim), Tensor2(config.rank, 1)};
  Rng rng(config.seed);
  const double bound = 1.0 / std::sqrt(static_cast<double>(config.rank));
  for (double& x : m.latents.data) x = rng.uniform(-bound, bound);
  for (double& x : m.map_w.data) x = rng.uniform(-bound, bound);

  MfModel g{Tensor2(n_models, config.rank), Tensor2(config.rank, base_dim), Tensor2(config.rank, 1)};
  AdamW opt({config.lr, 0.9, 0.999, 1e-8, 0.01});
  Tensor2* params[] = {&m.latents, &m.map_w, &m.map_b};
  const Tensor2* grads[] = {&g.latents, &g.map_w, &g.map_b};

  std::vector<std::size_t> order(query_embeddings.size());
  const std::size_t batch = std::max<std::size_t>(1, config.batch_size);
  Vec u(config.rank), du(config.rank);
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(std::span<std::size_t>(order));
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t end = std::min(order.size(), start + batch);
      const double inv = 1.0 / static_cast<double>(end - start);
      for (Tensor2* t : {&g.latents, &g.map_w, &g.map_b}) std::fill(t->data.begin(), t->data.end(), 0.0);
      for (std::size_t b = start; b < end; ++b) {
        const Vec& e = query_embeddings[order[b]];
        const auto& y = labels[order[b]];
        for (std::size_t a = 0; a < config.rank; ++a) {
          double s = m.map_b.data[a];
          auto w = m.map_w.row(a);
          for (std::size_t j = 0; j < base_dim; ++j)
            if (e[j] != 0.0) s += w[j] * e[j];
          u[a] = s;
        }
        std::fill(du.begin(), du.end(), 0.0);
        for (std::size_t i = 0; i < n_models; ++i) {
          auto l = m.latents.row(i);
          double s = 0.0;
          for (std::size_t a = 0; a < config.rank; ++a) s += l[a] * u[a];
          const double d = (1.0 / (1.0 + std::exp(-s)) - y[i]) * inv;
          auto gl = g.latents.row(i);
          for (std::size_t a = 0; a < config.rank; ++a) {
            gl[a] += d * u[a];
            du[a] += d * l[a];
          }
        }
        for (std::size_t a = 0; a < config.rank; ++a) {
          g.map_b.data[a] += du[a];
          auto gw = g.map_w.row(a);
          for (std::size_t j = 0; j < base_dim; ++j)
            if (e[j] != 0.0) gw[j] += du[a] * e[j];
        }
      }
      opt.step(params, grads);
    }
  }
  return m;
}

MfModel mf_train(const ResponseDataset& train, const EmbeddingProvider& provider, const MfConfig& config) {
  std::vector<Vec> emb;
  std::vector<std::vector<double>> labels;
  for (const auto& r : train.records) {
    emb.push_back(query_features(provider, r));
    std::vector<double> row;
    for (const auto& o : r.outcomes) row.push_back(o.rag);
    labels.push_back(std::move(row));
  }
  return mf_train(emb, labels, config);
}

ModelId mf_route(const MfModel& model, const Vec& query_embedding) {
  Vec s = model.scores(query_embedding);
  for (double& x : s) x = 1.0 / (1.0 + std::exp(-x));
  const double best = *std::max_element(s.begin(), s.end());
  for (ModelId i = 0; i < s.size(); ++i)
    if (s[i] >= best - 1e-6) return i;
  return 0;
}

void save_mf_checkpoint(const MfModel& model, const std::string& path) {
  Checkpoint ckpt;
  ckpt.header = {{"kind", "mf"}, {"N", model.latents.rows}, {"rank", model.rank()}, {"D_base", model.map_w.cols}};
  ckpt.tensors = {{"latents", model.latents}, {"map_w", model.map_w}, {"map_b", model.map_b}};
  write_checkpoint(path, ckpt);
}

MfModel load_mf_checkpoint(const std::string& path) {
  const Checkpoint ckpt = read_checkpoint(path, "mf");
  MfModel m{ckpt.tensor("latents"), ckpt.tensor("map_w"), ckpt.tensor("map_b")};
  if (m.map_w.rows != m.latents.cols || m.map_b.rows != m.latents.cols)
    throw ValidationError("mf checkpoint " + path + ": inconsistent shapes");
  return m;
}

}  // namespace ragroute
