#pragma once

// Comparison routers that ignore the document: random, weighted, the two
// label oracles, a KNN router and matrix factorization.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ragroute/core_data.hpp"
#include "ragroute/diffmath.hpp"
#include "ragroute/embeddings.hpp"
#include "ragroute/rng.hpp"

namespace ragroute {

ModelId random_route(std::size_t num_models, Rng& rng);

/// Categorical draw; `distribution` must be non-negative and sum to 1 +- 1e-9.
ModelId weighted_route(std::span<const double> distribution, Rng& rng);

struct TaskBest {
  std::string task;
  ModelId model = 0;
  double accuracy = 0.0;
};

struct SingleBestResult {
  std::vector<TaskBest> per_task;
  double macro_average = 0.0;
};

/// Per task, the model with the highest accuracy (ties to the lower index).
/// `accuracy[t][m]` is model m's accuracy on task t.
SingleBestResult oracle_single_best(const std::vector<std::string>& tasks,
                                    const std::vector<std::vector<double>>& accuracy);
/// Same, from the RAG-setting labels of a dataset grouped by task tag.
SingleBestResult oracle_single_best(const ResponseDataset& ds);

/// Mean over queries of the best RAG label among all models.
double oracle_accuracy(const ResponseDataset& ds);

/// Model with the highest RAG accuracy over the whole dataset.
struct BestSingleModel {
  ModelId model = 0;
  double accuracy = 0.0;
  double latency_s = 0.0;
};
BestSingleModel best_single_model(const ResponseDataset& ds);

/// Historical-performance router: the k most cosine-similar training queries
/// vote with their RAG-setting correctness rows.
class KnnIndex {
 public:
  KnnIndex(std::vector<Vec> embeddings, std::vector<Vec> correctness, std::size_t k);
  static KnnIndex build(const ResponseDataset& train, const EmbeddingProvider& provider, std::size_t k);

  std::size_t size() const { return embeddings_.size(); }
  std::size_t k() const { return k_; }
  /// Training indices of the nearest neighbours; ties go to the lower index.
  std::vector<std::size_t> neighbours(const Vec& query) const;
  /// Mean correctness per model over the neighbours.
  Vec scores(const Vec& query) const;

 private:
  std::vector<Vec> embeddings_;
  std::vector<Vec> correctness_;
  std::size_t k_;
};

ModelId knn_route(const KnnIndex& index, const Vec& query_embedding);

struct MfConfig {
  std::size_t rank = 64;
  std::size_t epochs = 200;
  double lr = 1e-3;
  std::size_t batch_size = 64;
  std::uint64_t seed = 0;
};

/// score(i, q) = latent_i . (W e_q + b), trained with BCE on sigmoid(score).
struct MfModel {
  Tensor2 latents;  // N x r
  Tensor2 map_w;    // r x D_base
  Tensor2 map_b;    // r x 1

  std::size_t rank() const { return latents.cols; }
  Vec scores(const Vec& query_embedding) const;
};

MfModel mf_train(const std::vector<Vec>& query_embeddings, const std::vector<std::vector<double>>& labels,
                 const MfConfig& config);
MfModel mf_train(const ResponseDataset& train, const EmbeddingProvider& provider, const MfConfig& config);
/// Argmax of sigmoid(score), where probabilities within 1e-6 of the
/// maximum count as tied (saturated models collapse to the lowest index).
ModelId mf_route(const MfModel& model, const Vec& query_embedding);

void save_mf_checkpoint(const MfModel& model, const std::string& path);
MfModel load_mf_checkpoint(const std::string& path);

/// Query-channel base embedding, as every baseline sees a query.
Vec query_features(const EmbeddingProvider& provider, const ResponseRecord& record);

}  // namespace ragroute
