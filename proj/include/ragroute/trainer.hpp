#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "ragroute/core_data.hpp"
#include "ragroute/diffmath.hpp"
#include "ragroute/embeddings.hpp"
#include "ragroute/rng.hpp"
#include "ragroute/router_model.hpp"

namespace ragroute {

enum class LabelMode { kBinary, kProbabilistic };

/// Which negatives each positive is contrasted against. kPooled uses every
/// negative (cross- and intra-setting); kNone switches the contrastive term off.
enum class ContrastMode { kPooled, kCscOnly, kIscOnly, kNone };

std::string to_string(LabelMode m);
std::string to_string(ContrastMode m);
LabelMode parse_label_mode(const std::string& s);
ContrastMode parse_contrast_mode(const std::string& s);

struct TrainConfig {
  double tau = 0.2;
  double lambda = 2.0;
  double lr = 5e-5;
  std::size_t batch_size = 64;
  std::size_t epochs = 10;
  std::uint64_t seed = 0;
  LabelMode label_mode = LabelMode::kBinary;
  ContrastMode contrast = ContrastMode::kPooled;

  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double weight_decay = 0.01;

  std::size_t dim = 768;
  std::size_t heads = 8;
  RouterArch arch;

  /// Throws ValidationError on tau <= 0, lambda < 0, batch_size == 0, ...
  void validate() const;
  nlohmann::json to_json() const;
};

/// Per-model labels for one query.
struct ResolvedLabels {
  int no_rag = 0;
  int rag = 0;
};

/// Binary mode passes {0,1} labels through (and rejects fractions);
/// probabilistic mode draws Bernoulli(score) per setting.
ResolvedLabels resolve_labels(const Outcome& outcome, LabelMode mode, Rng& rng);

struct ContrastEntry {
  Var rep;
  ModelId model = 0;
  Setting setting = Setting::kNoRag;
};

struct ContrastSets {
  std::vector<ContrastEntry> positives;
  std::vector<ContrastEntry> negatives;
};

/// Puts v_k of every model in the positive or negative set by its no-RAG
/// label, and v_k' by its RAG label. Throws if the record has no document.
ContrastSets build_contrast_sets(RouterGraph& graph, const ResponseRecord& record,
                                 std::span<const ResolvedLabels> labels);

/// Sum over positives of -log(e^{s+/tau} / (e^{s+/tau} + sum_neg e^{s-/tau})),
/// s = cosine to v_q. Empty sets contribute 0.
Var contrastive_loss(Tape& tape, Var v_q, const ContrastSets& sets, double tau,
                     ContrastMode mode = ContrastMode::kPooled);

/// Summed binary cross-entropy of sigmoid(cosine(v, v_q)) against y.
Var classification_loss(Tape& tape, Var v_q, std::span<const std::pair<Var, int>> entries);

struct LossTerms {
  Var total;
  double contrastive = 0.0;
  double classification = 0.0;
};

/// contrastive + lambda * classification over one record's representations.
LossTerms total_loss(RouterGraph& graph, const ResponseRecord& record, std::span<const ResolvedLabels> labels,
                     const TrainConfig& config);

/// Analytic gradients of total_loss for one record against central
/// differences over every trainable tensor.
FiniteDiffResult gradient_check(RouterParams& params, const EmbeddingProvider& provider, const ResponseRecord& record,
                                std::span<const ResolvedLabels> labels, const TrainConfig& config, double eps);

struct TrainReport {
  std::vector<double> epoch_loss;            // mean per-query loss
  std::vector<double> epoch_train_accuracy;  // RAG-setting routing accuracy after the epoch
  std::size_t optimizer_steps = 0;
};

struct TrainResult {
  RouterParams params;
  TrainReport report;
};

/// Optional per-epoch callback (epoch index, report so far, current parameters).
using EpochCallback = std::function<void(std::size_t, const TrainReport&, const RouterParams&)>;

TrainResult train(const ResponseDataset& train_set, const EmbeddingProvider& provider, const TrainConfig& config,
                  const EpochCallback& on_epoch = {});

/// Mean RAG-setting label of the routed model over `ds`.
double routing_accuracy(const RouterParams& params, const EmbeddingProvider& provider, const ResponseDataset& ds);

/// Per-record similarity scores (RAG setting when a document is present).
std::vector<std::vector<double>> score_dataset(const RouterParams& params, const EmbeddingProvider& provider,
                                               const ResponseDataset& ds);

}  // namespace ragroute
