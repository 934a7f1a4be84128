#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ragroute/core_data.hpp"
#include "ragroute/diffmath.hpp"
#include "ragroute/embeddings.hpp"

namespace ragroute {

/// Architecture switches used for ablations.
struct RouterArch {
  bool drop_cross_encoder = false;    // attend over [v_d] only
  bool drop_capability_table = false; // the knowledge row doubles as the attention query

  bool operator==(const RouterArch&) const = default;
};

/// All trainable router state. Projection heads are affine-tanh-affine over
/// the frozen base embedding; the query and document paths share `shared_*`.
struct RouterParams {
  std::size_t num_models = 0;
  std::size_t dim = 0;
  std::size_t heads = 0;
  std::size_t base_dim = 0;
  std::uint64_t seed = 0;
  RouterArch arch;

  Tensor2 knowledge;   // N x D, one parametric-knowledge row per model
  Tensor2 capability;  // N x D, one RAG-capability row per model
  Tensor2 shared_w1, shared_b1, shared_w2, shared_b2;
  Tensor2 cross_w1, cross_b1, cross_w2, cross_b2;
  Tensor2 attn_wq, attn_wk, attn_wv, attn_wo;

  /// Every trainable tensor in declaration order (checkpoint order).
  std::vector<std::pair<std::string_view, Tensor2*>> tensors();
  std::vector<std::pair<std::string_view, const Tensor2*>> tensors() const;

  /// Same shapes, all zeros; used as a gradient accumulator.
  RouterParams zeros_like() const;
  bool all_finite() const;

  bool operator==(const RouterParams&) const = default;
};

/// Uniform(-1/sqrt(D), 1/sqrt(D)) tables and weights, zero biases.
RouterParams init_params(std::size_t num_models, std::size_t dim, std::size_t heads, std::size_t base_dim,
                         std::uint64_t seed, RouterArch arch = {});

/// Builds the router's forward graph on a tape. With a non-null `grads`,
/// backward() accumulates into it.
class RouterGraph {
 public:
  RouterGraph(Tape& tape, const RouterParams& params, const EmbeddingProvider& provider,
              RouterParams* grads = nullptr);

  Tape& tape() { return tape_; }
  const RouterParams& params() const { return params_; }

  Var query(std::string_view text, std::string_view id = {});
  Var document(std::string_view text, std::string_view id = {});
  Var cross(std::string_view doc_text, std::string_view query_text, std::string_view id = {});
  /// Projects an already computed base vector through a head.
  Var project_shared(Var base);
  Var project_cross(Var base);

  Var knowledge(ModelId model);
  Var capability(ModelId model);
  Var fuse(Var v_r, Var v_d, Var v_c);
  /// v_k' = v_k + fuse(v_r, v_d, v_c)
  Var rag_representation(ModelId model, Var v_d, Var v_c);
  /// rag_representation for every model, sharing one attention pass.
  std::vector<Var> rag_representations(Var v_d, Var v_c);

 private:
  ParamRef ref(Tensor2 RouterParams::*member) const;
  AttentionRefs attention_refs() const;
  std::vector<Var> key_values(Var v_d, Var v_c) const;

  Tape& tape_;
  const RouterParams& params_;
  const EmbeddingProvider& provider_;
  RouterParams* grads_;
};

struct RoutingDecision {
  std::vector<double> scores;
  ModelId chosen = 0;
  Setting setting = Setting::kRag;
};

Vec encode_query(const RouterParams& params, const EmbeddingProvider& provider, std::string_view text,
                 std::string_view id = {});
Vec encode_document(const RouterParams& params, const EmbeddingProvider& provider, std::string_view text,
                    std::string_view id = {});
Vec encode_cross(const RouterParams& params, const EmbeddingProvider& provider, std::string_view doc_text,
                 std::string_view query_text, std::string_view id = {});
Vec fuse(const RouterParams& params, const Vec& v_r, const Vec& v_d, const Vec& v_c);
Vec rag_representation(const RouterParams& params, ModelId model, const Vec& v_d, const Vec& v_c);

/// Cosine similarity of the query to every model: against v_k' when a
/// document is given, against the plain knowledge row otherwise.
std::vector<double> score_models(const RouterParams& params, const EmbeddingProvider& provider,
                                 std::string_view query_text, const std::optional<std::string>& doc_text,
                                 std::string_view id = {});

/// Argmax with ties going to the lowest (most efficient) index.
RoutingDecision route(std::vector<double> scores, Setting setting = Setting::kRag);
ModelId argmax_lowest(std::span<const double> scores);

void save_router_checkpoint(const RouterParams& params, const std::string& path);
RouterParams load_router_checkpoint(const std::string& path);

}  // namespace ragroute
