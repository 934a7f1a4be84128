#include "ragroute/router_model.hpp"

#include <algorithm>
#include <cmath>

#include "ragroute/checkpoint.hpp"
#include "ragroute/errors.hpp"
#include "ragroute/rng.hpp"

namespace ragroute {

namespace {

constexpr std::pair<std::string_view, Tensor2 RouterParams::*> kTensorFields[] = {
    {"knowledge", &RouterParams::knowledge}, {"capability", &RouterParams::capability},
    {"shared_w1", &RouterParams::shared_w1}, {"shared_b1", &RouterParams::shared_b1},
    {"shared_w2", &RouterParams::shared_w2}, {"shared_b2", &RouterParams::shared_b2},
    {"cross_w1", &RouterParams::cross_w1},   {"cross_b1", &RouterParams::cross_b1},
    {"cross_w2", &RouterParams::cross_w2},   {"cross_b2", &RouterParams::cross_b2},
    {"attn_wq", &RouterParams::attn_wq},     {"attn_wk", &RouterParams::attn_wk},
    {"attn_wv", &RouterParams::attn_wv},     {"attn_wo", &RouterParams::attn_wo},
};

Var base_var(Tape& tape, BaseEmbedding e) { return tape.constant(std::move(e.values)); }

}  // namespace

std::vector<std::pair<std::string_view, Tensor2*>> RouterParams::tensors() {
  std::vector<std::pair<std::string_view, Tensor2*>> out;
  for (auto [name, field] : kTensorFields) out.emplace_back(name, &(this->*field));
  return out;
}

std::vector<std::pair<std::string_view, const Tensor2*>> RouterParams::tensors() const {
  std::vector<std::pair<std::string_view, const Tensor2*>> out;
  for (auto [name, field] : kTensorFields) out.emplace_back(name, &(this->*field));
  return out;
}

RouterParams RouterParams::zeros_like() const {
  RouterParams z = *this;
  for (auto& [name, t] : z.tensors()) std::fill(t->data.begin(), t->data.end(), 0.0);
  return z;
}

bool RouterParams::all_finite() const {
  for (const auto& [name, t] : tensors())
    if (!t->all_finite()) return false;
  return true;
}

RouterParams init_params(std::size_t num_models, std::size_t dim, std::size_t heads, std::size_t base_dim,
                         std::uint64_t seed, RouterArch arch) {
  if (num_models < 1) throw ValidationError("init_params: need at least one model");
  if (dim == 0 || base_dim == 0) throw ValidationError("init_params: dimensions must be positive");
  if (heads == 0 || dim % heads != 0) throw ValidationError("init_params: D must be divisible by H");

  RouterParams p;
  p.num_models = num_models;
  p.dim = dim;
  p.heads = heads;
  p.base_dim = base_dim;
  p.seed = seed;
  p.arch = arch;
  p.knowledge = Tensor2(num_models, dim);
  p.capability = Tensor2(num_models, dim);
  p.shared_w1 = Tensor2(dim, base_dim);
  p.shared_b1 = Tensor2(dim, 1);
  p.shared_w2 = Tensor2(dim, dim);
  p.shared_b2 = Tensor2(dim, 1);
  p.cross_w1 = Tensor2(dim, base_dim);
  p.cross_b1 = Tensor2(dim, 1);
  p.cross_w2 = Tensor2(dim, dim);
  p.cross_b2 = Tensor2(dim, 1);
  for (Tensor2* m : {&p.attn_wq, &p.attn_wk, &p.attn_wv, &p.attn_wo}) *m = Tensor2(dim, dim);

  const double bound = 1.0 / std::sqrt(static_cast<double>(dim));
  Rng rng(seed);
  for (auto& [name, t] : p.tensors()) {
    if (t->cols == 1 && name.find("_b") != std::string_view::npos) continue;  // biases stay zero
    for (double& x : t->data) x = rng.uniform(-bound, bound);
  }
  return p;
}

// ---------------------------------------------------------------------------
// Graph

RouterGraph::RouterGraph(Tape& tape, const RouterParams& params, const EmbeddingProvider& provider,
                         RouterParams* grads)
    : tape_(tape), params_(params), provider_(provider), grads_(grads) {
  if (provider.dim() != params.base_dim)
    throw ValidationError("embedding dimension " + std::to_string(provider.dim()) +
                          " does not match router base dimension " + std::to_string(params.base_dim));
}

ParamRef RouterGraph::ref(Tensor2 RouterParams::*member) const {
  return {&(params_.*member), grads_ ? &(grads_->*member) : nullptr};
}

Var RouterGraph::project_shared(Var base) {
  Var h = tanh(tape_, affine(tape_, base, ref(&RouterParams::shared_w1), ref(&RouterParams::shared_b1)));
  return affine(tape_, h, ref(&RouterParams::shared_w2), ref(&RouterParams::shared_b2));
}

Var RouterGraph::project_cross(Var base) {
  Var h = tanh(tape_, affine(tape_, base, ref(&RouterParams::cross_w1), ref(&RouterParams::cross_b1)));
  return affine(tape_, h, ref(&RouterParams::cross_w2), ref(&RouterParams::cross_b2));
}

Var RouterGraph::query(std::string_view text, std::string_view id) {
  return project_shared(base_var(tape_, provider_.text_embedding(Channel::kQuery, text, id)));
}

Var RouterGraph::document(std::string_view text, std::string_view id) {
  return project_shared(base_var(tape_, provider_.text_embedding(Channel::kDocument, text, id)));
}

Var RouterGraph::cross(std::string_view doc_text, std::string_view query_text, std::string_view id) {
  return project_cross(base_var(tape_, provider_.cross_embedding(doc_text, query_text, id)));
}

Var RouterGraph::knowledge(ModelId model) {
  if (model >= params_.num_models) throw ValidationError("model index out of range");
  return tape_.param_row(ref(&RouterParams::knowledge), model);
}

Var RouterGraph::capability(ModelId model) {
  if (model >= params_.num_models) throw ValidationError("model index out of range");
  return tape_.param_row(ref(&RouterParams::capability), model);
}

AttentionRefs RouterGraph::attention_refs() const {
  return {ref(&RouterParams::attn_wq), ref(&RouterParams::attn_wk), ref(&RouterParams::attn_wv),
          ref(&RouterParams::attn_wo), params_.heads};
}

std::vector<Var> RouterGraph::key_values(Var v_d, Var v_c) const {
  if (params_.arch.drop_cross_encoder) return {v_d};
  return {v_d, v_c};
}

Var RouterGraph::fuse(Var v_r, Var v_d, Var v_c) {
  return multi_head_attention(tape_, v_r, key_values(v_d, v_c), attention_refs());
}

Var RouterGraph::rag_representation(ModelId model, Var v_d, Var v_c) {
  Var v_k = knowledge(model);
  Var v_r = params_.arch.drop_capability_table ? v_k : capability(model);
  return add(tape_, v_k, fuse(v_r, v_d, v_c));
}

std::vector<Var> RouterGraph::rag_representations(Var v_d, Var v_c) {
  std::vector<Var> v_k, v_r;
  for (ModelId i = 0; i < params_.num_models; ++i) {
    v_k.push_back(knowledge(i));
    v_r.push_back(params_.arch.drop_capability_table ? v_k.back() : capability(i));
  }
  const auto fused = multi_head_attention_batch(tape_, v_r, key_values(v_d, v_c), attention_refs());
  std::vector<Var> out;
  for (ModelId i = 0; i < params_.num_models; ++i) out.push_back(add(tape_, v_k[i], fused[i]));
  return out;
}

// ---------------------------------------------------------------------------
// Plain forward ops

Vec encode_query(const RouterParams& params, const EmbeddingProvider& provider, std::string_view text,
                 std::string_view id) {
  Tape tape;
  RouterGraph g(tape, params, provider);
  return tape.value(g.query(text, id));
}

Vec encode_document(const RouterParams& params, const EmbeddingProvider& provider, std::string_view text,
                    std::string_view id) {
  Tape tape;
  RouterGraph g(tape, params, provider);
  return tape.value(g.document(text, id));
}

Vec encode_cross(const RouterParams& params, const EmbeddingProvider& provider, std::string_view doc_text,
                 std::string_view query_text, std::string_view id) {
  Tape tape;
  RouterGraph g(tape, params, provider);
  return tape.value(g.cross(doc_text, query_text, id));
}

namespace {

void require_dim(const RouterParams& params, const Vec& v) {
  if (v.size() != params.dim) throw ValidationError("vector dimension does not match router dimension");
}

// Plain ops below do not touch the provider; an empty feature-hash provider
// of the right width satisfies RouterGraph's check.
EmbeddingProvider placeholder_provider(const RouterParams& params) {
  return EmbeddingProvider::feature_hash(params.base_dim);
}

}  // namespace

Vec fuse(const RouterParams& params, const Vec& v_r, const Vec& v_d, const Vec& v_c) {
  for (const Vec* v : {&v_r, &v_d, &v_c}) require_dim(params, *v);
  Tape tape;
  const auto provider = placeholder_provider(params);
  RouterGraph g(tape, params, provider);
  return tape.value(g.fuse(tape.constant(v_r), tape.constant(v_d), tape.constant(v_c)));
}

Vec rag_representation(const RouterParams& params, ModelId model, const Vec& v_d, const Vec& v_c) {
  for (const Vec* v : {&v_d, &v_c}) require_dim(params, *v);
  Tape tape;
  const auto provider = placeholder_provider(params);
  RouterGraph g(tape, params, provider);
  return tape.value(g.rag_representation(model, tape.constant(v_d), tape.constant(v_c)));
}

std::vector<double> score_models(const RouterParams& params, const EmbeddingProvider& provider,
                                 std::string_view query_text, const std::optional<std::string>& doc_text,
                                 std::string_view id) {
  Tape tape;
  RouterGraph g(tape, params, provider);
  Var v_q = g.query(query_text, id);
  std::vector<double> scores(params.num_models);
  if (!doc_text) {
    for (ModelId i = 0; i < params.num_models; ++i) scores[i] = tape.scalar(cosine_sim(tape, v_q, g.knowledge(i)));
    return scores;
  }
  Var v_d = g.document(*doc_text, id);
  Var v_c = params.arch.drop_cross_encoder ? v_d : g.cross(*doc_text, query_text, id);
  const auto reps = g.rag_representations(v_d, v_c);
  for (ModelId i = 0; i < params.num_models; ++i) scores[i] = tape.scalar(cosine_sim(tape, v_q, reps[i]));
  return scores;
}

ModelId argmax_lowest(std::span<const double> scores) {
  if (scores.empty()) throw ValidationError("route: empty score vector");
  ModelId best = 0;
  for (ModelId i = 1; i < scores.size(); ++i)
    if (scores[i] > scores[best]) best = i;
  return best;
}

RoutingDecision route(std::vector<double> scores, Setting setting) {
  for (double s : scores)
    if (!std::isfinite(s)) throw ValidationError("route: non-finite score");
  RoutingDecision d;
  d.chosen = argmax_lowest(scores);
  d.scores = std::move(scores);
  d.setting = setting;
  return d;
}

// ---------------------------------------------------------------------------
// Checkpoint

void save_router_checkpoint(const RouterParams& params, const std::string& path) {
  Checkpoint ckpt;
  ckpt.header = {{"kind", "ragrouter"},
                 {"N", params.num_models},
                 {"D", params.dim},
                 {"H", params.heads},
                 {"D_base", params.base_dim},
                 {"seed", params.seed},
                 {"drop_cross_encoder", params.arch.drop_cross_encoder},
                 {"drop_capability_table", params.arch.drop_capability_table}};
  for (const auto& [name, t] : params.tensors()) ckpt.tensors.emplace_back(std::string(name), *t);
  write_checkpoint(path, ckpt);
}

RouterParams load_router_checkpoint(const std::string& path) {
  const Checkpoint ckpt = read_checkpoint(path, "ragrouter");
  const auto& h = ckpt.header;
  RouterArch arch{h.value("drop_cross_encoder", false), h.value("drop_capability_table", false)};
  RouterParams p = init_params(h.at("N").get<std::size_t>(), h.at("D").get<std::size_t>(),
                               h.at("H").get<std::size_t>(), h.at("D_base").get<std::size_t>(),
                               h.at("seed").get<std::uint64_t>(), arch);
  for (auto& [name, t] : p.tensors()) {
    const Tensor2& stored = ckpt.tensor(std::string(name));
    if (!stored.same_shape(*t)) throw ValidationError("checkpoint " + path + ": shape mismatch for " + std::string(name));
    *t = stored;
  }
  return p;
}

}  // namespace ragroute
