#pragma once

// Small reverse-mode differentiation core: the handful of dense primitives
// the router needs, a finite-difference checker and an AdamW optimizer.
// All arithmetic is double precision.

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace ragroute {

using Vec = std::vector<double>;

/// Row-major dense matrix.
struct Tensor2 {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Tensor2() = default;
  Tensor2(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }
  std::size_t size() const { return data.size(); }
  bool same_shape(const Tensor2& o) const { return rows == o.rows && cols == o.cols; }
  bool all_finite() const;

  bool operator==(const Tensor2&) const = default;
};

/// A trainable tensor plus the accumulator its gradient flows into.
/// `grad` may be null when nothing should be accumulated (inference).
struct ParamRef {
  const Tensor2* value = nullptr;
  Tensor2* grad = nullptr;
};

struct Var {
  std::size_t id = 0;
};

/// Records primitive operations in order and replays them backwards.
/// Gradients add into every consumer, so a node used twice gets both
/// contributions.
class Tape {
 public:
  using Backward = std::function<void(Tape&, const Vec& out_grad)>;

  Var constant(Vec value);
  /// The whole tensor as a flat vector (biases).
  Var param(ParamRef p);
  /// One row of an embedding table.
  Var param_row(ParamRef table, std::size_t row);
  /// Appends a node computed outside the tape; `backward` receives this
  /// node's gradient and must add into the inputs' gradients via grad().
  Var record(Vec value, Backward backward);

  const Vec& value(Var v) const { return nodes_[v.id].value; }
  double scalar(Var v) const { return nodes_[v.id].value.at(0); }
  Vec& grad(Var v) { return nodes_[v.id].grad; }
  std::size_t size() const { return nodes_.size(); }

  /// Seeds d(out) = seed and runs every recorded backward in reverse order.
  /// Intended to be called once per tape.
  void backward(Var out, double seed = 1.0);

 private:
  struct Node {
    Vec value;
    Vec grad;
    Backward backward;
  };
  std::vector<Node> nodes_;
};

/// y = W x + b. Throws ValidationError on shape mismatch.
Var affine(Tape& tape, Var x, ParamRef w, ParamRef b);
Var tanh(Tape& tape, Var x);
Var add(Tape& tape, Var a, Var b);
/// Max-subtracted softmax.
Var softmax(Tape& tape, Var v);
/// Scalar a.b / (|a||b|). Throws on a zero-norm argument.
Var cosine_sim(Tape& tape, Var a, Var b);
/// Stacks scalar nodes into one vector.
Var concat(Tape& tape, std::span<const Var> scalars);
Var sum(Tape& tape, std::span<const Var> scalars);
Var scale(Tape& tape, Var v, double factor);

/// Multi-head attention weights. Each matrix is D x D; head h owns rows
/// [h*D/H, (h+1)*D/H) of W_Q, W_K and W_V, and W_O maps the concatenated
/// head outputs back to D.
struct AttentionRefs {
  ParamRef wq;
  ParamRef wk;
  ParamRef wv;
  ParamRef wo;
  std::size_t heads = 1;
};

/// Scaled dot-product attention with a single attention query `q` over the
/// key=value sequence `kv`, per-head scale 1/sqrt(D/H).
Var multi_head_attention(Tape& tape, Var q, std::span<const Var> kv, const AttentionRefs& attn);
/// Same as calling multi_head_attention once per query, but projects the
/// shared keys/values once. Returns one output per query.
std::vector<Var> multi_head_attention_batch(Tape& tape, std::span<const Var> queries, std::span<const Var> kv,
                                            const AttentionRefs& attn);
/// Elements [offset, offset+length) of v.
Var slice(Tape& tape, Var v, std::size_t offset, std::size_t length);

struct FiniteDiffResult {
  double max_rel_error = 0.0;
  std::size_t worst_tensor = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

/// Compares `analytic[i]` against central differences of `loss` taken by
/// perturbing `params[i]` in place (restored afterwards). Relative error uses
/// max(|analytic|, |numeric|, 1e-8) as the denominator.
FiniteDiffResult finite_diff_check(std::span<Tensor2* const> params, std::span<const Tensor2> analytic,
                                   const std::function<double()>& loss, double eps);

struct AdamWConfig {
  double lr = 5e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

/// Adam with decoupled weight decay: p <- p - lr*wd*p, then the
/// bias-corrected moment update.
class AdamW {
 public:
  explicit AdamW(AdamWConfig config) : config_(config) {}

  void step(std::span<Tensor2* const> params, std::span<const Tensor2* const> grads);
  std::uint64_t steps() const { return step_; }
  const AdamWConfig& config() const { return config_; }

 private:
  AdamWConfig config_;
  std::uint64_t step_ = 0;
  std::vector<Tensor2> m_;
  std::vector<Tensor2> v_;
};

}  // namespace ragroute
