#include "ragroute/diffmath.hpp"

#include <algorithm>
#include <cmath>

#include "ragroute/errors.hpp"

namespace ragroute {

namespace {

void require(bool ok, const char* what) {
  if (!ok) throw ValidationError(what);
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

bool Tensor2::all_finite() const {
  return std::all_of(data.begin(), data.end(), [](double x) { return std::isfinite(x); });
}

// ---------------------------------------------------------------------------
// Tape

Var Tape::constant(Vec value) {
  nodes_.push_back({std::move(value), {}, {}});
  return {nodes_.size() - 1};
}

Var Tape::param(ParamRef p) {
  Backward back;
  if (p.grad) {
    back = [p](Tape&, const Vec& g) {
      for (std::size_t i = 0; i < g.size(); ++i) p.grad->data[i] += g[i];
    };
  }
  nodes_.push_back({p.value->data, {}, std::move(back)});
  return {nodes_.size() - 1};
}

Var Tape::param_row(ParamRef table, std::size_t row) {
  if (row >= table.value->rows) throw ValidationError("embedding row out of range");
  auto r = table.value->row(row);
  Backward back;
  if (table.grad) {
    back = [table, row](Tape&, const Vec& g) {
      auto dst = table.grad->row(row);
      for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
    };
  }
  nodes_.push_back({Vec(r.begin(), r.end()), {}, std::move(back)});
  return {nodes_.size() - 1};
}

Var Tape::record(Vec value, Backward backward) {
  nodes_.push_back({std::move(value), {}, std::move(backward)});
  return {nodes_.size() - 1};
}

void Tape::backward(Var out, double seed) {
  for (auto& n : nodes_) n.grad.assign(n.value.size(), 0.0);
  nodes_[out.id].grad.assign(nodes_[out.id].value.size(), seed);
  for (std::size_t i = out.id + 1; i-- > 0;) {
    if (nodes_[i].backward) nodes_[i].backward(*this, nodes_[i].grad);
  }
}

// ---------------------------------------------------------------------------
// Primitives

Var affine(Tape& tape, Var x, ParamRef w, ParamRef b) {
  const Tensor2& W = *w.value;
  const Vec& xv = tape.value(x);
  require(W.cols == xv.size(), "affine: W columns do not match input size");
  require(b.value->size() == W.rows, "affine: bias size does not match W rows");
  Vec y(W.rows);
  for (std::size_t r = 0; r < W.rows; ++r) y[r] = dot(W.row(r), xv) + b.value->data[r];
  return tape.record(std::move(y), [x, w, b](Tape& t, const Vec& g) {
    const Tensor2& W = *w.value;
    const Vec& xv = t.value(x);
    Vec& dx = t.grad(x);
    for (std::size_t r = 0; r < W.rows; ++r) {
      const double gr = g[r];
      if (gr == 0.0) continue;
      auto wr = W.row(r);
      for (std::size_t c = 0; c < W.cols; ++c) dx[c] += wr[c] * gr;
      if (w.grad) {
        auto dw = w.grad->row(r);
        for (std::size_t c = 0; c < W.cols; ++c) dw[c] += gr * xv[c];
      }
      if (b.grad) b.grad->data[r] += gr;
    }
  });
}

Var tanh(Tape& tape, Var x) {
  Vec y = tape.value(x);
  for (double& v : y) v = std::tanh(v);
  Vec saved = y;
  return tape.record(std::move(y), [x, y = std::move(saved)](Tape& t, const Vec& g) {
    Vec& dx = t.grad(x);
    for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i] * (1.0 - y[i] * y[i]);
  });
}

Var add(Tape& tape, Var a, Var b) {
  const Vec& av = tape.value(a);
  const Vec& bv = tape.value(b);
  require(av.size() == bv.size(), "add: size mismatch");
  Vec y(av.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] + bv[i];
  return tape.record(std::move(y), [a, b](Tape& t, const Vec& g) {
    Vec& da = t.grad(a);
    for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i];
    Vec& db = t.grad(b);
    for (std::size_t i = 0; i < g.size(); ++i) db[i] += g[i];
  });
}

Var softmax(Tape& tape, Var v) {
  const Vec& x = tape.value(v);
  require(!x.empty(), "softmax: empty input");
  const double mx = *std::max_element(x.begin(), x.end());
  Vec y(x.size());
  double z = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) z += (y[i] = std::exp(x[i] - mx));
  for (double& p : y) p /= z;
  Vec saved = y;
  return tape.record(std::move(y), [v, p = std::move(saved)](Tape& t, const Vec& g) {
    const double gp = dot(g, p);
    Vec& dv = t.grad(v);
    for (std::size_t i = 0; i < p.size(); ++i) dv[i] += p[i] * (g[i] - gp);
  });
}

Var cosine_sim(Tape& tape, Var a, Var b) {
  const Vec& av = tape.value(a);
  const Vec& bv = tape.value(b);
  require(av.size() == bv.size(), "cosine_sim: size mismatch");
  const double na = std::sqrt(dot(av, av));
  const double nb = std::sqrt(dot(bv, bv));
  if (na == 0.0 || nb == 0.0) throw ValidationError("cosine_sim: zero-norm input");
  const double c = dot(av, bv) / (na * nb);
  return tape.record({c}, [a, b, na, nb, c](Tape& t, const Vec& g) {
    const Vec& av = t.value(a);
    const Vec& bv = t.value(b);
    Vec& da = t.grad(a);
    Vec& db = t.grad(b);
    // d cos / da = b/(|a||b|) - cos * a/|a|^2
    for (std::size_t i = 0; i < av.size(); ++i) {
      da[i] += g[0] * (bv[i] / (na * nb) - c * av[i] / (na * na));
      db[i] += g[0] * (av[i] / (na * nb) - c * bv[i] / (nb * nb));
    }
  });
}

Var concat(Tape& tape, std::span<const Var> scalars) {
  Vec y;
  y.reserve(scalars.size());
  for (Var s : scalars) y.push_back(tape.scalar(s));
  std::vector<Var> parts(scalars.begin(), scalars.end());
  return tape.record(std::move(y), [parts = std::move(parts)](Tape& t, const Vec& g) {
    for (std::size_t i = 0; i < parts.size(); ++i) t.grad(parts[i])[0] += g[i];
  });
}

Var sum(Tape& tape, std::span<const Var> scalars) {
  double s = 0.0;
  for (Var v : scalars) s += tape.scalar(v);
  std::vector<Var> parts(scalars.begin(), scalars.end());
  return tape.record({s}, [parts = std::move(parts)](Tape& t, const Vec& g) {
    for (Var p : parts) t.grad(p)[0] += g[0];
  });
}

Var scale(Tape& tape, Var v, double factor) {
  Vec y = tape.value(v);
  for (double& x : y) x *= factor;
  return tape.record(std::move(y), [v, factor](Tape& t, const Vec& g) {
    Vec& dv = t.grad(v);
    for (std::size_t i = 0; i < g.size(); ++i) dv[i] += factor * g[i];
  });
}

// ---------------------------------------------------------------------------
// Attention

namespace {

// rows [r0, r0+n) of W times x
Vec block_matvec(const Tensor2& W, std::size_t r0, std::size_t n, const Vec& x) {
  Vec y(n);
  for (std::size_t r = 0; r < n; ++r) y[r] = dot(W.row(r0 + r), x);
  return y;
}

// dW[r0+r] += g[r] * x ; dx += W[r0+r]^T g[r]
void block_matvec_backward(const ParamRef& w, std::size_t r0, const Vec& g, const Vec& x, Vec& dx) {
  for (std::size_t r = 0; r < g.size(); ++r) {
    const double gr = g[r];
    if (gr == 0.0) continue;
    auto wr = w.value->row(r0 + r);
    for (std::size_t c = 0; c < x.size(); ++c) dx[c] += wr[c] * gr;
    if (w.grad) {
      auto dw = w.grad->row(r0 + r);
      for (std::size_t c = 0; c < x.size(); ++c) dw[c] += gr * x[c];
    }
  }
}

struct QueryCache {
  std::vector<Vec> q_heads;               // per head: W_Q^h q
  std::vector<Vec> weights;               // per head: softmax over kv entries
  Vec concat;                             // concatenated head outputs
};

}  // namespace

Var multi_head_attention(Tape& tape, Var q, std::span<const Var> kv, const AttentionRefs& attn) {
  const Var qs[] = {q};
  return multi_head_attention_batch(tape, qs, kv, attn).front();
}

std::vector<Var> multi_head_attention_batch(Tape& tape, std::span<const Var> queries, std::span<const Var> kv,
                                            const AttentionRefs& attn) {
  if (queries.empty()) return {};
  const std::size_t dim = tape.value(queries.front()).size();
  const std::size_t heads = attn.heads;
  if (heads == 0 || dim % heads != 0) throw ValidationError("attention: dimension not divisible by head count");
  if (kv.empty()) throw ValidationError("attention: empty key/value sequence");
  for (const Tensor2* m : {attn.wq.value, attn.wk.value, attn.wv.value, attn.wo.value})
    require(m->rows == dim && m->cols == dim, "attention: weight shape must be D x D");
  for (Var x : kv) require(tape.value(x).size() == dim, "attention: key/value dimension mismatch");
  for (Var x : queries) require(tape.value(x).size() == dim, "attention: query dimension mismatch");

  const std::size_t dh = dim / heads;
  const double inv_scale = 1.0 / std::sqrt(static_cast<double>(dh));
  // Keys and values do not depend on the attention query: project once.
  std::vector<Vec> keys, values;
  for (Var x : kv) {
    keys.push_back(block_matvec(*attn.wk.value, 0, dim, tape.value(x)));
    values.push_back(block_matvec(*attn.wv.value, 0, dim, tape.value(x)));
  }

  std::vector<QueryCache> cache(queries.size());
  Vec out(queries.size() * dim);
  for (std::size_t qi = 0; qi < queries.size(); ++qi) {
    QueryCache& qc = cache[qi];
    const Vec& qv = tape.value(queries[qi]);
    qc.concat.assign(dim, 0.0);
    for (std::size_t h = 0; h < heads; ++h) {
      const std::size_t r0 = h * dh;
      Vec qh = block_matvec(*attn.wq.value, r0, dh, qv);
      Vec w(kv.size());
      for (std::size_t j = 0; j < kv.size(); ++j)
        w[j] = dot(qh, std::span<const double>(keys[j].data() + r0, dh)) * inv_scale;
      const double mx = *std::max_element(w.begin(), w.end());
      double z = 0.0;
      for (double& a : w) z += (a = std::exp(a - mx));
      for (double& a : w) a /= z;
      for (std::size_t j = 0; j < kv.size(); ++j)
        for (std::size_t i = 0; i < dh; ++i) qc.concat[r0 + i] += w[j] * values[j][r0 + i];
      qc.q_heads.push_back(std::move(qh));
      qc.weights.push_back(std::move(w));
    }
    const Vec o = block_matvec(*attn.wo.value, 0, dim, qc.concat);
    std::copy(o.begin(), o.end(), out.begin() + static_cast<std::ptrdiff_t>(qi * dim));
  }

  std::vector<Var> qvars(queries.begin(), queries.end());
  std::vector<Var> kvvars(kv.begin(), kv.end());
  Var joined = tape.record(
      std::move(out), [qvars = std::move(qvars), kvvars = std::move(kvvars), attn, cache = std::move(cache),
                       keys = std::move(keys), values = std::move(values), dim, dh,
                       inv_scale](Tape& t, const Vec& g) {
        std::vector<Vec> d_keys(kvvars.size(), Vec(dim, 0.0));
        std::vector<Vec> d_values(kvvars.size(), Vec(dim, 0.0));
        for (std::size_t qi = 0; qi < qvars.size(); ++qi) {
          const QueryCache& qc = cache[qi];
          const Vec g_out(g.begin() + static_cast<std::ptrdiff_t>(qi * dim),
                          g.begin() + static_cast<std::ptrdiff_t>((qi + 1) * dim));
          Vec d_concat(dim, 0.0);
          block_matvec_backward(attn.wo, 0, g_out, qc.concat, d_concat);
          const Vec& qv = t.value(qvars[qi]);
          Vec& dq = t.grad(qvars[qi]);
          for (std::size_t h = 0; h < qc.q_heads.size(); ++h) {
            const std::size_t r0 = h * dh;
            const Vec& w = qc.weights[h];
            const Vec& qh = qc.q_heads[h];
            std::span<const double> d_out(d_concat.data() + r0, dh);
            Vec d_w(kvvars.size());
            for (std::size_t j = 0; j < kvvars.size(); ++j)
              d_w[j] = dot(d_out, std::span<const double>(values[j].data() + r0, dh));
            const double mean = dot(d_w, w);
            Vec d_qh(dh, 0.0);
            for (std::size_t j = 0; j < kvvars.size(); ++j) {
              const double d_score = w[j] * (d_w[j] - mean) * inv_scale;
              for (std::size_t i = 0; i < dh; ++i) {
                d_qh[i] += d_score * keys[j][r0 + i];
                d_keys[j][r0 + i] += d_score * qh[i];
                d_values[j][r0 + i] += w[j] * d_out[i];
              }
            }
            block_matvec_backward(attn.wq, r0, d_qh, qv, dq);
          }
        }
        for (std::size_t j = 0; j < kvvars.size(); ++j) {
          const Vec& x = t.value(kvvars[j]);
          Vec& dx = t.grad(kvvars[j]);
          block_matvec_backward(attn.wk, 0, d_keys[j], x, dx);
          block_matvec_backward(attn.wv, 0, d_values[j], x, dx);
        }
      });

  std::vector<Var> outs;
  outs.reserve(queries.size());
  for (std::size_t qi = 0; qi < queries.size(); ++qi) outs.push_back(slice(tape, joined, qi * dim, dim));
  return outs;
}

Var slice(Tape& tape, Var v, std::size_t offset, std::size_t length) {
  const Vec& x = tape.value(v);
  require(offset + length <= x.size(), "slice: out of range");
  Vec y(x.begin() + static_cast<std::ptrdiff_t>(offset), x.begin() + static_cast<std::ptrdiff_t>(offset + length));
  return tape.record(std::move(y), [v, offset](Tape& t, const Vec& g) {
    Vec& dv = t.grad(v);
    for (std::size_t i = 0; i < g.size(); ++i) dv[offset + i] += g[i];
  });
}

// ---------------------------------------------------------------------------
// Finite differences

FiniteDiffResult finite_diff_check(std::span<Tensor2* const> params, std::span<const Tensor2> analytic,
                                   const std::function<double()>& loss, double eps) {
  if (!(eps >= 1e-6 && eps <= 1e-3)) throw ValidationError("finite_diff_check: eps must be in [1e-6, 1e-3]");
  if (params.size() != analytic.size()) throw ValidationError("finite_diff_check: params/gradients mismatch");
  FiniteDiffResult res;
  for (std::size_t t = 0; t < params.size(); ++t) {
    Tensor2& p = *params[t];
    if (!p.same_shape(analytic[t])) throw ValidationError("finite_diff_check: gradient shape mismatch");
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double orig = p.data[i];
      p.data[i] = orig + eps;
      const double up = loss();
      p.data[i] = orig - eps;
      const double down = loss();
      p.data[i] = orig;
      if (!std::isfinite(up) || !std::isfinite(down)) throw RuntimeFailure("finite_diff_check: non-finite loss");
      const double numeric = (up - down) / (2.0 * eps);
      const double a = analytic[t].data[i];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      const double rel = std::abs(a - numeric) / denom;
      if (rel > res.max_rel_error) res = {rel, t, i, a, numeric};
    }
  }
  return res;
}

// ---------------------------------------------------------------------------
// AdamW

void AdamW::step(std::span<Tensor2* const> params, std::span<const Tensor2* const> grads) {
  if (params.size() != grads.size()) throw ValidationError("optimizer_step: params/gradients count mismatch");
  if (m_.empty()) {
    for (const Tensor2* p : params) {
      m_.emplace_back(p->rows, p->cols);
      v_.emplace_back(p->rows, p->cols);
    }
  }
  if (m_.size() != params.size()) throw ValidationError("optimizer_step: parameter list changed between steps");
  for (std::size_t t = 0; t < params.size(); ++t)
    if (!params[t]->same_shape(*grads[t]) || !params[t]->same_shape(m_[t]))
      throw ValidationError("optimizer_step: shape mismatch");

  ++step_;
  const auto& c = config_;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(step_));
  const double decay = 1.0 - c.lr * c.weight_decay;
  for (std::size_t t = 0; t < params.size(); ++t) {
    auto& p = params[t]->data;
    const auto& g = grads[t]->data;
    auto& m = m_[t].data;
    auto& v = v_[t].data;
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
      v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
      p[i] *= decay;
      p[i] -= c.lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + c.eps);
    }
  }
}

}  // namespace ragroute
