#pragma once

// Forward and backward passes of the decoder, templated on the scalar so the
// same code serves float training/inference and long double gradient checks.
// Sequences are packed row-wise: every projection runs once over all tokens
// of a batch and attention runs per sequence segment.

#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "rsn/neuron.hpp"
#include "rsn/params.hpp"
#include "rsn/tokenizer.hpp"

namespace rsn::detail {

inline constexpr double kRmsEps = 1e-5;

struct Packed {
  std::vector<TokenId> tokens;
  std::vector<std::size_t> offsets{0};

  void add(std::span<const TokenId> seq) {
    tokens.insert(tokens.end(), seq.begin(), seq.end());
    offsets.push_back(tokens.size());
  }
  std::size_t n_seq() const { return offsets.size() - 1; }
  std::size_t total() const { return tokens.size(); }
  std::size_t begin(std::size_t s) const { return offsets[s]; }
  std::size_t len(std::size_t s) const { return offsets[s + 1] - offsets[s]; }
};

inline std::size_t slot_of(std::uint32_t layer, NeuronKind k) {
  return static_cast<std::size_t>(layer) * kNumKinds + static_cast<std::size_t>(k);
}

struct CompiledMask {
  std::vector<std::vector<Eigen::Index>> cols;  // by slot_of(layer, kind)

  CompiledMask() = default;
  CompiledMask(const SuppressionMask& m, const ModelConfig& c) {
    m.validate(c);
    cols.resize(static_cast<std::size_t>(c.n_layers) * kNumKinds);
    for (const auto& n : m.neurons()) cols[slot_of(n.layer, n.kind)].push_back(n.column);
  }
  const std::vector<Eigen::Index>* get(std::uint32_t layer, NeuronKind k) const {
    if (cols.empty()) return nullptr;
    const auto& v = cols[slot_of(layer, k)];
    return v.empty() ? nullptr : &v;
  }
};

// Receives post-override projection outputs for the requested kinds.
struct TapSink {
  KindSet kinds;
  std::vector<MatT<float>> slots;  // by slot_of(layer, kind), total_tokens x width
};

template <class T>
struct LayerCache {
  MatT<T> x_in, a, q, k, v, ctx, h_mid, b, g, u, z;
  VecT<T> r_attn, r_ffn;
  std::vector<MatT<T>> probs;  // [seq * n_heads + head]
};

template <class T>
struct Cache {
  std::vector<LayerCache<T>> layers;
  MatT<T> h_final, n_final;
  VecT<T> r_final;
};

enum class LogitRows { all, last };

template <class T>
void rmsnorm(const MatT<T>& x, const VecT<T>& g, MatT<T>& y, VecT<T>& r) {
  using std::sqrt;
  const T d = static_cast<T>(x.cols());
  y.resize(x.rows(), x.cols());
  r.resize(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const T ms = x.row(i).squaredNorm() / d;
    r(i) = T(1) / sqrt(ms + static_cast<T>(kRmsEps));
    y.row(i) = (x.row(i).array() * r(i)) * g.transpose().array();
  }
}

// dx += backward of y = x * r * g; dg += sum over rows of dy * x * r.
template <class T>
void rmsnorm_backward(const MatT<T>& x, const VecT<T>& g, const VecT<T>& r, const MatT<T>& dy,
                      MatT<T>& dx, VecT<T>* dg) {
  const T d = static_cast<T>(x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const auto dyg = (dy.row(i).array() * g.transpose().array()).matrix();
    const T dot = dyg.dot(x.row(i));
    const T ri = r(i);
    dx.row(i).array() += ri * dyg.array() - x.row(i).array() * (ri * ri * ri * dot / d);
    if (dg) dg->array() += (dy.row(i).array() * x.row(i).array() * ri).transpose();
  }
}

template <class T>
inline T silu(T x) {
  using std::exp;
  return x / (T(1) + exp(-x));
}

template <class T>
inline T silu_grad(T x) {
  using std::exp;
  const T s = T(1) / (T(1) + exp(-x));
  return s * (T(1) + x * (T(1) - s));
}

template <class T>
void apply_hooks(MatT<T>& m, std::uint32_t layer, NeuronKind kind, const CompiledMask* mask,
                 TapSink* tap) {
  if (mask)
    if (const auto* cols = mask->get(layer, kind))
      for (auto c : *cols) m.col(c).setZero();
  if (tap && tap->kinds.has(kind)) tap->slots[slot_of(layer, kind)] = m.template cast<float>();
}

template <class T>
MatT<T> forward(const Params<T>& p, const ModelConfig& cfg, const Packed& b,
                const CompiledMask* mask, TapSink* tap, Cache<T>* cache, LogitRows rows) {
  using std::exp;
  using std::sqrt;
  const Eigen::Index n = static_cast<Eigen::Index>(b.total());
  const Eigen::Index d = cfg.d_model;
  const Eigen::Index dh = cfg.head_dim();
  const std::size_t n_heads = cfg.n_heads;
  const T scale = T(1) / sqrt(static_cast<T>(dh));

  Cache<T> local;
  Cache<T>& c = cache ? *cache : local;
  c.layers.resize(cfg.n_layers);
  if (tap) tap->slots.assign(static_cast<std::size_t>(cfg.n_layers) * kNumKinds, MatT<float>());

  MatT<T> h(n, d);
  for (std::size_t s = 0; s < b.n_seq(); ++s)
    for (std::size_t t = 0; t < b.len(s); ++t) {
      const auto row = static_cast<Eigen::Index>(b.begin(s) + t);
      h.row(row) = p.tok_emb.row(b.tokens[static_cast<std::size_t>(row)]) +
                   p.pos_emb.row(static_cast<Eigen::Index>(t));
    }

  for (std::uint32_t li = 0; li < cfg.n_layers; ++li) {
    const auto& w = p.layers[li];
    auto& lc = c.layers[li];
    lc.x_in = h;
    rmsnorm(lc.x_in, w.attn_norm, lc.a, lc.r_attn);
    lc.q.noalias() = lc.a * w.wq;
    apply_hooks(lc.q, li, NeuronKind::attn_q, mask, tap);
    lc.k.noalias() = lc.a * w.wk;
    apply_hooks(lc.k, li, NeuronKind::attn_k, mask, tap);
    lc.v.noalias() = lc.a * w.wv;
    apply_hooks(lc.v, li, NeuronKind::attn_v, mask, tap);

    lc.ctx.resize(n, d);
    if (cache) lc.probs.assign(b.n_seq() * n_heads, MatT<T>());
    for (std::size_t s = 0; s < b.n_seq(); ++s) {
      const auto o = static_cast<Eigen::Index>(b.begin(s));
      const auto L = static_cast<Eigen::Index>(b.len(s));
      for (std::size_t hd = 0; hd < n_heads; ++hd) {
        const auto col = static_cast<Eigen::Index>(hd) * dh;
        MatT<T> P = (lc.q.block(o, col, L, dh) * lc.k.block(o, col, L, dh).transpose()) * scale;
        for (Eigen::Index i = 0; i < L; ++i) {
          T mx = P(i, 0);
          for (Eigen::Index j = 1; j <= i; ++j) mx = P(i, j) > mx ? P(i, j) : mx;
          T sum = 0;
          for (Eigen::Index j = 0; j <= i; ++j) {
            P(i, j) = exp(P(i, j) - mx);
            sum += P(i, j);
          }
          for (Eigen::Index j = 0; j <= i; ++j) P(i, j) /= sum;
          for (Eigen::Index j = i + 1; j < L; ++j) P(i, j) = 0;
        }
        lc.ctx.block(o, col, L, dh).noalias() = P * lc.v.block(o, col, L, dh);
        if (cache) lc.probs[s * n_heads + hd] = std::move(P);
      }
    }
    MatT<T> attn_out = lc.ctx * w.wo;
    apply_hooks(attn_out, li, NeuronKind::attn_o, mask, tap);
    lc.h_mid = lc.x_in + attn_out;

    rmsnorm(lc.h_mid, w.ffn_norm, lc.b, lc.r_ffn);
    lc.g.noalias() = lc.b * w.w_gate;
    apply_hooks(lc.g, li, NeuronKind::gate, mask, tap);
    lc.u.noalias() = lc.b * w.w_up;
    apply_hooks(lc.u, li, NeuronKind::up, mask, tap);
    lc.z = lc.g.unaryExpr([](T x) { return silu(x); }).cwiseProduct(lc.u);
    MatT<T> ffn_out = lc.z * w.w_down;
    apply_hooks(ffn_out, li, NeuronKind::down, mask, tap);
    h = lc.h_mid + ffn_out;
  }

  c.h_final = std::move(h);
  if (rows == LogitRows::last) {
    MatT<T> last(static_cast<Eigen::Index>(b.n_seq()), d);
    for (std::size_t s = 0; s < b.n_seq(); ++s)
      last.row(static_cast<Eigen::Index>(s)) =
          c.h_final.row(static_cast<Eigen::Index>(b.begin(s) + b.len(s) - 1));
    rmsnorm(last, p.final_norm, c.n_final, c.r_final);
  } else {
    rmsnorm(c.h_final, p.final_norm, c.n_final, c.r_final);
  }
  return c.n_final * p.lm_head;
}

// Mean next-token cross-entropy over positions whose target is >= 0.
// Accumulates parameter gradients into *grad when given.
template <class T>
T loss_and_backward(const Params<T>& p, const ModelConfig& cfg, const Packed& b,
                    std::span<const TokenId> targets, Params<T>* grad) {
  using std::exp;
  using std::log;
  using std::sqrt;
  Cache<T> c;
  MatT<T> logits = forward<T>(p, cfg, b, nullptr, nullptr, &c, LogitRows::all);
  const Eigen::Index n = logits.rows();
  std::size_t count = 0;
  for (auto t : targets) count += t >= 0;
  if (count == 0) return T(0);

  T loss = 0;
  MatT<T> dlogits;
  if (grad) dlogits = MatT<T>::Zero(n, logits.cols());
  const T inv = T(1) / static_cast<T>(count);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto tgt = targets[static_cast<std::size_t>(i)];
    if (tgt < 0) continue;
    const T mx = logits.row(i).maxCoeff();
    T sum = 0;
    for (Eigen::Index j = 0; j < logits.cols(); ++j) sum += exp(logits(i, j) - mx);
    const T lse = mx + log(sum);
    loss += lse - logits(i, tgt);
    if (grad) {
      for (Eigen::Index j = 0; j < logits.cols(); ++j)
        dlogits(i, j) = exp(logits(i, j) - lse) * inv;
      dlogits(i, tgt) -= inv;
    }
  }
  loss *= inv;
  if (!grad) return loss;

  const Eigen::Index d = cfg.d_model;
  const Eigen::Index dh = cfg.head_dim();
  const std::size_t n_heads = cfg.n_heads;
  const T scale = T(1) / sqrt(static_cast<T>(dh));

  grad->lm_head.noalias() += c.n_final.transpose() * dlogits;
  MatT<T> dn = dlogits * p.lm_head.transpose();
  MatT<T> dh_res = MatT<T>::Zero(n, d);
  rmsnorm_backward(c.h_final, p.final_norm, c.r_final, dn, dh_res, &grad->final_norm);

  for (std::uint32_t li = cfg.n_layers; li-- > 0;) {
    const auto& w = p.layers[li];
    auto& gw = grad->layers[li];
    const auto& lc = c.layers[li];

    // ffn: h = h_mid + (silu(g) * u) * w_down
    gw.w_down.noalias() += lc.z.transpose() * dh_res;
    MatT<T> dz = dh_res * w.w_down.transpose();
    MatT<T> du = dz.cwiseProduct(lc.g.unaryExpr([](T x) { return silu(x); }));
    MatT<T> dg = dz.cwiseProduct(lc.u).cwiseProduct(lc.g.unaryExpr([](T x) { return silu_grad(x); }));
    gw.w_up.noalias() += lc.b.transpose() * du;
    gw.w_gate.noalias() += lc.b.transpose() * dg;
    MatT<T> db = du * w.w_up.transpose();
    db.noalias() += dg * w.w_gate.transpose();
    MatT<T> dh_mid = dh_res;
    rmsnorm_backward(lc.h_mid, w.ffn_norm, lc.r_ffn, db, dh_mid, &gw.ffn_norm);

    // attention: h_mid = x_in + ctx * wo
    gw.wo.noalias() += lc.ctx.transpose() * dh_mid;
    MatT<T> dctx = dh_mid * w.wo.transpose();
    MatT<T> dq = MatT<T>::Zero(n, d), dk = MatT<T>::Zero(n, d), dv = MatT<T>::Zero(n, d);
    for (std::size_t s = 0; s < b.n_seq(); ++s) {
      const auto o = static_cast<Eigen::Index>(b.begin(s));
      const auto L = static_cast<Eigen::Index>(b.len(s));
      for (std::size_t hd = 0; hd < n_heads; ++hd) {
        const auto col = static_cast<Eigen::Index>(hd) * dh;
        const MatT<T>& P = lc.probs[s * n_heads + hd];
        const auto dC = dctx.block(o, col, L, dh);
        MatT<T> dP = dC * lc.v.block(o, col, L, dh).transpose();
        dv.block(o, col, L, dh).noalias() += P.transpose() * dC;
        MatT<T> dS(L, L);
        for (Eigen::Index i = 0; i < L; ++i) {
          const T rs = P.row(i).dot(dP.row(i));
          dS.row(i) = P.row(i).array() * (dP.row(i).array() - rs);
        }
        dq.block(o, col, L, dh).noalias() += (dS * lc.k.block(o, col, L, dh)) * scale;
        dk.block(o, col, L, dh).noalias() += (dS.transpose() * lc.q.block(o, col, L, dh)) * scale;
      }
    }
    gw.wq.noalias() += lc.a.transpose() * dq;
    gw.wk.noalias() += lc.a.transpose() * dk;
    gw.wv.noalias() += lc.a.transpose() * dv;
    MatT<T> da = dq * w.wq.transpose();
    da.noalias() += dk * w.wk.transpose();
    da.noalias() += dv * w.wv.transpose();
    MatT<T> dx = dh_mid;
    rmsnorm_backward(lc.x_in, w.attn_norm, lc.r_attn, da, dx, &gw.attn_norm);
    dh_res = std::move(dx);
  }

  for (std::size_t s = 0; s < b.n_seq(); ++s)
    for (std::size_t t = 0; t < b.len(s); ++t) {
      const auto row = static_cast<Eigen::Index>(b.begin(s) + t);
      grad->tok_emb.row(b.tokens[static_cast<std::size_t>(row)]) += dh_res.row(row);
      grad->pos_emb.row(static_cast<Eigen::Index>(t)) += dh_res.row(row);
    }
  return loss;
}

}  // namespace rsn::detail
