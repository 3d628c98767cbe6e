#pragma once

#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "rsn/neuron.hpp"

namespace rsn {

template <class T>
using MatT = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using VecT = Eigen::Matrix<T, Eigen::Dynamic, 1>;

// Projections are stored input-major: y = x * W, so column c of W is neuron c.
template <class T>
struct LayerParams {
  VecT<T> attn_norm;
  MatT<T> wq, wk, wv, wo;
  VecT<T> ffn_norm;
  MatT<T> w_gate, w_up, w_down;
};

template <class T>
struct Params {
  MatT<T> tok_emb;  // vocab x d_model
  MatT<T> pos_emb;  // max_seq_len x d_model
  std::vector<LayerParams<T>> layers;
  VecT<T> final_norm;
  MatT<T> lm_head;  // d_model x vocab

  static Params zeros(const ModelConfig& c) {
    Params p;
    const Eigen::Index d = c.d_model, f = c.d_ff, v = c.vocab_size;
    p.tok_emb = MatT<T>::Zero(v, d);
    p.pos_emb = MatT<T>::Zero(c.max_seq_len, d);
    p.layers.resize(c.n_layers);
    for (auto& l : p.layers) {
      l.attn_norm = VecT<T>::Zero(d);
      l.wq = MatT<T>::Zero(d, d);
      l.wk = MatT<T>::Zero(d, d);
      l.wv = MatT<T>::Zero(d, d);
      l.wo = MatT<T>::Zero(d, d);
      l.ffn_norm = VecT<T>::Zero(d);
      l.w_gate = MatT<T>::Zero(d, f);
      l.w_up = MatT<T>::Zero(d, f);
      l.w_down = MatT<T>::Zero(f, d);
    }
    p.final_norm = VecT<T>::Zero(d);
    p.lm_head = MatT<T>::Zero(d, v);
    return p;
  }

  // Visits every tensor in checkpoint order:
  // tok_emb, pos_emb, per layer {attn_norm, wq, wk, wv, wo, ffn_norm,
  // w_gate, w_up, w_down}, final_norm, lm_head.
  template <class F>
  void visit(F&& f) {
    f("tok_emb", tok_emb.data(), tok_emb.size());
    f("pos_emb", pos_emb.data(), pos_emb.size());
    for (auto& l : layers) {
      f("attn_norm", l.attn_norm.data(), l.attn_norm.size());
      f("wq", l.wq.data(), l.wq.size());
      f("wk", l.wk.data(), l.wk.size());
      f("wv", l.wv.data(), l.wv.size());
      f("wo", l.wo.data(), l.wo.size());
      f("ffn_norm", l.ffn_norm.data(), l.ffn_norm.size());
      f("w_gate", l.w_gate.data(), l.w_gate.size());
      f("w_up", l.w_up.data(), l.w_up.size());
      f("w_down", l.w_down.data(), l.w_down.size());
    }
    f("final_norm", final_norm.data(), final_norm.size());
    f("lm_head", lm_head.data(), lm_head.size());
  }

  template <class F>
  void visit(F&& f) const {
    const_cast<Params*>(this)->visit([&](std::string_view name, T* data, Eigen::Index n) {
      f(name, static_cast<const T*>(data), n);
    });
  }

  std::size_t size() const {
    std::size_t n = 0;
    visit([&](std::string_view, const T*, Eigen::Index k) { n += static_cast<std::size_t>(k); });
    return n;
  }

  template <class U>
  Params<U> cast() const {
    Params<U> out;
    out.tok_emb = tok_emb.template cast<U>();
    out.pos_emb = pos_emb.template cast<U>();
    out.layers.resize(layers.size());
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const auto& a = layers[i];
      auto& b = out.layers[i];
      b.attn_norm = a.attn_norm.template cast<U>();
      b.wq = a.wq.template cast<U>();
      b.wk = a.wk.template cast<U>();
      b.wv = a.wv.template cast<U>();
      b.wo = a.wo.template cast<U>();
      b.ffn_norm = a.ffn_norm.template cast<U>();
      b.w_gate = a.w_gate.template cast<U>();
      b.w_up = a.w_up.template cast<U>();
      b.w_down = a.w_down.template cast<U>();
    }
    out.final_norm = final_norm.template cast<U>();
    out.lm_head = lm_head.template cast<U>();
    return out;
  }
};

}  // namespace rsn
