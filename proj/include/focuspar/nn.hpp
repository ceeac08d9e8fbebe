#pragma once

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "focuspar/ops.hpp"

namespace focuspar::nn {

using Rng = std::mt19937_64;

template <class T>
Matrix<T> normal_init(std::size_t rows, std::size_t cols, double stddev, Rng& rng) {
    std::normal_distribution<double> dist(0.0, stddev);
    Matrix<T> m(rows, cols);
    for (auto& v : m.storage()) v = static_cast<T>(dist(rng));
    return m;
}

template <class T>
struct Linear {
    Parameter<T>* weight = nullptr;  // in×out
    Parameter<T>* bias = nullptr;    // 1×out

    Linear() = default;
    Linear(ParamStore<T>& store, const std::string& name, std::size_t in, std::size_t out, Rng& rng) {
        weight = &store.add(name + ".weight", normal_init<T>(in, out, 1.0 / std::sqrt(double(in)), rng));
        bias = &store.add(name + ".bias", Matrix<T>(1, out));
    }

    std::size_t in_features() const { return weight->value.rows(); }
    std::size_t out_features() const { return weight->value.cols(); }

    Var<T> operator()(Tape<T>& tp, Var<T> x) const { return ops::affine(x, tp.param(*weight), tp.param(*bias)); }
};

template <class T>
struct LayerNorm {
    Parameter<T>* gain = nullptr;
    Parameter<T>* bias = nullptr;

    LayerNorm() = default;
    LayerNorm(ParamStore<T>& store, const std::string& name, std::size_t dim) {
        gain = &store.add(name + ".gain", Matrix<T>(1, dim, T(1)));
        bias = &store.add(name + ".bias", Matrix<T>(1, dim));
    }

    Var<T> operator()(Tape<T>& tp, Var<T> x) const {
        return ops::layer_norm(x, tp.param(*gain), tp.param(*bias));
    }
};

/// Per-head post-softmax weights plus the projected output.
template <class T>
struct AttentionResult {
    Var<T> output;
    std::vector<Var<T>> weights;  // one (queries × keys) matrix per head
};

/// Scaled dot-product attention over pre-projected Q, K, V, split into heads by columns.
/// `mask` (queries × keys, true = attendable) applies to every head.
template <class T>
AttentionResult<T> multi_head_attention(Var<T> q, Var<T> k, Var<T> v, std::size_t heads,
                                        const ops::MaskPtr& mask = nullptr) {
    const std::size_t dim = q.cols();
    require(heads > 0 && dim % heads == 0, "attention: head count must divide the attention dim");
    require(k.cols() == dim && v.cols() == dim, "attention: q/k/v width mismatch");
    require(k.rows() == v.rows(), "attention: key/value count mismatch");
    const std::size_t hd = dim / heads;
    const T inv_scale = T(1) / std::sqrt(T(hd));
    AttentionResult<T> res;
    std::vector<Var<T>> outs;
    outs.reserve(heads);
    for (std::size_t h = 0; h < heads; ++h) {
        Var<T> qh = heads == 1 ? q : ops::slice_cols(q, h * hd, hd);
        Var<T> kh = heads == 1 ? k : ops::slice_cols(k, h * hd, hd);
        Var<T> vh = heads == 1 ? v : ops::slice_cols(v, h * hd, hd);
        Var<T> logits = ops::scale(ops::matmul_nt(qh, kh), inv_scale);
        Var<T> w = ops::softmax_rows(logits, mask);
        res.weights.push_back(w);
        outs.push_back(ops::attend(w, vh));
    }
    res.output = heads == 1 ? outs.front() : ops::concat_cols(outs);
    return res;
}

template <class T>
struct MultiHeadAttention {
    Linear<T> q_proj, k_proj, v_proj, out_proj;
    std::size_t heads = 1;

    MultiHeadAttention() = default;
    MultiHeadAttention(ParamStore<T>& store, const std::string& name, std::size_t query_dim, std::size_t kv_dim,
                       std::size_t attn_dim, std::size_t out_dim, std::size_t n_heads, Rng& rng)
        : q_proj(store, name + ".q", query_dim, attn_dim, rng),
          k_proj(store, name + ".k", kv_dim, attn_dim, rng),
          v_proj(store, name + ".v", kv_dim, attn_dim, rng),
          out_proj(store, name + ".out", attn_dim, out_dim, rng),
          heads(n_heads) {
        require(n_heads > 0 && attn_dim % n_heads == 0, name + ": heads must divide attention dim");
    }

    AttentionResult<T> operator()(Tape<T>& tp, Var<T> queries, Var<T> keys_values,
                                  const ops::MaskPtr& mask = nullptr) const {
        auto res = multi_head_attention(q_proj(tp, queries), k_proj(tp, keys_values), v_proj(tp, keys_values), heads,
                                        mask);
        res.output = out_proj(tp, res.output);
        return res;
    }
};

/// Pre-norm transformer block: x + Attn(LN(x)), then x + MLP(LN(x)).
template <class T>
struct TransformerBlock {
    LayerNorm<T> ln1, ln2;
    MultiHeadAttention<T> attn;
    Linear<T> fc1, fc2;

    TransformerBlock() = default;
    TransformerBlock(ParamStore<T>& store, const std::string& name, std::size_t dim, std::size_t heads,
                     std::size_t mlp_ratio, Rng& rng)
        : ln1(store, name + ".ln1", dim),
          ln2(store, name + ".ln2", dim),
          attn(store, name + ".attn", dim, dim, dim, dim, heads, rng),
          fc1(store, name + ".fc1", dim, dim * mlp_ratio, rng),
          fc2(store, name + ".fc2", dim * mlp_ratio, dim, rng) {}

    Var<T> operator()(Tape<T>& tp, Var<T> x, const ops::MaskPtr& mask = nullptr) const {
        Var<T> h = ln1(tp, x);
        x = ops::add(x, attn(tp, h, h, mask).output);
        Var<T> m = fc2(tp, ops::gelu(fc1(tp, ln2(tp, x))));
        return ops::add(x, m);
    }
};

}  // namespace focuspar::nn
