#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "focuspar/nn.hpp"

namespace focuspar {

/// Per-attribute attention of the text queries over the mix tokens.
template <class T>
struct AttentionMaps {
    std::vector<Var<T>> heads;  // h matrices, each Z×K, rows sum to 1

    /// Ḡ: Z×K mean over heads.
    Var<T> pooled() const { return heads.size() == 1 ? heads.front() : ops::mean_of(heads); }
};

template <class T>
struct CrossAttentionOutput {
    Var<T> features;  // V_t, Z×D_t
    AttentionMaps<T> maps;
};

/// Text features query the mix tokens. Projections bridge D_t (queries,
/// output) and D (keys, values).
template <class T>
struct CrossAttention {
    nn::MultiHeadAttention<T> attn;

    CrossAttention() = default;
    CrossAttention(ParamStore<T>& store, std::size_t text_dim, std::size_t mix_dim, std::size_t heads, nn::Rng& rng)
        : attn(store, "avfe.attn", text_dim, mix_dim, text_dim, text_dim, heads, rng) {}

    /// Projected queries; image-independent, so callers compute them once per batch.
    Var<T> queries(Tape<T>& tp, Var<T> text) const { return attn.q_proj(tp, text); }

    CrossAttentionOutput<T> attend(Tape<T>& tp, Var<T> projected_queries, Var<T> mix_out) const {
        require(mix_out.cols() == attn.k_proj.in_features(), "cross_attention: mix token width mismatch");
        auto r = nn::multi_head_attention(projected_queries, attn.k_proj(tp, mix_out), attn.v_proj(tp, mix_out),
                                          attn.heads);
        return {attn.out_proj(tp, r.output), AttentionMaps<T>{std::move(r.weights)}};
    }

    CrossAttentionOutput<T> operator()(Tape<T>& tp, Var<T> text, Var<T> mix_out) const {
        require(text.cols() == attn.q_proj.in_features(), "cross_attention: text feature width mismatch");
        return attend(tp, queries(tp, text), mix_out);
    }
};

/// S_Attn(ij) = cos(Ḡ_i, Ḡ_j) clamped to [ε, 1−ε].
template <class T>
Var<T> attn_similarity(Var<T> pooled_maps, T eps = T(1e-6)) {
    Var<T> n = ops::l2_normalize_rows(pooled_maps);
    return ops::clamp(ops::matmul_nt(n, n), eps, T(1) - eps);
}

/// score_j = logit_scale · cos(V_t[j], T[j]); returned as a 1×Z row.
template <class T>
Var<T> predict_scores(Var<T> visual, Var<T> text, Var<T> logit_scale) {
    require(visual.rows() == text.rows() && visual.cols() == text.cols(),
            "predict_scores: visual " + visual.value().shape_str() + " vs text " + text.value().shape_str());
    Var<T> cos = ops::rowwise_dot(ops::l2_normalize_rows(visual), ops::l2_normalize_rows(text));
    return ops::scale_by(ops::transpose(cos), logit_scale);
}

/// Single image feature (1×D_t) against every text row: 1×Z.
template <class T>
Var<T> predict_scores_pooled(Var<T> image_feature, Var<T> text, Var<T> logit_scale) {
    Var<T> cos = ops::matmul_nt(ops::l2_normalize_rows(image_feature), ops::l2_normalize_rows(text));
    return ops::scale_by(cos, logit_scale);
}

}  // namespace focuspar
