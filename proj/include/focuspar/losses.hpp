#pragma once

#include <cmath>
#include <utility>
#include <vector>

#include "focuspar/ops.hpp"
#include "focuspar/schema.hpp"

namespace focuspar {

/// B_ij = 1 iff attributes i and j (restricted to `ids`) share a region.
template <class T>
Matrix<T> block_matrix(const AttributeSchema& schema, const std::vector<int>& ids) {
    Matrix<T> b(ids.size(), ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i)
        for (std::size_t j = 0; j < ids.size(); ++j)
            b(i, j) = schema.at(ids[i]).region == schema.at(ids[j]).region ? T(1) : T(0);
    return b;
}

template <class T>
Matrix<T> block_matrix(const AttributeSchema& schema) {
    return block_matrix<T>(schema, schema.all_ids());
}

/// Mean BCE of the mix-token similarity against the identity.
template <class T>
Var<T> sim_loss(Var<T> s_mix) {
    require(s_mix.rows() == s_mix.cols(), "sim_loss: S_mix must be square");
    return ops::bce_mean(s_mix, Matrix<T>::identity(s_mix.rows()));
}

/// Mean BCE of the attention-map similarity against the region block matrix.
template <class T>
Var<T> racl_loss(Var<T> s_attn, const Matrix<T>& blocks) {
    require(s_attn.rows() == s_attn.cols() && s_attn.value().same_shape(blocks), "racl_loss: shape mismatch");
    return ops::bce_mean(s_attn, blocks);
}

/// Multi-positive InfoNCE along rows: mean over rows with ≥1 positive of
/// −(1/|P_i|) Σ_{j∈P_i} log softmax(s_i/τ)_j. Rows without positives are skipped.
template <class T>
Var<T> multi_positive_nce_rows(Var<T> scores, const Matrix<T>& labels, T tau) {
    const auto& s = scores.value();
    require(s.same_shape(labels), "contrastive: scores/labels shape mismatch");
    require(tau > T(0), "contrastive: temperature must be positive");
    const std::size_t n = s.rows(), z = s.cols();
    Matrix<T> prob(n, z);
    std::vector<T> pos_count(n, T(0));
    std::size_t counted = 0;
    T loss = 0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < z; ++j) pos_count[i] += labels(i, j);
        std::size_t arg = 0;
        for (std::size_t j = 1; j < z; ++j)
            if (s(i, j) > s(i, arg)) arg = j;
        const T mx = s(i, arg) / tau;
        T rest = 0;  // the max term contributes exactly 1; log1p keeps tiny remainders
        for (std::size_t j = 0; j < z; ++j)
            if (j != arg) rest += std::exp(s(i, j) / tau - mx);
        const T tail = std::log1p(rest);
        const T lse = mx + tail;
        for (std::size_t j = 0; j < z; ++j) prob(i, j) = std::exp(s(i, j) / tau - lse);
        if (pos_count[i] <= T(0)) continue;
        ++counted;
        T row = 0;
        for (std::size_t j = 0; j < z; ++j)
            if (labels(i, j) > T(0)) row += labels(i, j) * ((mx - s(i, j) / tau) + tail);
        loss += row / pos_count[i];
    }
    const T denom = counted > 0 ? T(counted) : T(1);
    return scores.tape->record(
        Matrix<T>(1, 1, loss / denom), {scores},
        [scores, labels, prob = std::move(prob), pos_count = std::move(pos_count), denom, tau](
            Tape<T>& tp, const Matrix<T>&, const Matrix<T>& g) {
            auto& gs = tp.grad(scores);
            for (std::size_t i = 0; i < prob.rows(); ++i) {
                if (pos_count[i] <= T(0)) continue;
                for (std::size_t j = 0; j < prob.cols(); ++j)
                    gs(i, j) += g[0] * (prob(i, j) - labels(i, j) / pos_count[i]) / (tau * denom);
            }
        });
}

template <class T>
struct ContrastiveTerms {
    Var<T> v2t;  // softmax over attributes, per image
    Var<T> t2v;  // softmax over images, per attribute
};

/// Many-to-many contrastive pair over a B×Z score matrix.
template <class T>
ContrastiveTerms<T> m2m_contrastive(Var<T> scores, const Matrix<T>& labels, T tau = T(1)) {
    return {multi_positive_nce_rows(scores, labels, tau),
            multi_positive_nce_rows(ops::transpose(scores), labels.transposed(), tau)};
}

struct LossWeights {
    double sim = 1.0;
    double racl = 1.0;
    double v2t = 1.0;
    double t2v = 1.0;
};

struct LossReport {
    double sim = 0, racl = 0, v2t = 0, t2v = 0, total = 0;
    LossWeights weights;
};

template <class T>
struct LossTerms {
    Var<T> sim, racl, v2t, t2v;
};

/// ℒ = w_sim·ℒ_sim + w_racl·ℒ_racl + w_v2t·ℒ_v2t + w_t2v·ℒ_t2v.
template <class T>
std::pair<Var<T>, LossReport> total_loss(const LossTerms<T>& t, const LossWeights& w) {
    LossReport r;
    r.weights = w;
    r.sim = double(t.sim.item());
    r.racl = double(t.racl.item());
    r.v2t = double(t.v2t.item());
    r.t2v = double(t.t2v.item());
    for (double v : {r.sim, r.racl, r.v2t, r.t2v})
        if (!std::isfinite(v)) throw NumericalError("total_loss: non-finite loss term");
    Var<T> total = ops::weighted_sum<T>({t.sim, t.racl, t.v2t, t.t2v},
                                        {T(w.sim), T(w.racl), T(w.v2t), T(w.t2v)});
    r.total = double(total.item());
    return {total, r};
}

}  // namespace focuspar
