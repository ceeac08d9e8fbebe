#pragma once

#include <memory>
#include <string>
#include <vector>

#include "focuspar/nn.hpp"

namespace focuspar {

/// Half-open range [begin, end) of patch indices.
struct PatchRange {
    std::size_t begin = 0;
    std::size_t end = 0;
    std::size_t size() const { return end - begin; }
    bool contains(std::size_t i) const { return i >= begin && i < end; }
    friend bool operator==(const PatchRange&, const PatchRange&) = default;
};

/// r contiguous row-major ranges whose sizes differ by at most one; the
/// remainder goes to the leading subsets.
inline std::vector<PatchRange> partition_patches(std::size_t num_patches, std::size_t subsets) {
    require(subsets >= 1, "partition_patches: need at least one subset");
    require(subsets <= num_patches, "partition_patches: more subsets (" + std::to_string(subsets) + ") than patches (" +
                                        std::to_string(num_patches) + ")");
    const std::size_t base = num_patches / subsets, extra = num_patches % subsets;
    std::vector<PatchRange> out;
    std::size_t at = 0;
    for (std::size_t i = 0; i < subsets; ++i) {
        const std::size_t n = base + (i < extra ? 1 : 0);
        out.push_back({at, at + n});
        at += n;
    }
    return out;
}

struct MaskOptions {
    bool mix_sees_mix = false;    // alternative reading: mix tokens attend to each other
    bool patch_sees_mix = false;  // alternative: patches attend to mix tokens
    int global_subset_count = -1; // global tokens see the first n subsets; -1 = all
};

/// (K+S)×(K+S) attendability mask over the sequence [M_g; M_l; P].
class AttentionMask {
public:
    AttentionMask(std::size_t num_global, std::size_t num_local, std::size_t num_patches,
                  const std::vector<PatchRange>& partition, const MaskOptions& opt = {})
        : kg_(num_global), kl_(num_local), s_(num_patches) {
        require(num_local == partition.size(), "attention mask: local token count (" + std::to_string(num_local) +
                                                   ") must equal partition size (" + std::to_string(partition.size()) + ")");
        const std::size_t k = kg_ + kl_, n = k + s_;
        auto m = std::make_shared<Matrix<unsigned char>>(n, n);
        std::size_t global_end = s_;
        if (opt.global_subset_count >= 0) {
            require(!partition.empty() && static_cast<std::size_t>(opt.global_subset_count) >= 1 &&
                        static_cast<std::size_t>(opt.global_subset_count) <= partition.size(),
                    "attention mask: global_subset_count out of range");
            global_end = partition[static_cast<std::size_t>(opt.global_subset_count) - 1].end;
        }
        for (std::size_t g = 0; g < kg_; ++g)
            for (std::size_t j = 0; j < global_end; ++j) (*m)(g, k + j) = 1;
        for (std::size_t i = 0; i < kl_; ++i)
            for (std::size_t j = partition[i].begin; j < partition[i].end; ++j) {
                require(j < s_, "attention mask: partition exceeds patch count");
                (*m)(kg_ + i, k + j) = 1;
            }
        for (std::size_t p = 0; p < s_; ++p)
            for (std::size_t j = 0; j < s_; ++j) (*m)(k + p, k + j) = 1;
        if (opt.mix_sees_mix)
            for (std::size_t a = 0; a < k; ++a)
                for (std::size_t b = 0; b < k; ++b) (*m)(a, b) = 1;
        if (opt.patch_sees_mix)
            for (std::size_t p = 0; p < s_; ++p)
                for (std::size_t b = 0; b < k; ++b) (*m)(k + p, b) = 1;
        for (std::size_t r = 0; r < n; ++r) {
            bool any = false;
            for (std::size_t c = 0; c < n; ++c) any = any || (*m)(r, c);
            require(any, "attention mask: row " + std::to_string(r) + " attends to nothing");
        }
        mask_ = std::move(m);
    }

    std::size_t num_mix() const noexcept { return kg_ + kl_; }
    std::size_t num_global() const noexcept { return kg_; }
    std::size_t num_local() const noexcept { return kl_; }
    std::size_t num_patches() const noexcept { return s_; }
    std::size_t size() const noexcept { return kg_ + kl_ + s_; }
    bool operator()(std::size_t r, std::size_t c) const { return (*mask_)(r, c) != 0; }
    const ops::MaskPtr& ptr() const noexcept { return mask_; }

private:
    std::size_t kg_, kl_, s_;
    ops::MaskPtr mask_;
};

inline AttentionMask build_attention_mask(std::size_t num_global, std::size_t num_local, std::size_t num_patches,
                                          const std::vector<PatchRange>& partition, const MaskOptions& opt = {}) {
    return AttentionMask(num_global, num_local, num_patches, partition, opt);
}

template <class T>
struct MixTokenOutput {
    Var<T> mix;      // K×D (M_out)
    Var<T> patches;  // S×D, patch stream after the last block
};

/// Learnable global/local mix tokens prepended to the patch tokens and run
/// through masked pre-norm transformer blocks.
template <class T>
struct MixTokenEncoder {
    Parameter<T>* global_tokens = nullptr;  // K_g×D
    Parameter<T>* local_tokens = nullptr;   // K_l×D
    std::vector<nn::TransformerBlock<T>> blocks;
    nn::LayerNorm<T> ln_post;
    std::size_t num_global = 0, num_local = 0;

    MixTokenEncoder() = default;
    MixTokenEncoder(ParamStore<T>& store, std::size_t k_global, std::size_t k_local, std::size_t dim, int layers,
                    int heads, nn::Rng& rng, bool with_mix_tokens = true)
        : num_global(with_mix_tokens ? k_global : 0), num_local(with_mix_tokens ? k_local : 0) {
        if (num_global > 0) global_tokens = &store.add("mgmt.global_tokens", nn::normal_init<T>(num_global, dim, 1.0, rng));
        if (num_local > 0) local_tokens = &store.add("mgmt.local_tokens", nn::normal_init<T>(num_local, dim, 1.0, rng));
        for (int l = 0; l < layers; ++l)
            blocks.emplace_back(store, "mgmt.block" + std::to_string(l), dim, static_cast<std::size_t>(heads), 4, rng);
        ln_post = nn::LayerNorm<T>(store, "mgmt.ln_post", dim);
    }

    std::size_t num_mix() const { return num_global + num_local; }

    /// Runs [M_g; M_l; P] through the blocks; M_out is the first K rows after
    /// the final layer norm.
    MixTokenOutput<T> operator()(Tape<T>& tp, Var<T> patch_tokens, const AttentionMask& mask) const {
        require(mask.num_global() == num_global && mask.num_local() == num_local &&
                    mask.num_patches() == patch_tokens.rows(),
                "mgmt_forward: mask shape does not match tokens");
        std::vector<Var<T>> parts;
        if (global_tokens) parts.push_back(tp.param(*global_tokens));
        if (local_tokens) parts.push_back(tp.param(*local_tokens));
        parts.push_back(patch_tokens);
        Var<T> x = parts.size() == 1 ? parts.front() : ops::concat_rows(parts);
        for (const auto& b : blocks) x = b(tp, x, mask.ptr());
        x = ln_post(tp, x);
        if (!x.value().all_finite()) throw NumericalError("mgmt_forward: non-finite activations");
        const std::size_t k = num_mix();
        MixTokenOutput<T> out;
        out.patches = ops::slice_rows(x, k, patch_tokens.rows());
        if (k > 0) out.mix = ops::slice_rows(x, 0, k);
        return out;
    }
};

/// S_mix(ij) = σ(cos(m_i, m_j)/τ), clamped to [ε, 1−ε].
template <class T>
Var<T> mix_similarity(Var<T> mix_out, T tau = T(1), T eps = T(1e-6)) {
    Var<T> n = ops::l2_normalize_rows(mix_out);
    Var<T> cos = ops::matmul_nt(n, n);
    return ops::clamp(ops::sigmoid(ops::scale(cos, T(1) / tau)), eps, T(1) - eps);
}

}  // namespace focuspar
