#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "focuspar/avfe.hpp"
#include "focuspar/config.hpp"
#include "focuspar/encoders.hpp"
#include "focuspar/losses.hpp"
#include "focuspar/mgmt.hpp"

namespace focuspar {

/// Text side evaluated once per batch and shared by every image.
template <class T>
struct TextContext {
    std::vector<int> ids;  // attribute id of each text row
    Var<T> text;           // |ids|×D_t
    Var<T> queries;        // projected cross-attention queries (AVFE only)
    Var<T> logit_scale;    // 1×1, exp of the stored log-scale
};

template <class T>
struct ImageForward {
    Var<T> scores;                  // 1×|ids|
    std::optional<Var<T>> mix;      // M_out, K×D
    std::optional<Var<T>> s_mix;    // K×K
    std::optional<Var<T>> pooled;   // Ḡ, |ids|×K
    std::optional<Var<T>> s_attn;   // |ids|×|ids|
};

template <class T>
struct BatchOutput {
    Var<T> total;
    LossTerms<T> terms;
    LossReport report;
    Var<T> scores;  // B×|ids|
};

/// The full attribute recognizer: patch embedding, mix-token encoder,
/// prompt-conditioned text encoder, attribute-guided cross-attention.
/// Components switched off by the ablation flags are never allocated.
template <class T>
class FocusModel {
public:
    FocusModel(const TrainConfig& cfg, const AttributeSchema& schema, int height, int width)
        : cfg_(cfg), schema_(schema), vocab_(Vocabulary::from_schema(schema)) {
        validate(cfg);
        const auto& m = cfg.model;
        const auto& ab = cfg.ablation;
        nn::Rng rng(cfg.seed);
        prompt_opt_ = PromptOptions{ab.rlp ? m.prompts : 0, m.shared_prompts, ab.rlp};

        patch_embed_ = PatchEmbed<T>(store_, m.patch, height, width, static_cast<std::size_t>(m.dim), rng);
        const std::size_t s = patch_embed_.num_patches();
        partition_ = partition_patches(s, static_cast<std::size_t>(m.subsets));
        const std::size_t kg = ab.mgmt ? static_cast<std::size_t>(m.global_tokens) : 0;
        const std::size_t kl = ab.mgmt ? static_cast<std::size_t>(m.local_tokens) : 0;
        mask_.emplace(kg, kl, s, ab.mgmt ? partition_ : std::vector<PatchRange>{},
                      MaskOptions{m.mix_sees_mix, m.patch_sees_mix, m.global_subset_count});
        encoder_ = MixTokenEncoder<T>(store_, kg, kl, static_cast<std::size_t>(m.dim), m.vision_layers, m.vision_heads,
                                      rng, ab.mgmt);

        bank_ = PromptBank<T>(store_, schema.size(), prompt_opt_, static_cast<std::size_t>(m.text_dim), rng);
        const std::size_t max_len = static_cast<std::size_t>(prompt_opt_.prompts_per_attr) + 8;
        text_ = TextEncoder<T>(store_, vocab_.size(), max_len, static_cast<std::size_t>(m.text_dim), m.text_layers,
                               m.text_heads, rng);
        if (ab.avfe)
            cross_ = CrossAttention<T>(store_, static_cast<std::size_t>(m.text_dim), static_cast<std::size_t>(m.dim),
                                       static_cast<std::size_t>(m.cross_heads), rng);
        else
            visual_proj_ = nn::Linear<T>(store_, "visual_proj", static_cast<std::size_t>(m.dim),
                                         static_cast<std::size_t>(m.text_dim), rng);
        logit_scale_ = &store_.add("logit_scale", Matrix<T>(1, 1, T(std::log(m.logit_scale_init))));
    }

    FocusModel(const FocusModel&) = delete;
    FocusModel& operator=(const FocusModel&) = delete;

    ParamStore<T>& params() noexcept { return store_; }
    const ParamStore<T>& params() const noexcept { return store_; }
    const TrainConfig& config() const noexcept { return cfg_; }
    const AttributeSchema& schema() const noexcept { return schema_; }
    const Vocabulary& vocab() const noexcept { return vocab_; }
    const PromptOptions& prompt_options() const noexcept { return prompt_opt_; }
    const AttentionMask& mask() const { return *mask_; }
    const std::vector<PatchRange>& partition() const noexcept { return partition_; }
    std::size_t num_mix() const { return static_cast<std::size_t>(cfg_.model.global_tokens + cfg_.model.local_tokens); }
    int patch_size() const noexcept { return cfg_.model.patch; }

    /// Seen attributes get their own prompt; anything else is routed through
    /// the region-averaged unseen prompt.
    PromptSequence prompt_for(int id, const std::vector<int>& seen) const {
        const bool is_seen = std::find(seen.begin(), seen.end(), id) != seen.end();
        return is_seen ? build_prompt(schema_.at(id), vocab_, prompt_opt_)
                       : unseen_prompt(schema_.at(id), schema_, seen, vocab_, prompt_opt_);
    }

    TextContext<T> text_context(Tape<T>& tp, const std::vector<int>& ids, const std::vector<int>& seen) const {
        std::vector<PromptSequence> seqs;
        for (int id : ids) seqs.push_back(prompt_for(id, seen));
        TextContext<T> ctx;
        ctx.ids = ids;
        ctx.text = text_.encode_batch(tp, seqs, bank_);
        if (cfg_.ablation.avfe) ctx.queries = cross_.queries(tp, ctx.text);
        ctx.logit_scale = ops::exp(tp.param(*logit_scale_));
        return ctx;
    }

    /// M_out for one image (broadcast mean patch feature when MGMT is off).
    MixTokenOutput<T> encode_image(Tape<T>& tp, const Matrix<T>& patches) const {
        auto out = encoder_(tp, patch_embed_(tp, patches), *mask_);
        if (!cfg_.ablation.mgmt) out.mix = ops::broadcast_rows(ops::mean_rows(out.patches), num_mix());
        return out;
    }

    ImageForward<T> forward_image(Tape<T>& tp, const Matrix<T>& patches, const TextContext<T>& ctx) const {
        ImageForward<T> f;
        Var<T> mix = encode_image(tp, patches).mix;
        f.mix = mix;
        if (cfg_.ablation.mgmt) f.s_mix = mix_similarity(mix, T(cfg_.model.tau_mix));
        if (cfg_.ablation.avfe) {
            auto ca = cross_.attend(tp, ctx.queries, mix);
            f.scores = predict_scores(ca.features, ctx.text, ctx.logit_scale);
            f.pooled = ca.maps.pooled();
            f.s_attn = attn_similarity(*f.pooled);
        } else {
            Var<T> feat = visual_proj_(tp, ops::mean_rows(mix));
            f.scores = predict_scores_pooled(feat, ctx.text, ctx.logit_scale);
        }
        return f;
    }

    /// Effective weights after the ablation flags.
    LossWeights effective_weights(LossWeights w) const {
        if (!cfg_.ablation.mgmt) w.sim = 0;
        if (!cfg_.ablation.avfe || !cfg_.ablation.racl) w.racl = 0;
        return w;
    }

    /// Total training objective over a batch. `labels` is B×|ids| (0/1), the
    /// columns following `ids`; `seen` decides prompt routing.
    BatchOutput<T> batch_loss(Tape<T>& tp, const std::vector<const Matrix<T>*>& images, const Matrix<T>& labels,
                              const std::vector<int>& ids, const std::vector<int>& seen,
                              std::optional<LossWeights> weights = std::nullopt) const {
        require(!images.empty() && labels.rows() == images.size() && labels.cols() == ids.size(),
                "batch_loss: labels must be batch x attributes");
        const LossWeights w = effective_weights(weights.value_or(cfg_.loss));
        const TextContext<T> ctx = text_context(tp, ids, seen);
        const Matrix<T> blocks = block_matrix<T>(schema_, ids);
        std::vector<Var<T>> rows, sims, racls;
        for (const auto* img : images) {
            auto f = forward_image(tp, *img, ctx);
            rows.push_back(f.scores);
            if (f.s_mix) sims.push_back(sim_loss(*f.s_mix));
            if (f.s_attn) racls.push_back(racl_loss(*f.s_attn, blocks));
        }
        BatchOutput<T> out;
        out.scores = ops::concat_rows(rows);
        auto zero = [&] { return tp.constant(Matrix<T>(1, 1)); };
        out.terms.sim = sims.empty() ? zero() : ops::mean_of(sims);
        out.terms.racl = racls.empty() ? zero() : ops::mean_of(racls);
        auto c = m2m_contrastive(out.scores, labels);
        out.terms.v2t = c.v2t;
        out.terms.t2v = c.t2v;
        auto [total, report] = total_loss(out.terms, w);
        out.total = total;
        out.report = report;
        return out;
    }

private:
    TrainConfig cfg_;
    AttributeSchema schema_;
    Vocabulary vocab_;
    PromptOptions prompt_opt_;
    ParamStore<T> store_;
    PatchEmbed<T> patch_embed_;
    std::vector<PatchRange> partition_;
    std::optional<AttentionMask> mask_;
    MixTokenEncoder<T> encoder_;
    PromptBank<T> bank_;
    TextEncoder<T> text_;
    CrossAttention<T> cross_;
    nn::Linear<T> visual_proj_;
    Parameter<T>* logit_scale_ = nullptr;
};

}  // namespace focuspar
