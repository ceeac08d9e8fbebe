#pragma once

#include <cmath>
#include <cstdint>
#include <type_traits>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "focuspar/hash.hpp"
#include "focuspar/losses.hpp"

namespace focuspar {

struct ModelConfig {
    int dim = 64;            // D, visual width
    int text_dim = 64;       // D_t
    int patch = 8;
    int vision_layers = 2;   // L_v
    int vision_heads = 4;
    int text_layers = 2;     // L_t
    int text_heads = 4;
    int global_tokens = 8;   // K_g
    int local_tokens = 4;    // K_l, one per subset
    int subsets = 4;         // r
    int prompts = 4;         // m
    int cross_heads = 8;
    double tau_mix = 1.0;
    double logit_scale_init = 1.0 / 0.07;
    bool shared_prompts = false;
    bool mix_sees_mix = false;
    bool patch_sees_mix = false;
    int global_subset_count = -1;
};

/// Which graph components exist; switched-off parts are not allocated.
struct Ablation {
    bool rlp = true;   // learnable prompts + region word in the template
    bool mgmt = true;  // mix tokens; off = mean-pooled patches broadcast to K rows
    bool avfe = true;  // cross-attention; off = mean of M_out against each text feature
    bool racl = true;
};

struct TrainConfig {
    std::string data_dir = "data";
    int holdout = -1;  // -1: take the dataset header's seen/unseen split
    std::uint64_t seed = 1;
    int epochs = 8;
    int batch_size = 32;
    double lr = 2e-3;
    int warmup_steps = 40;
    double weight_decay = 1.0;  // decoupled, scaled by the scheduled rate
    double beta1 = 0.9;
    double beta2 = 0.999;
    bool freeze_text = false;
    LossWeights loss;
    Ablation ablation;
    ModelConfig model;
    double threshold = 0.0;          // decision threshold on the cosine scale
    bool calibrate_threshold = false;
};

/// Calls `f(key, field)` for every configurable field, using flat dotted keys.
template <class Cfg, class F>
void visit_fields(Cfg& c, F&& f) {
    f("data.dir", c.data_dir);
    f("data.holdout", c.holdout);
    f("train.seed", c.seed);
    f("train.epochs", c.epochs);
    f("train.batch_size", c.batch_size);
    f("train.lr", c.lr);
    f("train.warmup_steps", c.warmup_steps);
    f("train.weight_decay", c.weight_decay);
    f("train.beta1", c.beta1);
    f("train.beta2", c.beta2);
    f("train.freeze_text", c.freeze_text);
    f("loss.sim", c.loss.sim);
    f("loss.racl", c.loss.racl);
    f("loss.v2t", c.loss.v2t);
    f("loss.t2v", c.loss.t2v);
    f("ablation.rlp", c.ablation.rlp);
    f("ablation.mgmt", c.ablation.mgmt);
    f("ablation.avfe", c.ablation.avfe);
    f("ablation.racl", c.ablation.racl);
    f("model.dim", c.model.dim);
    f("model.text_dim", c.model.text_dim);
    f("model.patch", c.model.patch);
    f("model.vision_layers", c.model.vision_layers);
    f("model.vision_heads", c.model.vision_heads);
    f("model.text_layers", c.model.text_layers);
    f("model.text_heads", c.model.text_heads);
    f("model.global_tokens", c.model.global_tokens);
    f("model.local_tokens", c.model.local_tokens);
    f("model.subsets", c.model.subsets);
    f("model.prompts", c.model.prompts);
    f("model.cross_heads", c.model.cross_heads);
    f("model.tau_mix", c.model.tau_mix);
    f("model.logit_scale_init", c.model.logit_scale_init);
    f("model.shared_prompts", c.model.shared_prompts);
    f("model.mix_sees_mix", c.model.mix_sees_mix);
    f("model.patch_sees_mix", c.model.patch_sees_mix);
    f("model.global_subset_count", c.model.global_subset_count);
    f("eval.threshold", c.threshold);
    f("eval.calibrate_threshold", c.calibrate_threshold);
}

inline nlohmann::json to_json(const TrainConfig& cfg) {
    nlohmann::json j = nlohmann::json::object();
    visit_fields(cfg, [&](const char* key, const auto& field) { j[key] = field; });
    return j;
}

namespace detail {

inline void flatten(const nlohmann::json& j, const std::string& prefix, nlohmann::json& out) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
        if (it->is_object()) flatten(*it, key, out);
        else out[key] = *it;
    }
}

template <class V>
void assign(V& field, const nlohmann::json& v, const std::string& key) {
    try {
        if constexpr (std::is_same_v<V, bool>) {
            if (v.is_boolean()) field = v.get<bool>();
            else if (v.is_number_integer()) field = v.get<int>() != 0;
            else throw ValidationError("config key " + key + " expects a boolean");
        } else if constexpr (std::is_integral_v<V>) {
            if (!v.is_number_integer() && !v.is_number_unsigned())
                throw ValidationError("config key " + key + " expects an integer");
            field = v.get<V>();
        } else {
            field = v.get<V>();
        }
    } catch (const nlohmann::json::exception&) {
        throw ValidationError("config key " + key + " has the wrong type");
    }
}

}  // namespace detail

/// Applies a JSON object (nested objects or flat dotted keys). Unknown keys are rejected.
inline void apply_json(TrainConfig& cfg, const nlohmann::json& j) {
    require(j.is_object(), "config must be a JSON object");
    nlohmann::json flat = nlohmann::json::object();
    detail::flatten(j, "", flat);
    for (auto it = flat.begin(); it != flat.end(); ++it) {
        bool found = false;
        visit_fields(cfg, [&](const char* key, auto& field) {
            if (it.key() == key) {
                detail::assign(field, *it, key);
                found = true;
            }
        });
        if (!found) throw ValidationError("unknown config key: " + it.key());
    }
}

/// Applies "key=value"; the value is parsed as JSON, falling back to a bare string.
inline void apply_override(TrainConfig& cfg, const std::string& kv) {
    const auto eq = kv.find('=');
    require(eq != std::string::npos && eq > 0, "override must be key=value: " + kv);
    const std::string key = kv.substr(0, eq), raw = kv.substr(eq + 1);
    nlohmann::json v;
    try {
        v = nlohmann::json::parse(raw);
    } catch (const nlohmann::json::exception&) {
        v = raw;
    }
    apply_json(cfg, nlohmann::json{{key, v}});
}

inline void validate(const TrainConfig& c) {
    const auto& m = c.model;
    require(c.epochs >= 0 && c.batch_size >= 1, "train: epochs >= 0 and batch_size >= 1 required");
    require(c.lr >= 0 && c.warmup_steps >= 0, "train: lr and warmup must be non-negative");
    require(m.dim > 0 && m.text_dim > 0 && m.patch > 0, "model: dims must be positive");
    require(m.dim % m.vision_heads == 0 && m.text_dim % m.text_heads == 0 && m.text_dim % m.cross_heads == 0,
            "model: head counts must divide their widths");
    require(m.global_tokens >= 0 && m.subsets >= 1 && m.local_tokens == m.subsets,
            "model: local_tokens must equal subsets (one local token per subset)");
    require(m.global_tokens + m.local_tokens >= 1, "model: need at least one mix token");
    require(m.prompts >= 0 && m.tau_mix > 0 && m.logit_scale_init > 0, "model: prompts >= 0, tau_mix > 0");
    for (double w : {c.loss.sim, c.loss.racl, c.loss.v2t, c.loss.t2v})
        require(w >= 0 && std::isfinite(w), "loss weights must be finite and non-negative");
}

/// Hash of everything that fixes the parameter layout and its meaning.
inline Digest model_hash(const TrainConfig& cfg, const nlohmann::json& schema_json) {
    nlohmann::json j = to_json(cfg);
    nlohmann::json keep = nlohmann::json::object();
    for (auto it = j.begin(); it != j.end(); ++it)
        if (it.key().rfind("model.", 0) == 0 || it.key().rfind("ablation.", 0) == 0) keep[it.key()] = *it;
    keep["schema"] = schema_json;
    return sha256(keep.dump());
}

}  // namespace focuspar
