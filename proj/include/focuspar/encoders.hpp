#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "focuspar/nn.hpp"
#include "focuspar/schema.hpp"
#include "focuspar/synth.hpp"

namespace focuspar {

// Patch embedding ------------------------------------------------------------

/// Non-overlapping patch×patch tiles in row-major tile order; each tile is
/// flattened (y, x, channel) and scaled from [0,255] to [-1,1].
template <class T>
Matrix<T> extract_patches(const Image& img, int patch) {
    require(patch > 0 && img.height % patch == 0 && img.width % patch == 0,
            "patchify: image " + std::to_string(img.height) + "x" + std::to_string(img.width) +
                " not divisible by patch size " + std::to_string(patch));
    const int gy = img.height / patch, gx = img.width / patch;
    const std::size_t dim = static_cast<std::size_t>(patch) * patch * 3;
    Matrix<T> out(static_cast<std::size_t>(gy) * gx, dim);
    for (int ty = 0; ty < gy; ++ty)
        for (int tx = 0; tx < gx; ++tx) {
            auto row = out.row(static_cast<std::size_t>(ty) * gx + tx);
            std::size_t k = 0;
            for (int y = 0; y < patch; ++y)
                for (int x = 0; x < patch; ++x) {
                    const auto* px = img.at(ty * patch + y, tx * patch + x);
                    for (int c = 0; c < 3; ++c) row[k++] = T(px[c]) / T(127.5) - T(1);
                }
        }
    return out;
}

template <class T>
struct PatchEmbed {
    nn::Linear<T> proj;
    Parameter<T>* pos = nullptr;  // S×D
    int patch = 8;

    PatchEmbed() = default;
    PatchEmbed(ParamStore<T>& store, int patch_size, int height, int width, std::size_t dim, nn::Rng& rng)
        : patch(patch_size) {
        require(patch_size > 0 && height % patch_size == 0 && width % patch_size == 0,
                "patch size must divide image height and width");
        const std::size_t s = static_cast<std::size_t>(height / patch_size) * (width / patch_size);
        proj = nn::Linear<T>(store, "patch_embed.proj", static_cast<std::size_t>(patch_size) * patch_size * 3, dim, rng);
        pos = &store.add("patch_embed.pos", nn::normal_init<T>(s, dim, 0.2, rng));
    }

    std::size_t num_patches() const { return pos->value.rows(); }

    /// tokens = patches·W + b + pos
    Var<T> operator()(Tape<T>& tp, const Matrix<T>& patches) const {
        require(patches.rows() == num_patches(), "patchify: patch count does not match the embedding");
        return ops::add(proj(tp, tp.constant(patches)), tp.param(*pos));
    }
};

// Vocabulary and prompts -------------------------------------------------------

class Vocabulary {
public:
    Vocabulary() = default;
    explicit Vocabulary(std::vector<std::string> words) : words_(std::move(words)) {
        for (std::size_t i = 0; i < words_.size(); ++i)
            require(index_.emplace(words_[i], static_cast<int>(i)).second, "vocabulary: duplicate word " + words_[i]);
    }

    /// Template words first, then region/category/value words in attribute order.
    static Vocabulary from_schema(const AttributeSchema& schema) {
        std::vector<std::string> words = {"a", "feature", "of", "is", "."};
        auto add = [&](const std::string& w) {
            if (std::find(words.begin(), words.end(), w) == words.end()) words.push_back(w);
        };
        for (const auto& a : schema.attributes()) {
            add(a.region);
            add(a.category);
            add(a.value);
        }
        return Vocabulary(std::move(words));
    }

    std::size_t size() const noexcept { return words_.size(); }
    const std::vector<std::string>& words() const noexcept { return words_; }
    bool contains(const std::string& w) const { return index_.contains(w); }
    int id(const std::string& w) const {
        auto it = index_.find(w);
        if (it == index_.end()) throw ValidationError("word missing from vocabulary: " + w);
        return it->second;
    }

    void save(const std::filesystem::path& path) const {
        std::ofstream f(path);
        if (!f) throw ValidationError("cannot write vocabulary " + path.string());
        for (const auto& w : words_) f << w << '\n';
    }
    static Vocabulary load(const std::filesystem::path& path) {
        std::ifstream f(path);
        if (!f) throw ValidationError("cannot read vocabulary " + path.string());
        std::vector<std::string> words;
        for (std::string line; std::getline(f, line);)
            if (!line.empty()) words.push_back(line);
        return Vocabulary(std::move(words));
    }

    friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.words_ == b.words_; }

private:
    std::vector<std::string> words_;
    std::unordered_map<std::string, int> index_;
};

/// "a {region} feature of {category} is {value} ." — the region slot is
/// dropped for the no-region-prompt ablation.
inline std::vector<std::string> template_words(const AttributeDef& a, bool with_region = true) {
    if (with_region) return {"a", a.region, "feature", "of", a.category, "is", a.value, "."};
    return {"a", "feature", "of", a.category, "is", a.value, "."};
}

/// Token sequence description: a learnable block (element-wise mean of the
/// listed prompt-bank blocks, absent when m = 0) followed by word ids.
struct PromptSequence {
    std::vector<int> block_sources;
    std::vector<int> word_ids;

    friend bool operator==(const PromptSequence&, const PromptSequence&) = default;
};

struct PromptOptions {
    int prompts_per_attr = 4;  // m
    bool shared_prompts = false;
    bool region_in_template = true;
};

inline PromptSequence build_prompt(const AttributeDef& attr, const Vocabulary& vocab, const PromptOptions& opt) {
    PromptSequence seq;
    if (opt.prompts_per_attr > 0) seq.block_sources = {opt.shared_prompts ? 0 : attr.id};
    for (const auto& w : template_words(attr, opt.region_in_template)) seq.word_ids.push_back(vocab.id(w));
    return seq;
}

/// Prompt for an attribute never trained on: its learnable block is the mean
/// of the blocks of the seen attributes in its region.
inline PromptSequence unseen_prompt(const AttributeDef& attr, const AttributeSchema& schema,
                                    const std::vector<int>& seen, const Vocabulary& vocab, const PromptOptions& opt) {
    std::vector<int> sources;
    for (int id : seen)
        if (schema.at(id).region == attr.region && id != attr.id) sources.push_back(id);
    require(!sources.empty(), "unseen_prompt: region " + attr.region + " has no seen attributes");
    PromptSequence seq = build_prompt(attr, vocab, opt);
    if (opt.prompts_per_attr > 0 && !opt.shared_prompts) seq.block_sources = std::move(sources);
    return seq;
}

template <class T>
struct PromptBank {
    Parameter<T>* bank = nullptr;  // (blocks·m)×D_t
    int m = 0;
    std::size_t blocks = 0;

    PromptBank() = default;
    PromptBank(ParamStore<T>& store, std::size_t num_attrs, const PromptOptions& opt, std::size_t dim, nn::Rng& rng)
        : m(opt.prompts_per_attr), blocks(opt.shared_prompts ? 1 : num_attrs) {
        if (m == 0) return;
        // every block starts from the same draw; training separates them
        const Matrix<T> init = nn::normal_init<T>(static_cast<std::size_t>(m), dim, 0.2, rng);
        Matrix<T> all(blocks * static_cast<std::size_t>(m), dim);
        for (std::size_t b = 0; b < blocks; ++b)
            for (std::size_t r = 0; r < init.rows(); ++r)
                for (std::size_t c = 0; c < dim; ++c) all(b * static_cast<std::size_t>(m) + r, c) = init(r, c);
        bank = &store.add("prompt_bank", std::move(all));
    }

    /// m×D_t block for one sequence (mean over its sources).
    Var<T> block(Tape<T>& tp, const std::vector<int>& sources) const {
        require(bank != nullptr && !sources.empty(), "prompt bank: no block to build");
        Var<T> b = tp.param(*bank);
        std::vector<Var<T>> parts;
        for (int s : sources) {
            require(s >= 0 && static_cast<std::size_t>(s) < blocks, "prompt bank: block index out of range");
            parts.push_back(ops::slice_rows(b, static_cast<std::size_t>(s) * m, static_cast<std::size_t>(m)));
        }
        return parts.size() == 1 ? parts.front() : ops::mean_of(parts);
    }
};

/// Small full-attention transformer over prompt tokens, pooled at the last
/// token (the terminal ".").
template <class T>
struct TextEncoder {
    Parameter<T>* token_embedding = nullptr;  // V×D_t
    Parameter<T>* pos = nullptr;              // max_len×D_t
    std::vector<nn::TransformerBlock<T>> blocks;
    nn::LayerNorm<T> ln_final;
    nn::Linear<T> proj;

    TextEncoder() = default;
    TextEncoder(ParamStore<T>& store, std::size_t vocab_size, std::size_t max_len, std::size_t dim, int layers,
                int heads, nn::Rng& rng) {
        token_embedding = &store.add("text.token_embedding", nn::normal_init<T>(vocab_size, dim, 0.2, rng));
        pos = &store.add("text.pos", nn::normal_init<T>(max_len, dim, 0.2, rng));
        for (int l = 0; l < layers; ++l)
            blocks.emplace_back(store, "text.block" + std::to_string(l), dim, static_cast<std::size_t>(heads), 4, rng);
        ln_final = nn::LayerNorm<T>(store, "text.ln_final", dim);
        proj = nn::Linear<T>(store, "text.proj", dim, dim, rng);
    }

    std::size_t max_len() const { return pos->value.rows(); }

    /// Embedded tokens (before positions) for one prompt.
    Var<T> embed(Tape<T>& tp, const PromptSequence& seq, const PromptBank<T>& bank) const {
        std::vector<Var<T>> parts;
        if (!seq.block_sources.empty()) parts.push_back(bank.block(tp, seq.block_sources));
        if (!seq.word_ids.empty()) parts.push_back(ops::gather_rows(tp.param(*token_embedding), seq.word_ids));
        require(!parts.empty(), "encode_text: empty sequence");
        return parts.size() == 1 ? parts.front() : ops::concat_rows(parts);
    }

    /// tokens (L×D_t) -> 1×D_t feature.
    Var<T> encode(Tape<T>& tp, Var<T> tokens) const {
        const std::size_t len = tokens.rows();
        require(len > 0, "encode_text: empty sequence");
        require(len <= max_len(), "encode_text: sequence longer than positional table");
        Var<T> x = ops::add(tokens, ops::slice_rows(tp.param(*pos), 0, len));
        for (const auto& b : blocks) x = b(tp, x);
        x = ln_final(tp, x);
        return proj(tp, ops::slice_rows(x, len - 1, 1));
    }

    /// One row per prompt; rows are computed independently.
    Var<T> encode_batch(Tape<T>& tp, const std::vector<PromptSequence>& seqs, const PromptBank<T>& bank) const {
        require(!seqs.empty(), "encode_text: no prompts");
        std::vector<Var<T>> rows;
        rows.reserve(seqs.size());
        for (const auto& s : seqs) rows.push_back(encode(tp, embed(tp, s, bank)));
        return ops::concat_rows(rows);
    }
};

}  // namespace focuspar
