#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "focuspar/hash.hpp"
#include "focuspar/schema.hpp"

namespace focuspar {

namespace fs = std::filesystem;

/// 8-bit RGB image, row-major, 3 interleaved channels.
struct Image {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> pixels;

    Image() = default;
    Image(int h, int w) : height(h), width(w), pixels(static_cast<std::size_t>(h) * w * 3, 0) {}

    std::uint8_t* at(int y, int x) { return pixels.data() + (static_cast<std::size_t>(y) * width + x) * 3; }
    const std::uint8_t* at(int y, int x) const {
        return pixels.data() + (static_cast<std::size_t>(y) * width + x) * 3;
    }
    friend bool operator==(const Image&, const Image&) = default;
};

using Rgb = std::array<std::uint8_t, 3>;

/// Canonical colour of a value word. Words outside the palette get a stable
/// hash-derived colour.
inline Rgb canonical_color(const std::string& word) {
    static const std::vector<std::pair<std::string, Rgb>> palette = {
        {"red", {220, 40, 40}},     {"green", {40, 180, 60}},   {"blue", {40, 70, 220}},
        {"yellow", {230, 210, 40}}, {"white", {235, 235, 235}}, {"black", {50, 50, 50}},
        {"gray", {140, 140, 140}},  {"orange", {240, 140, 30}}, {"purple", {140, 50, 180}},
        {"pink", {240, 150, 190}},  {"brown", {130, 80, 40}},   {"cyan", {40, 210, 210}},
    };
    for (const auto& [w, c] : palette)
        if (w == word) return c;
    const auto d = sha256(word);
    return {static_cast<std::uint8_t>(64 + d[0] % 160), static_cast<std::uint8_t>(64 + d[1] % 160),
            static_cast<std::uint8_t>(64 + d[2] % 160)};
}

inline constexpr Rgb kGlyphColor{12, 12, 12};
inline constexpr Rgb kOccluderColor{128, 128, 128};

struct RenderConfig {
    int height = 64;
    int width = 32;
    int noise_amplitude = 12;     // uniform integer noise in [-a, a] per channel
    double accessory_prob = 0.4;
    double occluder_prob = 0.2;   // vertical grey bar, drawn after labels are fixed
    bool flip = false;            // optional horizontal flip augmentation
};

/// Everything random about one sample, drawn before any pixel is touched.
struct RenderPlan {
    std::vector<int> region_value;     // chosen value attribute id per region
    std::vector<int> accessories_on;   // positive accessory ids
    bool occluder = false;
    int occluder_x = 0;
    bool flipped = false;
};

struct SyntheticSample {
    int sample_id = 0;
    Image image;
    std::vector<std::uint8_t> labels;  // length Z, 0/1
};

/// Pixel box of an accessory glyph inside its band.
struct GlyphBox {
    int y0, y1, x0, x1;
};

inline GlyphBox glyph_box(int band_top, int band_height, int width, int slot) {
    const int gh = std::max(2, band_height / 3);
    const int gw = std::max(2, width / 4);
    const int y0 = band_top + (band_height - gh) / 2;
    const int x0 = std::min(width - gw, 2 + slot * (gw + 2));
    return {y0, y0 + gh, x0, x0 + gw};
}

inline std::mt19937_64 sample_rng(std::uint64_t seed, std::uint64_t index) {
    // splitmix64 of (seed, index) so neighbouring indices get unrelated streams
    std::uint64_t z = seed * 0x9E3779B97F4A7C15ULL + index + 0x632BE59BD9B4E019ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    z ^= z >> 31;
    return std::mt19937_64(z);
}

inline RenderPlan plan_sample(std::mt19937_64& rng, const AttributeSchema& schema, const RenderConfig& cfg) {
    RenderPlan plan;
    for (const auto& region : schema.regions()) {
        const auto ids = schema.ids_in_region(region, AttributeKind::value);
        std::uniform_int_distribution<std::size_t> pick(0, ids.size() - 1);
        plan.region_value.push_back(ids[pick(rng)]);
    }
    std::bernoulli_distribution acc(cfg.accessory_prob);
    for (const auto& a : schema.attributes())
        if (a.kind == AttributeKind::accessory && acc(rng)) plan.accessories_on.push_back(a.id);
    plan.occluder = std::bernoulli_distribution(cfg.occluder_prob)(rng);
    plan.occluder_x = std::uniform_int_distribution<int>(0, std::max(0, cfg.width - 3))(rng);
    plan.flipped = cfg.flip && std::bernoulli_distribution(0.5)(rng);
    return plan;
}

inline std::vector<std::uint8_t> plan_labels(const RenderPlan& plan, const AttributeSchema& schema) {
    std::vector<std::uint8_t> y(schema.size(), 0);
    for (int id : plan.region_value) y[static_cast<std::size_t>(id)] = 1;
    for (int id : plan.accessories_on) y[static_cast<std::size_t>(id)] = 1;
    return y;
}

inline void fill_box(Image& img, int y0, int y1, int x0, int x1, const Rgb& c) {
    for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x) std::copy(c.begin(), c.end(), img.at(y, x));
}

/// Draws the plan: one colour band per region, accessory glyphs, then noise,
/// occluder and optional flip on top.
inline Image render_plan(const RenderPlan& plan, std::mt19937_64& rng, const AttributeSchema& schema,
                         const RenderConfig& cfg) {
    const int bands = static_cast<int>(schema.regions().size());
    require(cfg.height > 0 && cfg.width > 0, "render: empty image");
    require(cfg.height % bands == 0, "render: image height must be divisible by region count");
    const int bh = cfg.height / bands;
    Image img(cfg.height, cfg.width);
    for (int r = 0; r < bands; ++r)
        fill_box(img, r * bh, (r + 1) * bh, 0, cfg.width,
                 canonical_color(schema.at(plan.region_value[static_cast<std::size_t>(r)]).value));
    for (int id : plan.accessories_on) {
        const auto& a = schema.at(id);
        const int r = schema.region_index(id);
        const auto acc = schema.ids_in_region(a.region, AttributeKind::accessory);
        const int slot = static_cast<int>(std::find(acc.begin(), acc.end(), id) - acc.begin());
        const auto box = glyph_box(r * bh, bh, cfg.width, slot);
        fill_box(img, box.y0, box.y1, box.x0, box.x1, kGlyphColor);
    }
    if (cfg.noise_amplitude > 0) {
        std::uniform_int_distribution<int> noise(-cfg.noise_amplitude, cfg.noise_amplitude);
        for (auto& p : img.pixels) p = static_cast<std::uint8_t>(std::clamp(int(p) + noise(rng), 0, 255));
    }
    if (plan.occluder) fill_box(img, 0, cfg.height, plan.occluder_x, std::min(cfg.width, plan.occluder_x + 3), kOccluderColor);
    if (plan.flipped) {
        for (int y = 0; y < img.height; ++y)
            for (int x = 0; x < img.width / 2; ++x) std::swap_ranges(img.at(y, x), img.at(y, x) + 3, img.at(y, img.width - 1 - x));
    }
    return img;
}

inline SyntheticSample render_sample(std::mt19937_64& rng, const AttributeSchema& schema, const RenderConfig& cfg) {
    require(cfg.height % static_cast<int>(schema.regions().size()) == 0,
            "render: image height must be divisible by region count");
    const RenderPlan plan = plan_sample(rng, schema, cfg);
    SyntheticSample s;
    s.labels = plan_labels(plan, schema);
    s.image = render_plan(plan, rng, schema, cfg);
    return s;
}

// PPM -----------------------------------------------------------------------

inline std::string encode_ppm(const Image& img) {
    std::string out = "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
    out.append(reinterpret_cast<const char*>(img.pixels.data()), img.pixels.size());
    return out;
}

inline void write_ppm(const fs::path& path, const Image& img) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ValidationError("cannot open for writing: " + path.string());
    const auto bytes = encode_ppm(img);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw ValidationError("write failed: " + path.string());
}

inline Image read_ppm(const fs::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ValidationError("cannot open image: " + path.string());
    std::string magic;
    int w = 0, h = 0, maxv = 0;
    f >> magic >> w >> h >> maxv;
    if (magic != "P6" || w <= 0 || h <= 0 || maxv != 255) throw ValidationError("not an 8-bit P6 PPM: " + path.string());
    f.get();  // single whitespace after header
    Image img(h, w);
    f.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
    if (f.gcount() != static_cast<std::streamsize>(img.pixels.size())) throw ValidationError("truncated PPM: " + path.string());
    return img;
}

// Dataset -------------------------------------------------------------------

enum class Split { train, val, test };

inline std::string to_string(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::val: return "val";
        case Split::test: return "test";
    }
    return "?";
}

inline Split parse_split(const std::string& s) {
    if (s == "train") return Split::train;
    if (s == "val") return Split::val;
    if (s == "test") return Split::test;
    throw ValidationError("unknown split: " + s);
}

struct DatasetConfig {
    std::uint64_t seed = 7;
    int num_samples = 2000;
    std::array<double, 3> ratios{0.8, 0.1, 0.1};
    int holdout = 0;  // value attributes per region held out as unseen
    RenderConfig render;
    SchemaConfig schema = default_schema_config();
};

struct ManifestEntry {
    int sample_id = 0;
    std::string file;
    Split split = Split::train;
    std::vector<std::uint8_t> labels;
};

struct DatasetManifest {
    fs::path root;
    DatasetConfig config;
    AttributeSchema schema;
    std::vector<ManifestEntry> entries;
    std::vector<int> seen;
    std::vector<int> unseen;
    std::string manifest_hash;  // sha256 of header.json + manifest.jsonl

    std::vector<const ManifestEntry*> split(Split s) const {
        std::vector<const ManifestEntry*> out;
        for (const auto& e : entries)
            if (e.split == s) out.push_back(&e);
        return out;
    }
};

inline void to_json(nlohmann::json& j, const RenderConfig& c) {
    j = {{"height", c.height},
         {"width", c.width},
         {"noise_amplitude", c.noise_amplitude},
         {"accessory_prob", c.accessory_prob},
         {"occluder_prob", c.occluder_prob},
         {"flip", c.flip}};
}
inline void from_json(const nlohmann::json& j, RenderConfig& c) {
    c.height = j.value("height", c.height);
    c.width = j.value("width", c.width);
    c.noise_amplitude = j.value("noise_amplitude", c.noise_amplitude);
    c.accessory_prob = j.value("accessory_prob", c.accessory_prob);
    c.occluder_prob = j.value("occluder_prob", c.occluder_prob);
    c.flip = j.value("flip", c.flip);
}
inline void to_json(nlohmann::json& j, const DatasetConfig& c) {
    j = {{"seed", c.seed},     {"num_samples", c.num_samples}, {"ratios", c.ratios},
         {"holdout", c.holdout}, {"render", c.render},          {"schema", c.schema}};
}
inline void from_json(const nlohmann::json& j, DatasetConfig& c) {
    c.seed = j.value("seed", c.seed);
    c.num_samples = j.value("num_samples", c.num_samples);
    if (j.contains("ratios")) j.at("ratios").get_to(c.ratios);
    c.holdout = j.value("holdout", c.holdout);
    if (j.contains("render")) j.at("render").get_to(c.render);
    if (j.contains("schema")) j.at("schema").get_to(c.schema);
}

/// Split sizes for n samples: rounded train and val counts, test takes the rest.
inline std::array<int, 3> split_sizes(int n, const std::array<double, 3>& ratios) {
    for (double r : ratios) require(r >= 0.0, "split ratios must be non-negative");
    require(std::abs(ratios[0] + ratios[1] + ratios[2] - 1.0) < 1e-9, "split ratios must sum to 1");
    const int train = static_cast<int>(std::lround(n * ratios[0]));
    const int val = std::min(n - train, static_cast<int>(std::lround(n * ratios[1])));
    return {train, val, n - train - val};
}

inline std::string manifest_line(const ManifestEntry& e) {
    nlohmann::json labels = nlohmann::json::array();
    for (auto v : e.labels) labels.push_back(int(v));
    nlohmann::json j = {{"sample_id", e.sample_id}, {"file", e.file}, {"split", to_string(e.split)}, {"labels", labels}};
    return j.dump();
}

inline std::string header_text(const DatasetConfig& cfg, const AttributeSchema& schema, const OpenDomainSplit& od) {
    nlohmann::json attrs = nlohmann::json::array();
    for (const auto& a : schema.attributes())
        attrs.push_back({{"id", a.id},
                         {"region", a.region},
                         {"category", a.category},
                         {"value", a.value},
                         {"kind", a.kind == AttributeKind::value ? "value" : "accessory"}});
    nlohmann::json h = {{"format", "focuspar-dataset-1"}, {"config", cfg},     {"attributes", attrs},
                        {"seen", od.seen},                {"unseen", od.unseen}};
    return h.dump(2) + "\n";
}

/// Renders sample `index` of a dataset; pure in (config seed, index).
inline SyntheticSample render_indexed(const DatasetConfig& cfg, const AttributeSchema& schema, int index) {
    auto rng = sample_rng(cfg.seed, static_cast<std::uint64_t>(index));
    auto s = render_sample(rng, schema, cfg.render);
    s.sample_id = index;
    return s;
}

inline DatasetManifest generate_dataset(const DatasetConfig& cfg, const fs::path& out_dir) {
    require(cfg.num_samples >= 0, "num_samples must be non-negative");
    const auto sizes = split_sizes(cfg.num_samples, cfg.ratios);
    const auto schema = build_schema(cfg.schema);
    const auto od = split_open_domain(schema, cfg.holdout);

    std::error_code ec;
    fs::create_directories(out_dir / "images", ec);
    if (ec) throw ValidationError("cannot create output directory " + out_dir.string() + ": " + ec.message());

    DatasetManifest m;
    m.root = out_dir;
    m.config = cfg;
    m.schema = schema;
    m.seen = od.seen;
    m.unseen = od.unseen;

    std::string lines;
    for (int i = 0; i < cfg.num_samples; ++i) {
        const auto s = render_indexed(cfg, schema, i);
        std::ostringstream name;
        name << "images/" << std::setw(6) << std::setfill('0') << i << ".ppm";
        write_ppm(out_dir / name.str(), s.image);
        const Split split = i < sizes[0] ? Split::train : (i < sizes[0] + sizes[1] ? Split::val : Split::test);
        m.entries.push_back(ManifestEntry{i, name.str(), split, s.labels});
        lines += manifest_line(m.entries.back()) + "\n";
    }
    const std::string header = header_text(cfg, schema, od);
    const std::pair<const char*, const std::string*> files[] = {{"header.json", &header}, {"manifest.jsonl", &lines}};
    for (const auto& [file, text] : files) {
        std::ofstream f(out_dir / file, std::ios::binary);
        if (!f) throw ValidationError("cannot write " + (out_dir / file).string());
        f << *text;
    }
    m.manifest_hash = to_hex(sha256(header + lines));
    return m;
}

inline std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    if (!f) throw ValidationError("cannot open " + p.string());
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

inline DatasetManifest load_dataset(const fs::path& dir) {
    DatasetManifest m;
    m.root = dir;
    const std::string header = slurp(dir / "header.json");
    const std::string lines = slurp(dir / "manifest.jsonl");
    try {
        const auto h = nlohmann::json::parse(header);
        h.at("config").get_to(m.config);
        m.schema = build_schema(m.config.schema);
        h.at("seen").get_to(m.seen);
        h.at("unseen").get_to(m.unseen);
        std::istringstream in(lines);
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            const auto j = nlohmann::json::parse(line);
            ManifestEntry e;
            e.sample_id = j.at("sample_id").get<int>();
            e.file = j.at("file").get<std::string>();
            e.split = parse_split(j.at("split").get<std::string>());
            for (int v : j.at("labels")) e.labels.push_back(static_cast<std::uint8_t>(v));
            require(e.labels.size() == m.schema.size(), "manifest: label row length does not match schema");
            m.entries.push_back(std::move(e));
        }
    } catch (const nlohmann::json::exception& ex) {
        throw ValidationError(std::string("malformed dataset metadata: ") + ex.what());
    }
    m.manifest_hash = to_hex(sha256(header + lines));
    return m;
}

}  // namespace focuspar
