#include "test_util.hpp"

using namespace focuspar;

namespace {

SchemaConfig grid_schema(int regions, int values, int accessories) {
    SchemaConfig c;
    for (int r = 0; r < regions; ++r) {
        RegionSpec spec{"r" + std::to_string(r), "cat" + std::to_string(r), {}, {}};
        for (int v = 0; v < values; ++v) spec.values.push_back("v" + std::to_string(v));
        for (int a = 0; a < accessories; ++a) spec.accessories.push_back("acc" + std::to_string(a));
        c.regions.push_back(spec);
    }
    return c;
}

}  // namespace

TEST(Schema, AttributeCounts) {
    EXPECT_EQ(build_schema(grid_schema(4, 3, 0)).size(), 12u);
    EXPECT_EQ(testutil::default_schema().size(), 18u);
    auto c = grid_schema(4, 4, 0);
    c.regions[0].accessories = {"hat"};
    c.regions[2].accessories = {"bag"};
    EXPECT_EQ(build_schema(c).size(), 18u);
}

TEST(Schema, IdsAreRegionSorted) {
    const auto s = testutil::default_schema();
    int last = -1;
    for (const auto& a : s.attributes()) {
        EXPECT_GE(s.region_index(a.id), last);
        last = s.region_index(a.id);
    }
    EXPECT_EQ(s.ids_in_region("head", AttributeKind::value).size(), 4u);
    EXPECT_EQ(s.ids_in_region("head", AttributeKind::accessory).size(), 1u);
}

TEST(Schema, RejectsDuplicatesAndDegenerateConfigs) {
    auto dup = grid_schema(2, 2, 0);
    dup.regions[0].values = {"red", "red"};
    EXPECT_THROW(build_schema(dup), ValidationError);
    EXPECT_THROW(build_schema(grid_schema(1, 3, 0)), ValidationError);
    EXPECT_THROW(build_schema(grid_schema(2, 1, 0)), ValidationError);
}

TEST(Schema, OpenDomainSplit) {
    const auto s = build_schema(grid_schema(4, 3, 0));
    auto od = split_open_domain(s, 1);
    EXPECT_EQ(od.seen.size(), 8u);
    EXPECT_EQ(od.unseen.size(), 4u);
    for (int id : od.unseen) EXPECT_EQ(s.at(id).value, "v2");
    EXPECT_TRUE(split_open_domain(s, 0).unseen.empty());
    EXPECT_THROW(split_open_domain(s, 3), ValidationError);
}

TEST(Schema, JsonRoundTrip) {
    const auto c = default_schema_config();
    nlohmann::json j = c;
    const auto back = j.get<SchemaConfig>();
    EXPECT_EQ(build_schema(back).size(), build_schema(c).size());
    EXPECT_EQ(nlohmann::json(back), j);
}

TEST(Synth, BandGeometryAndCanonicalColors) {
    const auto s = testutil::default_schema();
    RenderConfig cfg;
    cfg.noise_amplitude = 0;
    cfg.occluder_prob = 0;
    cfg.accessory_prob = 0;
    auto rng = sample_rng(3, 0);
    const auto sample = render_sample(rng, s, cfg);
    ASSERT_EQ(sample.image.height, 64);
    const auto& regions = s.regions();
    for (std::size_t r = 0; r < regions.size(); ++r) {
        int value_id = -1;
        for (int id : s.ids_in_region(regions[r], AttributeKind::value))
            if (sample.labels[static_cast<std::size_t>(id)]) value_id = id;
        ASSERT_GE(value_id, 0);
        const Rgb c = canonical_color(s.at(value_id).value);
        for (int y = int(r) * 16; y < int(r + 1) * 16; ++y)
            for (int x = 0; x < 32; ++x) EXPECT_TRUE(std::equal(c.begin(), c.end(), sample.image.at(y, x)));
    }
}

TEST(Synth, ExactlyOneValuePerRegionAndGlyphsMatchLabels) {
    const auto s = testutil::default_schema();
    RenderConfig cfg;
    cfg.noise_amplitude = 0;
    cfg.occluder_prob = 0;
    for (int i = 0; i < 40; ++i) {
        auto rng = sample_rng(9, static_cast<std::uint64_t>(i));
        const auto sample = render_sample(rng, s, cfg);
        for (const auto& region : s.regions()) {
            int on = 0;
            for (int id : s.ids_in_region(region, AttributeKind::value)) on += sample.labels[static_cast<std::size_t>(id)];
            EXPECT_EQ(on, 1);
            for (int id : s.ids_in_region(region, AttributeKind::accessory)) {
                const int r = s.region_index(id);
                const auto box = glyph_box(r * 16, 16, 32, 0);
                const bool drawn = std::equal(kGlyphColor.begin(), kGlyphColor.end(), sample.image.at(box.y0, box.x0));
                EXPECT_EQ(drawn, sample.labels[static_cast<std::size_t>(id)] == 1);
            }
        }
    }
}

TEST(Synth, SameSeedIsByteIdentical) {
    const auto s = testutil::default_schema();
    RenderConfig cfg;
    auto a = sample_rng(42, 17), b = sample_rng(42, 17), c = sample_rng(42, 18);
    const auto sa = render_sample(a, s, cfg), sb = render_sample(b, s, cfg), sc = render_sample(c, s, cfg);
    EXPECT_EQ(sa.image, sb.image);
    EXPECT_EQ(sa.labels, sb.labels);
    EXPECT_FALSE(sa.image == sc.image);
}

TEST(Synth, IndivisibleHeightIsError) {
    RenderConfig cfg;
    cfg.height = 62;
    auto rng = sample_rng(1, 1);
    EXPECT_THROW(render_sample(rng, testutil::default_schema(), cfg), ValidationError);
}

TEST(Synth, PpmRoundTrip) {
    const auto dir = testutil::scratch_dir("ppm");
    auto rng = sample_rng(5, 5);
    const auto sample = render_sample(rng, testutil::default_schema(), RenderConfig{});
    write_ppm(dir / "x.ppm", sample.image);
    EXPECT_EQ(read_ppm(dir / "x.ppm"), sample.image);
    std::ofstream(dir / "bad.ppm") << "P3\n1 1\n255\n0 0 0\n";
    EXPECT_THROW(read_ppm(dir / "bad.ppm"), ValidationError);
}

TEST(Dataset, SplitSizes) {
    EXPECT_EQ(split_sizes(1000, {0.8, 0.1, 0.1}), (std::array<int, 3>{800, 100, 100}));
    EXPECT_EQ(split_sizes(0, {0.8, 0.1, 0.1}), (std::array<int, 3>{0, 0, 0}));
    EXPECT_THROW(split_sizes(10, {0.5, 0.1, 0.1}), ValidationError);
}

TEST(Dataset, GenerateLoadAndHash) {
    DatasetConfig cfg;
    cfg.num_samples = 30;
    cfg.holdout = 1;
    const auto a = generate_dataset(cfg, testutil::scratch_dir("ds_a"));
    const auto b = generate_dataset(cfg, testutil::scratch_dir("ds_b"));
    EXPECT_EQ(a.manifest_hash, b.manifest_hash);
    EXPECT_EQ(a.split(Split::train).size(), 24u);
    EXPECT_EQ(a.unseen.size(), 4u);
    const auto loaded = load_dataset(a.root);
    EXPECT_EQ(loaded.manifest_hash, a.manifest_hash);
    ASSERT_EQ(loaded.entries.size(), 30u);
    EXPECT_EQ(loaded.entries[7].labels, a.entries[7].labels);
    EXPECT_EQ(read_ppm(loaded.root / loaded.entries[7].file), render_indexed(cfg, a.schema, 7).image);

    cfg.seed = 8;
    EXPECT_NE(generate_dataset(cfg, testutil::scratch_dir("ds_c")).manifest_hash, a.manifest_hash);
}

TEST(Dataset, EmptyDatasetIsFine) {
    DatasetConfig cfg;
    cfg.num_samples = 0;
    const auto m = generate_dataset(cfg, testutil::scratch_dir("ds_empty"));
    EXPECT_TRUE(m.entries.empty());
    EXPECT_TRUE(load_dataset(m.root).entries.empty());
}
