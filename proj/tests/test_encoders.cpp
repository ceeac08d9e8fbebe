#include "test_util.hpp"

using namespace focuspar;

TEST(Patchify, ShapeOrderAndScaling) {
    Image img(64, 32);
    for (int y = 0; y < 64; ++y)
        for (int x = 0; x < 32; ++x) img.at(y, x)[0] = static_cast<std::uint8_t>(y * 4 + x / 8);
    const auto p = extract_patches<double>(img, 8);
    ASSERT_EQ(p.rows(), 32u);
    ASSERT_EQ(p.cols(), 192u);
    // patch 5 is tile row 1, column 1; its first pixel is (8, 8)
    EXPECT_DOUBLE_EQ(p(5, 0), (8 * 4 + 1) / 127.5 - 1.0);
    EXPECT_DOUBLE_EQ(p(5, 1), -1.0);
    EXPECT_THROW(extract_patches<double>(img, 7), ValidationError);
}

TEST(Patchify, ZeroImageGivesPositionalEmbeddingsWithZeroBias) {
    ParamStore<double> store;
    nn::Rng rng(1);
    PatchEmbed<double> pe(store, 8, 64, 32, 16, rng);
    EXPECT_EQ(pe.num_patches(), 32u);
    Tape<double> tp(false);
    // -1 after scaling is pixel value 0; use a zero patch matrix directly
    const auto out = pe(tp, Matrix<double>(32, 192, 0.0)).value();
    EXPECT_EQ(max_abs_diff(out, store.get("patch_embed.pos").value), 0.0);
}

TEST(Prompts, TemplateAndLengths) {
    const auto s = testutil::default_schema();
    const auto vocab = Vocabulary::from_schema(s);
    const auto& attr = s.at(s.ids_in_region("upper", AttributeKind::value)[0]);
    EXPECT_EQ(template_words(attr).size(), 8u);
    EXPECT_EQ(template_words(attr, false).size(), 7u);
    PromptOptions opt;
    auto seq = build_prompt(attr, vocab, opt);
    EXPECT_EQ(seq.block_sources, std::vector<int>{attr.id});
    EXPECT_EQ(seq.word_ids.size(), 8u);
    opt.prompts_per_attr = 0;
    EXPECT_TRUE(build_prompt(attr, vocab, opt).block_sources.empty());
}

TEST(Prompts, SiblingsDifferOnlyInBlockAndValueWord) {
    const auto s = testutil::default_schema();
    const auto vocab = Vocabulary::from_schema(s);
    const auto ids = s.ids_in_region("lower", AttributeKind::value);
    const auto a = build_prompt(s.at(ids[0]), vocab, {}), b = build_prompt(s.at(ids[1]), vocab, {});
    EXPECT_NE(a.block_sources, b.block_sources);
    for (std::size_t i = 0; i < a.word_ids.size(); ++i) {
        if (i == 6) EXPECT_NE(a.word_ids[i], b.word_ids[i]);
        else EXPECT_EQ(a.word_ids[i], b.word_ids[i]);
    }
}

TEST(Prompts, UnseenBlockIsMeanOfSeenRegionBlocks) {
    const auto s = testutil::default_schema();
    const auto vocab = Vocabulary::from_schema(s);
    ParamStore<double> store;
    nn::Rng rng(4);
    PromptBank<double> bank(store, s.size(), {}, 8, rng);
    std::mt19937_64 fill(9);
    store.get("prompt_bank").value = testutil::random_matrix(bank.bank->value.rows(), 8, fill);  // trained blocks differ
    const auto head = s.ids_in_region("head", AttributeKind::value);
    const int target = head[3];

    auto seq = unseen_prompt(s.at(target), s, {head[0]}, vocab, {});
    EXPECT_EQ(seq.block_sources, std::vector<int>{head[0]});
    Tape<double> tp(false);
    EXPECT_EQ(bank.block(tp, seq.block_sources).value(), bank.block(tp, {head[0]}).value());

    seq = unseen_prompt(s.at(target), s, {head[0], head[1]}, vocab, {});
    const auto mean = bank.block(tp, seq.block_sources).value();
    const auto a = bank.block(tp, {head[0]}).value(), b = bank.block(tp, {head[1]}).value();
    for (std::size_t i = 0; i < mean.size(); ++i) EXPECT_NEAR(mean[i], 0.5 * (a[i] + b[i]), 1e-15);

    const auto upper = s.ids_in_region("upper", AttributeKind::value);
    EXPECT_THROW(unseen_prompt(s.at(target), s, upper, vocab, {}), ValidationError);
}

TEST(Prompts, BlocksShareTheirInitialValues) {
    ParamStore<double> store;
    nn::Rng rng(5);
    PromptBank<double> bank(store, 6, {}, 8, rng);
    Tape<double> tp(false);
    const auto first = bank.block(tp, {0}).value();
    for (int b = 1; b < 6; ++b) EXPECT_EQ(bank.block(tp, {b}).value(), first);
    double spread = 0;
    for (std::size_t i = 0; i < first.size(); ++i) spread += std::abs(first[i]);
    EXPECT_GT(spread, 0.0);
}

TEST(Vocabulary, SaveLoadAndMissingWord) {
    const auto v = Vocabulary::from_schema(testutil::default_schema());
    const auto dir = testutil::scratch_dir("vocab");
    v.save(dir / "vocab.txt");
    EXPECT_EQ(Vocabulary::load(dir / "vocab.txt"), v);
    EXPECT_TRUE(v.contains("feature"));
    EXPECT_THROW(v.id("purple"), ValidationError);
}

TEST(TextEncoder, DeterministicAndRowIndependent) {
    const auto s = testutil::default_schema();
    const auto vocab = Vocabulary::from_schema(s);
    ParamStore<double> store;
    nn::Rng rng(8);
    PromptBank<double> bank(store, s.size(), {}, 16, rng);
    TextEncoder<double> enc(store, vocab.size(), 12, 16, 2, 4, rng);
    std::vector<PromptSequence> seqs;
    for (int id = 0; id < 4; ++id) seqs.push_back(build_prompt(s.at(id), vocab, {}));
    Tape<double> tp(false);
    const auto all = enc.encode_batch(tp, seqs, bank).value();
    EXPECT_EQ(all.rows(), 4u);
    EXPECT_EQ(all.cols(), 16u);
    for (std::size_t i = 0; i < seqs.size(); ++i) {
        const auto single = enc.encode_batch(tp, {seqs[i]}, bank).value();
        for (std::size_t c = 0; c < 16; ++c) EXPECT_EQ(single(0, c), all(i, c));
    }
    EXPECT_NE(max_abs_diff(enc.encode_batch(tp, {seqs[0]}, bank).value(), enc.encode_batch(tp, {seqs[1]}, bank).value()),
              0.0);
}
