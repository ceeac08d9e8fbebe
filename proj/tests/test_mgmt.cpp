#include "test_util.hpp"

using namespace focuspar;
using testutil::random_matrix;

TEST(Partition, EvenAndRemainderSplits) {
    const auto even = partition_patches(32, 4);
    for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(even[i], (PatchRange{8 * i, 8 * i + 8}));
    const auto rem = partition_patches(10, 4);
    std::vector<std::size_t> sizes;
    for (const auto& r : rem) sizes.push_back(r.size());
    EXPECT_EQ(sizes, (std::vector<std::size_t>{3, 3, 2, 2}));
    EXPECT_EQ(rem.back().end, 10u);
    EXPECT_EQ(partition_patches(7, 1)[0], (PatchRange{0, 7}));
    EXPECT_THROW(partition_patches(3, 4), ValidationError);
    EXPECT_THROW(partition_patches(3, 0), ValidationError);
}

TEST(Mask, DefaultStructure) {
    const auto part = partition_patches(32, 4);
    const AttentionMask m(8, 4, 32, part);
    const std::size_t k = 12;
    for (std::size_t g = 0; g < 8; ++g) {
        std::size_t n = 0;
        for (std::size_t j = 0; j < 32; ++j) n += m(g, k + j);
        EXPECT_EQ(n, 32u);
    }
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 32; ++j) EXPECT_EQ(m(8 + i, k + j), part[i].contains(j));
    for (std::size_t a = 0; a < k; ++a)
        for (std::size_t b = 0; b < k; ++b) EXPECT_FALSE(m(a, b));
    for (std::size_t p = 0; p < 32; ++p) {
        for (std::size_t j = 0; j < 32; ++j) EXPECT_TRUE(m(k + p, k + j));
        for (std::size_t b = 0; b < k; ++b) EXPECT_FALSE(m(k + p, b));
    }
}

TEST(Mask, AlternativeFlags) {
    const auto part = partition_patches(8, 2);
    const AttentionMask m(2, 2, 8, part, MaskOptions{true, true, 1});
    EXPECT_TRUE(m(0, 3));   // mix sees mix
    EXPECT_TRUE(m(5, 1));   // patch sees mix
    EXPECT_TRUE(m(0, 4 + 3));
    EXPECT_FALSE(m(0, 4 + 4));  // global limited to the first subset
    EXPECT_THROW(AttentionMask(2, 2, 8, part, MaskOptions{false, false, 3}), ValidationError);
    EXPECT_THROW(AttentionMask(2, 3, 8, part), ValidationError);
}

TEST(Mask, RowWithoutTargetsIsRejected) {
    // an empty subset leaves its local token with nothing to attend to
    std::vector<PatchRange> part{{0, 4}, {4, 4}};
    EXPECT_THROW(AttentionMask(0, 2, 4, part), ValidationError);
}

TEST(MixTokens, GlobalRowWithFullMaskEqualsUnmaskedAttention) {
    std::mt19937_64 rng(2);
    Tape<double> tp(false);
    auto q = tp.constant(random_matrix(1, 4, rng)), kv = tp.constant(random_matrix(5, 4, rng));
    auto mask = std::make_shared<Matrix<unsigned char>>(1, 5, 1);
    const auto a = nn::multi_head_attention(q, kv, kv, 2, mask).output.value();
    const auto b = nn::multi_head_attention(q, kv, kv, 2).output.value();
    EXPECT_EQ(a, b);
}

TEST(MixTokens, SingleTokenTwoPatchesMatchesHandSoftmax) {
    // K_g=1, K_l=0, identity projections: row 0 is the mix token
    Tape<double> tp(false);
    Matrix<double> seq(3, 2, std::vector<double>{0.5, -1.0, 1.0, 2.0, -0.3, 0.7});
    const AttentionMask m(1, 0, 2, {});
    auto x = tp.constant(seq);
    auto r = nn::multi_head_attention(x, x, x, 1, m.ptr());
    const double l1 = (0.5 * 1.0 - 1.0 * 2.0) / std::sqrt(2.0), l2 = (0.5 * -0.3 - 1.0 * 0.7) / std::sqrt(2.0);
    const double w1 = 1.0 / (1.0 + std::exp(l2 - l1));
    EXPECT_NEAR(r.output.value()(0, 0), w1 * 1.0 + (1 - w1) * -0.3, 1e-14);
    EXPECT_NEAR(r.output.value()(0, 1), w1 * 2.0 + (1 - w1) * 0.7, 1e-14);
    EXPECT_EQ(r.weights[0].value()(0, 0), 0.0);
}

namespace {

struct EncoderFixture {
    ParamStore<double> store;
    nn::Rng rng{7};
    MixTokenEncoder<double> enc;
    AttentionMask mask;
    EncoderFixture(int layers)
        : enc(store, 2, 4, 8, layers, 2, rng), mask(2, 4, 16, partition_patches(16, 4)) {}
    Matrix<double> mix(const Matrix<double>& patches) {
        Tape<double> tp(false);
        return enc(tp, tp.constant(patches), mask).mix.value();
    }
};

}  // namespace

TEST(MixTokens, LocalTokenIgnoresPatchesOutsideItsSubset) {
    EncoderFixture f(1);
    std::mt19937_64 rng(3);
    const auto base = random_matrix(16, 8, rng);
    const auto ref = f.mix(base);
    for (std::size_t i = 0; i < 4; ++i) {
        auto pert = base;
        for (std::size_t p = 0; p < 16; ++p)
            if (p / 4 != i)
                for (std::size_t c = 0; c < 8; ++c) pert(p, c) += 5.0 * (double(c) - 3.5);
        const auto out = f.mix(pert);
        for (std::size_t c = 0; c < 8; ++c) EXPECT_EQ(out(2 + i, c), ref(2 + i, c));
        double moved = 0;
        for (std::size_t c = 0; c < 8; ++c) moved += std::abs(out(0, c) - ref(0, c));
        EXPECT_GT(moved, 1e-3);  // global tokens do see the change
    }
}

TEST(MixTokens, FullStackInvariantToPermutingUnattendedPatches) {
    EncoderFixture f(3);
    std::mt19937_64 rng(4);
    const auto base = random_matrix(16, 8, rng);
    const auto ref = f.mix(base);
    // reverse the order of every patch outside subset 1 (patches 4..7)
    std::vector<std::size_t> outside{0, 1, 2, 3, 8, 9, 10, 11, 12, 13, 14, 15};
    auto perm = base;
    for (std::size_t a = 0; a < outside.size(); ++a)
        for (std::size_t c = 0; c < 8; ++c) perm(outside[a], c) = base(outside[outside.size() - 1 - a], c);
    const auto out = f.mix(perm);
    for (std::size_t c = 0; c < 8; ++c) EXPECT_EQ(out(3, c), ref(3, c));
    for (std::size_t g = 0; g < 2; ++g)
        for (std::size_t c = 0; c < 8; ++c) EXPECT_EQ(out(g, c), ref(g, c));
}

TEST(MixTokens, DuplicatedTokensStayIdentical) {
    EncoderFixture f(2);
    auto& g = f.store.get("mgmt.global_tokens").value;
    for (std::size_t c = 0; c < g.cols(); ++c) g(1, c) = g(0, c);
    std::mt19937_64 rng(5);
    const auto out = f.mix(random_matrix(16, 8, rng));
    for (std::size_t c = 0; c < 8; ++c) EXPECT_EQ(out(0, c), out(1, c));
}

TEST(MixSimilarity, HandValues) {
    Tape<double> tp(false);
    Matrix<double> m(3, 2, std::vector<double>{1, 0, 0, 2, -3, 0});
    const auto s = mix_similarity(tp.constant(m), 0.5).value();
    const auto sig = [](double x) { return 1 / (1 + std::exp(-x)); };
    EXPECT_NEAR(s(0, 0), sig(2.0), 1e-15);
    EXPECT_NEAR(s(0, 1), 0.5, 1e-15);
    EXPECT_NEAR(s(0, 2), sig(-2.0), 1e-15);
    EXPECT_NEAR(s(2, 0), s(0, 2), 1e-15);
    const auto tight = mix_similarity(tp.constant(m), 1e-3).value();
    EXPECT_DOUBLE_EQ(tight(0, 0), 1 - 1e-6);
    EXPECT_DOUBLE_EQ(tight(0, 2), 1e-6);
}
