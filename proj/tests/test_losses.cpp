#include "oracles.hpp"
#include "test_util.hpp"

using namespace focuspar;
using testutil::random_matrix;

namespace {

double eval(Var<double> v) { return v.item(); }

}  // namespace

TEST(SimLoss, HandValues) {
    Tape<double> tp(false);
    EXPECT_NEAR(eval(sim_loss(tp.constant(Matrix<double>(2, 2, 0.5)))), std::log(2.0), 1e-15);
    Matrix<double> ideal(3, 3, 1e-6);
    for (std::size_t i = 0; i < 3; ++i) ideal(i, i) = 1 - 1e-6;
    EXPECT_LE(eval(sim_loss(tp.constant(ideal))), 2e-6 * std::abs(std::log(1e-6)));
    Matrix<double> worst(3, 3, 1 - 1e-6);
    for (std::size_t i = 0; i < 3; ++i) worst(i, i) = 1e-6;
    EXPECT_NEAR(eval(sim_loss(tp.constant(worst))), -std::log(1e-6), 1e-5);
}

TEST(SimLoss, RandomMatricesMatchOracle) {
    std::mt19937_64 rng(21);
    for (int t = 0; t < 20; ++t) {
        const auto s = random_matrix(3, 3, rng, 0.0, 1.0);
        Tape<double> tp(false);
        EXPECT_NEAR(eval(sim_loss(tp.constant(s))), oracle::bce_oracle(s, Matrix<double>::identity(3)), 1e-10);
    }
}

TEST(SimLoss, MinimizedAtIdentity) {
    Tape<double> tp(false);
    Matrix<double> ideal(3, 3, 1e-6);
    for (std::size_t i = 0; i < 3; ++i) ideal(i, i) = 1 - 1e-6;
    const double best = eval(sim_loss(tp.constant(ideal)));
    std::mt19937_64 rng(2);
    for (int t = 0; t < 20; ++t) {
        auto s = ideal;
        s[static_cast<std::size_t>(t) % 9] = std::uniform_real_distribution<double>(0.01, 0.99)(rng);
        EXPECT_GT(eval(sim_loss(tp.constant(s))), best);
    }
}

TEST(RaclLoss, RandomMatricesMatchOracle) {
    std::mt19937_64 rng(22);
    Matrix<double> b(3, 3, std::vector<double>{1, 1, 0, 1, 1, 0, 0, 0, 1});
    for (int t = 0; t < 20; ++t) {
        const auto s = random_matrix(3, 3, rng, 0.0, 1.0);
        Tape<double> tp(false);
        EXPECT_NEAR(eval(racl_loss(tp.constant(s), b)), oracle::bce_oracle(s, b), 1e-10);
    }
    Tape<double> tp(false);
    EXPECT_NEAR(eval(racl_loss(tp.constant(Matrix<double>(2, 2, 0.5)), Matrix<double>(2, 2, 1.0))), std::log(2.0), 1e-15);
    EXPECT_THROW(racl_loss(tp.constant(Matrix<double>(2, 2, 0.5)), Matrix<double>(3, 3, 1.0)), ValidationError);
}

TEST(RaclLoss, RegionAlignedMapsBeatUniformMaps) {
    const auto schema = build_schema(SchemaConfig{{{"a", "c1", {"x", "y"}, {}}, {"b", "c2", {"x", "y"}, {}}}});
    const auto blocks = block_matrix<double>(schema);
    Tape<double> tp(false);
    Matrix<double> aligned(4, 4, std::vector<double>{0.5, 0.5, 0, 0, 0.5, 0.5, 0, 0, 0, 0, 0.5, 0.5, 0, 0, 0.5, 0.5});
    Matrix<double> uniform(4, 4, 0.25);
    EXPECT_LT(eval(racl_loss(attn_similarity(tp.constant(aligned)), blocks)),
              eval(racl_loss(attn_similarity(tp.constant(uniform)), blocks)));
}

TEST(RaclLoss, PermutationInvariant) {
    const auto schema = testutil::default_schema();
    std::vector<int> ids = schema.all_ids();
    std::mt19937_64 rng(5);
    const auto g = random_matrix(ids.size(), 6, rng, 0.01, 1.0);
    Tape<double> tp(false);
    const double base = eval(racl_loss(attn_similarity(tp.constant(g)), block_matrix<double>(schema, ids)));
    for (int t = 0; t < 5; ++t) {
        std::vector<int> perm = ids;
        std::shuffle(perm.begin(), perm.end(), rng);
        Matrix<double> gp(ids.size(), 6);
        for (std::size_t i = 0; i < perm.size(); ++i)
            for (std::size_t k = 0; k < 6; ++k) gp(i, k) = g(static_cast<std::size_t>(perm[i]), k);
        EXPECT_NEAR(eval(racl_loss(attn_similarity(tp.constant(gp)), block_matrix<double>(schema, perm))), base, 1e-12);
    }
}

TEST(BlockMatrix, SmallCases) {
    const auto two = build_schema(SchemaConfig{{{"a", "c1", {"x", "y"}, {}}, {"b", "c2", {"x", "y"}, {}}}});
    EXPECT_EQ(block_matrix<double>(two),
              Matrix<double>(4, 4, std::vector<double>{1, 1, 0, 0, 1, 1, 0, 0, 0, 0, 1, 1, 0, 0, 1, 1}));
    const auto diag = build_schema(SchemaConfig{{{"a", "c", {"x", "y"}, {}}, {"b", "c", {"x", "y"}, {}}}});
    const std::vector<int> one_each{0, 2};
    EXPECT_EQ(block_matrix<double>(diag, one_each), Matrix<double>::identity(2));
}

TEST(BlockMatrix, RandomSchemasMatchPairwiseOracle) {
    std::mt19937_64 rng(100);
    for (int t = 0; t < 100; ++t) {
        std::vector<int> region_of;
        const auto cfg = oracle::random_schema(rng, region_of);
        const auto b = block_matrix<double>(build_schema(cfg));
        ASSERT_EQ(b.rows(), region_of.size());
        for (std::size_t i = 0; i < b.rows(); ++i)
            for (std::size_t j = 0; j < b.cols(); ++j)
                ASSERT_EQ(b(i, j), region_of[i] == region_of[j] ? 1.0 : 0.0) << t;
    }
}

TEST(Contrastive, HandValues) {
    Tape<double> tp(false);
    Matrix<double> y(1, 2, std::vector<double>{1, 0});
    auto c = m2m_contrastive(tp.constant(Matrix<double>(1, 2, std::vector<double>{10, -10})), y);
    EXPECT_NEAR(c.v2t.item(), std::log1p(std::exp(-20.0)), 1e-20);
    EXPECT_NEAR(c.v2t.item(), 2.06e-9, 1e-11);
    Matrix<double> one_pos(1, 5);
    one_pos(0, 2) = 1;
    EXPECT_NEAR(m2m_contrastive(tp.constant(Matrix<double>(1, 5, 0.3)), one_pos).v2t.item(), std::log(5.0), 1e-14);
    EXPECT_NEAR(m2m_contrastive(tp.constant(Matrix<double>(1, 2, 1.7)), Matrix<double>(1, 2, 1.0)).v2t.item(),
                std::log(2.0), 1e-14);
}

TEST(Contrastive, MatchesBruteForceAndSkipsEmptyRows) {
    std::mt19937_64 rng(9);
    const auto s = random_matrix(4, 5, rng, -3, 3);
    Matrix<double> y(4, 5);
    y(0, 1) = y(0, 3) = y(1, 0) = y(3, 4) = y(3, 2) = y(3, 1) = 1;  // row 2 has no positives
    const double tau = 0.7;
    auto oracle = [&](const Matrix<double>& sc, const Matrix<double>& lab) {
        double total = 0;
        int rows = 0;
        for (std::size_t i = 0; i < sc.rows(); ++i) {
            double z = 0, pos = 0, acc = 0;
            for (std::size_t j = 0; j < sc.cols(); ++j) z += std::exp(sc(i, j) / tau);
            for (std::size_t j = 0; j < sc.cols(); ++j)
                if (lab(i, j) > 0) {
                    acc += -std::log(std::exp(sc(i, j) / tau) / z);
                    pos += 1;
                }
            if (pos > 0) {
                total += acc / pos;
                ++rows;
            }
        }
        return total / rows;
    };
    Tape<double> tp(false);
    auto c = m2m_contrastive(tp.constant(s), y, tau);
    EXPECT_NEAR(c.v2t.item(), oracle(s, y), 1e-12);
    EXPECT_NEAR(c.t2v.item(), oracle(s.transposed(), y.transposed()), 1e-12);
}

TEST(Contrastive, ShiftInvariantPerImage) {
    std::mt19937_64 rng(10);
    auto s = random_matrix(3, 4, rng);
    Matrix<double> y(3, 4);
    y(0, 0) = y(1, 2) = y(1, 3) = y(2, 1) = 1;
    Tape<double> tp(false);
    const double base = m2m_contrastive(tp.constant(s), y).v2t.item();
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 4; ++j) s(i, j) += 1.5 * double(i + 1);
    EXPECT_NEAR(m2m_contrastive(tp.constant(s), y).v2t.item(), base, 1e-12);
}

TEST(Contrastive, GradientsMatchFiniteDifferences) {
    std::mt19937_64 rng(12);
    Matrix<double> y(3, 4);
    y(0, 0) = y(1, 2) = y(1, 3) = y(2, 1) = 1;
    const auto s = random_matrix(3, 4, rng, -2, 2);
    EXPECT_LT(testutil::op_grad_error([&](auto&, const auto& v) { return m2m_contrastive(v[0], y, 0.5).v2t; }, {s}),
              1e-6);
    EXPECT_LT(testutil::op_grad_error([&](auto&, const auto& v) { return m2m_contrastive(v[0], y, 0.5).t2v; }, {s}),
              1e-6);
}

TEST(TotalLoss, WeightedSum) {
    Tape<double> tp(false);
    auto k = [&](double v) { return tp.constant(Matrix<double>(1, 1, v)); };
    LossTerms<double> t{k(0.1), k(0.2), k(0.3), k(0.4)};
    EXPECT_NEAR(total_loss(t, LossWeights{}).second.total, 1.0, 1e-15);
    EXPECT_EQ(total_loss(t, LossWeights{0, 0, 0, 0}).second.total, 0.0);
    EXPECT_NEAR(total_loss(t, LossWeights{1, 0, 1, 1}).first.item(), 0.8, 1e-15);
    LossTerms<double> bad{k(0.1), k(std::nan("")), k(0.3), k(0.4)};
    EXPECT_THROW(total_loss(bad, LossWeights{}), NumericalError);
}
