#include "seadate/autograd.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "seadate/gradcheck.hpp"

using namespace seadate;

TEST(Softmax, UniformOnConstantRows) {
    Var y = softmax_rows(Var::constant(Tensor::from_rows({{0, 0, 0}, {4.2, 4.2, 4.2}})));
    for (std::size_t i = 0; i < 6; ++i) EXPECT_NEAR(y.value()[i], 1.0 / 3.0, 1e-15);
}

TEST(Softmax, HandEvaluatedLogRow) {
    Var y = softmax_rows(
        Var::constant(Tensor::from_rows({{std::log(1.0), std::log(2.0), std::log(3.0)}})));
    EXPECT_NEAR(y.value()[0], 1.0 / 6.0, 1e-12);
    EXPECT_NEAR(y.value()[1], 2.0 / 6.0, 1e-12);
    EXPECT_NEAR(y.value()[2], 3.0 / 6.0, 1e-12);
}

TEST(Softmax, RowsSumToOneAndShiftInvariant) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Tensor x = random_tensor({4, 6}, seed, 100, -5.0, 5.0);
        Tensor shifted = x;
        CounterRng rng(seed, 101);
        for (std::size_t r = 0; r < 4; ++r) {
            const double c = rng.uniform(-3.0, 3.0);
            for (std::size_t j = 0; j < 6; ++j) shifted.at(r, j) += c;
        }
        Tensor y = softmax_rows(Var::constant(x)).value();
        Tensor ys = softmax_rows(Var::constant(shifted)).value();
        for (std::size_t r = 0; r < 4; ++r) {
            double sum = 0.0;
            for (std::size_t j = 0; j < 6; ++j) sum += y.at(r, j);
            EXPECT_NEAR(sum, 1.0, 1e-12);
        }
        for (std::size_t i = 0; i < y.numel(); ++i) EXPECT_NEAR(y[i], ys[i], 1e-12);
    }
}

TEST(LayerNorm, ConstantRowCollapsesToBeta) {
    Var y = layer_norm(Var::constant(Tensor::from_rows({{5, 5, 5, 5}})),
                       Var::constant(Tensor::row({1, 1, 1, 1})),
                       Var::constant(Tensor::row({0, 0, 0, 0})), 1e-5);
    for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(y.value()[i], 0.0, 1e-12);
}

TEST(LayerNorm, AlreadyNormalizedRowIsFixedPoint) {
    Var y = layer_norm(Var::constant(Tensor::from_rows({{-1, 1}})),
                       Var::constant(Tensor::row({1, 1})),
                       Var::constant(Tensor::row({0, 0})), 1e-12);
    EXPECT_NEAR(y.value()[0], -1.0, 1e-6);
    EXPECT_NEAR(y.value()[1], 1.0, 1e-6);
}

TEST(LayerNorm, HandEvaluatedAffineRow) {
    // (x - mu)/sqrt(var + eps)*gamma + beta on row [0,2,4], gamma=2, beta=1
    const double eps = 1e-5;
    const double mu = 2.0, var = 8.0 / 3.0;
    Var y = layer_norm(Var::constant(Tensor::from_rows({{0, 2, 4}})),
                       Var::constant(Tensor::row({2, 2, 2})),
                       Var::constant(Tensor::row({1, 1, 1})), eps);
    for (std::size_t j = 0; j < 3; ++j) {
        const double x = 2.0 * static_cast<double>(j);
        const double expect = (x - mu) / std::sqrt(var + eps) * 2.0 + 1.0;
        EXPECT_NEAR(y.value()[j], expect, 1e-12);
    }
}

TEST(LayerNorm, NormalizesMeanAndVariance) {
    Tensor x = random_tensor({3, 8}, 5, 0, -2.0, 2.0);
    Var y = layer_norm(Var::constant(x), Var::constant(Tensor::full({1, 8}, 1.0)),
                       Var::constant(Tensor({1, 8})), 1e-10);
    for (std::size_t r = 0; r < 3; ++r) {
        double mean = 0.0, var = 0.0;
        for (std::size_t j = 0; j < 8; ++j) mean += y.value().at(r, j);
        mean /= 8.0;
        for (std::size_t j = 0; j < 8; ++j) {
            const double c = y.value().at(r, j) - mean;
            var += c * c;
        }
        var /= 8.0;
        EXPECT_NEAR(mean, 0.0, 1e-12);
        EXPECT_NEAR(var, 1.0, 1e-6);
    }
}

TEST(FeedForward, ZeroWeightsAnnihilate) {
    Tensor x = random_tensor({3, 4}, 9);
    Var y = feed_forward(Var::constant(x), Var::constant(Tensor({4, 8})),
                         Var::constant(Tensor({1, 8})), Var::constant(Tensor({8, 4})),
                         Var::constant(Tensor({1, 4})));
    for (std::size_t i = 0; i < y.value().numel(); ++i) EXPECT_DOUBLE_EQ(y.value()[i], 0.0);
}

TEST(FeedForward, IdentityOnNonnegativeInput) {
    Tensor x = random_tensor({3, 4}, 10, 0, 0.0, 1.0);
    Var y = feed_forward(Var::constant(x), Var::constant(Tensor::identity(4)),
                         Var::constant(Tensor({1, 4})), Var::constant(Tensor::identity(4)),
                         Var::constant(Tensor({1, 4})));
    for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_NEAR(y.value()[i], x[i], 1e-15);
}

TEST(FeedForward, MatchesComposedOracle) {
    Tensor x = random_tensor({2, 3}, 21, 0);
    Tensor w1 = random_tensor({3, 6}, 21, 1);
    Tensor b1 = random_tensor({1, 6}, 21, 2);
    Tensor w2 = random_tensor({6, 3}, 21, 3);
    Tensor b2 = random_tensor({1, 3}, 21, 4);
    // oracle composed from scratch loops
    Tensor hidden({2, 6});
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t j = 0; j < 6; ++j) {
            double s = b1[j];
            for (std::size_t k = 0; k < 3; ++k) s += x.at(i, k) * w1.at(k, j);
            hidden.at(i, j) = s > 0 ? s : 0;
        }
    Tensor expect({2, 3});
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t j = 0; j < 3; ++j) {
            double s = b2[j];
            for (std::size_t k = 0; k < 6; ++k) s += hidden.at(i, k) * w2.at(k, j);
            expect.at(i, j) = s;
        }
    Var y = feed_forward(Var::constant(x), Var::constant(w1), Var::constant(b1),
                         Var::constant(w2), Var::constant(b2));
    for (std::size_t i = 0; i < expect.numel(); ++i) EXPECT_NEAR(y.value()[i], expect[i], 1e-12);
}

TEST(ConcatSplit, RoundTripIsIdentity) {
    for (std::size_t axis = 0; axis < 2; ++axis) {
        Tensor x = random_tensor({6, 4}, 31, axis);
        Var v = Var::constant(x);
        std::vector<std::size_t> sizes = axis == 0 ? std::vector<std::size_t>{2, 3, 1}
                                                   : std::vector<std::size_t>{1, 2, 1};
        auto parts = split(v, axis, sizes);
        Var back = concat(parts, axis);
        ASSERT_EQ(back.value().shape(), x.shape());
        for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_DOUBLE_EQ(back.value()[i], x[i]);
    }
}

TEST(L2Normalize, UnitNormRows) {
    Tensor x = random_tensor({5, 7}, 13, 0, -2.0, 2.0);
    Var y = l2_normalize_rows(Var::constant(x));
    for (std::size_t r = 0; r < 5; ++r) {
        double s = 0.0;
        for (std::size_t j = 0; j < 7; ++j) s += y.value().at(r, j) * y.value().at(r, j);
        EXPECT_NEAR(std::sqrt(s), 1.0, 1e-12);
    }
}

TEST(L2Normalize, ZeroRowIsAnError) {
    EXPECT_THROW(l2_normalize_rows(Var::constant(Tensor({2, 3}))), std::runtime_error);
}

TEST(GradAccumulation, AdditiveAcrossBackwardCalls) {
    Var w = Var::leaf(Tensor::from_rows({{1.0, 2.0}}), true);
    for (int rep = 0; rep < 2; ++rep) backward(sum_all(mul(w, w)));
    // d/dw sum(w^2) = 2w, accumulated twice -> 4w
    EXPECT_DOUBLE_EQ(w.grad()[0], 4.0);
    EXPECT_DOUBLE_EQ(w.grad()[1], 8.0);
    w.zero_grad();
    EXPECT_DOUBLE_EQ(w.grad()[0], 0.0);
}

// -- finite-difference checks (the spec'd primitive suite) ---------------------

TEST(GradCheck, MatmulRandom3x3) {
    auto op = [](const std::vector<Var>& v) { return matmul(v[0], v[1]); };
    auto report = grad_check("matmul", op,
                             {random_tensor({3, 3}, 1, 0), random_tensor({3, 3}, 1, 1)},
                             1e-6, 1e-5, 1);
    EXPECT_TRUE(report.pass) << report.max_rel_error;
}

TEST(GradCheck, SoftmaxRandom4x5) {
    auto op = [](const std::vector<Var>& v) { return softmax_rows(v[0]); };
    auto report = grad_check("softmax_rows", op, {random_tensor({4, 5}, 2, 0, -2.0, 2.0)},
                             1e-6, 1e-5, 2);
    EXPECT_TRUE(report.pass) << report.max_rel_error;
}

TEST(GradCheck, LayerNormRandom2x8) {
    auto op = [](const std::vector<Var>& v) { return layer_norm(v[0], v[1], v[2], 1e-5); };
    auto report = grad_check("layer_norm", op,
                             {random_tensor({2, 8}, 3, 0), random_tensor({1, 8}, 3, 1, 0.5, 1.5),
                              random_tensor({1, 8}, 3, 2)},
                             1e-6, 1e-5, 3);
    EXPECT_TRUE(report.pass) << report.max_rel_error;
}

TEST(GradCheck, AllPrimitives) {
    struct Case {
        const char* name;
        std::function<Var(const std::vector<Var>&)> op;
        std::vector<Tensor> inputs;
    };
    const std::uint64_t s = 42;
    std::vector<Case> cases = {
        {"transpose", [](const std::vector<Var>& v) { return transpose(v[0]); },
         {random_tensor({3, 5}, s, 1)}},
        {"add", [](const std::vector<Var>& v) { return add(v[0], v[1]); },
         {random_tensor({3, 4}, s, 2), random_tensor({3, 4}, s, 3)}},
        {"sub", [](const std::vector<Var>& v) { return sub(v[0], v[1]); },
         {random_tensor({3, 4}, s, 4), random_tensor({3, 4}, s, 5)}},
        {"mul", [](const std::vector<Var>& v) { return mul(v[0], v[1]); },
         {random_tensor({3, 4}, s, 6), random_tensor({3, 4}, s, 7)}},
        {"divide", [](const std::vector<Var>& v) { return divide(v[0], v[1]); },
         {random_tensor({3, 4}, s, 8), random_tensor({3, 4}, s, 9, 0.5, 2.0)}},
        {"scale", [](const std::vector<Var>& v) { return scale(v[0], -1.7); },
         {random_tensor({3, 4}, s, 10)}},
        {"add_rowvec", [](const std::vector<Var>& v) { return add_rowvec(v[0], v[1]); },
         {random_tensor({4, 3}, s, 11), random_tensor({1, 3}, s, 12)}},
        {"relu", [](const std::vector<Var>& v) { return relu(v[0]); },
         {random_tensor({4, 4}, s, 13)}},
        {"sigmoid", [](const std::vector<Var>& v) { return sigmoid(v[0]); },
         {random_tensor({4, 4}, s, 14, -3.0, 3.0)}},
        {"exp", [](const std::vector<Var>& v) { return exp_elem(v[0]); },
         {random_tensor({3, 3}, s, 15)}},
        {"elem_min", [](const std::vector<Var>& v) { return elem_min(v[0], v[1]); },
         {random_tensor({3, 4}, s, 16), random_tensor({3, 4}, s, 17)}},
        {"elem_max", [](const std::vector<Var>& v) { return elem_max(v[0], v[1]); },
         {random_tensor({3, 4}, s, 18), random_tensor({3, 4}, s, 19)}},
        {"log_softmax_rows", [](const std::vector<Var>& v) { return log_softmax_rows(v[0]); },
         {random_tensor({3, 6}, s, 20, -2.0, 2.0)}},
        {"concat0", [](const std::vector<Var>& v) { return concat({v[0], v[1]}, 0); },
         {random_tensor({2, 3}, s, 21), random_tensor({4, 3}, s, 22)}},
        {"concat1", [](const std::vector<Var>& v) { return concat({v[0], v[1]}, 1); },
         {random_tensor({3, 2}, s, 23), random_tensor({3, 4}, s, 24)}},
        {"split", [](const std::vector<Var>& v) { return split(v[0], 1, {2, 3})[1]; },
         {random_tensor({3, 5}, s, 25)}},
        {"reshape", [](const std::vector<Var>& v) { return reshape(v[0], {2, 6}); },
         {random_tensor({3, 4}, s, 26)}},
        {"gather_rows", [](const std::vector<Var>& v) { return gather_rows(v[0], {2, 0, 2}); },
         {random_tensor({4, 3}, s, 27)}},
        {"sum_all", [](const std::vector<Var>& v) { return sum_all(v[0]); },
         {random_tensor({3, 4}, s, 28)}},
        {"mean_all", [](const std::vector<Var>& v) { return mean_all(v[0]); },
         {random_tensor({3, 4}, s, 29)}},
        {"mean_rows", [](const std::vector<Var>& v) { return mean_rows(v[0]); },
         {random_tensor({5, 3}, s, 30)}},
        {"l2_normalize_rows", [](const std::vector<Var>& v) { return l2_normalize_rows(v[0]); },
         {random_tensor({3, 5}, s, 31, 0.3, 2.0)}},
        {"conv2d_3x3", [](const std::vector<Var>& v) { return conv2d_3x3(v[0], v[1], v[2]); },
         {random_tensor({2, 4, 5}, s, 32), random_tensor({3, 2, 3, 3}, s, 33),
          random_tensor({3}, s, 34)}},
        {"avg_pool2", [](const std::vector<Var>& v) { return avg_pool2(v[0]); },
         {random_tensor({2, 4, 6}, s, 35)}},
        {"bce_with_logits",
         [t = random_tensor({3, 4}, s, 37, 0.0, 1.0)](const std::vector<Var>& v) {
             return bce_with_logits_mean(v[0], t);
         },
         {random_tensor({3, 4}, s, 36, -2.0, 2.0)}},
        {"feed_forward",
         [](const std::vector<Var>& v) { return feed_forward(v[0], v[1], v[2], v[3], v[4]); },
         {random_tensor({2, 3}, s, 38), random_tensor({3, 6}, s, 39),
          random_tensor({1, 6}, s, 40), random_tensor({6, 3}, s, 41),
          random_tensor({1, 3}, s, 42)}},
        {"scaled_dot_attention",
         [](const std::vector<Var>& v) { return scaled_dot_attention(v[0], v[1], v[2], 0.7); },
         {random_tensor({3, 2}, s, 43), random_tensor({4, 2}, s, 44),
          random_tensor({4, 3}, s, 45)}},
    };
    for (const auto& c : cases) {
        auto report = grad_check(c.name, c.op, c.inputs, 1e-6, 1e-5, s);
        EXPECT_TRUE(report.pass) << c.name << ": max rel err " << report.max_rel_error
                                 << " " << report.diagnostic;
    }
}

TEST(FusedAttention, MatchesComposedPrimitives) {
    const double alpha = 1.0 / std::sqrt(3.0);
    Tensor q = random_tensor({5, 3}, 61, 0);
    Tensor k = random_tensor({4, 3}, 61, 1);
    Tensor v = random_tensor({4, 2}, 61, 2);
    Tensor weights;
    Var fused = scaled_dot_attention(Var::constant(q), Var::constant(k), Var::constant(v),
                                     alpha, &weights);
    Var composed = matmul(
        softmax_rows(scale(matmul(Var::constant(q), transpose(Var::constant(k))), alpha)),
        Var::constant(v));
    for (std::size_t i = 0; i < fused.value().numel(); ++i)
        EXPECT_NEAR(fused.value()[i], composed.value()[i], 1e-14);
    for (std::size_t r = 0; r < weights.rows(); ++r) {
        double sum = 0.0;
        for (std::size_t j = 0; j < weights.cols(); ++j) sum += weights.at(r, j);
        EXPECT_NEAR(sum, 1.0, 1e-12);
    }
}

TEST(GradCheck, RandomizedShapesManySeeds) {
    // softmax/layer_norm/matmul across >= 20 seeds with randomized shapes
    for (std::uint64_t seed = 100; seed < 120; ++seed) {
        CounterRng rng(seed, fnv1a64("shapes"));
        const std::size_t n = 2 + rng.next_below(4);
        const std::size_t d = 2 + rng.next_below(5);
        const std::size_t k = 2 + rng.next_below(4);
        auto mm = grad_check("matmul",
                             [](const std::vector<Var>& v) { return matmul(v[0], v[1]); },
                             {random_tensor({n, k}, seed, 0), random_tensor({k, d}, seed, 1)},
                             1e-6, 1e-5, seed);
        EXPECT_TRUE(mm.pass) << "matmul seed " << seed << " err " << mm.max_rel_error;
        auto sm = grad_check("softmax_rows",
                             [](const std::vector<Var>& v) { return softmax_rows(v[0]); },
                             {random_tensor({n, d}, seed, 2, -2.0, 2.0)}, 1e-6, 1e-5, seed);
        EXPECT_TRUE(sm.pass) << "softmax seed " << seed << " err " << sm.max_rel_error;
        auto ln = grad_check(
            "layer_norm",
            [](const std::vector<Var>& v) { return layer_norm(v[0], v[1], v[2], 1e-5); },
            {random_tensor({n, d}, seed, 3), random_tensor({1, d}, seed, 4, 0.5, 1.5),
             random_tensor({1, d}, seed, 5)},
            1e-6, 1e-5, seed);
        EXPECT_TRUE(ln.pass) << "layer_norm seed " << seed << " err " << ln.max_rel_error;
    }
}
