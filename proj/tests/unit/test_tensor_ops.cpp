#include "cxrgen/error.hpp"
#include "cxrgen/ops.hpp"
#include "cxrgen/parameters.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>

namespace cxr {
namespace {

Tensor random_tensor(Rng& rng, Shape shape, bool grad = false) {
    std::vector<Scalar> v(shape_size(shape));
    for (auto& x : v) x = static_cast<Scalar>(rng.normal());
    return Tensor(std::move(shape), std::move(v), grad);
}

TEST(Tensor, RejectsMismatchedValueCount) {
    EXPECT_THROW(Tensor({2, 3}, std::vector<Scalar>(5)), ShapeError);
    EXPECT_NO_THROW(Tensor({2, 3}, std::vector<Scalar>(6)));
}

TEST(Tensor, RowsColsAndItemRequireMatchingRank) {
    const auto t = Tensor::zeros({4});
    EXPECT_THROW(t.rows(), ShapeError);
    EXPECT_THROW(t.item(), ShapeError);
    EXPECT_EQ(Tensor::scalar(2.5f).item(), 2.5f);
    EXPECT_EQ(Tensor::filled({2, 2}, 3.0f).at(1, 1), 3.0f);
}

TEST(Tensor, CloneIsIndependent) {
    Rng rng(1);
    auto a = random_tensor(rng, {2, 2});
    auto b = a.clone();
    b.mutable_values()[0] = 42.0f;
    EXPECT_NE(a.values()[0], 42.0f);
    EXPECT_FALSE(a.same_storage(b));
}

TEST(Ops, MatmulMatchesTripleLoop) {
    Rng rng(2);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t m = 1 + rng.below(6), k = 1 + rng.below(6), n = 1 + rng.below(6);
        const auto a = random_tensor(rng, {m, k});
        const auto b = random_tensor(rng, {k, n});
        const auto c = matmul(a, b);
        ASSERT_EQ(c.shape(), (Shape{m, n}));
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                double acc = 0.0;
                for (std::size_t p = 0; p < k; ++p) acc += double(a.at(i, p)) * double(b.at(p, j));
                EXPECT_NEAR(c.at(i, j), acc, 1e-5);
            }
        }
    }
    EXPECT_THROW(matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3})), ShapeError);
}

TEST(Ops, TransposeAndLinear) {
    Rng rng(3);
    const auto x = random_tensor(rng, {3, 4});
    const auto w = random_tensor(rng, {4, 2});
    const auto b = random_tensor(rng, {2});
    const auto t = transpose(x);
    EXPECT_EQ(t.shape(), (Shape{4, 3}));
    EXPECT_EQ(t.at(2, 1), x.at(1, 2));
    const auto y = linear(x, w, b);
    const auto ref = add_row(matmul(x, w), b);
    for (std::size_t i = 0; i < y.size(); ++i) EXPECT_FLOAT_EQ(y.values()[i], ref.values()[i]);
}

TEST(Ops, SoftmaxMatchesDirectFormula) {
    Rng rng(4);
    const auto x = random_tensor(rng, {3, 5});
    const auto s = softmax(x, 1);
    for (std::size_t i = 0; i < 3; ++i) {
        double z = 0.0;
        for (std::size_t j = 0; j < 5; ++j) z += std::exp(double(x.at(i, j)));
        for (std::size_t j = 0; j < 5; ++j) EXPECT_NEAR(s.at(i, j), std::exp(double(x.at(i, j))) / z, 1e-6);
    }
    const auto s0 = softmax(x, 0);
    for (std::size_t j = 0; j < 5; ++j) {
        double total = 0.0;
        for (std::size_t i = 0; i < 3; ++i) total += s0.at(i, j);
        EXPECT_NEAR(total, 1.0, 1e-6);
    }
    const auto big = softmax(Tensor({1, 2}, {1000.0f, 1000.0f}), 1);
    EXPECT_FLOAT_EQ(big.values()[0], 0.5f);
    EXPECT_THROW(softmax(x, 2), ShapeError);
}

TEST(Ops, LayerNormMatchesDirectFormula) {
    Rng rng(5);
    const auto x = random_tensor(rng, {2, 6});
    const auto gain = random_tensor(rng, {6});
    const auto bias = random_tensor(rng, {6});
    const auto y = layer_norm(x, gain, bias);
    for (std::size_t i = 0; i < 2; ++i) {
        double mean = 0.0, var = 0.0;
        for (std::size_t j = 0; j < 6; ++j) mean += x.at(i, j);
        mean /= 6;
        for (std::size_t j = 0; j < 6; ++j) var += (x.at(i, j) - mean) * (x.at(i, j) - mean);
        var /= 6;
        for (std::size_t j = 0; j < 6; ++j) {
            const double expected = (x.at(i, j) - mean) / std::sqrt(var + 1e-5) * gain.values()[j] + bias.values()[j];
            EXPECT_NEAR(y.at(i, j), expected, 1e-5);
        }
    }
}

TEST(Ops, AttentionMatchesDirectFormulaWithMask) {
    Rng rng(6);
    const auto q = random_tensor(rng, {4, 3});
    const auto k = random_tensor(rng, {5, 3});
    const auto v = random_tensor(rng, {5, 2});
    AttentionMask mask(4, 5);
    mask.set(0, 4, false);
    mask.set(2, 0, false);
    mask.block_key(3);
    const auto out = scaled_dot_attention(q, k, v, &mask);
    for (std::size_t i = 0; i < 4; ++i) {
        std::vector<double> w(5, 0.0);
        double z = 0.0;
        for (std::size_t j = 0; j < 5; ++j) {
            if (!mask.allowed(i, j)) continue;
            double s = 0.0;
            for (std::size_t d = 0; d < 3; ++d) s += double(q.at(i, d)) * k.at(j, d);
            w[j] = std::exp(s / std::sqrt(3.0));
            z += w[j];
        }
        for (std::size_t c = 0; c < 2; ++c) {
            double expected = 0.0;
            for (std::size_t j = 0; j < 5; ++j) expected += w[j] / z * v.at(j, c);
            EXPECT_NEAR(out.at(i, c), expected, 1e-5);
        }
    }
}

TEST(Ops, AttentionRejectsFullyMaskedRow) {
    AttentionMask mask(1, 2);
    mask.block_key(0);
    mask.block_key(1);
    const auto x = Tensor::zeros({1, 2});
    const auto kv = Tensor::zeros({2, 2});
    EXPECT_THROW(scaled_dot_attention(x, kv, kv, &mask), ContractError);
}

TEST(Ops, CausalMaskShape) {
    const auto m = AttentionMask::causal(4);
    for (std::size_t q = 0; q < 4; ++q) {
        for (std::size_t k = 0; k < 4; ++k) EXPECT_EQ(m.allowed(q, k), k <= q);
    }
}

TEST(Ops, CrossEntropyMatchesLogSumExpAndSkipsIgnored) {
    Rng rng(7);
    const auto logits = random_tensor(rng, {3, 4});
    const std::int32_t targets[] = {1, 0, 3};
    const auto loss = sparse_cross_entropy(logits, targets, 0);
    double expected = 0.0;
    for (std::size_t i : {0u, 2u}) {
        double z = 0.0;
        for (std::size_t j = 0; j < 4; ++j) z += std::exp(double(logits.at(i, j)));
        expected += std::log(z) - logits.at(i, static_cast<std::size_t>(targets[i]));
    }
    EXPECT_NEAR(loss.item(), expected, 1e-5);
    const std::int32_t bad[] = {1, 9, 3};
    EXPECT_THROW(sparse_cross_entropy(logits, bad, 0), ContractError);
}

TEST(Ops, EmbeddingGathersRowsAndRejectsBadIds) {
    const Tensor table({3, 2}, {0, 1, 10, 11, 20, 21});
    const std::int32_t ids[] = {2, 0};
    const auto e = embedding(table, ids);
    EXPECT_EQ(e.at(0, 1), 21.0f);
    EXPECT_EQ(e.at(1, 0), 0.0f);
    const std::int32_t bad[] = {3};
    EXPECT_THROW(embedding(table, bad), ContractError);
}

TEST(Ops, SliceAndConcatRoundTrip) {
    Rng rng(8);
    const auto a = random_tensor(rng, {2, 6});
    const Tensor parts[] = {slice_cols(a, 0, 2), slice_cols(a, 2, 4)};
    const auto b = concat_cols(parts);
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a.values()[i], b.values()[i]);
    EXPECT_THROW(slice_cols(a, 5, 2), ShapeError);
}

TEST(Ops, DropoutIsInvertedAndOffAtRateZero) {
    Rng rng(9);
    const auto x = Tensor::filled({100, 100}, 1.0f);
    EXPECT_TRUE(dropout(x, 0.0f, rng).same_storage(x));
    const auto y = dropout(x, 0.25f, rng);
    double total = 0.0;
    std::size_t zeros = 0;
    for (auto v : y.values()) {
        total += v;
        if (v == 0.0f) ++zeros;
        else EXPECT_FLOAT_EQ(v, 1.0f / 0.75f);
    }
    EXPECT_NEAR(total / 10000.0, 1.0, 0.03);
    EXPECT_NEAR(zeros / 10000.0, 0.25, 0.02);
}

TEST(Ops, AllFinite) {
    EXPECT_TRUE(all_finite(Tensor::zeros({3})));
    EXPECT_FALSE(all_finite(Tensor({2}, {1.0f, std::numeric_limits<float>::quiet_NaN()})));
    EXPECT_FALSE(all_finite(Tensor({1}, {std::numeric_limits<float>::infinity()})));
}

TEST(Tape, RecordsOnlyWithGradOperandsAndAccumulatesLeaves) {
    Rng rng(10);
    auto w = random_tensor(rng, {2, 2}, true);
    const auto x = random_tensor(rng, {2, 2});
    Tape tape;
    {
        TapeScope scope(tape);
        const auto constant = matmul(x, x);
        EXPECT_EQ(tape.size(), 0u);
        const auto y = sum(matmul(x, w));
        EXPECT_EQ(tape.size(), 2u);
        tape.backward(y);
        const std::vector<Scalar> first(w.grad().begin(), w.grad().end());
        tape.backward(y);
        for (std::size_t i = 0; i < first.size(); ++i) EXPECT_FLOAT_EQ(w.grad()[i], 2 * first[i]);
    }
    {
        NoGradScope none;
        EXPECT_EQ(active_tape(), nullptr);
    }
}

TEST(Tape, GradientOfSharedSubexpressionSumsBothPaths) {
    auto a = Tensor({1}, {3.0f}, true);
    Tape tape;
    TapeScope scope(tape);
    const auto y = mul(a, a);  // d/da = 2a
    tape.backward(add(y, a));  // + 1
    EXPECT_FLOAT_EQ(a.grad()[0], 7.0f);
}

TEST(Adam, MatchesReferenceRecurrence) {
    ParameterSet params;
    auto& p = params.add("p", Tensor({3}, {0.5f, -1.0f, 2.0f}, true));
    auto state = AdamState::for_parameters(params);
    AdamOptions opt;
    opt.learning_rate = 0.01f;
    std::vector<double> theta = {0.5, -1.0, 2.0}, m(3, 0.0), v(3, 0.0);
    const double b1 = 0.9, b2 = 0.999, eps = 1e-8, lr = 0.01;
    for (int step = 1; step <= 5; ++step) {
        auto g = p.mutable_grad();
        for (std::size_t i = 0; i < 3; ++i) g[i] = static_cast<Scalar>((i + 1) * 0.1 * step);
        adam_step(params, state, opt);
        for (std::size_t i = 0; i < 3; ++i) {
            const double gi = (i + 1) * 0.1 * step;
            m[i] = b1 * m[i] + (1 - b1) * gi;
            v[i] = b2 * v[i] + (1 - b2) * gi * gi;
            const double mh = m[i] / (1 - std::pow(b1, step));
            const double vh = v[i] / (1 - std::pow(b2, step));
            theta[i] -= lr * mh / (std::sqrt(vh) + eps);
            EXPECT_NEAR(p.values()[i], theta[i], 1e-5);
        }
    }
    EXPECT_EQ(state.step, 5u);
}

TEST(Adam, FirstStepMovesByLearningRate) {
    ParameterSet params;
    auto& p = params.add("p", Tensor({2}, {1.0f, 1.0f}, true));
    auto state = AdamState::for_parameters(params);
    p.mutable_grad()[0] = 5.0f;
    p.mutable_grad()[1] = -0.001f;
    adam_step(params, state, AdamOptions{});
    EXPECT_NEAR(p.values()[0], 1.0 - 3e-4, 1e-6);
    EXPECT_NEAR(p.values()[1], 1.0 + 3e-4, 1e-6);
}

TEST(Adam, RejectsMismatchedState) {
    ParameterSet params;
    params.add("p", Tensor::zeros({2}, true));
    AdamState state;
    EXPECT_THROW(adam_step(params, state, AdamOptions{}), ContractError);
}

TEST(ClipGradNorm, ScalesToMaxNorm) {
    ParameterSet params;
    auto& p = params.add("p", Tensor::zeros({2}, true));
    p.mutable_grad()[0] = 3.0f;
    p.mutable_grad()[1] = 4.0f;
    EXPECT_NEAR(clip_grad_norm(params, 1.0), 5.0, 1e-6);
    EXPECT_NEAR(p.grad()[0], 0.6f, 1e-6);
    EXPECT_NEAR(p.grad()[1], 0.8f, 1e-6);
    EXPECT_NEAR(clip_grad_norm(params, 10.0), 1.0, 1e-6);
    EXPECT_NEAR(p.grad()[0], 0.6f, 1e-6);
}

TEST(ParameterSet, NamesAreUniqueAndCloneIsDeep) {
    ParameterSet params;
    params.add("a", Tensor::filled({2}, 1.0f, true));
    EXPECT_THROW(params.add("a", Tensor::zeros({1}, true)), ContractError);
    auto copy = params.clone();
    copy.at("a").mutable_values()[0] = 9.0f;
    EXPECT_EQ(params.at("a").values()[0], 1.0f);
    params.assign_values(copy);
    EXPECT_EQ(params.at("a").values()[0], 9.0f);
    EXPECT_EQ(params.scalar_count(), 2u);
}

TEST(Ops, MatmulSmallCases) {
    const Tensor a({2, 2}, {1, 2, 3, 4});
    const Tensor eye({2, 2}, {1, 0, 0, 1});
    const auto same = matmul(a, eye);
    for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(same.values()[i], a.values()[i]);
    const auto zero = matmul(a, Tensor::zeros({2, 2}));
    for (auto v : zero.values()) EXPECT_EQ(v, 0.0f);
    const auto c = matmul(a, Tensor({2, 2}, {5, 6, 7, 8}));
    EXPECT_EQ(c.at(0, 0), 19.0f);
    EXPECT_EQ(c.at(0, 1), 22.0f);
    EXPECT_EQ(c.at(1, 0), 43.0f);
    EXPECT_EQ(c.at(1, 1), 50.0f);
}

TEST(Ops, SoftmaxSmallCases) {
    const auto uniform = softmax(Tensor({1, 4}, {0, 0, 0, 0}), 1);
    for (auto v : uniform.values()) EXPECT_FLOAT_EQ(v, 0.25f);
    const auto s = softmax(Tensor({1, 3}, {1, 2, 3}), 1);
    const double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
    for (int i = 0; i < 3; ++i) EXPECT_NEAR(s.values()[i], std::exp(i + 1.0) / z, 1e-7);
    const auto sat = softmax(Tensor({1, 2}, {3.0f, 3.0f + 200.0f}), 1);
    EXPECT_EQ(sat.values()[0], 0.0f);
    EXPECT_EQ(sat.values()[1], 1.0f);
}

TEST(Ops, LayerNormSmallCasesAndMoments) {
    const auto ones = Tensor::filled({3}, 1.0f);
    const auto zeros = Tensor::zeros({3});
    const auto flat = layer_norm(Tensor({1, 3}, {5, 5, 5}), ones, zeros);
    for (auto v : flat.values()) EXPECT_EQ(v, 0.0f);
    const auto y = layer_norm(Tensor({1, 3}, {1, 2, 3}), ones, zeros);
    const double sd = std::sqrt(2.0 / 3.0 + 1e-5);
    EXPECT_NEAR(y.values()[0], -1.0 / sd, 1e-6);
    EXPECT_NEAR(y.values()[1], 0.0, 1e-6);
    EXPECT_NEAR(y.values()[2], 1.0 / sd, 1e-6);
    EXPECT_THROW(layer_norm(Tensor({1, 3}, {1, 2, 3}), Tensor::zeros({2}), zeros), ShapeError);

    Rng rng(11);
    const auto x = random_tensor(rng, {10, 16});
    const auto n = layer_norm(x, Tensor::filled({16}, 1.0f), Tensor::zeros({16}));
    for (std::size_t i = 0; i < 10; ++i) {
        double mean = 0.0, var = 0.0;
        for (std::size_t j = 0; j < 16; ++j) mean += n.at(i, j);
        mean /= 16;
        for (std::size_t j = 0; j < 16; ++j) var += (n.at(i, j) - mean) * (n.at(i, j) - mean);
        EXPECT_LT(std::abs(mean), 1e-5);
        EXPECT_NEAR(var / 16, 1.0, 1e-3);
    }
}

TEST(Ops, AttentionSmallCases) {
    Rng rng(12);
    const auto q = random_tensor(rng, {3, 4});
    const auto k1 = random_tensor(rng, {1, 4});
    const auto v1 = random_tensor(rng, {1, 4});
    const auto single = scaled_dot_attention(q, k1, v1);
    for (std::size_t i = 0; i < 3; ++i) {
        for (std::size_t c = 0; c < 4; ++c) EXPECT_EQ(single.at(i, c), v1.at(0, c));
    }
    const auto k = random_tensor(rng, {3, 4});
    const auto v = random_tensor(rng, {3, 4});
    AttentionMask diagonal(3, 3, false);
    for (std::size_t i = 0; i < 3; ++i) diagonal.set(i, i, true);
    const auto self_only = scaled_dot_attention(q, k, v, &diagonal);
    for (std::size_t i = 0; i < v.size(); ++i) EXPECT_EQ(self_only.values()[i], v.values()[i]);
}

TEST(Ops, AttentionOutputsStayInValueHull) {
    Rng rng(13);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t lq = 1 + rng.below(5), lk = 1 + rng.below(5), d = 1 + rng.below(4);
        const auto q = random_tensor(rng, {lq, d});
        const auto k = random_tensor(rng, {lk, d});
        const auto v = random_tensor(rng, {lk, 3});
        const auto out = scaled_dot_attention(q, k, v);
        ASSERT_TRUE(all_finite(out));
        for (std::size_t c = 0; c < 3; ++c) {
            float lo = v.at(0, c), hi = v.at(0, c);
            for (std::size_t j = 1; j < lk; ++j) {
                lo = std::min(lo, v.at(j, c));
                hi = std::max(hi, v.at(j, c));
            }
            for (std::size_t i = 0; i < lq; ++i) {
                EXPECT_GE(out.at(i, c), lo - 1e-5f);
                EXPECT_LE(out.at(i, c), hi + 1e-5f);
            }
        }
        const auto s = softmax(random_tensor(rng, {lq, lk}), 1);
        for (std::size_t i = 0; i < lq; ++i) {
            double row = 0.0;
            for (std::size_t j = 0; j < lk; ++j) row += s.at(i, j);
            EXPECT_NEAR(row, 1.0, 1e-5);
        }
    }
}

TEST(Tape, LinearAndQuadraticGradients) {
    Rng rng(14);
    auto x = random_tensor(rng, {2, 3}, true);
    {
        Tape tape;
        TapeScope scope(tape);
        tape.backward(sum(x));
    }
    for (auto g : x.grad()) EXPECT_EQ(g, 1.0f);
    x.zero_grad();
    {
        Tape tape;
        TapeScope scope(tape);
        tape.backward(sum(mul(x, x)));
    }
    for (std::size_t i = 0; i < x.size(); ++i) EXPECT_FLOAT_EQ(x.grad()[i], 2.0f * x.values()[i]);
}

TEST(Tape, NonScalarLossIsRejected) {
    auto x = Tensor::filled({2}, 1.0f, true);
    Tape tape;
    TapeScope scope(tape);
    const auto y = scale(x, 2.0f);
    EXPECT_THROW(tape.backward(y), ContractError);
}

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
    ParameterSet params;
    auto& p = params.add("p", Tensor({2}, {0.25f, -4.0f}, true));
    p.mutable_grad();
    auto state = AdamState::for_parameters(params);
    for (int i = 0; i < 3; ++i) adam_step(params, state, AdamOptions{});
    EXPECT_EQ(p.values()[0], 0.25f);
    EXPECT_EQ(p.values()[1], -4.0f);
}

}  // namespace
}  // namespace cxr
