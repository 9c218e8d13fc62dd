#include "cxrgen/error.hpp"
#include "cxrgen/metrics.hpp"
#include "cxrgen/rng.hpp"

#include "support/oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <sstream>

namespace cxr {
namespace {

using testing::Words;

Corpus random_corpus(Rng& rng, std::size_t pairs, std::size_t vocab, std::size_t max_len) {
    Corpus c;
    const auto sentence = [&](std::size_t min_len) {
        Words w(min_len + rng.below(max_len - min_len + 1));
        for (auto& t : w) t = "w" + std::to_string(rng.below(vocab));
        return w;
    };
    for (std::size_t i = 0; i < pairs; ++i) {
        c.hypotheses.push_back(sentence(0));
        c.references.push_back(sentence(1));
    }
    return c;
}

TEST(Bleu, HandExample) {
    const Corpus c{{{"the", "cat", "sat"}}, {{"the", "cat", "sat", "down"}}};
    const auto scores = bleu(c);
    const double bp = std::exp(1.0 - 4.0 / 3.0);
    EXPECT_NEAR(scores[0], bp, 1e-12);
    EXPECT_NEAR(scores[1], bp, 1e-12);
    EXPECT_NEAR(scores[2], bp, 1e-12);
    // No 4-grams in a 3-word hypothesis: the epsilon floor applies.
    EXPECT_NEAR(scores[3], bp * std::pow(1e-9, 0.25), 1e-12);
}

TEST(Bleu, ClippingHandExample) {
    const Corpus c{{{"the", "the", "the", "the"}}, {{"the", "cat", "on", "the"}}};
    EXPECT_NEAR(bleu(c, 1)[0], 0.5, 1e-12);
}

TEST(Bleu, Identity) {
    Rng rng(1);
    auto c = random_corpus(rng, 10, 30, 12);
    c.hypotheses = c.references;
    for (double s : bleu(c)) EXPECT_NEAR(s, 1.0, 1e-12);
}

TEST(Bleu, DisjointIsEpsilon) {
    const Corpus c{{{"a", "b", "c"}}, {{"x", "y", "z"}}};
    const auto s = bleu(c);
    EXPECT_LT(s[0], 1e-8);
    EXPECT_GE(s[0], 0.0);
}

TEST(Bleu, EmptyHypothesesScoreZero) {
    const Corpus c{{{}, {}}, {{"a"}, {"b"}}};
    for (double s : bleu(c)) EXPECT_EQ(s, 0.0);
}

TEST(Bleu, MatchesBruteForceOracle) {
    Rng rng(2);
    for (int trial = 0; trial < 200; ++trial) {
        const auto c = random_corpus(rng, 1 + rng.below(8), 2 + rng.below(10), 15);
        const auto expected = testing::bleu_oracle(c.hypotheses, c.references);
        const auto actual = bleu(c);
        for (std::size_t n = 0; n < 4; ++n) EXPECT_NEAR(actual[n], expected[n], 1e-9) << "trial " << trial;
    }
}

TEST(Bleu, ReorderInvariantAndBounded) {
    Rng rng(3);
    for (int trial = 0; trial < 50; ++trial) {
        auto c = random_corpus(rng, 6, 6, 10);
        const auto before = bleu(c);
        std::vector<std::size_t> perm(c.size());
        std::iota(perm.begin(), perm.end(), 0);
        rng.shuffle(perm);
        Corpus shuffled;
        for (auto i : perm) {
            shuffled.hypotheses.push_back(c.hypotheses[i]);
            shuffled.references.push_back(c.references[i]);
        }
        const auto after = bleu(shuffled);
        for (std::size_t n = 0; n < 4; ++n) {
            EXPECT_NEAR(before[n], after[n], 1e-12);
            EXPECT_GE(before[n], 0.0);
            EXPECT_LE(before[n], 1.0);
        }
    }
}

TEST(Bleu, NonIncreasingInOrderWhenAllOrdersMatch) {
    Rng rng(4);
    int checked = 0;
    for (int trial = 0; trial < 300; ++trial) {
        auto c = random_corpus(rng, 4, 3, 12);
        // Seed a shared 4-gram so every order has a match.
        for (std::size_t i = 0; i < c.size(); ++i) {
            for (const char* w : {"p", "q", "r", "s"}) {
                c.hypotheses[i].push_back(w);
                c.references[i].push_back(w);
            }
        }
        const auto s = bleu(c);
        for (std::size_t n = 1; n < 4; ++n) EXPECT_LE(s[n], s[n - 1] + 1e-12);
        ++checked;
    }
    EXPECT_EQ(checked, 300);
}

TEST(Bleu, Contracts) {
    EXPECT_THROW(bleu(Corpus{}), ContractError);
    EXPECT_THROW(bleu(Corpus{{{"a"}}, {}}), ContractError);
    EXPECT_THROW(bleu(Corpus{{{"a"}}, {{}}}), ContractError);
    EXPECT_THROW(bleu(Corpus{{{"a"}}, {{"a"}}}, 0), ContractError);
}

EmbeddingTable toy_table() {
    std::istringstream in("# toy\na 1 0\nb 0.6 0.8\nc 0 1\n");
    return EmbeddingTable::parse(in);
}

TEST(Embedding, HandGreedyOracle) {
    const auto table = toy_table();
    // cos(a,b) = 0.6, cos(b,c) = 0.8, cos(a,c) = 0.
    const auto s = embedding_scores({"a"}, {"a", "b"}, table);
    EXPECT_NEAR(s.precision, 1.0, 1e-12);
    EXPECT_NEAR(s.recall, (1.0 + 0.6) / 2, 1e-12);
    EXPECT_NEAR(s.f1, 2 * 1.0 * 0.8 / 1.8, 1e-12);

    const auto t = embedding_scores({"a", "c"}, {"b"}, table);
    EXPECT_NEAR(t.precision, (0.6 + 0.8) / 2, 1e-12);
    EXPECT_NEAR(t.recall, 0.8, 1e-12);
}

TEST(Embedding, IdentityAndOrthogonal) {
    const auto table = EmbeddingTable::one_hot({"x", "y", "z", "w"});
    const Corpus same{{{"x", "y"}, {"z"}}, {{"x", "y"}, {"z"}}};
    const auto s = embedding_f1(same, table);
    EXPECT_DOUBLE_EQ(s.precision, 1.0);
    EXPECT_DOUBLE_EQ(s.recall, 1.0);
    EXPECT_DOUBLE_EQ(s.f1, 1.0);
    const Corpus disjoint{{{"x", "y"}}, {{"z", "w"}}};
    const auto d = embedding_f1(disjoint, table);
    EXPECT_EQ(d.precision, 0.0);
    EXPECT_EQ(d.recall, 0.0);
    EXPECT_EQ(d.f1, 0.0);
}

TEST(Embedding, SwapSymmetry) {
    Rng rng(5);
    EmbeddingTable table(3);
    for (int i = 0; i < 8; ++i) table.add("w" + std::to_string(i), {rng.normal(), rng.normal(), rng.normal()});
    for (int trial = 0; trial < 30; ++trial) {
        auto c = random_corpus(rng, 5, 8, 6);
        for (auto& h : c.hypotheses) {
            if (h.empty()) h.push_back("w0");
        }
        const auto forward = embedding_f1(c, table);
        const auto backward = embedding_f1(Corpus{c.references, c.hypotheses}, table);
        EXPECT_NEAR(forward.precision, backward.recall, 1e-12);
        EXPECT_NEAR(forward.recall, backward.precision, 1e-12);
        EXPECT_NEAR(forward.f1, backward.f1, 1e-12);
    }
}

TEST(Embedding, UnknownPolicyAndDimensions) {
    auto table = toy_table();
    EXPECT_THROW(embedding_scores({"zzz"}, {"a"}, table), DataError);
    table.set_policy(UnknownTokenPolicy::zero);
    EXPECT_EQ(embedding_scores({"zzz"}, {"a"}, table).precision, 0.0);
    EXPECT_THROW(table.add("d", {1, 2, 3}), ConfigError);
    std::istringstream ragged("a 1 0\nb 1 0 0\n");
    EXPECT_THROW(EmbeddingTable::parse(ragged), ConfigError);
    EXPECT_EQ(cosine({0, 0}, {1, 0}), 0.0);
    EXPECT_EQ(embedding_scores({}, {"a"}, table).f1, 0.0);
}

TEST(TTest, DirectFormulaOracle) {
    const std::vector<double> d = {0.5, -0.3, 0.8, 0.1};
    const std::vector<double> zero(4, 0.0);
    const auto r = paired_t_test(d, zero);
    const auto o = testing::paired_t_oracle(d, zero);
    EXPECT_NEAR(r.t, o.t, 1e-12);
    EXPECT_NEAR(r.p, o.p, 1e-8);
    EXPECT_EQ(r.dof, 3u);
    EXPECT_NEAR(r.mean_difference, 0.275, 1e-15);
    EXPECT_FALSE(r.significant);
}

TEST(TTest, RandomSamplesAgainstOracle) {
    Rng rng(6);
    for (int trial = 0; trial < 50; ++trial) {
        const auto n = 2 + rng.below(10);
        std::vector<double> a(n), b(n);
        for (std::size_t i = 0; i < n; ++i) {
            a[i] = rng.normal();
            b[i] = rng.normal() + 0.3;
        }
        const auto r = paired_t_test(a, b);
        const auto o = testing::paired_t_oracle(a, b);
        EXPECT_NEAR(r.t, o.t, 1e-9 * (1 + std::abs(o.t)));
        EXPECT_NEAR(r.p, o.p, 1e-7);
        EXPECT_EQ(r.significant, r.p < 0.05);
    }
}

TEST(TTest, ConstantShiftIsSignificant) {
    const std::vector<double> a = {2.0, 3.0, 4.0, 5.0};
    const std::vector<double> b = {1.0 + 1e-6, 2.0 - 1e-6, 3.0 + 2e-6, 4.0};
    const auto r = paired_t_test(a, b);
    EXPECT_GT(r.t, 1e4);
    EXPECT_LT(r.p, 1e-9);
    EXPECT_TRUE(r.significant);
}

TEST(TTest, Antisymmetry) {
    const std::vector<double> a = {0.31, 0.29, 0.35, 0.30};
    const std::vector<double> b = {0.28, 0.27, 0.30, 0.29};
    const auto ab = paired_t_test(a, b);
    const auto ba = paired_t_test(b, a);
    EXPECT_DOUBLE_EQ(ab.t, -ba.t);
    EXPECT_DOUBLE_EQ(ab.p, ba.p);
}

TEST(TTest, DegenerateAndContracts) {
    const std::vector<double> a = {0.3, 0.4, 0.5};
    auto b = a;
    b[1] += 1e-17;
    EXPECT_THROW(paired_t_test(a, b), DataError);
    EXPECT_THROW(paired_t_test({1.0}, {2.0}), ContractError);
    EXPECT_THROW(paired_t_test({1.0, 2.0}, {1.0}), ContractError);
    EXPECT_THROW(paired_t_test({1.0, 2.0}, {0.0, 0.5}, 1.5), ContractError);
}

TEST(Report, JsonKeysAndDefaultEmbeddings) {
    const Corpus c{{{"heart", "normal"}}, {{"heart", "size", "normal"}}};
    const auto report = evaluate_corpus(c);
    EXPECT_EQ(report.pairs, 1u);
    EXPECT_NEAR(report.p_embed, 1.0, 1e-12);
    EXPECT_NEAR(report.r_embed, 2.0 / 3.0, 1e-12);
    const auto j = to_json(report);
    for (const char* key : {"bleu_1", "bleu_2", "bleu_3", "bleu_4", "p_embed", "r_embed", "f1_embed", "pairs",
                            "embedding_source"}) {
        EXPECT_TRUE(j.contains(key)) << key;
    }
    EXPECT_EQ(split_tokens("  a b\tc "), (TokenSequence{"a", "b", "c"}));
}

}  // namespace
}  // namespace cxr
