#include "acceptance.hpp"

#include "cxrgen/checkpoint.hpp"
#include "cxrgen/demographics.hpp"
#include "cxrgen/error.hpp"
#include "cxrgen/pipeline.hpp"

#include "support/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

namespace cxr::acceptance {
namespace {

namespace fs = std::filesystem;

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

struct SmallCorpus {
    PreparedCorpus corpus;
    InputSpec inputs;
    std::size_t longest = 0;  // encoded length of the longest report
};

SmallCorpus small_corpus(std::size_t per_stratum, std::size_t feature_dim, std::uint64_t seed) {
    auto spec = SynthSpec::defaults();
    spec.feature_dim = feature_dim;
    for (auto& s : spec.strata) s.count = per_stratum;
    SmallCorpus out;
    out.corpus = prepare_corpus(synthesize_corpus(spec, seed), CleaningRules::defaults(),
                                {2212, spec.ethnicities.size(), feature_dim});
    out.inputs = {out.corpus.vocab, DemographicEncoding{out.corpus.categories}, DemographicFields::all()};
    for (const auto& p : out.corpus.points) out.longest = std::max(out.longest, p.report.tokens.size());
    return out;
}

ModelConfig small_model(const SmallCorpus& data, std::size_t d_model, std::size_t heads, const DemographicFields& f) {
    ModelConfig base;
    base.feature_dim = data.corpus.points.front().features.size();
    base.d_model = d_model;
    base.d_embed = d_model;
    base.n_heads = heads;
    base.max_len = data.longest;
    base.dropout_rate = 0.0f;
    return configure_variant(base, data.corpus.vocab.size(), f, data.corpus.categories.size());
}

bool same_logits(const Tensor& a, const Tensor& b, std::size_t rows) {
    const auto cols = a.cols();
    return std::memcmp(a.values().data(), b.values().data(), rows * cols * sizeof(Scalar)) == 0;
}

double bleu1(const std::vector<TokenSequence>& hyps, const std::vector<TokenSequence>& refs) {
    return bleu(Corpus{hyps, refs}, 1).front();
}

}  // namespace

Outcome documentation_states_substitution() {
    const auto readme = lower(slurp(fs::path(CXRGEN_SOURCE_DIR) / "README.md"));
    const bool impossible = readme.find("not possible") != std::string::npos;
    const bool substitutes = readme.find("property suite") != std::string::npos &&
                             readme.find("substitut") != std::string::npos;
    return {impossible && substitutes,
            format("README %s reproduction as not possible, %s the property-suite substitution",
                   impossible ? "states" : "does not state", substitutes ? "states" : "does not state")};
}

Outcome causal_mask_invariant() {
    constexpr int kPrefixes = 100;
    ModelConfig cfg;
    cfg.feature_dim = 64;
    cfg.d_model = 32;
    cfg.d_embed = 32;
    cfg.n_heads = 4;
    cfg.vocab_size = 60;
    cfg.max_len = 50;
    cfg.demographic_dim = 7;
    cfg.n_decoder_blocks = 2;
    const Model model(cfg, 11);
    Rng rng(12);
    std::size_t perturbations = 0, violations = 0;
    for (int trial = 0; trial < kPrefixes; ++trial) {
        std::vector<float> features(cfg.feature_dim), demo(cfg.demographic_dim, 0.0f);
        for (auto& x : features) x = static_cast<float>(rng.normal());
        demo[0] = static_cast<float>(rng.below(2));
        demo[1] = static_cast<float>(rng.uniform());
        demo[2 + rng.below(5)] = 1.0f;
        const auto hybrid = model.encode(features, demo);

        const std::size_t length = 2 + rng.below(cfg.max_len - 1);
        std::vector<std::int32_t> ids(length);
        ids[0] = kStartId;
        for (std::size_t i = 1; i < length; ++i) ids[i] = static_cast<std::int32_t>(rng.below(cfg.vocab_size));
        const std::size_t t = rng.below(length - 1);  // last past position
        const auto reference = model.decoder_forward(ids, hybrid);

        // One future token at a time, then every future token at once.
        for (std::size_t j = t + 1; j <= length; ++j) {
            auto changed = ids;
            for (std::size_t k = (j == length ? t + 1 : j); k < (j == length ? length : j + 1); ++k) {
                changed[k] = static_cast<std::int32_t>((changed[k] + 1 + rng.below(cfg.vocab_size - 1)) %
                                                       cfg.vocab_size);
            }
            ++perturbations;
            violations += !same_logits(reference, model.decoder_forward(changed, hybrid), t + 1);
        }
    }
    return {violations == 0, format("%d prefixes, %zu perturbations, %zu with changed past logits", kPrefixes,
                                    perturbations, violations)};
}

Outcome overfit_sanity() {
    constexpr std::size_t kMaxEpochs = 300;
    const auto data = small_corpus(4, 1280, 21);
    if (data.corpus.points.size() != 16) {
        return {false, format("expected 16 cleaned examples, got %zu", data.corpus.points.size())};
    }
    const auto cfg = small_model(data, 16, 2, DemographicFields::all());
    const auto train = make_examples(data.corpus.points, data.inputs, cfg.max_len);
    Model model(cfg, 22);
    TrainConfig tc;
    tc.batch_size = 4;
    tc.learning_rate = 1e-2f;
    tc.epochs = kMaxEpochs;
    tc.patience = kMaxEpochs;
    tc.seed = 23;
    const auto log = fit(train, train, model, tc);
    const double loss = evaluate_loss(train, model);
    const double b1 = bleu1(generate_reports(model, train, data.inputs.vocab, {0.0f, 0}),
                            reference_reports(data.corpus.points));
    return {loss < 0.1 && b1 >= 0.9,
            format("d_model %zu, max_len %zu, vocab %zu: loss %.4f (< 0.1), greedy BLEU-1 %.4f (>= 0.9), best epoch "
                   "%zu of %zu",
                   cfg.d_model, cfg.max_len, cfg.vocab_size, loss, b1, log.best_epoch, log.epochs.size())};
}

Outcome fusion_benefit() {
    constexpr std::size_t kSubsets = 4;
    constexpr std::size_t kSubsetSize = 500;
    const auto spec = SynthSpec::defaults();
    const auto corpus = prepare_corpus(synthesize_corpus(spec, 2024), CleaningRules::defaults(),
                                       {2212, spec.ethnicities.size(), spec.feature_dim});
    std::size_t longest = 0;
    for (const auto& p : corpus.points) longest = std::max(longest, p.report.tokens.size());

    ModelConfig base;
    base.feature_dim = spec.feature_dim;
    base.d_model = 32;
    base.d_embed = 32;
    base.n_heads = 4;
    base.max_len = std::max<std::size_t>(longest, 2);
    base.dropout_rate = 0.1f;
    TrainConfig tc;
    tc.batch_size = 32;
    tc.learning_rate = 3e-3f;
    tc.epochs = 30;
    tc.patience = 5;
    const GenerationOptions generation{0.5f, 7};

    const auto subsets = sample_subsets(corpus.points, kSubsets, kSubsetSize, 31);
    std::vector<double> baseline, fused;
    for (std::size_t k = 0; k < kSubsets; ++k) {
        const auto split = split_ids(subsets[k], 100 + k, k);
        for (const bool with_demographics : {false, true}) {
            const auto fields = with_demographics ? DemographicFields::all() : DemographicFields::none();
            const InputSpec inputs{corpus.vocab, DemographicEncoding{corpus.categories}, fields};
            const auto cfg = configure_variant(base, corpus.vocab.size(), fields, corpus.categories.size());
            auto train = tc;
            train.seed = 200 + k;
            const auto result = run_experiment(corpus.points, split, inputs, cfg, train, 300 + k, generation);
            (with_demographics ? fused : baseline).push_back(result.report.bleu.front());
        }
    }
    const auto t = paired_t_test(fused, baseline);
    const double gain = t.mean_difference;
    std::string per_subset;
    for (std::size_t k = 0; k < kSubsets; ++k) per_subset += format(" %.3f/%.3f", baseline[k], fused[k]);
    return {gain >= 0.03 && t.significant,
            format("BLEU-1 baseline/fusion per subset:%s; mean gain %.4f (>= 0.03), t %.2f, p %.4f (< 0.05)",
                   per_subset.c_str(), gain, t.t, t.p)};
}

Outcome bleu_oracle_equivalence() {
    constexpr int kCorpora = 200;
    Rng rng(41);
    double worst = 0.0;
    for (int trial = 0; trial < kCorpora; ++trial) {
        const std::size_t pairs = 1 + rng.below(8), vocab = 2 + rng.below(10), max_len = 15;
        Corpus c;
        const auto sentence = [&](std::size_t min_len) {
            TokenSequence w(min_len + rng.below(max_len - min_len + 1));
            for (auto& t : w) t = "w" + std::to_string(rng.below(vocab));
            return w;
        };
        for (std::size_t i = 0; i < pairs; ++i) {
            c.hypotheses.push_back(sentence(0));
            c.references.push_back(sentence(1));
        }
        const auto got = bleu(c, 4);
        const auto want = testing::bleu_oracle(c.hypotheses, c.references, 4);
        for (std::size_t n = 0; n < 4; ++n) worst = std::max(worst, std::abs(got[n] - want[n]));
    }
    return {worst <= 1e-9, format("%d corpora, max |BLEU - oracle| %.2e (<= 1e-9)", kCorpora, worst)};
}

Outcome metric_identities() {
    Rng rng(51);
    std::vector<std::string> vocab;
    for (int i = 0; i < 40; ++i) vocab.push_back("w" + std::to_string(i));
    EmbeddingTable unit(24);
    for (const auto& w : vocab) {
        std::vector<double> v(24);
        for (auto& x : v) x = rng.normal();
        const double norm = std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
        for (auto& x : v) x /= norm;
        unit.add(w, v);
    }
    const auto one_hot = EmbeddingTable::one_hot(vocab);

    std::size_t identity_failures = 0;
    double worst_disjoint = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<TokenSequence> corpus, other;
        for (std::size_t i = 0, n = 1 + rng.below(6); i < n; ++i) {
            // Four or more words so every n-gram order up to 4 occurs.
            TokenSequence a(4 + rng.below(9)), b(1 + rng.below(12));
            for (auto& t : a) t = vocab[rng.below(20)];
            for (auto& t : b) t = vocab[20 + rng.below(20)];
            corpus.push_back(a);
            other.push_back(b);
        }
        const Corpus same{corpus, corpus};
        const auto scores = bleu(same, 4);
        bool ok = std::all_of(scores.begin(), scores.end(), [](double s) { return s == 1.0; });
        ok = ok && embedding_f1(same, unit).f1 == 1.0 && embedding_f1(same, one_hot).f1 == 1.0;
        identity_failures += !ok;
        worst_disjoint = std::max(worst_disjoint, bleu(Corpus{corpus, other}, 1).front());
    }
    return {identity_failures == 0 && worst_disjoint <= 1e-6,
            format("50 corpora: %zu identity failures (BLEU-1..4 and embedding F1 exactly 1), max disjoint BLEU-1 "
                   "%.2e (<= 1e-6)",
                   identity_failures, worst_disjoint)};
}

Outcome determinism_and_checkpoint() {
    const auto data = small_corpus(20, 64, 61);
    const auto cfg = [&] {
        auto c = small_model(data, 16, 2, DemographicFields::all());
        c.dropout_rate = 0.1f;
        return c;
    }();
    std::vector<std::string> ids;
    for (const auto& p : data.corpus.points) ids.push_back(p.id);
    const auto split = split_ids(ids, 62);
    const auto train = make_examples(select_points(data.corpus.points, split.train), data.inputs, cfg.max_len);
    const auto val = make_examples(select_points(data.corpus.points, split.validation), data.inputs, cfg.max_len);
    const auto test = make_examples(select_points(data.corpus.points, split.test), data.inputs, cfg.max_len);
    TrainConfig tc;
    tc.batch_size = 8;
    tc.learning_rate = 3e-3f;
    tc.epochs = 4;
    tc.seed = 63;
    const GenerationOptions generation{0.5f, 64};

    const auto root = fs::temp_directory_path() / "cxrgen_acceptance_checkpoint";
    fs::remove_all(root);
    Model first(cfg, 65), second(cfg, 65);
    fit(train, val, first, tc, {root / "run1", {}});
    fit(train, val, second, tc, {root / "run2", {}});
    const bool same_params = parameter_checksum(first.parameters()) == parameter_checksum(second.parameters());
    const bool same_files = slurp(root / "run1" / "best" / "params.bin") == slurp(root / "run2" / "best" / "params.bin");

    const auto reports = generate_reports(first, test, data.inputs.vocab, generation);
    const auto rerun = generate_reports(second, test, data.inputs.vocab, generation);
    const auto loaded = load_checkpoint(root / "run1" / "best", cfg);
    const auto restored = generate_reports(loaded, test, data.inputs.vocab, generation);
    const bool round_trip = reports == rerun && reports == restored;

    // Flip single bytes across both files, restoring each before the next.
    std::size_t flips = 0, detected = 0;
    for (const char* name : {"params.bin", "manifest.json"}) {
        const auto path = root / "run1" / "best" / name;
        const auto original = slurp(path);
        const std::size_t stride = std::max<std::size_t>(1, original.size() / 64);
        for (std::size_t offset = 0; offset < original.size(); offset += stride) {
            auto corrupted = original;
            corrupted[offset] = static_cast<char>(corrupted[offset] ^ 0x5a);
            std::ofstream(path, std::ios::binary | std::ios::trunc) << corrupted;
            ++flips;
            try {
                load_checkpoint(root / "run1" / "best");
            } catch (const Error&) {
                ++detected;
            }
        }
        std::ofstream(path, std::ios::binary | std::ios::trunc) << original;
    }
    fs::remove_all(root);
    return {same_params && same_files && round_trip && flips == detected,
            format("repeat run params %s, checkpoint bytes %s, %zu generated reports %s after reload; %zu/%zu "
                   "single-byte corruptions detected",
                   same_params ? "identical" : "differ", same_files ? "identical" : "differ", reports.size(),
                   round_trip ? "identical" : "differ", detected, flips)};
}

Outcome demographic_encoding() {
    const std::vector<std::string> categories = {"white", "black", "hispanic", "asian", "other"};
    std::vector<std::string> failures;
    const auto check = [&](bool ok, const std::string& what) {
        if (!ok) failures.push_back(what);
    };
    const auto enc = [&](Gender g, int age, const std::string& eth) {
        return encode_demographics({g, age, eth}, categories).values;
    };
    check(enc(Gender::female, 19, "white")[1] == 0.0f, "age 19 -> 0");
    check(enc(Gender::female, 91, "white")[1] == 1.0f, "age 91 -> 1");
    check(enc(Gender::female, 55, "white")[1] == 0.5f, "age 55 -> 0.5");
    check(enc(Gender::female, 10, "white")[1] == 0.0f, "age below range clips to 0");
    check(enc(Gender::female, 120, "white")[1] == 1.0f, "age above range clips to 1");
    check(enc(Gender::female, 40, "white")[0] == 0.0f, "female -> 0");
    check(enc(Gender::male, 40, "white")[0] == 1.0f, "male -> 1");
    check(parse_gender("F") == Gender::female && parse_gender("male") == Gender::male, "gender parsing");
    for (std::size_t i = 0; i < categories.size(); ++i) {
        const auto v = enc(Gender::male, 50, categories[i]);
        bool one_hot = v.size() == 2 + categories.size();
        for (std::size_t j = 0; one_hot && j < categories.size(); ++j) {
            one_hot = v[2 + j] == (i == j ? 1.0f : 0.0f);
        }
        check(one_hot, "one-hot for " + categories[i]);
    }
    bool strict_throws = false;
    try {
        enc(Gender::male, 50, "unlisted");
    } catch (const DataError&) {
        strict_throws = true;
    }
    check(strict_throws, "unknown category rejected in strict mode");
    DemographicEncoding lenient{categories};
    lenient.strict = false;
    const auto unknown = encode_demographics({Gender::male, 50, "unlisted"}, lenient).values;
    check(std::all_of(unknown.begin() + 2, unknown.end(), [](float x) { return x == 0.0f; }),
          "unknown category all-zero in lenient mode");

    std::string detail = format("%zu boundary checks failed", failures.size());
    if (!failures.empty()) detail += " (first: " + failures.front() + ")";
    return {failures.empty(), detail};
}

}  // namespace cxr::acceptance
