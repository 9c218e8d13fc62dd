#include "cxrgen/pipeline.hpp"

#include "cxrgen/error.hpp"

#include <algorithm>

namespace cxr {

PreparedCorpus prepare_corpus(const std::vector<DataRecord>& records, const CleaningRules& rules,
                              const PrepareOptions& options) {
    if (records.empty()) throw DataError("no records to prepare");
    auto cleaned = prepare_points(records, rules, options.feature_dim);
    if (cleaned.points.empty()) throw DataError("every report was rejected during cleaning");

    std::vector<DemographicRecord> demographics;
    for (const auto& p : cleaned.points) demographics.push_back(p.demographics);
    const auto selection = select_top_categories(demographics, options.n_categories);

    PreparedCorpus out;
    out.categories = selection.categories;
    out.rejected = std::move(cleaned.rejected);
    for (auto& p : cleaned.points) {
        if (std::find(out.categories.begin(), out.categories.end(), p.demographics.ethnicity) ==
            out.categories.end()) {
            out.dropped_ethnicity.push_back(p.id);
            continue;
        }
        out.points.push_back(std::move(p));
    }
    std::vector<CleanReport> reports;
    reports.reserve(out.points.size());
    for (const auto& p : out.points) reports.push_back(p.report);
    out.vocab = build_vocabulary(reports, options.vocab_cap);
    return out;
}

ModelConfig configure_variant(ModelConfig base, std::size_t vocab_size, const DemographicFields& fields,
                              std::size_t n_categories) {
    base.vocab_size = vocab_size;
    base.demographic_dim = fields.width(n_categories);
    base.demographic_fields = fields.to_string();
    base.validate();
    return base;
}

std::vector<TrainingExample> make_examples(const std::vector<DataPoint>& points, const InputSpec& inputs,
                                           std::size_t max_len) {
    return make_examples(points, inputs.vocab, inputs.encoding, inputs.fields, max_len);
}

std::vector<TokenSequence> generate_reports(const Model& model, const std::vector<TrainingExample>& examples,
                                            const Vocabulary& vocab, const GenerationOptions& options) {
    std::vector<TokenSequence> out;
    out.reserve(examples.size());
    for (std::size_t i = 0; i < examples.size(); ++i) {
        auto per_example = options;
        per_example.seed = options.seed + i;
        const auto ids = model.generate(examples[i].features, examples[i].demographics, per_example);
        std::vector<std::int32_t> with_start = {kStartId};
        with_start.insert(with_start.end(), ids.begin(), ids.end());
        const auto tokens = decode_ids(with_start, vocab);
        TokenSequence words;
        for (const auto& t : tokens) {
            if (t == kEndToken) break;
            if (t == kStartToken || t == kPadToken) continue;
            words.push_back(t);
        }
        out.push_back(std::move(words));
    }
    return out;
}

std::vector<TokenSequence> reference_reports(const std::vector<DataPoint>& points) {
    std::vector<TokenSequence> out;
    out.reserve(points.size());
    for (const auto& p : points) {
        const auto interior = p.report.interior();
        out.emplace_back(interior.begin(), interior.end());
    }
    return out;
}

ExperimentResult run_experiment(const std::vector<DataPoint>& pool, const SplitManifest& split,
                                const InputSpec& inputs, const ModelConfig& model_config,
                                const TrainConfig& train_config, std::uint64_t model_seed,
                                const GenerationOptions& generation) {
    check_disjoint(split);
    const auto train_points = select_points(pool, split.train);
    const auto val_points = select_points(pool, split.validation);
    const auto test_points = select_points(pool, split.test);
    if (test_points.empty()) throw ConfigError("run_experiment: test split is empty");

    const auto train = make_examples(train_points, inputs, model_config.max_len);
    const auto val = make_examples(val_points, inputs, model_config.max_len);
    const auto test = make_examples(test_points, inputs, model_config.max_len);

    Model model(model_config, model_seed);
    ExperimentResult result;
    result.log = fit(train, val, model, train_config);
    result.hypotheses = generate_reports(model, test, inputs.vocab, generation);
    result.references = reference_reports(test_points);
    result.report = evaluate_corpus(Corpus{result.hypotheses, result.references});
    return result;
}

}  // namespace cxr
