#pragma once

#include "cxrgen/dataset.hpp"
#include "cxrgen/metrics.hpp"
#include "cxrgen/model.hpp"
#include "cxrgen/trainer.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace cxr {

struct PrepareOptions {
    std::size_t vocab_cap = 2212;
    std::size_t n_categories = 5;
    std::size_t feature_dim = 1280;
};

/// Cleaned corpus with its vocabulary and ethnicity categories. Records
/// whose ethnicity is outside the selected categories are dropped.
struct PreparedCorpus {
    std::vector<DataPoint> points;
    std::vector<Rejected> rejected;
    std::vector<std::string> dropped_ethnicity;  // ids
    Vocabulary vocab;
    std::vector<std::string> categories;
};

PreparedCorpus prepare_corpus(const std::vector<DataRecord>& records, const CleaningRules& rules,
                              const PrepareOptions& options = {});

/// Fills vocab_size, demographic_dim and demographic_fields for a model variant.
ModelConfig configure_variant(ModelConfig base, std::size_t vocab_size, const DemographicFields& fields,
                              std::size_t n_categories);

/// Everything needed to turn data points into model inputs.
struct InputSpec {
    Vocabulary vocab;
    DemographicEncoding encoding;
    DemographicFields fields;
};

std::vector<TrainingExample> make_examples(const std::vector<DataPoint>& points, const InputSpec& inputs,
                                           std::size_t max_len);

/// One generated report per example, as detokenized word sequences. Example
/// i samples with seed options.seed + i.
std::vector<TokenSequence> generate_reports(const Model& model, const std::vector<TrainingExample>& examples,
                                            const Vocabulary& vocab, const GenerationOptions& options);

/// Interior words of each point's cleaned report.
std::vector<TokenSequence> reference_reports(const std::vector<DataPoint>& points);

struct ExperimentResult {
    TrainLog log;
    std::vector<TokenSequence> hypotheses;
    std::vector<TokenSequence> references;
    EvaluationReport report;
};

/// Train on the manifest's train split (validation for model selection) and
/// score generations on its test split.
ExperimentResult run_experiment(const std::vector<DataPoint>& pool, const SplitManifest& split,
                                const InputSpec& inputs, const ModelConfig& model_config,
                                const TrainConfig& train_config, std::uint64_t model_seed,
                                const GenerationOptions& generation);

}  // namespace cxr
