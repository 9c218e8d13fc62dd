#pragma once

#include "cxrgen/model.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace cxr {

/// Model-ready form of one DataPoint.
struct TrainingExample {
    std::string id;
    std::vector<float> features;
    std::vector<float> demographics;  // already reduced to the model's fields
    std::vector<std::int32_t> ids;    // encoded report, max_len ids
};

struct TrainConfig {
    std::size_t batch_size = 64;
    float learning_rate = 3e-4f;
    std::size_t epochs = 50;
    std::uint64_t seed = 0;
    /// Save a checkpoint every N epochs (0 = only the best one).
    std::size_t checkpoint_every = 0;
    /// Stop after this many epochs without a validation improvement (0 = never).
    std::size_t patience = 10;
    /// Global gradient-norm clip (0 = off).
    float clip_norm = 0.0f;
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float adam_eps = 1e-8f;

    void validate() const;
    bool operator==(const TrainConfig&) const = default;
};

void to_json(nlohmann::json& j, const TrainConfig& cfg);
void from_json(const nlohmann::json& j, TrainConfig& cfg);

struct EpochRecord {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double seconds = 0.0;
    std::string param_checksum;
};

/// One record per completed epoch, epochs numbered from 1.
struct TrainLog {
    std::vector<EpochRecord> epochs;
    std::size_t best_epoch = 0;
    double best_val_loss = 0.0;

    /// One JSON object per line.
    void write_jsonl(std::ostream& out) const;
};

nlohmann::json to_json(const EpochRecord& record);

/// Mutable state of a training session: optimizer moments and the dropout stream.
struct TrainState {
    AdamState adam;
    Rng rng;

    static TrainState create(const Model& model, std::uint64_t seed);
};

/// Mean token cross-entropy over the batch with one Adam update applied.
/// Throws NumericError listing the batch ids if the loss is not finite.
double train_step(std::span<const TrainingExample* const> batch, Model& model, TrainState& state,
                  const TrainConfig& config);
double train_step(std::span<const TrainingExample> batch, Model& model, TrainState& state, const TrainConfig& config);

/// Mean token cross-entropy with dropout disabled and nothing recorded.
double evaluate_loss(std::span<const TrainingExample> examples, const Model& model);

struct FitOptions {
    /// Where the best checkpoint (and periodic ones) go; empty = keep in memory only.
    std::filesystem::path checkpoint_dir;
    /// Called after each epoch, e.g. to stream the log.
    std::function<void(const EpochRecord&)> on_epoch;
};

/// Seeded epoch loop with validation after every epoch. On return the model
/// holds the parameters with the lowest validation loss.
TrainLog fit(std::span<const TrainingExample> train, std::span<const TrainingExample> validation, Model& model,
             const TrainConfig& config, const FitOptions& options = {});

}  // namespace cxr
