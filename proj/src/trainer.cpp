#include "cxrgen/trainer.hpp"

#include "cxrgen/checkpoint.hpp"
#include "cxrgen/error.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>

namespace cxr {

void TrainConfig::validate() const {
    if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
    if (!(learning_rate > 0.0f) || !std::isfinite(learning_rate)) throw ConfigError("learning_rate must be positive");
    if (epochs < 1) throw ConfigError("epochs must be at least 1");
    if (!(clip_norm >= 0.0f)) throw ConfigError("clip_norm must be non-negative");
    if (!(beta1 >= 0.0f && beta1 < 1.0f) || !(beta2 >= 0.0f && beta2 < 1.0f)) {
        throw ConfigError("Adam betas must lie in [0, 1)");
    }
    if (!(adam_eps > 0.0f)) throw ConfigError("adam_eps must be positive");
}

void to_json(nlohmann::json& j, const TrainConfig& cfg) {
    j = {{"batch_size", cfg.batch_size},   {"learning_rate", cfg.learning_rate},
         {"epochs", cfg.epochs},           {"seed", cfg.seed},
         {"checkpoint_every", cfg.checkpoint_every}, {"patience", cfg.patience},
         {"clip_norm", cfg.clip_norm},     {"beta1", cfg.beta1},
         {"beta2", cfg.beta2},             {"adam_eps", cfg.adam_eps}};
}

void from_json(const nlohmann::json& j, TrainConfig& cfg) {
    if (!j.is_object()) throw ConfigError("train config must be an object");
    TrainConfig out;
    for (const auto& [key, value] : j.items()) {
        try {
            if (key == "batch_size") out.batch_size = value.get<std::size_t>();
            else if (key == "learning_rate") out.learning_rate = value.get<float>();
            else if (key == "epochs") out.epochs = value.get<std::size_t>();
            else if (key == "seed") out.seed = value.get<std::uint64_t>();
            else if (key == "checkpoint_every") out.checkpoint_every = value.get<std::size_t>();
            else if (key == "patience") out.patience = value.get<std::size_t>();
            else if (key == "clip_norm") out.clip_norm = value.get<float>();
            else if (key == "beta1") out.beta1 = value.get<float>();
            else if (key == "beta2") out.beta2 = value.get<float>();
            else if (key == "adam_eps") out.adam_eps = value.get<float>();
            else throw ConfigError("unknown train config key: " + key);
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError("train config key " + key + ": " + e.what());
        }
    }
    cfg = out;
}

nlohmann::json to_json(const EpochRecord& record) {
    return {{"epoch", record.epoch},
            {"train_loss", record.train_loss},
            {"val_loss", record.val_loss},
            {"seconds", record.seconds},
            {"param_checksum", record.param_checksum}};
}

void TrainLog::write_jsonl(std::ostream& out) const {
    for (const auto& record : epochs) out << to_json(record).dump() << '\n';
}

TrainState TrainState::create(const Model& model, std::uint64_t seed) {
    return {AdamState::for_parameters(model.parameters()), Rng(seed)};
}

double train_step(std::span<const TrainingExample* const> batch, Model& model, TrainState& state,
                  const TrainConfig& config) {
    if (batch.empty()) throw ContractError("train_step: empty batch");
    const auto& cfg = model.config();
    for (const auto* ex : batch) {
        if (ex->ids.size() != cfg.max_len) {
            throw ContractError("train_step: example " + ex->id + " is not encoded to max_len " +
                                std::to_string(cfg.max_len));
        }
    }
    auto& params = model.parameters();
    params.zero_grad();

    Tape tape;
    TapeScope scope(tape);
    const ForwardMode mode{true, &state.rng};
    std::vector<Tensor> totals;
    totals.reserve(batch.size());
    std::size_t tokens = 0;
    for (const auto* ex : batch) {
        auto loss = model.sequence_loss(ex->features, ex->demographics, ex->ids, mode);
        tokens += loss.tokens;
        totals.push_back(std::move(loss.total));
    }
    if (tokens == 0) throw ContractError("train_step: batch has no target tokens");
    const auto loss = scale(add_n(totals), Scalar(1) / static_cast<Scalar>(tokens));
    const double value = static_cast<double>(loss.item());
    if (!std::isfinite(value)) {
        std::string ids;
        for (const auto* ex : batch) ids += (ids.empty() ? "" : ", ") + ex->id;
        throw NumericError("non-finite training loss in batch [" + ids + "]");
    }
    tape.backward(loss);
    if (config.clip_norm > 0.0f) clip_grad_norm(params, config.clip_norm);
    adam_step(params, state.adam,
              AdamOptions{config.learning_rate, config.beta1, config.beta2, config.adam_eps});
    return value;
}

double train_step(std::span<const TrainingExample> batch, Model& model, TrainState& state,
                  const TrainConfig& config) {
    std::vector<const TrainingExample*> pointers;
    pointers.reserve(batch.size());
    for (const auto& ex : batch) pointers.push_back(&ex);
    return train_step(std::span<const TrainingExample* const>(pointers), model, state, config);
}

double evaluate_loss(std::span<const TrainingExample> examples, const Model& model) {
    if (examples.empty()) throw ConfigError("evaluate_loss: no examples");
    NoGradScope no_grad;
    double total = 0.0;
    std::size_t tokens = 0;
    for (const auto& ex : examples) {
        const auto loss = model.sequence_loss(ex.features, ex.demographics, ex.ids);
        total += static_cast<double>(loss.total.item());
        tokens += loss.tokens;
    }
    if (tokens == 0) throw ContractError("evaluate_loss: no target tokens");
    return total / static_cast<double>(tokens);
}

TrainLog fit(std::span<const TrainingExample> train, std::span<const TrainingExample> validation, Model& model,
             const TrainConfig& config, const FitOptions& options) {
    config.validate();
    if (train.empty()) throw ConfigError("fit: training split is empty");
    if (validation.empty()) throw ConfigError("fit: validation split is empty");

    Rng shuffle_rng(config.seed);
    auto state = TrainState::create(model, shuffle_rng.fork_seed());
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    TrainLog log;
    log.best_val_loss = std::numeric_limits<double>::infinity();
    auto best = model.parameters().clone();
    std::size_t since_best = 0;

    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        const auto started = std::chrono::steady_clock::now();
        shuffle_rng.shuffle(order);
        double loss_sum = 0.0;
        std::size_t batches = 0;
        std::vector<const TrainingExample*> batch;
        for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
            batch.clear();
            const auto end = std::min(order.size(), begin + config.batch_size);
            for (std::size_t i = begin; i < end; ++i) batch.push_back(&train[order[i]]);
            loss_sum += train_step(std::span<const TrainingExample* const>(batch), model, state, config);
            ++batches;
        }
        EpochRecord record;
        record.epoch = epoch;
        record.train_loss = loss_sum / static_cast<double>(batches);
        record.val_loss = evaluate_loss(validation, model);
        record.param_checksum = hex32(parameter_checksum(model.parameters()));
        record.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
        if (!std::isfinite(record.val_loss)) {
            throw NumericError("non-finite validation loss at epoch " + std::to_string(epoch));
        }

        if (record.val_loss < log.best_val_loss) {
            log.best_val_loss = record.val_loss;
            log.best_epoch = epoch;
            best.assign_values(model.parameters());
            since_best = 0;
            if (!options.checkpoint_dir.empty()) save_checkpoint(model, options.checkpoint_dir / "best");
        } else {
            ++since_best;
        }
        if (!options.checkpoint_dir.empty() && config.checkpoint_every > 0 && epoch % config.checkpoint_every == 0) {
            save_checkpoint(model, options.checkpoint_dir / ("epoch-" + std::to_string(epoch)));
        }
        log.epochs.push_back(record);
        if (options.on_epoch) options.on_epoch(record);
        if (config.patience > 0 && since_best >= config.patience) break;
    }
    model.parameters().assign_values(best);
    return log;
}

}  // namespace cxr
