#pragma once

#include <nlohmann/json.hpp>

#include <cstddef>
#include <string>

namespace cxr {

/// Hyperparameters of the report generation network.
struct ModelConfig {
    std::size_t feature_dim = 1280;
    std::size_t d_model = 512;
    std::size_t d_embed = 512;
    std::size_t n_heads = 8;
    std::size_t vocab_size = 2212;
    std::size_t max_len = 50;
    /// Width of the semantic input; 0 builds the image-only baseline.
    std::size_t demographic_dim = 7;
    std::size_t n_decoder_blocks = 1;
    float dropout_rate = 0.1f;
    /// Which demographic slices feed the semantic input (provenance for inference).
    std::string demographic_fields = "gender,age,ethnicity";

    /// Throws ConfigError on non-positive sizes or d_model % n_heads != 0.
    void validate() const;
    std::size_t head_dim() const { return d_model / n_heads; }

    bool operator==(const ModelConfig&) const = default;
};

void to_json(nlohmann::json& j, const ModelConfig& cfg);
/// Missing keys keep their defaults; unknown keys are a ConfigError.
void from_json(const nlohmann::json& j, ModelConfig& cfg);

}  // namespace cxr
