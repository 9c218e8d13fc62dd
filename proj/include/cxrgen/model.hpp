#pragma once

#include "cxrgen/model_config.hpp"
#include "cxrgen/ops.hpp"
#include "cxrgen/parameters.hpp"
#include "cxrgen/rng.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace cxr {
inline namespace CXR_NUMERIC_NS {

using ModelParameters = ParameterSet;

/// Dropout switch for one forward pass. The default is inference mode.
struct ForwardMode {
    bool training = false;
    Rng* rng = nullptr;
};

struct GenerationOptions {
    /// 0 selects the argmax at every step.
    float temperature = 0.5f;
    std::uint64_t seed = 0;
};

/// Loss of one teacher-forced example.
struct SequenceLoss {
    Tensor total;             // summed token cross-entropy, shape [1]
    std::size_t tokens = 0;   // non-pad target positions
};

/// Report generation network.
///
///   Visual unit:   layer_norm(features) -> dense + ReLU -> self-attention,
///                  residual, layer_norm
///   Semantic unit: dense layer over the demographic vector
///   Fusion:        attention with the visual row as query and the semantic
///                  row as key/value, residual, layer_norm
///   Generation:    token embedding + sinusoidal positions, then per block
///                  causal self-attention, attention over the hybrid
///                  representation and a ReLU dense layer, each wrapped in a
///                  residual and layer_norm; a final dense classifier.
///
/// With demographic_dim == 0 the semantic unit and fusion are absent and the
/// decoder attends to the visual representation directly (image-only baseline).
class Model {
public:
    /// Glorot-uniform weights, zero biases, unit layer-norm gains.
    Model(ModelConfig config, std::uint64_t seed);
    /// Adopts existing parameters; names and shapes must match the layout.
    Model(ModelConfig config, ModelParameters parameters);

    /// Zero-valued parameters with every name and shape the config implies.
    static ModelParameters parameter_layout(const ModelConfig& config);

    const ModelConfig& config() const { return config_; }
    const ModelParameters& parameters() const { return params_; }
    ModelParameters& parameters() { return params_; }

    /// Independent copy of the parameters.
    Model clone() const;

    Tensor visual_encode(std::span<const float> features, const ForwardMode& mode = {}) const;
    Tensor semantic_encode(std::span<const float> demographics) const;
    Tensor fuse_visual_semantic(const Tensor& visual, const Tensor& semantic, const ForwardMode& mode = {}) const;
    /// Hybrid representation [1 x d_model] (the visual one for the baseline).
    Tensor encode(std::span<const float> features, std::span<const float> demographics,
                  const ForwardMode& mode = {}) const;

    /// Logits [T x vocab_size] for the token prefix target_ids.
    Tensor decoder_forward(std::span<const std::int32_t> target_ids, const Tensor& hybrid,
                           const ForwardMode& mode = {}) const;

    /// Teacher forcing on an encoded sequence of max_len ids: the decoder
    /// sees ids[0..L-1) and predicts ids[1..L); pad targets are excluded.
    SequenceLoss sequence_loss(std::span<const float> features, std::span<const float> demographics,
                               std::span<const std::int32_t> ids, const ForwardMode& mode = {}) const;

    /// Autoregressive sampling from <start>; the result excludes <start> and
    /// includes <end> when it was produced. At most max_len - 1 ids.
    std::vector<std::int32_t> generate(std::span<const float> features, std::span<const float> demographics,
                                       const GenerationOptions& options) const;

private:
    struct Linear {
        Tensor weight, bias;
    };
    struct Norm {
        Tensor gain, bias;
    };
    struct Attention {
        std::vector<Linear> query, key, value;  // one per head, [d_model x head_dim]
        Linear output;
    };
    struct DecoderBlock {
        Attention self_attention;
        Norm norm1;
        Attention cross_attention;
        Norm norm2;
        Linear feed_forward;
        Norm norm3;
    };

    void bind_layers();
    Linear linear_view(const std::string& prefix) const;
    Norm norm_view(const std::string& prefix) const;
    Attention attention_view(const std::string& prefix) const;

    Tensor attend(const Tensor& query_in, const Tensor& kv_in, const Attention& weights,
                  const AttentionMask* mask) const;
    Tensor maybe_dropout(const Tensor& x, const ForwardMode& mode) const;

    ModelConfig config_;
    ModelParameters params_;

    Norm visual_in_norm_;
    Linear visual_ff_;
    Attention visual_attention_;
    Norm visual_norm_;
    bool has_semantic_ = false;
    Linear semantic_fc_;
    Attention fusion_attention_;
    Norm fusion_norm_;
    Tensor token_embedding_;
    bool has_embed_projection_ = false;
    Tensor embed_projection_;
    std::vector<DecoderBlock> blocks_;
    Linear classifier_;
};

/// Sinusoidal position table [length x width].
Tensor positional_encoding(std::size_t length, std::size_t width);

/// Temperature sampling over a logit row; temperature 0 is argmax (lowest
/// index wins ties). Ids listed in excluded are never chosen.
std::int32_t sample_token(std::span<const Scalar> logits, float temperature, Rng& rng,
                          std::span<const std::int32_t> excluded = {});

}  // namespace CXR_NUMERIC_NS
}  // namespace cxr
