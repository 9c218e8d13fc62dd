#pragma once

#include "cxrgen/model_config.hpp"
#include "cxrgen/rng.hpp"
#include "cxrgen/text.hpp"

#include <cstdint>
#include <vector>

namespace cxr::testing {

/// d_model 16, 2 heads, vocabulary 20, max_len 8, 7 demographic inputs.
inline ModelConfig tiny_config(std::size_t feature_dim = 1280) {
    ModelConfig cfg;
    cfg.feature_dim = feature_dim;
    cfg.d_model = 16;
    cfg.d_embed = 16;
    cfg.n_heads = 2;
    cfg.vocab_size = 20;
    cfg.max_len = 8;
    cfg.demographic_dim = 7;
    cfg.n_decoder_blocks = 1;
    cfg.dropout_rate = 0.0f;
    return cfg;
}

inline std::vector<float> random_features(Rng& rng, std::size_t n) {
    std::vector<float> v(n);
    for (auto& x : v) x = static_cast<float>(rng.normal());
    return v;
}

/// Valid encoded demographic vector: gender bit, scaled age, one-hot of the rest.
inline std::vector<float> random_demographics(Rng& rng, std::size_t n) {
    std::vector<float> v(n, 0.0f);
    if (n == 0) return v;
    v[0] = static_cast<float>(rng.below(2));
    if (n > 1) v[1] = static_cast<float>(rng.uniform());
    if (n > 2) v[2 + rng.below(n - 2)] = 1.0f;
    return v;
}

/// <start> w1 .. wk <end> <pad>..., with k words drawn from the non-reserved ids.
inline std::vector<std::int32_t> random_ids(Rng& rng, std::size_t vocab, std::size_t max_len, std::size_t words) {
    std::vector<std::int32_t> ids = {kStartId};
    for (std::size_t i = 0; i < words; ++i) {
        ids.push_back(static_cast<std::int32_t>(kReservedTokens + rng.below(vocab - kReservedTokens)));
    }
    ids.push_back(kEndId);
    ids.resize(max_len, kPadId);
    return ids;
}

}  // namespace cxr::testing
