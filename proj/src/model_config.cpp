#include "cxrgen/model_config.hpp"

#include "cxrgen/error.hpp"

#include <set>

namespace cxr {

void ModelConfig::validate() const {
    const auto positive = [](std::size_t v, const char* name) {
        if (v == 0) throw ConfigError(std::string("model config: ") + name + " must be positive");
    };
    positive(feature_dim, "feature_dim");
    positive(d_model, "d_model");
    positive(d_embed, "d_embed");
    positive(n_heads, "n_heads");
    positive(vocab_size, "vocab_size");
    positive(n_decoder_blocks, "n_decoder_blocks");
    if (d_model % n_heads != 0) {
        throw ConfigError("model config: d_model " + std::to_string(d_model) + " is not divisible by n_heads " +
                          std::to_string(n_heads));
    }
    if (vocab_size < 5) throw ConfigError("model config: vocab_size must cover the 4 reserved tokens plus one word");
    if (max_len < 3) throw ConfigError("model config: max_len must be at least 3");
    if (!(dropout_rate >= 0.0f && dropout_rate < 1.0f)) throw ConfigError("model config: dropout_rate must be in [0, 1)");
}

void to_json(nlohmann::json& j, const ModelConfig& cfg) {
    j = nlohmann::json{{"feature_dim", cfg.feature_dim},
                       {"d_model", cfg.d_model},
                       {"d_embed", cfg.d_embed},
                       {"n_heads", cfg.n_heads},
                       {"vocab_size", cfg.vocab_size},
                       {"max_len", cfg.max_len},
                       {"demographic_dim", cfg.demographic_dim},
                       {"n_decoder_blocks", cfg.n_decoder_blocks},
                       {"dropout_rate", cfg.dropout_rate},
                       {"demographic_fields", cfg.demographic_fields}};
}

void from_json(const nlohmann::json& j, ModelConfig& cfg) {
    static const std::set<std::string> known = {"feature_dim",     "d_model",          "d_embed",
                                                "n_heads",         "vocab_size",       "max_len",
                                                "demographic_dim", "n_decoder_blocks", "dropout_rate",
                                                "demographic_fields"};
    if (!j.is_object()) throw ConfigError("model config must be a JSON object");
    for (const auto& [key, value] : j.items()) {
        if (!known.count(key)) throw ConfigError("model config: unknown key '" + key + "'");
    }
    try {
        const auto read = [&j](const char* key, auto& field) {
            if (j.contains(key)) j.at(key).get_to(field);
        };
        read("feature_dim", cfg.feature_dim);
        read("d_model", cfg.d_model);
        read("d_embed", cfg.d_embed);
        read("n_heads", cfg.n_heads);
        read("vocab_size", cfg.vocab_size);
        read("max_len", cfg.max_len);
        read("demographic_dim", cfg.demographic_dim);
        read("n_decoder_blocks", cfg.n_decoder_blocks);
        read("dropout_rate", cfg.dropout_rate);
        read("demographic_fields", cfg.demographic_fields);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("model config: ") + e.what());
    }
}

}  // namespace cxr
