#include "cxrgen/model.hpp"

#include "cxrgen/text.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace cxr {
inline namespace CXR_NUMERIC_NS {

namespace {

void add_linear(ModelParameters& p, const std::string& prefix, std::size_t in, std::size_t out) {
    p.add(prefix + ".weight", Tensor::zeros({in, out}, true));
    p.add(prefix + ".bias", Tensor::zeros({out}, true));
}

void add_norm(ModelParameters& p, const std::string& prefix, std::size_t width) {
    p.add(prefix + ".gain", Tensor::zeros({width}, true));
    p.add(prefix + ".bias", Tensor::zeros({width}, true));
}

void add_attention(ModelParameters& p, const std::string& prefix, const ModelConfig& cfg) {
    const auto d = cfg.d_model;
    const auto hd = cfg.head_dim();
    for (std::size_t h = 0; h < cfg.n_heads; ++h) {
        const auto head = prefix + ".head" + std::to_string(h);
        add_linear(p, head + ".query", d, hd);
        add_linear(p, head + ".key", d, hd);
        add_linear(p, head + ".value", d, hd);
    }
    add_linear(p, prefix + ".output", d, d);
}

bool ends_with(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

Tensor row_tensor(std::span<const float> values) {
    std::vector<Scalar> v(values.begin(), values.end());
    const auto n = v.size();
    return Tensor({1, n}, std::move(v));
}

}  // namespace

Tensor positional_encoding(std::size_t length, std::size_t width) {
    std::vector<Scalar> table(length * width);
    for (std::size_t pos = 0; pos < length; ++pos) {
        for (std::size_t i = 0; i < width; ++i) {
            const double exponent = static_cast<double>(2 * (i / 2)) / static_cast<double>(width);
            const double angle = static_cast<double>(pos) / std::pow(10000.0, exponent);
            table[pos * width + i] = static_cast<Scalar>(i % 2 == 0 ? std::sin(angle) : std::cos(angle));
        }
    }
    return Tensor({length, width}, std::move(table));
}

std::int32_t sample_token(std::span<const Scalar> logits, float temperature, Rng& rng,
                          std::span<const std::int32_t> excluded) {
    if (!(temperature >= 0.0f)) throw ContractError("temperature must be non-negative");
    const auto allowed = [&](std::size_t i) {
        return std::find(excluded.begin(), excluded.end(), static_cast<std::int32_t>(i)) == excluded.end();
    };
    std::int32_t best = -1;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        if (!allowed(i)) continue;
        if (best < 0 || logits[i] > logits[static_cast<std::size_t>(best)]) best = static_cast<std::int32_t>(i);
    }
    if (best < 0) throw ContractError("sample_token: every token is excluded");
    if (temperature == 0.0f) return best;

    const double top = static_cast<double>(logits[static_cast<std::size_t>(best)]) / temperature;
    std::vector<double> weights(logits.size(), 0.0);
    double total = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        if (!allowed(i)) continue;
        weights[i] = std::exp(static_cast<double>(logits[i]) / temperature - top);
        total += weights[i];
    }
    const double target = rng.uniform() * total;
    double running = 0.0;
    std::int32_t last_allowed = best;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        if (weights[i] == 0.0) continue;
        running += weights[i];
        last_allowed = static_cast<std::int32_t>(i);
        if (target < running) return last_allowed;
    }
    return last_allowed;
}

ModelParameters Model::parameter_layout(const ModelConfig& cfg) {
    cfg.validate();
    const auto d = cfg.d_model;
    ModelParameters p;
    add_norm(p, "visual.norm_in", cfg.feature_dim);
    add_linear(p, "visual.ff", cfg.feature_dim, d);
    add_attention(p, "visual.attn", cfg);
    add_norm(p, "visual.norm", d);
    if (cfg.demographic_dim > 0) {
        add_linear(p, "semantic.fc", cfg.demographic_dim, d);
        add_attention(p, "fusion.attn", cfg);
        add_norm(p, "fusion.norm", d);
    }
    p.add("decoder.embedding", Tensor::zeros({cfg.vocab_size, cfg.d_embed}, true));
    if (cfg.d_embed != d) p.add("decoder.embed_projection", Tensor::zeros({cfg.d_embed, d}, true));
    for (std::size_t b = 0; b < cfg.n_decoder_blocks; ++b) {
        const auto block = "decoder.block" + std::to_string(b);
        add_attention(p, block + ".self_attn", cfg);
        add_norm(p, block + ".norm1", d);
        add_attention(p, block + ".cross_attn", cfg);
        add_norm(p, block + ".norm2", d);
        add_linear(p, block + ".ff", d, d);
        add_norm(p, block + ".norm3", d);
    }
    add_linear(p, "decoder.classifier", d, cfg.vocab_size);
    return p;
}

Model::Model(ModelConfig config, std::uint64_t seed) : config_(std::move(config)) {
    params_ = parameter_layout(config_);
    Rng rng(seed);
    for (std::size_t i = 0; i < params_.size(); ++i) {
        const auto& name = params_.names()[i];
        auto& t = params_.tensors()[i];
        auto values = t.mutable_values();
        if (ends_with(name, ".gain")) {
            std::fill(values.begin(), values.end(), Scalar(1));
        } else if (t.rank() == 2) {
            const double limit = std::sqrt(6.0 / static_cast<double>(t.rows() + t.cols()));
            for (auto& v : values) v = static_cast<Scalar>(rng.uniform(-limit, limit));
        }
    }
    bind_layers();
}

Model::Model(ModelConfig config, ModelParameters parameters) : config_(std::move(config)) {
    const auto layout = parameter_layout(config_);
    if (layout.names() != parameters.names()) {
        throw ConfigError("parameter names do not match the layout implied by the model config");
    }
    for (std::size_t i = 0; i < layout.size(); ++i) {
        if (layout.tensors()[i].shape() != parameters.tensors()[i].shape()) {
            throw ShapeError("parameter " + layout.names()[i] + " has shape " +
                             shape_to_string(parameters.tensors()[i].shape()) + ", expected " +
                             shape_to_string(layout.tensors()[i].shape()));
        }
    }
    params_ = std::move(parameters);
    for (auto& t : params_.tensors()) {
        if (!t.requires_grad()) t = t.clone(true);
    }
    bind_layers();
}

Model Model::clone() const { return Model(config_, params_.clone()); }

Model::Linear Model::linear_view(const std::string& prefix) const {
    return {params_.at(prefix + ".weight"), params_.at(prefix + ".bias")};
}

Model::Norm Model::norm_view(const std::string& prefix) const {
    return {params_.at(prefix + ".gain"), params_.at(prefix + ".bias")};
}

Model::Attention Model::attention_view(const std::string& prefix) const {
    Attention a;
    for (std::size_t h = 0; h < config_.n_heads; ++h) {
        const auto head = prefix + ".head" + std::to_string(h);
        a.query.push_back(linear_view(head + ".query"));
        a.key.push_back(linear_view(head + ".key"));
        a.value.push_back(linear_view(head + ".value"));
    }
    a.output = linear_view(prefix + ".output");
    return a;
}

void Model::bind_layers() {
    visual_in_norm_ = norm_view("visual.norm_in");
    visual_ff_ = linear_view("visual.ff");
    visual_attention_ = attention_view("visual.attn");
    visual_norm_ = norm_view("visual.norm");
    has_semantic_ = config_.demographic_dim > 0;
    if (has_semantic_) {
        semantic_fc_ = linear_view("semantic.fc");
        fusion_attention_ = attention_view("fusion.attn");
        fusion_norm_ = norm_view("fusion.norm");
    }
    token_embedding_ = params_.at("decoder.embedding");
    has_embed_projection_ = params_.contains("decoder.embed_projection");
    if (has_embed_projection_) embed_projection_ = params_.at("decoder.embed_projection");
    blocks_.clear();
    for (std::size_t b = 0; b < config_.n_decoder_blocks; ++b) {
        const auto block = "decoder.block" + std::to_string(b);
        blocks_.push_back(DecoderBlock{attention_view(block + ".self_attn"), norm_view(block + ".norm1"),
                                       attention_view(block + ".cross_attn"), norm_view(block + ".norm2"),
                                       linear_view(block + ".ff"), norm_view(block + ".norm3")});
    }
    classifier_ = linear_view("decoder.classifier");
}

Tensor Model::attend(const Tensor& query_in, const Tensor& kv_in, const Attention& w,
                     const AttentionMask* mask) const {
    std::vector<Tensor> heads;
    heads.reserve(w.query.size());
    for (std::size_t h = 0; h < w.query.size(); ++h) {
        const auto q = linear(query_in, w.query[h].weight, w.query[h].bias);
        const auto k = linear(kv_in, w.key[h].weight, w.key[h].bias);
        const auto v = linear(kv_in, w.value[h].weight, w.value[h].bias);
        heads.push_back(scaled_dot_attention(q, k, v, mask));
    }
    const auto merged = heads.size() == 1 ? heads.front() : concat_cols(heads);
    return linear(merged, w.output.weight, w.output.bias);
}

Tensor Model::maybe_dropout(const Tensor& x, const ForwardMode& mode) const {
    if (!mode.training || config_.dropout_rate <= 0.0f) return x;
    if (!mode.rng) throw ContractError("training forward pass needs a random source for dropout");
    return dropout(x, static_cast<Scalar>(config_.dropout_rate), *mode.rng);
}

Tensor Model::visual_encode(std::span<const float> features, const ForwardMode& mode) const {
    if (features.size() != config_.feature_dim) {
        throw ShapeError("visual_encode: feature vector has " + std::to_string(features.size()) +
                         " values, expected " + std::to_string(config_.feature_dim));
    }
    const auto x = layer_norm(row_tensor(features), visual_in_norm_.gain, visual_in_norm_.bias);
    const auto hidden = relu(linear(x, visual_ff_.weight, visual_ff_.bias));
    const auto attended = maybe_dropout(attend(hidden, hidden, visual_attention_, nullptr), mode);
    return layer_norm(add(hidden, attended), visual_norm_.gain, visual_norm_.bias);
}

Tensor Model::semantic_encode(std::span<const float> demographics) const {
    if (!has_semantic_) throw ContractError("semantic_encode: model has no semantic unit (demographic_dim = 0)");
    if (demographics.size() != config_.demographic_dim) {
        throw ShapeError("semantic_encode: demographic vector has " + std::to_string(demographics.size()) +
                         " values, expected " + std::to_string(config_.demographic_dim));
    }
    return linear(row_tensor(demographics), semantic_fc_.weight, semantic_fc_.bias);
}

Tensor Model::fuse_visual_semantic(const Tensor& visual, const Tensor& semantic, const ForwardMode& mode) const {
    if (!has_semantic_) throw ContractError("fuse_visual_semantic: model has no semantic unit");
    if (visual.rank() != 2 || semantic.rank() != 2 || visual.cols() != config_.d_model ||
        semantic.cols() != config_.d_model) {
        throw ShapeError("fuse_visual_semantic: inputs " + shape_to_string(visual.shape()) + " and " +
                         shape_to_string(semantic.shape()) + " must both be d_model = " +
                         std::to_string(config_.d_model) + " wide");
    }
    const auto attended = maybe_dropout(attend(visual, semantic, fusion_attention_, nullptr), mode);
    return layer_norm(add(visual, attended), fusion_norm_.gain, fusion_norm_.bias);
}

Tensor Model::encode(std::span<const float> features, std::span<const float> demographics,
                     const ForwardMode& mode) const {
    auto visual = visual_encode(features, mode);
    if (!has_semantic_) {
        if (!demographics.empty()) {
            throw ShapeError("encode: baseline model takes no demographic input, got " +
                             std::to_string(demographics.size()) + " values");
        }
        return visual;
    }
    return fuse_visual_semantic(visual, semantic_encode(demographics), mode);
}

Tensor Model::decoder_forward(std::span<const std::int32_t> target_ids, const Tensor& hybrid,
                              const ForwardMode& mode) const {
    const auto t = target_ids.size();
    if (t == 0) throw ContractError("decoder_forward: empty id sequence");
    if (t > config_.max_len) {
        throw ContractError("decoder_forward: sequence length " + std::to_string(t) + " exceeds max_len " +
                            std::to_string(config_.max_len));
    }
    for (auto id : target_ids) {
        if (id < 0 || static_cast<std::size_t>(id) >= config_.vocab_size) {
            throw ContractError("decoder_forward: id " + std::to_string(id) + " outside vocabulary of " +
                                std::to_string(config_.vocab_size));
        }
    }
    if (hybrid.rank() != 2 || hybrid.cols() != config_.d_model) {
        throw ShapeError("decoder_forward: hybrid representation " + shape_to_string(hybrid.shape()) +
                         " is not d_model wide");
    }

    auto x = embedding(token_embedding_, target_ids);
    if (has_embed_projection_) x = matmul(x, embed_projection_);
    x = maybe_dropout(add(x, positional_encoding(t, config_.d_model)), mode);

    auto mask = AttentionMask::causal(t);
    for (std::size_t k = 0; k < t; ++k) {
        if (target_ids[k] == kPadId) mask.block_key(k);
    }

    for (const auto& block : blocks_) {
        const auto self = maybe_dropout(attend(x, x, block.self_attention, &mask), mode);
        x = layer_norm(add(x, self), block.norm1.gain, block.norm1.bias);
        const auto cross = maybe_dropout(attend(x, hybrid, block.cross_attention, nullptr), mode);
        x = layer_norm(add(x, cross), block.norm2.gain, block.norm2.bias);
        const auto ff = maybe_dropout(relu(linear(x, block.feed_forward.weight, block.feed_forward.bias)), mode);
        x = layer_norm(add(x, ff), block.norm3.gain, block.norm3.bias);
    }
    return linear(x, classifier_.weight, classifier_.bias);
}

SequenceLoss Model::sequence_loss(std::span<const float> features, std::span<const float> demographics,
                                  std::span<const std::int32_t> ids, const ForwardMode& mode) const {
    if (ids.size() < 2) throw ContractError("sequence_loss: need at least two ids");
    const auto inputs = ids.first(ids.size() - 1);
    const auto targets = ids.subspan(1);
    // Causal masking makes earlier logits independent of later positions, so
    // the trailing all-pad tail can be skipped without changing any value.
    std::size_t used = 0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < targets.size(); ++i) {
        if (targets[i] != kPadId) {
            used = i + 1;
            ++count;
        }
    }
    if (used == 0) return {Tensor::scalar(Scalar(0)), 0};
    const auto hybrid = encode(features, demographics, mode);
    const auto logits = decoder_forward(inputs.first(used), hybrid, mode);
    return {sparse_cross_entropy(logits, targets.first(used), kPadId), count};
}

std::vector<std::int32_t> Model::generate(std::span<const float> features, std::span<const float> demographics,
                                          const GenerationOptions& options) const {
    if (!(options.temperature >= 0.0f)) throw ContractError("generate: temperature must be non-negative");
    NoGradScope no_grad;
    const auto hybrid = encode(features, demographics);
    Rng rng(options.seed);
    const std::int32_t excluded[] = {kPadId, kStartId};
    std::vector<std::int32_t> ids = {kStartId};
    while (ids.size() < config_.max_len) {
        const auto logits = decoder_forward(ids, hybrid);
        const auto vocab = config_.vocab_size;
        const auto last = logits.values().subspan((ids.size() - 1) * vocab, vocab);
        const auto next = sample_token(last, options.temperature, rng, excluded);
        ids.push_back(next);
        if (next == kEndId) break;
    }
    return {ids.begin() + 1, ids.end()};
}

}  // namespace CXR_NUMERIC_NS
}  // namespace cxr
