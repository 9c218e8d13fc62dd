#pragma once

#include "cxrgen/rng.hpp"
#include "cxrgen/tensor.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace cxr {
inline namespace CXR_NUMERIC_NS {

/// Boolean [queries x keys] matrix; true means the key is visible.
class AttentionMask {
public:
    AttentionMask(std::size_t queries, std::size_t keys, bool fill = true);

    /// Position t sees positions <= t.
    static AttentionMask causal(std::size_t length);

    std::size_t queries() const { return queries_; }
    std::size_t keys() const { return keys_; }
    bool allowed(std::size_t q, std::size_t k) const { return cells_[q * keys_ + k] != 0; }
    void set(std::size_t q, std::size_t k, bool allowed) { cells_[q * keys_ + k] = allowed ? 1 : 0; }
    /// Hide key column k from every query.
    void block_key(std::size_t k);

private:
    std::size_t queries_;
    std::size_t keys_;
    std::vector<std::uint8_t> cells_;
};

// All operations below record themselves on the active tape when any operand
// requires grad. Sums run left to right in index order, so results are
// bit-reproducible for identical inputs.

/// [m x k] * [k x n] -> [m x n].
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

/// Elementwise, identical shapes.
Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, Scalar factor);

/// Adds a [n] or [1 x n] row to every row of a [m x n] tensor.
Tensor add_row(const Tensor& a, const Tensor& row);

/// x * w + b for x [m x in], w [in x out], b [out].
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

Tensor relu(const Tensor& a);

/// Sum of all elements into a [1] tensor.
Tensor sum(const Tensor& a);
/// Elementwise sum of equally shaped tensors, accumulated in list order.
Tensor add_n(std::span<const Tensor> terms);

/// Numerically stable softmax along any axis.
Tensor softmax(const Tensor& x, std::size_t axis);

/// Normalizes over the last axis, then applies gain and bias of that length.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, Scalar eps = Scalar(1e-5));

/// softmax(q k^T / sqrt(d) + mask) v for q [Lq x d], k [Lk x d], v [Lk x dv].
/// Throws ContractError when a query row has every key masked.
Tensor scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                            const AttentionMask* mask = nullptr);

/// Column block [begin, begin + count) of a rank-2 tensor.
Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t count);
/// Concatenates rank-2 tensors with equal row counts along columns.
Tensor concat_cols(std::span<const Tensor> parts);

/// Gathers rows of a [V x d] table -> [ids.size() x d].
Tensor embedding(const Tensor& table, std::span<const std::int32_t> ids);

/// Sum over rows of -log softmax(logits)[target]; rows whose target equals
/// ignore_id contribute exactly zero value and zero gradient.
Tensor sparse_cross_entropy(const Tensor& logits, std::span<const std::int32_t> targets,
                            std::int32_t ignore_id);

/// Inverted dropout; rate 0 returns the input handle unchanged.
Tensor dropout(const Tensor& a, Scalar rate, Rng& rng);

/// True if every value is finite.
bool all_finite(const Tensor& a);

}  // namespace CXR_NUMERIC_NS
}  // namespace cxr
