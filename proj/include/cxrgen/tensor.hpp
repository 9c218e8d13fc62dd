#pragma once

#include "cxrgen/error.hpp"
#include "cxrgen/scalar.hpp"

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace cxr {
inline namespace CXR_NUMERIC_NS {

using Shape = std::vector<std::size_t>;

std::string shape_to_string(const Shape& shape);
std::size_t shape_size(const Shape& shape);

/// Dense row-major array with an optional gradient buffer.
///
/// A Tensor is a shared handle: copies alias the same storage, which is how
/// the parameter map, the layer views, and the tape refer to one weight.
/// The shape never changes after construction. Values change only through
/// mutable_values(), which the optimizer and initializers use.
class Tensor {
public:
    Tensor();
    Tensor(Shape shape, std::vector<Scalar> values, bool requires_grad = false);

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor filled(Shape shape, Scalar value, bool requires_grad = false);
    static Tensor scalar(Scalar value, bool requires_grad = false);

    const Shape& shape() const { return impl_->shape; }
    std::size_t rank() const { return impl_->shape.size(); }
    std::size_t size() const { return impl_->values.size(); }
    /// Leading extent of a rank-2 tensor.
    std::size_t rows() const;
    /// Trailing extent of a rank-2 tensor.
    std::size_t cols() const;

    std::span<const Scalar> values() const { return impl_->values; }
    std::span<Scalar> mutable_values() { return impl_->values; }
    Scalar item() const;
    Scalar at(std::size_t row, std::size_t col) const;

    bool requires_grad() const { return impl_->requires_grad; }
    bool has_grad() const { return !impl_->grad.empty(); }
    std::span<const Scalar> grad() const { return impl_->grad; }
    /// Gradient buffer, allocated (zero) on first use.
    std::span<Scalar> mutable_grad() const;
    void zero_grad() const;

    /// Identity of the underlying storage.
    const void* id() const { return impl_.get(); }
    bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

    /// Deep copy of shape and values; the copy is a fresh leaf.
    Tensor clone(bool requires_grad = false) const;

private:
    struct Storage {
        Shape shape;
        std::vector<Scalar> values;
        std::vector<Scalar> grad;
        bool requires_grad = false;
    };
    std::shared_ptr<Storage> impl_;
};

/// Ordered record of differentiable operations.
///
/// Operations executed while a Tape is active (see TapeScope) and having at
/// least one operand that requires grad are appended in execution order.
/// backward() walks the entries in strict reverse order, so every operand
/// of entry i was produced by an entry j < i or is a leaf.
class Tape {
public:
    using BackwardFn = std::function<void()>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    void record(std::vector<Tensor> operands, Tensor output, BackwardFn backward);

    /// Populate d(loss)/d(leaf) for every requires-grad leaf reachable from
    /// the recorded entries. Leaf gradients accumulate across calls.
    void backward(const Tensor& loss);

    std::size_t size() const { return entries_.size(); }
    void clear() { entries_.clear(); }

private:
    struct Entry {
        std::vector<Tensor> operands;
        Tensor output;
        BackwardFn backward;
    };
    std::vector<Entry> entries_;
};

/// Tape receiving operations on the calling thread, or null (inference mode).
Tape* active_tape();

/// Makes a tape active for the current thread for the lifetime of the scope.
class TapeScope {
public:
    explicit TapeScope(Tape& tape);
    ~TapeScope();
    TapeScope(const TapeScope&) = delete;
    TapeScope& operator=(const TapeScope&) = delete;

private:
    Tape* previous_;
};

/// Disables recording on the current thread for the lifetime of the scope.
class NoGradScope {
public:
    NoGradScope();
    ~NoGradScope();
    NoGradScope(const NoGradScope&) = delete;
    NoGradScope& operator=(const NoGradScope&) = delete;

private:
    Tape* previous_;
};

}  // namespace CXR_NUMERIC_NS
}  // namespace cxr
