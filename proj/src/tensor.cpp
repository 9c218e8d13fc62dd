#include "cxrgen/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_set>

namespace cxr {
inline namespace CXR_NUMERIC_NS {

std::string shape_to_string(const Shape& shape) {
    std::ostringstream out;
    out << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) out << 'x';
        out << shape[i];
    }
    out << ']';
    return out.str();
}

std::size_t shape_size(const Shape& shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

Tensor::Tensor() : impl_(std::make_shared<Storage>()) {
    impl_->shape = {1};
    impl_->values = {Scalar(0)};
}

Tensor::Tensor(Shape shape, std::vector<Scalar> values, bool requires_grad)
    : impl_(std::make_shared<Storage>()) {
    if (shape.empty()) throw ShapeError("tensor shape must have at least one dimension");
    for (auto d : shape) {
        if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + shape_to_string(shape));
    }
    if (shape_size(shape) != values.size()) {
        throw ShapeError("shape " + shape_to_string(shape) + " holds " +
                         std::to_string(shape_size(shape)) + " values, got " +
                         std::to_string(values.size()));
    }
    impl_->shape = std::move(shape);
    impl_->values = std::move(values);
    impl_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    const auto n = shape_size(shape);
    return Tensor(std::move(shape), std::vector<Scalar>(n, Scalar(0)), requires_grad);
}

Tensor Tensor::filled(Shape shape, Scalar value, bool requires_grad) {
    const auto n = shape_size(shape);
    return Tensor(std::move(shape), std::vector<Scalar>(n, value), requires_grad);
}

Tensor Tensor::scalar(Scalar value, bool requires_grad) {
    return Tensor({1}, {value}, requires_grad);
}

std::size_t Tensor::rows() const {
    if (rank() != 2) throw ShapeError("rows() needs a rank-2 tensor, got " + shape_to_string(shape()));
    return impl_->shape[0];
}

std::size_t Tensor::cols() const {
    if (rank() != 2) throw ShapeError("cols() needs a rank-2 tensor, got " + shape_to_string(shape()));
    return impl_->shape[1];
}

Scalar Tensor::item() const {
    if (size() != 1) throw ShapeError("item() needs a single-element tensor, got " + shape_to_string(shape()));
    return impl_->values[0];
}

Scalar Tensor::at(std::size_t row, std::size_t col) const {
    const auto c = cols();
    if (row >= rows() || col >= c) throw ShapeError("index out of range for " + shape_to_string(shape()));
    return impl_->values[row * c + col];
}

std::span<Scalar> Tensor::mutable_grad() const {
    if (impl_->grad.empty()) impl_->grad.assign(impl_->values.size(), Scalar(0));
    return impl_->grad;
}

void Tensor::zero_grad() const {
    std::fill(impl_->grad.begin(), impl_->grad.end(), Scalar(0));
}

Tensor Tensor::clone(bool requires_grad) const {
    return Tensor(impl_->shape, impl_->values, requires_grad);
}

void Tape::record(std::vector<Tensor> operands, Tensor output, BackwardFn backward) {
    entries_.push_back(Entry{std::move(operands), std::move(output), std::move(backward)});
}

void Tape::backward(const Tensor& loss) {
    if (loss.size() != 1) {
        throw ContractError("backward() needs a scalar loss, got shape " + shape_to_string(loss.shape()));
    }
    // Intermediate gradients are recomputed from scratch on every call; only
    // leaves accumulate.
    std::unordered_set<const void*> produced;
    produced.reserve(entries_.size());
    for (auto& e : entries_) {
        e.output.zero_grad();
        produced.insert(e.output.id());
    }
    if (!loss.requires_grad() && !produced.count(loss.id())) {
        throw ContractError("backward() loss was not produced through the recorded graph");
    }
    Tensor seed = loss;
    seed.mutable_grad()[0] += Scalar(1);

    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
        if (!it->output.has_grad()) continue;
        it->backward();
    }
}

namespace {
thread_local Tape* current_tape = nullptr;
}

Tape* active_tape() { return current_tape; }

TapeScope::TapeScope(Tape& tape) : previous_(current_tape) { current_tape = &tape; }

TapeScope::~TapeScope() { current_tape = previous_; }

NoGradScope::NoGradScope() : previous_(current_tape) { current_tape = nullptr; }

NoGradScope::~NoGradScope() { current_tape = previous_; }

}  // namespace CXR_NUMERIC_NS
}  // namespace cxr
