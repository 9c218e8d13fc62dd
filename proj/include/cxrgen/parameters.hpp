#pragma once

#include "cxrgen/tensor.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace cxr {
inline namespace CXR_NUMERIC_NS {

/// Named learnable tensors in insertion order.
class ParameterSet {
public:
    /// Registers a new trainable tensor; names are unique.
    Tensor& add(const std::string& name, Tensor tensor);

    bool contains(const std::string& name) const { return index_.count(name) != 0; }
    const Tensor& at(const std::string& name) const;
    Tensor& at(const std::string& name);

    std::size_t size() const { return entries_.size(); }
    std::size_t scalar_count() const;

    const std::vector<std::string>& names() const { return names_; }
    const std::vector<Tensor>& tensors() const { return entries_; }
    std::vector<Tensor>& tensors() { return entries_; }

    void zero_grad();

    /// Deep copy: same names and values, independent storage.
    ParameterSet clone() const;
    /// Overwrite values from another set with identical names and shapes.
    void assign_values(const ParameterSet& other);

private:
    std::vector<std::string> names_;
    std::vector<Tensor> entries_;
    std::map<std::string, std::size_t> index_;
};

struct AdamOptions {
    Scalar learning_rate = Scalar(3e-4);
    Scalar beta1 = Scalar(0.9);
    Scalar beta2 = Scalar(0.999);
    Scalar eps = Scalar(1e-8);
};

/// First/second moment buffers, one per parameter, plus the step counter.
struct AdamState {
    std::vector<std::vector<Scalar>> first_moment;
    std::vector<std::vector<Scalar>> second_moment;
    std::uint64_t step = 0;

    static AdamState for_parameters(const ParameterSet& params);
};

/// One bias-corrected Adam update using each parameter's gradient buffer.
/// Parameters without a gradient buffer are treated as having zero gradient.
void adam_step(ParameterSet& params, AdamState& state, const AdamOptions& options);

/// Scales all gradients so that their global L2 norm is at most max_norm.
/// Returns the norm before clipping.
double clip_grad_norm(ParameterSet& params, double max_norm);

}  // namespace CXR_NUMERIC_NS
}  // namespace cxr
