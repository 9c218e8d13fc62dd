#include "cxrgen/parameters.hpp"

#include <cmath>

namespace cxr {
inline namespace CXR_NUMERIC_NS {

Tensor& ParameterSet::add(const std::string& name, Tensor tensor) {
    if (index_.count(name)) throw ContractError("duplicate parameter name: " + name);
    index_[name] = entries_.size();
    names_.push_back(name);
    entries_.push_back(std::move(tensor));
    return entries_.back();
}

const Tensor& ParameterSet::at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ContractError("unknown parameter: " + name);
    return entries_[it->second];
}

Tensor& ParameterSet::at(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw ContractError("unknown parameter: " + name);
    return entries_[it->second];
}

std::size_t ParameterSet::scalar_count() const {
    std::size_t n = 0;
    for (const auto& t : entries_) n += t.size();
    return n;
}

void ParameterSet::zero_grad() {
    for (auto& t : entries_) t.zero_grad();
}

ParameterSet ParameterSet::clone() const {
    ParameterSet copy;
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        copy.add(names_[i], entries_[i].clone(entries_[i].requires_grad()));
    }
    return copy;
}

void ParameterSet::assign_values(const ParameterSet& other) {
    if (other.names_ != names_) throw ContractError("assign_values: parameter names differ");
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        if (entries_[i].shape() != other.entries_[i].shape()) {
            throw ShapeError("assign_values: shape mismatch for " + names_[i]);
        }
        const auto src = other.entries_[i].values();
        auto dst = entries_[i].mutable_values();
        std::copy(src.begin(), src.end(), dst.begin());
    }
}

AdamState AdamState::for_parameters(const ParameterSet& params) {
    AdamState state;
    for (const auto& t : params.tensors()) {
        state.first_moment.emplace_back(t.size(), Scalar(0));
        state.second_moment.emplace_back(t.size(), Scalar(0));
    }
    return state;
}

void adam_step(ParameterSet& params, AdamState& state, const AdamOptions& options) {
    auto& tensors = params.tensors();
    if (state.first_moment.size() != tensors.size() || state.second_moment.size() != tensors.size()) {
        throw ContractError("adam_step: optimizer state holds " + std::to_string(state.first_moment.size()) +
                            " buffers for " + std::to_string(tensors.size()) + " parameters");
    }
    for (std::size_t p = 0; p < tensors.size(); ++p) {
        if (state.first_moment[p].size() != tensors[p].size() || state.second_moment[p].size() != tensors[p].size()) {
            throw ContractError("adam_step: moment buffer size mismatch for " + params.names()[p]);
        }
    }
    state.step += 1;
    const double t = static_cast<double>(state.step);
    const double correction1 = 1.0 - std::pow(static_cast<double>(options.beta1), t);
    const double correction2 = 1.0 - std::pow(static_cast<double>(options.beta2), t);
    for (std::size_t p = 0; p < tensors.size(); ++p) {
        auto& param = tensors[p];
        if (!param.has_grad()) continue;
        const auto grad = param.grad();
        auto values = param.mutable_values();
        auto& m = state.first_moment[p];
        auto& v = state.second_moment[p];
        for (std::size_t i = 0; i < values.size(); ++i) {
            const Scalar g = grad[i];
            m[i] = options.beta1 * m[i] + (Scalar(1) - options.beta1) * g;
            v[i] = options.beta2 * v[i] + (Scalar(1) - options.beta2) * g * g;
            const double m_hat = m[i] / correction1;
            const double v_hat = v[i] / correction2;
            values[i] -= static_cast<Scalar>(options.learning_rate * m_hat / (std::sqrt(v_hat) + options.eps));
        }
    }
}

double clip_grad_norm(ParameterSet& params, double max_norm) {
    double sq = 0.0;
    for (const auto& t : params.tensors())
        for (auto g : t.grad()) sq += static_cast<double>(g) * g;
    const double norm = std::sqrt(sq);
    if (max_norm > 0.0 && norm > max_norm) {
        const auto factor = static_cast<Scalar>(max_norm / norm);
        for (auto& t : params.tensors())
            if (t.has_grad())
                for (auto& g : t.mutable_grad()) g *= factor;
    }
    return norm;
}

}  // namespace CXR_NUMERIC_NS
}  // namespace cxr
