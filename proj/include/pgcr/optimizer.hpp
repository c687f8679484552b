#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "pgcr/errors.hpp"
#include "pgcr/tensor.hpp"

namespace pgcr {

template <class S>
struct NamedParamT {
    std::string name;
    TensorT<S> tensor;  // shares storage with the model
};

using NamedParam = NamedParamT<float>;

// One learning-rate group. group_index runs from the input-most group (0) to
// the output-most (num_groups - 1).
template <class S>
struct ParamGroupT {
    std::string name;
    std::vector<NamedParamT<S>> params;
    double lr = 0.0;
    std::size_t group_index = 0;
};

using ParamGroup = ParamGroupT<float>;

// Layer-wise learning rate decay: the output-most group gets base_lr, each
// step toward the input multiplies by `decay`.
inline double layer_wise_lr(double base_lr, double decay, std::size_t group_index,
                            std::size_t num_groups) {
    if (!(decay > 0.0)) throw UsageError("layer-wise lr decay must be positive");
    if (group_index >= num_groups)
        throw UsageError("group index " + std::to_string(group_index) + " out of range for " +
                         std::to_string(num_groups) + " groups");
    return base_lr * std::pow(decay, static_cast<double>(num_groups - 1 - group_index));
}

// Adam optimizer state plus the knobs the training loops read.
template <class S>
struct TrainStateT {
    std::size_t step = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::uint64_t rng_seed = 0;
    double lambda_adv = 0.1;

    // First/second moment buffers, parallel to the group/param layout.
    std::vector<std::vector<std::vector<S>>> adam_m;
    std::vector<std::vector<std::vector<S>>> adam_v;
};

using TrainState = TrainStateT<float>;

// Standard bias-corrected Adam over all groups; grads are consumed (zeroed).
// Parameters that did not take part in the forward pass carry no gradient and
// are skipped (moments untouched). Updated parameters must stay finite.
template <class S>
void adam_step(TrainStateT<S>& state, std::vector<ParamGroupT<S>>& groups) {
    if (state.adam_m.empty()) {
        state.adam_m.resize(groups.size());
        state.adam_v.resize(groups.size());
        for (std::size_t g = 0; g < groups.size(); ++g) {
            state.adam_m[g].resize(groups[g].params.size());
            state.adam_v[g].resize(groups[g].params.size());
            for (std::size_t p = 0; p < groups[g].params.size(); ++p) {
                const std::size_t n = groups[g].params[p].tensor.numel();
                state.adam_m[g][p].assign(n, S(0));
                state.adam_v[g][p].assign(n, S(0));
            }
        }
    }
    if (state.adam_m.size() != groups.size())
        throw ShapeError("adam_step: optimizer state does not match group layout");

    state.step += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    for (std::size_t g = 0; g < groups.size(); ++g) {
        auto& group = groups[g];
        for (std::size_t p = 0; p < group.params.size(); ++p) {
            auto& param = group.params[p];
            if (!param.tensor.has_grad()) continue;
            auto& m = state.adam_m[g][p];
            auto& v = state.adam_v[g][p];
            if (m.size() != param.tensor.numel())
                throw ShapeError("adam_step: moment buffer does not match parameter " +
                                 param.name);
            auto& data = param.tensor.data();
            auto& grad = param.tensor.grad();
            const S b1 = S(state.beta1), b2 = S(state.beta2);
            const S lr = S(group.lr), ie = S(state.eps);
            const S inv_bc1 = S(1.0 / bc1), inv_bc2 = S(1.0 / bc2);
            for (std::size_t i = 0; i < data.size(); ++i) {
                const S gr = grad[i];
                m[i] = b1 * m[i] + (S(1) - b1) * gr;
                v[i] = b2 * v[i] + (S(1) - b2) * gr * gr;
                const S mhat = m[i] * inv_bc1;
                const S vhat = v[i] * inv_bc2;
                data[i] -= lr * mhat / (std::sqrt(vhat) + ie);
            }
            param.tensor.zero_grad();
            check_finite(param.tensor, param.name);
        }
    }
}

template <class S>
void zero_grads(std::vector<ParamGroupT<S>>& groups) {
    for (auto& g : groups)
        for (auto& p : g.params) p.tensor.zero_grad();
}

template <class S>
void set_requires_grad(std::vector<ParamGroupT<S>>& groups, bool value) {
    for (auto& g : groups)
        for (auto& p : g.params) p.tensor.set_requires_grad(value);
}

}  // namespace pgcr
