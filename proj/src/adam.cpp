#include "dtlab/adam.hpp"

#include <cmath>

#include "dtlab/errors.hpp"

namespace dtlab {

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state) {
    if (params.size() != grads.size() || state.m.size() != params.size() || state.v.size() != params.size()) {
        throw ContractError("adam_step: parameter, gradient and moment lengths disagree (" +
                            std::to_string(params.size()) + ", " + std::to_string(grads.size()) + ", " +
                            std::to_string(state.m.size()) + ")");
    }
    const AdamOptions& o = state.opts;
    ++state.step_count;
    const double bc1 = 1.0 - std::pow(o.beta1, static_cast<double>(state.step_count));
    const double bc2 = 1.0 - std::pow(o.beta2, static_cast<double>(state.step_count));
    for (std::size_t i = 0; i < params.size(); ++i) {
        state.m[i] = o.beta1 * state.m[i] + (1.0 - o.beta1) * grads[i];
        state.v[i] = o.beta2 * state.v[i] + (1.0 - o.beta2) * grads[i] * grads[i];
        const double m_hat = state.m[i] / bc1;
        const double v_hat = state.v[i] / bc2;
        params[i] -= o.lr * m_hat / (std::sqrt(v_hat) + o.eps);
    }
}

AdamOptimizer::AdamOptimizer(std::vector<Tensor*> params, AdamOptions opts) : params_(std::move(params)) {
    states_.reserve(params_.size());
    for (Tensor* p : params_) states_.emplace_back(p->numel(), opts);
}

void AdamOptimizer::step() {
    for (std::size_t i = 0; i < params_.size(); ++i) {
        Tensor& p = *params_[i];
        adam_step(p.data(), p.grad(), states_[i]);
    }
}

void AdamOptimizer::zero_grad() {
    for (Tensor* p : params_) p->zero_grad();
}

}  // namespace dtlab
