#pragma once

#include <span>
#include <vector>

#include "dtlab/tensor.hpp"

namespace dtlab {

struct AdamOptions {
    double lr = 1e-3;
    double beta1 = 0.5;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Moment estimates for one parameter vector.
struct AdamState {
    long step_count = 0;
    std::vector<double> m;
    std::vector<double> v;
    AdamOptions opts;

    AdamState() = default;
    AdamState(std::size_t n, AdamOptions o) : m(n, 0.0), v(n, 0.0), opts(o) {}
};

// Bias-corrected Adam update applied in place.
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state);

// Adam over a fixed list of parameter tensors, consuming their .grad().
class AdamOptimizer {
public:
    AdamOptimizer(std::vector<Tensor*> params, AdamOptions opts);

    void step();
    void zero_grad();
    const std::vector<Tensor*>& params() const noexcept { return params_; }

private:
    std::vector<Tensor*> params_;
    std::vector<AdamState> states_;
};

}  // namespace dtlab
