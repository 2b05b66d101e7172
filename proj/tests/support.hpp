#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "dtlab/ops.hpp"
#include "dtlab/rng.hpp"
#include "dtlab/tape.hpp"
#include "dtlab/warp.hpp"
#include "dtlab/zoo.hpp"

namespace dtlab::testing {

inline Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t(std::move(shape));
    for (auto& v : t.data()) v = rng.uniform(lo, hi);
    return t;
}

// Builds a scalar from the tape leaves bound to the inputs.
using ScalarFn = std::function<Var(Tape&, const std::vector<Var>&)>;

inline double eval_scalar(const ScalarFn& f, const std::vector<Tensor>& inputs) {
    Tape tape;
    std::vector<Var> vars;
    for (const auto& t : inputs) vars.push_back(tape.constant(t));
    return f(tape, vars).value().item();
}

// Weighted sum of every output entry, so each output gets its own cotangent.
inline Var weighted_sum(Tape& tape, Var out, std::uint64_t seed) {
    Rng rng(seed);
    Tensor w = random_tensor(out.shape(), rng, -1.0, 1.0);
    return ops::sum(ops::mul(out, tape.constant(std::move(w))));
}

struct FdStats {
    std::size_t checked = 0;
    std::size_t skipped = 0;
    double worst = 0.0;
};

inline double fd_rel_err(double analytic, double numeric) {
    return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-6});
}

// Central differences at `points` random (input, coordinate) pairs. A point is
// treated as a kink and skipped when the h and h/2 estimates disagree.
inline FdStats fd_check(const ScalarFn& f, std::vector<Tensor> inputs, const std::vector<std::size_t>& wrt,
                        std::size_t points, Rng& rng, double h = 1e-5) {
    Tape tape;
    std::vector<Var> vars;
    for (const auto& t : inputs) vars.push_back(tape.input(t));
    tape.backward(f(tape, vars));
    std::vector<std::vector<double>> grads;
    for (const auto& v : vars) {
        auto g = tape.grad(v);
        grads.emplace_back(g.begin(), g.end());
    }
    FdStats s;
    for (std::size_t p = 0; p < points; ++p) {
        const std::size_t k = wrt[rng.index(wrt.size())];
        const std::size_t j = rng.index(inputs[k].numel());
        const double x0 = inputs[k][j];
        auto at = [&](double x) {
            inputs[k][j] = x;
            const double v = eval_scalar(f, inputs);
            inputs[k][j] = x0;
            return v;
        };
        const double n1 = (at(x0 + h) - at(x0 - h)) / (2 * h);
        const double n2 = (at(x0 + h / 2) - at(x0 - h / 2)) / h;
        if (std::abs(n1 - n2) > 1e-6 * std::max(1.0, std::abs(n1))) {
            ++s.skipped;
            continue;
        }
        ++s.checked;
        s.worst = std::max(s.worst, fd_rel_err(grads[k][j], n1));
    }
    return s;
}

inline void merge(FdStats& into, const FdStats& s) {
    into.checked += s.checked;
    into.skipped += s.skipped;
    into.worst = std::max(into.worst, s.worst);
}

// Gives the zero-initialized heads of a fresh defense random values so that
// every parameter influences the output.
inline void perturb_defense(DefenseModel& d, Rng& rng, double scale = 0.05) {
    for (std::size_t i = 0; i < d.unet.size(); ++i) {
        if (d.unet.name(i).rfind("unet.head", 0) == 0) {
            for (auto& v : d.unet[i].data()) v = rng.uniform(-scale, scale);
        }
    }
    for (auto& v : d.locnet.at("loc.fc1.w").data()) v = rng.uniform(-scale, scale);
}

}  // namespace dtlab::testing
