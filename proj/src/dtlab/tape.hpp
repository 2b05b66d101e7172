#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "dtlab/tensor.hpp"

namespace dtlab {

class Tape;

// Handle to a value recorded on a tape. Cheap to copy; valid while the tape lives.
struct Var {
    Tape* tape = nullptr;
    std::size_t id = 0;

    const Tensor& value() const;
    const Shape& shape() const { return value().shape(); }
};

struct BackwardCtx {
    std::span<const double> out_grad;
    // One span per recorded input; empty when that input needs no gradient.
    std::span<const std::span<double>> in_grad;
};

using BackwardFn = std::function<void(const BackwardCtx&)>;

// Define-by-run record of a forward computation. Nodes are appended in
// execution order, so node ids are already a topological order.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // Leaf without gradient.
    Var constant(Tensor value);
    // Leaf whose gradient is kept on the tape and read back with grad().
    Var input(Tensor value);
    // Leaf referring to an externally owned tensor, which must outlive the tape.
    // Gradients are accumulated into p.grad() only if p.requires_grad().
    Var parameter(Tensor& p);
    // Same, but never tracked; used for frozen weights.
    Var parameter(const Tensor& p);

    Var record(Tensor value, std::vector<Var> inputs, BackwardFn backward);

    const Tensor& value(Var v) const;
    const Tensor& value(std::size_t id) const;
    bool needs_grad(Var v) const { return nodes_.at(v.id).needs_grad; }

    // Seeds d(loss)/d(loss) = 1 and sweeps in reverse order. Gradients on
    // the tape are cleared first, parameter gradients accumulate.
    void backward(Var loss);
    // Same with an explicit upstream gradient for a non-scalar output.
    void backward(Var out, std::span<const double> seed);

    // Gradient of the last backward pass w.r.t. v; empty if v was not reached.
    std::span<const double> grad(Var v) const;

    std::size_t size() const noexcept { return nodes_.size(); }

private:
    struct Node {
        Tensor owned;
        const Tensor* external = nullptr;
        Tensor* param_target = nullptr;
        std::vector<std::size_t> inputs;
        BackwardFn backward;
        bool needs_grad = false;
        std::vector<double> grad;
    };

    void check_var(Var v) const;

    std::vector<Node> nodes_;
};

}  // namespace dtlab
