#include "dtlab/tape.hpp"

#include <algorithm>

#include "dtlab/errors.hpp"

namespace dtlab {

const Tensor& Var::value() const {
    if (tape == nullptr) throw ContractError("Var is not bound to a tape");
    return tape->value(id);
}

Var Tape::constant(Tensor value) {
    Node n;
    n.owned = std::move(value);
    nodes_.push_back(std::move(n));
    return Var{this, nodes_.size() - 1};
}

Var Tape::input(Tensor value) {
    Node n;
    n.owned = std::move(value);
    n.needs_grad = true;
    nodes_.push_back(std::move(n));
    return Var{this, nodes_.size() - 1};
}

Var Tape::parameter(Tensor& p) {
    Node n;
    n.external = &p;
    if (p.requires_grad()) {
        n.param_target = &p;
        n.needs_grad = true;
    }
    nodes_.push_back(std::move(n));
    return Var{this, nodes_.size() - 1};
}

Var Tape::parameter(const Tensor& p) {
    Node n;
    n.external = &p;
    nodes_.push_back(std::move(n));
    return Var{this, nodes_.size() - 1};
}

void Tape::check_var(Var v) const {
    if (v.tape != this) throw ContractError("Var belongs to a different tape");
    if (v.id >= nodes_.size()) throw IndexError("Var id out of range");
}

Var Tape::record(Tensor value, std::vector<Var> inputs, BackwardFn backward) {
    Node n;
    n.owned = std::move(value);
    n.inputs.reserve(inputs.size());
    for (const Var& in : inputs) {
        check_var(in);
        n.inputs.push_back(in.id);
        n.needs_grad = n.needs_grad || nodes_[in.id].needs_grad;
    }
    if (n.needs_grad) n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return Var{this, nodes_.size() - 1};
}

const Tensor& Tape::value(Var v) const {
    check_var(v);
    return value(v.id);
}

const Tensor& Tape::value(std::size_t id) const {
    const Node& n = nodes_.at(id);
    return n.external ? *n.external : n.owned;
}

void Tape::backward(Var loss) {
    check_var(loss);
    if (value(loss).numel() != 1) {
        throw ContractError("backward() needs a scalar loss, got shape " + shape_string(value(loss).shape()));
    }
    const double one = 1.0;
    backward(loss, std::span<const double>(&one, 1));
}

void Tape::backward(Var out, std::span<const double> seed) {
    check_var(out);
    if (seed.size() != value(out).numel()) {
        throw DimensionError("backward seed has " + std::to_string(seed.size()) + " values for output " +
                             shape_string(value(out).shape()));
    }
    for (auto& n : nodes_) {
        n.grad.clear();
        n.grad.shrink_to_fit();
    }
    if (!nodes_[out.id].needs_grad) return;
    nodes_[out.id].grad.assign(seed.begin(), seed.end());

    std::vector<std::span<double>> in_grads;
    for (std::size_t k = out.id + 1; k-- > 0;) {
        Node& node = nodes_[k];
        if (node.grad.empty()) continue;
        if (node.param_target != nullptr) {
            auto& g = node.param_target->grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += node.grad[i];
        }
        if (!node.backward) continue;
        in_grads.assign(node.inputs.size(), std::span<double>{});
        for (std::size_t j = 0; j < node.inputs.size(); ++j) {
            Node& in = nodes_[node.inputs[j]];
            if (!in.needs_grad) continue;
            if (in.grad.empty()) in.grad.assign(value(node.inputs[j]).numel(), 0.0);
            in_grads[j] = in.grad;
        }
        node.backward(BackwardCtx{node.grad, in_grads});
    }
}

std::span<const double> Tape::grad(Var v) const {
    check_var(v);
    return nodes_[v.id].grad;
}

}  // namespace dtlab
