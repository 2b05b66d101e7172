#include "dtlab/attacks.hpp"

#include <algorithm>
#include <cmath>

#include "dtlab/errors.hpp"
#include "dtlab/ops.hpp"
#include "dtlab/rng.hpp"
#include "dtlab/warp.hpp"

namespace dtlab {

std::string to_string(AttackKind kind) {
    switch (kind) {
        case AttackKind::Fgsm: return "fgsm";
        case AttackKind::Ifgsm: return "ifgsm";
        case AttackKind::Pgd: return "pgd";
        case AttackKind::DeepFool: return "deepfool";
        case AttackKind::Flow: return "flow";
        case AttackKind::ComposedPgd: return "composed_pgd";
    }
    return "unknown";
}

AttackKind attack_kind_from_string(const std::string& name) {
    for (AttackKind k : {AttackKind::Fgsm, AttackKind::Ifgsm, AttackKind::Pgd, AttackKind::DeepFool, AttackKind::Flow,
                         AttackKind::ComposedPgd}) {
        if (to_string(k) == name) return k;
    }
    throw ConfigError("unknown attack kind '" + name + "'");
}

std::string AttackSpec::id() const {
    switch (kind) {
        case AttackKind::Fgsm: return "FGSM";
        case AttackKind::Ifgsm: return "IFGSM-" + std::to_string(steps);
        case AttackKind::Pgd: return "PGD-" + std::to_string(steps);
        case AttackKind::DeepFool: return "DEEPFOOL";
        case AttackKind::Flow: return "FLOW";
        case AttackKind::ComposedPgd: return "COMPOSED-PGD-" + std::to_string(steps);
    }
    return "UNKNOWN";
}

bool AttackSpec::linf_bounded() const {
    return kind == AttackKind::Fgsm || kind == AttackKind::Ifgsm || kind == AttackKind::Pgd ||
           kind == AttackKind::ComposedPgd;
}

void AttackSpec::validate() const {
    if (!(epsilon >= 0.0)) throw DomainError(id() + ": epsilon must be >= 0");
    if (steps < 0) throw DomainError(id() + ": steps must be >= 0");
    if (steps > 0 && !(step_size > 0.0)) throw DomainError(id() + ": step_size must be > 0 when steps > 0");
    if ((kind == AttackKind::Ifgsm || kind == AttackKind::Pgd || kind == AttackKind::ComposedPgd) && steps < 1) {
        throw DomainError(id() + ": iterative attacks need steps >= 1");
    }
    if (kind == AttackKind::DeepFool && (max_iter < 1 || overshoot < 0.0)) {
        throw DomainError("DEEPFOOL: need max_iter >= 1 and overshoot >= 0");
    }
    if (kind == AttackKind::Flow && flow_tv_weight < 0.0) throw DomainError("FLOW: tv weight must be >= 0");
}

AttackSpec AttackSpec::fgsm(double eps) {
    AttackSpec s;
    s.kind = AttackKind::Fgsm;
    s.epsilon = eps;
    return s;
}

AttackSpec AttackSpec::ifgsm(double eps, int steps) {
    AttackSpec s;
    s.kind = AttackKind::Ifgsm;
    s.epsilon = eps;
    s.steps = steps;
    s.step_size = eps / 4.0;
    return s;
}

AttackSpec AttackSpec::pgd(double eps, int steps, bool random_start, std::uint64_t seed) {
    AttackSpec s = ifgsm(eps, steps);
    s.kind = AttackKind::Pgd;
    s.random_start = random_start;
    s.seed = seed;
    return s;
}

AttackSpec AttackSpec::deepfool(int max_iter, double overshoot) {
    AttackSpec s;
    s.kind = AttackKind::DeepFool;
    s.epsilon = 0.0;
    s.max_iter = max_iter;
    s.overshoot = overshoot;
    return s;
}

AttackSpec AttackSpec::flow(double eps_flow, int steps, double step_size, double tv_weight) {
    AttackSpec s;
    s.kind = AttackKind::Flow;
    s.epsilon = eps_flow;
    s.steps = steps;
    s.step_size = step_size;
    s.flow_tv_weight = tv_weight;
    return s;
}

AttackSpec AttackSpec::composed_pgd(double eps, int steps, bool random_start, std::uint64_t seed) {
    AttackSpec s = pgd(eps, steps, random_start, seed);
    s.kind = AttackKind::ComposedPgd;
    return s;
}

LossGrad loss_input_gradient(const ClassifierModel& h, const DefenseModel* defense, const Tensor& x, int y) {
    Tape tape;
    Var in = tape.input(x);
    Var z = defense ? h.forward(tape, defense->forward(tape, in)) : h.forward(tape, in);
    const int label[1] = {y};
    Var loss = ops::softmax_cross_entropy(z, label);
    tape.backward(loss);
    auto g = tape.grad(in);
    return {loss.value().item(), std::vector<double>(g.begin(), g.end())};
}

int predict_defended(const ClassifierModel& h, const DefenseModel* defense, const Tensor& x) {
    if (defense == nullptr) return h.predict(x);
    Tape tape;
    Var z = h.forward(tape, defense->forward(tape, tape.parameter(x)));
    return static_cast<int>(argmax(z.value().data()));
}

namespace {

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

// Iterated signed-gradient ascent with range clamp followed by l-inf projection.
Tensor linf_iterate(const ClassifierModel& h, const DefenseModel* d, const Tensor& x0, int y, double eps, int steps,
                    double step_size, Tensor start) {
    Tensor x = std::move(start);
    for (int s = 0; s < steps; ++s) {
        const LossGrad lg = loss_input_gradient(h, d, x, y);
        for (std::size_t i = 0; i < x.numel(); ++i) {
            const double moved = clamp01(x[i] + step_size * sign(lg.grad[i]));
            x[i] = std::clamp(moved, x0[i] - eps, x0[i] + eps);
        }
    }
    return x;
}

Tensor random_start_point(const Tensor& x0, double eps, std::uint64_t seed) {
    Rng rng(seed);
    Tensor x = x0;
    for (double& v : x.data()) v = clamp01(v + rng.uniform(-eps, eps));
    return x;
}

AdvRecord make_record(const ClassifierModel& h, const DefenseModel* d, const Tensor& x, Tensor x_adv, int y,
                      AttackSpec spec, int iterations) {
    AdvRecord r;
    r.x = x;
    r.fooled = predict_defended(h, d, x_adv) != y;
    r.x_adv = std::move(x_adv);
    r.y = y;
    r.spec = std::move(spec);
    r.iterations = iterations;
    return r;
}

}  // namespace

AdvRecord fgsm(const ClassifierModel& h, const Tensor& x, int y, double eps) {
    const AttackSpec spec = AttackSpec::fgsm(eps);
    spec.validate();
    const LossGrad lg = loss_input_gradient(h, nullptr, x, y);
    Tensor adv = x;
    for (std::size_t i = 0; i < adv.numel(); ++i) adv[i] = clamp01(x[i] + eps * sign(lg.grad[i]));
    return make_record(h, nullptr, x, std::move(adv), y, spec, 1);
}

AdvRecord ifgsm(const ClassifierModel& h, const Tensor& x, int y, double eps, int steps, double step_size) {
    AttackSpec spec = AttackSpec::ifgsm(eps, steps);
    spec.step_size = step_size;
    spec.validate();
    Tensor adv = linf_iterate(h, nullptr, x, y, eps, steps, step_size, x);
    return make_record(h, nullptr, x, std::move(adv), y, spec, steps);
}

AdvRecord pgd(const ClassifierModel& h, const Tensor& x, int y, double eps, int steps, double step_size,
              bool random_start, std::uint64_t seed) {
    AttackSpec spec = AttackSpec::pgd(eps, steps, random_start, seed);
    spec.step_size = step_size;
    spec.validate();
    Tensor start = random_start ? random_start_point(x, eps, seed) : x;
    Tensor adv = linf_iterate(h, nullptr, x, y, eps, steps, step_size, std::move(start));
    return make_record(h, nullptr, x, std::move(adv), y, spec, steps);
}

AdvRecord composed_pgd(const ClassifierModel& h, const DefenseModel& d, const Tensor& x, int y, double eps,
                       int steps, double step_size, bool random_start, std::uint64_t seed) {
    AttackSpec spec = AttackSpec::composed_pgd(eps, steps, random_start, seed);
    spec.step_size = step_size;
    spec.validate();
    Tensor start = random_start ? random_start_point(x, eps, seed) : x;
    Tensor adv = linf_iterate(h, &d, x, y, eps, steps, step_size, std::move(start));
    return make_record(h, &d, x, std::move(adv), y, spec, steps);
}

AdvRecord deepfool(const ClassifierModel& h, const Tensor& x, int y, int max_iter, double overshoot) {
    const AttackSpec spec = AttackSpec::deepfool(max_iter, overshoot);
    spec.validate();
    const std::size_t c = h.num_classes;
    if (y < 0 || static_cast<std::size_t>(y) >= c) throw IndexError("deepfool: label out of range");
    const auto yl = static_cast<std::size_t>(y);
    std::vector<double> r_tot(x.numel(), 0.0);
    Tensor cur = x;
    int iterations = 0;
    for (; iterations < max_iter; ++iterations) {
        Tape tape;
        Var in = tape.input(cur);
        Var z = h.forward(tape, in);
        const auto logits = z.value().data();
        if (argmax(logits) != yl) break;
        std::vector<std::vector<double>> grads(c);
        std::vector<double> seed(c, 0.0);
        for (std::size_t k = 0; k < c; ++k) {
            seed[k] = 1.0;
            tape.backward(z, seed);
            seed[k] = 0.0;
            auto g = tape.grad(in);
            grads[k].assign(g.begin(), g.end());
        }
        double best = std::numeric_limits<double>::infinity();
        std::vector<double> step;
        for (std::size_t k = 0; k < c; ++k) {
            if (k == yl) continue;
            std::vector<double> w(x.numel());
            double norm2 = 0.0;
            for (std::size_t i = 0; i < w.size(); ++i) {
                w[i] = grads[k][i] - grads[yl][i];
                norm2 += w[i] * w[i];
            }
            if (norm2 == 0.0) continue;
            const double f = std::abs(logits[k] - logits[yl]);
            const double dist = f / std::sqrt(norm2);
            if (dist < best) {
                best = dist;
                step = std::move(w);
                for (double& v : step) v *= f / norm2;
            }
        }
        if (step.empty()) break;
        for (std::size_t i = 0; i < r_tot.size(); ++i) {
            r_tot[i] += step[i];
            cur[i] = clamp01(x[i] + (1.0 + overshoot) * r_tot[i]);
        }
    }
    return make_record(h, nullptr, x, std::move(cur), y, spec, iterations);
}

AdvRecord flow_attack(const ClassifierModel& h, const Tensor& x, int y, int steps, double step_size,
                      double flow_tv_weight, double eps_flow) {
    const AttackSpec spec = AttackSpec::flow(eps_flow, steps, step_size, flow_tv_weight);
    spec.validate();
    if (x.ndim() != 3 || x.dim(1) < 2 || x.dim(2) < 2) {
        throw ContractError("flow_attack needs a C x H x W image, got " + shape_string(x.shape()));
    }
    const std::size_t hh = x.dim(1);
    const std::size_t ww = x.dim(2);
    const SampleGrid base = identity_grid(hh, ww);
    Tensor flow({hh, ww, 2});
    const int label[1] = {y};
    for (int s = 0; s < steps; ++s) {
        Tape tape;
        Var phi = tape.input(flow);
        Var grid = ops::add(tape.parameter(base.coords), phi);
        Var warped = ops::grid_sample(tape.parameter(x), grid);
        Var loss = ops::softmax_cross_entropy(h.forward(tape, warped), label);
        if (flow_tv_weight > 0.0) loss = ops::sub(loss, ops::scale(ops::flow_total_variation(phi), flow_tv_weight));
        tape.backward(loss);
        auto g = tape.grad(phi);
        for (std::size_t i = 0; i < flow.numel(); ++i) {
            flow[i] = std::clamp(flow[i] + step_size * sign(g[i]), -eps_flow, eps_flow);
        }
    }
    Tensor grid = base.coords;
    for (std::size_t i = 0; i < grid.numel(); ++i) grid[i] += flow[i];
    Tensor adv = grid_sample(x, SampleGrid{std::move(grid)});
    return make_record(h, nullptr, x, std::move(adv), y, spec, steps);
}

AdvRecord run_attack(const ClassifierModel& h, const DefenseModel* d, const Tensor& x, int y,
                     const AttackSpec& spec, std::uint64_t sample_index) {
    spec.validate();
    const std::uint64_t seed = mix_seed(spec.seed, sample_index);
    AdvRecord r;
    switch (spec.kind) {
        case AttackKind::Fgsm:
            r = fgsm(h, x, y, spec.epsilon);
            break;
        case AttackKind::Ifgsm:
            r = ifgsm(h, x, y, spec.epsilon, spec.steps, spec.step_size);
            break;
        case AttackKind::Pgd:
            r = pgd(h, x, y, spec.epsilon, spec.steps, spec.step_size, spec.random_start, seed);
            break;
        case AttackKind::DeepFool:
            r = deepfool(h, x, y, spec.max_iter, spec.overshoot);
            break;
        case AttackKind::Flow:
            r = flow_attack(h, x, y, spec.steps, spec.step_size, spec.flow_tv_weight, spec.epsilon);
            break;
        case AttackKind::ComposedPgd:
            if (d == nullptr) throw ContractError("composed PGD needs a defense model");
            r = composed_pgd(h, *d, x, y, spec.epsilon, spec.steps, spec.step_size, spec.random_start, seed);
            break;
    }
    r.spec = spec;
    return r;
}

}  // namespace dtlab
