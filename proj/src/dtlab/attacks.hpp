#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "dtlab/zoo.hpp"

namespace dtlab {

enum class AttackKind { Fgsm, Ifgsm, Pgd, DeepFool, Flow, ComposedPgd };

std::string to_string(AttackKind kind);
AttackKind attack_kind_from_string(const std::string& name);

struct AttackSpec {
    AttackKind kind = AttackKind::Fgsm;
    // l-inf budget in pixel units; the displacement bound in normalized units for Flow.
    double epsilon = 8.0 / 255.0;
    int steps = 0;
    double step_size = 0.0;
    bool random_start = false;
    double flow_tv_weight = 0.0;
    double overshoot = 0.02;  // DeepFool
    int max_iter = 50;        // DeepFool
    std::uint64_t seed = 0;

    // Report label, e.g. "FGSM", "PGD-10", "COMPOSED-PGD-100".
    std::string id() const;
    bool linf_bounded() const;
    void validate() const;

    static AttackSpec fgsm(double eps);
    static AttackSpec ifgsm(double eps, int steps);
    // step_size defaults to eps / 4.
    static AttackSpec pgd(double eps, int steps, bool random_start = true, std::uint64_t seed = 0);
    static AttackSpec deepfool(int max_iter = 50, double overshoot = 0.02);
    static AttackSpec flow(double eps_flow, int steps, double step_size, double tv_weight);
    static AttackSpec composed_pgd(double eps, int steps, bool random_start = true, std::uint64_t seed = 0);
};

enum class Split { Train, Test };

struct AdvRecord {
    Tensor x;
    Tensor x_adv;
    int y = 0;
    AttackSpec spec;
    bool fooled = false;
    Split split = Split::Test;
    int iterations = 0;
};

// Cross-entropy of h (optionally behind the defense) and its gradient w.r.t. the input.
struct LossGrad {
    double loss = 0.0;
    std::vector<double> grad;
};
LossGrad loss_input_gradient(const ClassifierModel& h, const DefenseModel* defense, const Tensor& x, int y);

// Predicted class of h(d(x)), or h(x) when d is null.
int predict_defended(const ClassifierModel& h, const DefenseModel* defense, const Tensor& x);

AdvRecord fgsm(const ClassifierModel& h, const Tensor& x, int y, double eps);
AdvRecord ifgsm(const ClassifierModel& h, const Tensor& x, int y, double eps, int steps, double step_size);
AdvRecord pgd(const ClassifierModel& h, const Tensor& x, int y, double eps, int steps, double step_size,
              bool random_start, std::uint64_t seed);
AdvRecord deepfool(const ClassifierModel& h, const Tensor& x, int y, int max_iter, double overshoot);
AdvRecord flow_attack(const ClassifierModel& h, const Tensor& x, int y, int steps, double step_size,
                      double flow_tv_weight, double eps_flow);
// PGD against h(d(.)), differentiating through the defense.
AdvRecord composed_pgd(const ClassifierModel& h, const DefenseModel& d, const Tensor& x, int y, double eps,
                       int steps, double step_size, bool random_start, std::uint64_t seed);

// Dispatches on spec.kind. Random streams are keyed on (spec.seed, sample_index).
AdvRecord run_attack(const ClassifierModel& h, const DefenseModel* d, const Tensor& x, int y,
                     const AttackSpec& spec, std::uint64_t sample_index);

}  // namespace dtlab
