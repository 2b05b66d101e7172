// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <numbers>
#include <optional>
#include <string>

#include "dtlab/config.hpp"
#include "dtlab/defense.hpp"
#include "dtlab/errors.hpp"
#include "dtlab/experiment.hpp"
#include "dtlab/vulnlab.hpp"
#include "support.hpp"

using namespace dtlab;
using dtlab::testing::FdStats;
using dtlab::testing::random_tensor;
using dtlab::testing::weighted_sum;

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

int g_failures = 0;

void verdict(int n, const std::string& name, bool ok, const std::string& detail) {
    std::printf("%s [%2d] %s: %s\n", ok ? "PASS" : "FAIL", n, name.c_str(), detail.c_str());
    std::fflush(stdout);
    if (!ok) ++g_failures;
}

std::string fmt(const char* f, double a = 0, double b = 0, double c = 0, double d = 0, double e = 0) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, a, b, c, d, e);
    return buf;
}

constexpr double kEps = 8.0 / 255.0;

// ---------------------------------------------------------------- 1

void gradient_correctness() {
    const auto t0 = Clock::now();
    Rng rng(11);
    FdStats total;
    std::string per_op;
    auto run = [&](const std::string& name, const testing::ScalarFn& f, std::vector<Shape> shapes,
                   std::vector<std::size_t> wrt, double lo = -1.0, double hi = 1.0) {
        FdStats s;
        for (int inst = 0; inst < 10; ++inst) {
            std::vector<Tensor> in;
            for (const auto& sh : shapes) in.push_back(random_tensor(sh, rng, lo, hi));
            testing::merge(s, testing::fd_check(f, in, wrt, 10, rng));
        }
        testing::merge(total, s);
        char buf[96];
        std::snprintf(buf, sizeof buf, " %s=%zu/%.1e", name.c_str(), s.checked, s.worst);
        per_op += buf;
        return s.checked >= 100 && s.worst < 1e-4;
    };
    bool ok = true;
    ok &= run("matmul", [](Tape& t, const std::vector<Var>& v) { return weighted_sum(t, ops::matmul(v[0], v[1]), 1); },
              {{3, 4}, {4, 5}}, {0, 1});
    ok &= run("linear",
              [](Tape& t, const std::vector<Var>& v) { return weighted_sum(t, ops::linear(v[0], v[1], v[2]), 2); },
              {{2, 4}, {3, 4}, {3}}, {0, 1, 2});
    ok &= run("conv2d",
              [](Tape& t, const std::vector<Var>& v) { return weighted_sum(t, ops::conv2d(v[0], v[1], v[2], 1, 1), 3); },
              {{2, 2, 6, 6}, {3, 2, 3, 3}, {3}}, {0, 1, 2});
    ok &= run("conv2d_s2",
              [](Tape& t, const std::vector<Var>& v) { return weighted_sum(t, ops::conv2d(v[0], v[1], 2, 1), 4); },
              {{2, 7, 7}, {2, 2, 3, 3}}, {0, 1});
    ok &= run("relu", [](Tape& t, const std::vector<Var>& v) { return weighted_sum(t, ops::relu(v[0]), 5); }, {{40}},
              {0});
    ok &= run("avg_pool",
              [](Tape& t, const std::vector<Var>& v) { return weighted_sum(t, ops::avg_pool2d(v[0], 2), 6); },
              {{2, 3, 4, 4}}, {0});
    ok &= run("max_pool",
              [](Tape& t, const std::vector<Var>& v) { return weighted_sum(t, ops::max_pool2d(v[0], 2), 7); },
              {{2, 3, 4, 4}}, {0});
    ok &= run("softmax_xent",
              [](Tape&, const std::vector<Var>& v) {
                  const int labels[4] = {0, 3, 1, 4};
                  return ops::softmax_cross_entropy(ops::scale(v[0], 3.0), labels);
              },
              {{4, 5}}, {0});
    ok &= run("affine_grid",
              [](Tape& t, const std::vector<Var>& v) { return weighted_sum(t, ops::affine_grid(v[0], 5, 6), 8); },
              {{2, 3}}, {0});
    ok &= run("grid_sample",
              [](Tape& t, const std::vector<Var>& v) { return weighted_sum(t, ops::grid_sample(v[0], v[1]), 9); },
              {{2, 6, 6}, {5, 7, 2}}, {0, 1}, -1.1, 1.1);
    ok &= run("warp_image",
              [](Tape& t, const std::vector<Var>& v) {
                  Var theta = ops::add(v[1], t.constant(AffineParams::identity().tensor()));
                  return weighted_sum(t, ops::warp_image(v[0], theta), 10);
              },
              {{1, 6, 6}, {2, 3}}, {0, 1}, -0.3, 0.3);
    ok &= run("point_affine",
              [](Tape& t, const std::vector<Var>& v) { return weighted_sum(t, ops::point_affine(v[0], v[1]), 11); },
              {{8, 2}, {6}}, {0, 1});
    ok &= run("point_affine_per_point",
              [](Tape& t, const std::vector<Var>& v) { return weighted_sum(t, ops::point_affine(v[0], v[1]), 12); },
              {{8, 2}, {8, 6}}, {0, 1});
    ok &= run("upsample",
              [](Tape& t, const std::vector<Var>& v) { return weighted_sum(t, ops::upsample_nearest2d(v[0], 2), 13); },
              {{2, 3, 3}}, {0});
    ok &= run("concat",
              [](Tape& t, const std::vector<Var>& v) {
                  return weighted_sum(t, ops::concat_channels(v[0], v[1]), 14);
              },
              {{2, 4, 4}, {3, 4, 4}}, {0, 1});
    ok &= run("flow_tv", [](Tape&, const std::vector<Var>& v) { return ops::flow_total_variation(v[0]); },
              {{5, 5, 2}}, {0});

    // Full chain: cross-entropy of a small CNN behind a defense with live heads.
    for (const bool points : {false, true}) {
        Rng mrng(points ? 21 : 22);
        const Shape in_shape = points ? Shape{2} : Shape{1, 8, 8};
        DefenseModel d = build_defense(in_shape, DefenseOptions{}, 5);
        testing::perturb_defense(d, mrng, 0.1);
        const ClassifierModel h =
            points ? build_mlp_classifier(2, {8}, 2, 6) : build_cnn_classifier(in_shape, {4}, 3, 6);
        auto loss_of = [&](Tape& t, Var x) {
            const int y[1] = {1};
            return ops::softmax_cross_entropy(h.forward(t, d.forward(t, x)), y);
        };
        const std::string name = points ? "defense_chain_points" : "defense_chain_image";
        FdStats s;
        for (int inst = 0; inst < 10; ++inst) {
            const Tensor x = random_tensor(in_shape, mrng, 0.0, 1.0);
            testing::merge(s, testing::fd_check([&](Tape& t, const std::vector<Var>& v) { return loss_of(t, v[0]); },
                                                {x}, {0}, 6, mrng));
            // Parameter gradients through forward_trainable.
            for (Tensor* p : d.trainable()) p->zero_grad();
            {
                Tape t;
                const int y[1] = {1};
                t.backward(ops::softmax_cross_entropy(h.forward(t, d.forward_trainable(t, t.constant(x))), y));
            }
            std::vector<Tensor*> ps = d.trainable();
            for (int k = 0; k < 4; ++k) {
                Tensor& p = *ps[mrng.index(ps.size())];
                const std::size_t j = mrng.index(p.numel());
                const double analytic = p.grad()[j];
                const double x0 = p[j];
                auto at = [&](double v) {
                    p[j] = v;
                    Tape t;
                    const double r = loss_of(t, t.constant(x)).value().item();
                    p[j] = x0;
                    return r;
                };
                const double hh = 1e-5;
                const double n1 = (at(x0 + hh) - at(x0 - hh)) / (2 * hh);
                const double n2 = (at(x0 + hh / 2) - at(x0 - hh / 2)) / hh;
                if (std::abs(n1 - n2) > 1e-6 * std::max(1.0, std::abs(n1))) {
                    ++s.skipped;
                    continue;
                }
                ++s.checked;
                s.worst = std::max(s.worst, testing::fd_rel_err(analytic, n1));
            }
            for (Tensor* p : d.trainable()) p->drop_grad();
        }
        testing::merge(total, s);
        char buf[96];
        std::snprintf(buf, sizeof buf, " %s=%zu/%.1e", name.c_str(), s.checked, s.worst);
        per_op += buf;
        ok &= s.checked >= 100 && s.worst < 1e-4;
    }
    const double secs = since(t0);
    ok &= secs < 120.0;
    verdict(1, "gradient correctness", ok,
            fmt("checked=%.0f skipped(kinks)=%.0f worst rel err=%.2e time=%.1fs;", static_cast<double>(total.checked),
                static_cast<double>(total.skipped), total.worst, secs) +
                per_op);
}

// ---------------------------------------------------------------- 2

void identity_invariant() {
    Rng rng(31);
    std::size_t exact = 0, total = 0;
    for (const bool use_unet : {true, false}) {
        DefenseOptions o;
        o.use_unet = use_unet;
        const DefenseModel img = build_defense({1, 28, 28}, o, 100 + use_unet);
        const DefenseModel pts = build_defense({2}, o, 200 + use_unet);
        for (int i = 0; i < 100; ++i) {
            const Tensor x = random_tensor({1, 28, 28}, rng, 0.0, 1.0);
            exact += img.apply(x) == x ? 1 : 0;
            const Tensor p = random_tensor({2}, rng, 0.0, 1.0);
            exact += pts.apply(p) == p ? 1 : 0;
            total += 2;
        }
    }
    verdict(2, "identity-defense invariant", exact == total,
            fmt("%.0f/%.0f bit-exact (image and point domains, with and without U-Net)", static_cast<double>(exact),
                static_cast<double>(total)));
}

// ---------------------------------------------------------------- shared image setup

struct ImageSetup {
    Dataset train, test;
    ClassifierModel h;
    AttackSet test_pgd;
    double clean_acc = 0.0;
    double setup_secs = 0.0;
};

ImageSetup make_image_setup() {
    const auto t0 = Clock::now();
    ImageSetup s;
    s.train = gen_shapes_dataset(2000, 28, 1001, Split::Train);
    s.test = gen_shapes_dataset(1000, 28, 1002, Split::Test);
    s.h = build_cnn_classifier({1, 28, 28}, {8, 16}, 3, 1003);
    ClassifierTrainConfig cc;
    cc.epochs = 8;
    cc.batch_size = 16;
    cc.learning_rate = 5e-3;
    cc.seed = 1004;
    train_classifier(s.h, s.train, cc);
    s.clean_acc = evaluate_accuracy(s.h, nullptr, s.test);
    s.test_pgd = generate_attack_set(s.h, s.test, {AttackSpec::pgd(kEps, 10, true, 1005)}, "A");
    s.setup_secs = since(t0);
    std::printf("  setup: shapes CNN clean test accuracy %.4f, PGD-10 accuracy %.4f (%.1fs)\n", s.clean_acc,
                evaluate_defense(s.h, nullptr, s.test_pgd).at("PGD-10"), s.setup_secs);
    return s;
}

// ---------------------------------------------------------------- 3

void attack_budgets(const ImageSetup& s) {
    std::size_t records = 0, violations = 0;
    double worst_excess = -1.0;
    const std::vector<AttackSpec> specs = {AttackSpec::fgsm(kEps), AttackSpec::ifgsm(kEps, 5),
                                           AttackSpec::pgd(kEps, 10, true, 77), AttackSpec::pgd(0.1, 7, true, 78)};
    const Dataset subset = s.test.head(250);
    const AttackSet set = generate_attack_set(s.h, subset, specs, "A");
    for (const auto& r : set.records) {
        ++records;
        double linf = 0.0;
        bool in_range = true;
        for (std::size_t i = 0; i < r.x.numel(); ++i) {
            linf = std::max(linf, std::abs(r.x_adv[i] - r.x[i]));
            in_range = in_range && r.x_adv[i] >= 0.0 && r.x_adv[i] <= 1.0;
        }
        worst_excess = std::max(worst_excess, linf - r.spec.epsilon);
        if (linf > r.spec.epsilon + 1e-9 || !in_range) ++violations;
    }

    // DeepFool against affine binary classifiers versus the closed-form
    // minimal l2 perturbation -f(x) w / |w|^2.
    Rng rng(41);
    double worst_rel = 0.0;
    std::size_t one_step = 0;
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t dim = 2 + rng.index(30);
        Tensor W({2, dim}), b({2});
        for (auto& v : W.data()) v = rng.uniform(-1.0, 1.0);
        std::vector<double> w(dim);
        double w2 = 0.0;
        for (std::size_t i = 0; i < dim; ++i) {
            w[i] = W[i] - W[dim + i];  // class-0 minus class-1 direction
            w2 += w[i] * w[i];
        }
        Tensor x({dim});
        for (auto& v : x.data()) v = rng.uniform(0.3, 0.7);
        double wx = 0.0;
        for (std::size_t i = 0; i < dim; ++i) wx += w[i] * x[i];
        const double margin = rng.uniform(0.01, 0.05) * std::sqrt(w2);
        b[0] = rng.uniform(-0.5, 0.5);
        b[1] = b[0] + wx - margin;  // f(x) = z0 - z1 = margin > 0, so x is class 0
        const ClassifierModel h = build_linear_classifier(W, b);
        const AdvRecord r = deepfool(h, x, 0, 50, 0.02);
        double diff2 = 0.0, ref2 = 0.0;
        for (std::size_t i = 0; i < dim; ++i) {
            const double closed = -(margin / w2) * w[i] * 1.02;
            diff2 += (r.x_adv[i] - x[i] - closed) * (r.x_adv[i] - x[i] - closed);
            ref2 += closed * closed;
        }
        worst_rel = std::max(worst_rel, std::sqrt(diff2 / ref2));
        one_step += r.iterations == 1 ? 1 : 0;
    }
    const bool ok = records >= 1000 && violations == 0 && worst_rel < 1e-6;
    verdict(3, "attack-budget invariants", ok,
            fmt("%.0f l-inf records, %.0f violations, max(|x_adv-x|-eps)=%.2e; DeepFool worst rel err=%.2e over 50 "
                "affine classifiers (%.0f single-step)",
                static_cast<double>(records), static_cast<double>(violations), worst_excess, worst_rel,
                static_cast<double>(one_step)));
}

// ---------------------------------------------------------------- 4 and 11 (toy)

struct ToySetup {
    Dataset train, test;
    ClassifierModel h;
    AttackSet train_adv, test_adv;
    double secs = 0.0;
};

ToySetup make_toy() {
    const auto t0 = Clock::now();
    ToySetup s;
    s.train = gen_toy_dataset(500, 2001);
    s.test = gen_toy_dataset(500, 2002);
    s.test.split = Split::Test;
    s.h = build_mlp_classifier(2, {32, 32}, 2, 2003);
    ClassifierTrainConfig cc;
    cc.epochs = 50;
    cc.learning_rate = 3e-3;
    cc.seed = 2004;
    train_classifier(s.h, s.train, cc);
    // The attacked class is the inner blob, as in the toy figure.
    s.train_adv = generate_attack_set(s.h, s.train.with_label(0), {AttackSpec::fgsm(0.3)}, "toy");
    s.test_adv = generate_attack_set(s.h, s.test.with_label(0), {AttackSpec::fgsm(0.3)}, "toy");
    s.secs = since(t0);
    return s;
}

TrainConfig toy_train_config(double lambda) {
    TrainConfig tc;
    tc.epochs = 100;
    tc.batch_size = 32;
    tc.learning_rate = 1e-3;
    tc.lambda = lambda;
    tc.include_clean = true;
    tc.seed = 2005;
    return tc;
}

void toy_experiment(const ToySetup& s) {
    const auto t0 = Clock::now();
    const double clean = evaluate_accuracy(s.h, nullptr, s.test);
    const double adv = evaluate_defense(s.h, nullptr, s.test_adv).at("FGSM");
    const TrainResult r = train_defense(s.h, s.train_adv, toy_train_config(0.0), DefenseOptions{}, 2006, &s.train);
    const double def_adv = evaluate_defense(s.h, &r.model, s.test_adv).at("FGSM");
    const double def_adv_train = evaluate_defense(s.h, &r.model, s.train_adv).at("FGSM");
    const double def_clean = evaluate_accuracy(s.h, &r.model, s.test);
    const double secs = s.secs + since(t0);
    const bool ok = clean >= 0.99 && adv < 0.10 && def_adv >= 0.90 && def_adv_train >= 0.90 && def_clean >= 0.95 &&
                    secs < 300.0;
    verdict(4, "toy experiment", ok,
            fmt("clean=%.4f FGSM(0.3)=%.4f defended adv test=%.4f defended clean=%.4f time=%.1fs", clean, adv, def_adv,
                def_clean, secs) +
                fmt(" (defended adv train=%.4f)", def_adv_train));
}

// ---------------------------------------------------------------- 5, 6

void existence(const ImageSetup& s) {
    const auto t0 = Clock::now();
    std::vector<AdvRecord> records;
    for (std::size_t i = 0; i < 300; ++i) records.push_back(s.test_pgd.records[i]);
    const auto curve = random_affine_search_curve(s.h, records, {1, 10, 100, 1000}, AffineRanges{}, 3001);
    bool monotone = true;
    for (std::size_t i = 1; i < curve.size(); ++i) {
        monotone = monotone && curve[i].recovered_fraction_adv >= curve[i - 1].recovered_fraction_adv;
    }
    std::vector<const Tensor*> xs;
    std::vector<int> ys;
    for (const auto& r : records) {
        xs.push_back(&r.x);
        ys.push_back(r.y);
    }
    const double untransformed = batch_accuracy(s.h, nullptr, xs, ys);
    const double gain = curve[3].recovered_fraction_adv - curve[0].recovered_fraction_adv;
    const double damage = untransformed - curve[0].accuracy_clean_after;
    const double secs = s.setup_secs + since(t0);
    const bool ok = monotone && gain >= 0.30 && damage >= 0.10 && secs < 900.0;
    verdict(5, "existence experiment", ok,
            fmt("recovered@{1,10,100,1000}=%.3f/%.3f/%.3f/%.3f", curve[0].recovered_fraction_adv,
                curve[1].recovered_fraction_adv, curve[2].recovered_fraction_adv, curve[3].recovered_fraction_adv) +
                fmt(" gain=%.3f; clean untransformed=%.3f budget-1=%.3f drop=%.3f; time=%.1fs", gain, untransformed,
                    curve[0].accuracy_clean_after, damage, secs));
}

void magnitude_sweeps(const ImageSetup& s) {
    std::size_t fooled = 0, restored = 0, restored_rot30 = 0;
    for (const auto& r : s.test_pgd.records) {
        if (!r.fooled) continue;
        if (++fooled > 300) break;
        bool any = false, rot30 = false;
        for (SweepAxis axis : {SweepAxis::Rotation, SweepAxis::Translation, SweepAxis::Scale}) {
            for (const auto& p : magnitude_sweep(s.h, r.x_adv, r.y, axis, default_sweep_grid(axis))) {
                any = any || p.correct;
                rot30 = rot30 || (axis == SweepAxis::Rotation && p.correct && std::abs(p.magnitude) <= 30.0);
            }
        }
        restored += any ? 1 : 0;
        restored_rot30 += rot30 ? 1 : 0;
    }
    fooled = std::min<std::size_t>(fooled, 300);
    const double frac = static_cast<double>(restored) / static_cast<double>(std::max<std::size_t>(fooled, 1));
    verdict(6, "magnitude sweeps", fooled > 0 && frac >= 0.5,
            fmt("%.0f of %.0f fooled PGD-10 samples restored by some grid magnitude (%.3f); rotation within 30 deg "
                "alone: %.3f",
                static_cast<double>(restored), static_cast<double>(fooled), frac,
                static_cast<double>(restored_rot30) / static_cast<double>(std::max<std::size_t>(fooled, 1))));
}

// ---------------------------------------------------------------- 7

void bound_checks(const ImageSetup& s) {
    Rng rng(51);
    std::size_t holds = 0;
    double worst = 0.0;
    for (int t = 0; t < 100; ++t) {
        const Tensor& x = s.test.samples[rng.index(s.test.size())];
        Tensor x_adv = x;
        for (auto& v : x_adv.data()) v = std::clamp(v + rng.uniform(-kEps, kEps), 0.0, 1.0);
        const AffineParams f = random_affine(rng, AffineRanges{});
        const Tensor kernel = random_tensor({4, 1, 3, 3}, rng, -0.5, 0.5);
        const BoundReport r = theorem1_bound_check(kernel, x, x_adv, f, 2);
        holds += r.holds ? 1 : 0;
        worst = std::max(worst, r.lhs / r.rhs);
    }
    const Tensor& x = s.test.samples.front();
    const BoundReport same =
        theorem1_bound_check(random_tensor({4, 1, 3, 3}, rng), x, x, AffineParams::identity(), 2);
    Tensor x_adv = x;
    for (auto& v : x_adv.data()) v = std::clamp(v + rng.uniform(-kEps, kEps), 0.0, 1.0);
    const BoundReport zero =
        theorem1_bound_check(Tensor({4, 1, 3, 3}), x, x_adv, random_affine(rng, AffineRanges{}), 2);
    const bool ok = holds == 100 && same.lhs == 0.0 && same.holds && zero.lhs == 0.0 && zero.holds;
    verdict(7, "single-layer bound", ok,
            fmt("%.0f/100 hold (max lhs/rhs=%.3e); identity case lhs=%g; zero-kernel case lhs=%g rhs=%g",
                static_cast<double>(holds), worst, same.lhs, zero.lhs, zero.rhs));
}

// ---------------------------------------------------------------- 8, 9, 10

struct DefenseSetup {
    DefenseModel d;
    AttackSet train_adv;
    TrainConfig tc;
    double def_clean = 0.0, def_pgd = 0.0;
    double secs = 0.0;
};

DefenseSetup defense_efficacy(const ImageSetup& s) {
    const auto t0 = Clock::now();
    const AttackSet train_adv = generate_attack_set(
        s.h, s.train, {AttackSpec::fgsm(kEps), AttackSpec::pgd(kEps, 10, true, 4001)}, "A");
    TrainConfig tc;
    tc.epochs = 5;
    tc.batch_size = 32;
    tc.learning_rate = 1e-3;
    tc.seed = 4002;
    const std::uint64_t before = s.h.params.fingerprint();
    TrainResult r = train_defense(s.h, train_adv, tc, DefenseOptions{}, 4003);
    const bool frozen = s.h.params.fingerprint() == before;
    const double nat_pgd = evaluate_defense(s.h, nullptr, s.test_pgd).at("PGD-10");
    const double def_pgd = evaluate_defense(s.h, &r.model, s.test_pgd).at("PGD-10");
    const double def_clean = evaluate_accuracy(s.h, &r.model, s.test);
    const double secs = s.setup_secs + since(t0);
    const bool ok = nat_pgd < 0.20 && def_pgd >= 0.70 && s.clean_acc - def_clean <= 0.08 && frozen && secs < 2700.0;
    verdict(8, "desk-scale defense efficacy", ok,
            fmt("undefended PGD-10=%.4f defended PGD-10=%.4f clean undefended=%.4f defended=%.4f time=%.1fs", nat_pgd,
                def_pgd, s.clean_acc, def_clean, secs) +
                (frozen ? " (classifier unchanged)" : " (classifier CHANGED)"));
    return {std::move(r.model), train_adv, tc, def_clean, def_pgd, secs};
}

void transfer(const ImageSetup& s, const DefenseModel& d) {
    ClassifierModel hb = build_cnn_classifier({1, 28, 28}, {6, 12}, 3, 5001);
    ClassifierTrainConfig cc;
    cc.epochs = 8;
    cc.batch_size = 16;
    cc.learning_rate = 5e-3;
    cc.seed = 5002;
    train_classifier(hb, s.train, cc);
    const AttackSet b_pgd = generate_attack_set(hb, s.test, {AttackSpec::pgd(kEps, 10, true, 5003)}, "B");
    const double nat = evaluate_defense(hb, nullptr, b_pgd).at("PGD-10");
    const double def = evaluate_defense(hb, &d, b_pgd).at("PGD-10");
    verdict(9, "generalization transfer", def - nat >= 0.30,
            fmt("classifier B clean=%.4f; B's PGD-10 records: undefended=%.4f behind A's defense=%.4f gain=%.4f",
                evaluate_accuracy(hb, nullptr, s.test), nat, def, def - nat));
}

void whitebox(const ImageSetup& s, const DefenseModel& d) {
    const auto t0 = Clock::now();
    const Dataset subset = s.test.head(200);
    const AttackSet set =
        generate_attack_set(s.h, subset, {AttackSpec::composed_pgd(kEps, 100, true, 6001)}, "A", &d);
    const double def = evaluate_defense(s.h, &d, set).at("COMPOSED-PGD-100");
    const double clean = evaluate_defense(s.h, &d, set).at("clean");
    verdict(10, "white-box collapse", def < 0.10,
            fmt("composed PGD-100 through the defense: defended accuracy=%.4f (defended clean on the same 200=%.4f, "
                "%.1fs)",
                def, clean, since(t0)));
}

// ---------------------------------------------------------------- 11

// Same training set and schedule as the efficacy run; only the weight penalty varies.
void lambda_ablation(const ImageSetup& s, const DefenseSetup& base) {
    const auto t0 = Clock::now();
    const std::vector<double> lambdas = {1.0, 0.1, 0.01, 0.001, 0.0};
    std::vector<double> acc;
    std::string detail;
    for (double lambda : lambdas) {
        double clean = base.def_clean, adv = base.def_pgd;
        if (lambda != 0.0) {
            TrainConfig tc = base.tc;
            tc.lambda = lambda;
            const TrainResult r = train_defense(s.h, base.train_adv, tc, DefenseOptions{}, 4003);
            clean = evaluate_accuracy(s.h, &r.model, s.test);
            adv = evaluate_defense(s.h, &r.model, s.test_pgd).at("PGD-10");
        }
        const double a = 0.5 * (clean + adv);
        acc.push_back(a);
        detail += fmt(" lambda=%g:%.4f (clean %.4f, PGD-10 %.4f)", lambda, a, clean, adv);
    }
    const double best = *std::max_element(acc.begin(), acc.end());
    const bool ok = acc.back() >= best - 0.005;
    verdict(11, "lambda ablation", ok, "defended (clean+PGD-10)/2 accuracy:" + detail + fmt(" (%.1fs)", since(t0)));
}

// ---------------------------------------------------------------- 12

void determinism() {
    namespace fs = std::filesystem;
    const fs::path root = fs::temp_directory_path() / "dtlab_acceptance_determinism";
    fs::remove_all(root);
    std::size_t files = 0, mismatched = 0;
    std::string bad;
    for (ExperimentKind kind : all_experiment_kinds()) {
        for (const bool toy : {false, true}) {
            if (toy && (kind == ExperimentKind::AffineSearch || kind == ExperimentKind::MagnitudeSweep ||
                        kind == ExperimentKind::WhiteboxEval || kind == ExperimentKind::BoundCheck)) {
                continue;
            }
            std::vector<std::string> sets = {
                "experiment=\"" + to_string(kind) + "\"", "seed=17",
                "dataset.n_train=48", "dataset.n_test=24", "dataset.size=16", "dataset.n_per_class=40",
                "classifier.epochs=2", "classifier_b.epochs=1", "train.epochs=2", "train.batch_size=16",
                "search.budgets=[1,4,16]", "search.max_samples=8", "sweep.max_samples=4",
                "bound.trials=10", "eps_sweep.epsilons=[0.01,0.03]", "eps_sweep.steps=3",
                "lambda_sweep.lambdas=[0.1,0]", "whitebox.steps=3", "whitebox.max_samples=6"};
            if (toy) {
                for (const char* o : {"dataset.kind=\"toy2d\"", "classifier.arch=\"mlp\"", "classifier_b.arch=\"mlp\"",
                                      "attacks=[{\"kind\":\"fgsm\",\"epsilon\":0.3}]",
                                      "eval_attacks=[{\"kind\":\"fgsm\",\"epsilon\":0.3}]", "dataset.attack_label=0",
                                      "train.include_clean=true"}) {
                    sets.push_back(o);
                }
            }
            std::vector<fs::path> dirs;
            for (int rep = 0; rep < 2; ++rep) {
                const fs::path dir = root / (to_string(kind) + (toy ? "_toy_" : "_img_") + std::to_string(rep));
                std::vector<std::string> all = sets;
                all.push_back("output.dir=\"" + dir.string() + "\"");
                run_experiment(config_from_text("{\"schema_version\":1}", all));
                dirs.push_back(dir);
            }
            for (const auto& entry : fs::directory_iterator(dirs[0])) {
                const std::string name = entry.path().filename().string();
                if (name == "timing.json") continue;
                ++files;
                if (!fs::exists(dirs[1] / name) || read_file(entry.path()) != read_file(dirs[1] / name)) {
                    ++mismatched;
                    bad += " " + to_string(kind) + "/" + name;
                }
            }
        }
    }
    fs::remove_all(root);
    verdict(12, "determinism", files > 0 && mismatched == 0,
            fmt("%.0f report/CSV/checkpoint files compared across reruns of every experiment kind, %.0f differ",
                static_cast<double>(files), static_cast<double>(mismatched)) +
                bad);
}

template <typename F>
void guard(int n, const std::string& name, F&& f) {
    try {
        f();
    } catch (const std::exception& e) {
        verdict(n, name, false, std::string("threw: ") + e.what());
    }
}

}  // namespace

int main() {
    const auto t0 = Clock::now();
    guard(1, "gradient correctness", gradient_correctness);
    guard(2, "identity-defense invariant", identity_invariant);

    std::optional<ToySetup> toy;
    guard(4, "toy experiment", [&] {
        toy = make_toy();
        toy_experiment(*toy);
    });

    std::optional<ImageSetup> img;
    try {
        img = make_image_setup();
    } catch (const std::exception& e) {
        for (int n : {3, 5, 6, 7, 8, 9, 10, 11}) verdict(n, "image setup", false, std::string("threw: ") + e.what());
    }
    if (img) {
        guard(3, "attack-budget invariants", [&] { attack_budgets(*img); });
        guard(5, "existence experiment", [&] { existence(*img); });
        guard(6, "magnitude sweeps", [&] { magnitude_sweeps(*img); });
        guard(7, "single-layer bound", [&] { bound_checks(*img); });
        std::optional<DefenseSetup> def;
        guard(8, "desk-scale defense efficacy", [&] { def = defense_efficacy(*img); });
        if (def) {
            guard(9, "generalization transfer", [&] { transfer(*img, def->d); });
            guard(10, "white-box collapse", [&] { whitebox(*img, def->d); });
            guard(11, "lambda ablation", [&] { lambda_ablation(*img, *def); });
        } else {
            verdict(9, "generalization transfer", false, "no trained defense");
            verdict(10, "white-box collapse", false, "no trained defense");
            verdict(11, "lambda ablation", false, "no trained defense");
        }
    }
    guard(12, "determinism", determinism);
    std::printf("acceptance: %d failure(s), %.1fs total\n", g_failures, since(t0));
    return g_failures == 0 ? 0 : 1;
}
