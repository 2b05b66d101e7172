#include <doctest.h>

#include "dtlab/defense.hpp"
#include "dtlab/errors.hpp"
#include "dtlab/vulnlab.hpp"
#include "support.hpp"

using namespace dtlab;
using dtlab::testing::random_tensor;

TEST_CASE("mlp classifier") {
    const ClassifierModel a = build_mlp_classifier(2, {32, 32}, 2, 1);
    CHECK(a.params.num_values() == 1218);
    const ClassifierModel b = build_mlp_classifier(2, {32, 32}, 2, 1);
    CHECK(a.params.fingerprint() == b.params.fingerprint());
    CHECK_THROWS(build_mlp_classifier(2, {}, 2, 1));

    // Untrained: chance level on balanced two-class data, averaged over initializations.
    const Dataset toy = gen_toy_dataset(200, 3);
    double mean = 0.0;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        mean += evaluate_accuracy(build_mlp_classifier(2, {32, 32}, 2, seed), nullptr, toy) / 20.0;
    }
    CHECK(mean >= 0.4);
    CHECK(mean <= 0.6);
}

TEST_CASE("cnn classifier") {
    const ClassifierModel h = build_cnn_classifier({1, 8, 8}, {4}, 5, 1);
    Rng rng(2);
    const Tensor x = random_tensor({1, 8, 8}, rng, 0.0, 1.0);
    CHECK(h.logits(x).shape() == Shape{5});
    CHECK(h.logits(x) == h.logits(x));
    CHECK(build_cnn_classifier({1, 8, 8}, {4}, 5, 1).params.fingerprint() == h.params.fingerprint());
    CHECK_THROWS(build_cnn_classifier({1, 8, 8}, {}, 5, 1));

    // Batched logits match per-sample logits.
    std::vector<Tensor> xs;
    for (int i = 0; i < 6; ++i) xs.push_back(random_tensor({1, 8, 8}, rng, 0.0, 1.0));
    const Tensor batch = h.logits(stack(xs));
    for (std::size_t i = 0; i < xs.size(); ++i) {
        CHECK(max_abs_diff(unstack_one(batch, i).data(), h.logits(xs[i]).data()) <= 1e-12);
    }

    // Differently seeded models disagree somewhere.
    const ClassifierModel other = build_cnn_classifier({1, 8, 8}, {4}, 5, 99);
    int disagree = 0;
    for (int i = 0; i < 100; ++i) {
        const Tensor v = random_tensor({1, 8, 8}, rng, 0.0, 1.0);
        disagree += h.predict(v) != other.predict(v) ? 1 : 0;
    }
    CHECK(disagree >= 1);
}

TEST_CASE("trained toy mlp fits its training set") {
    const Dataset toy = gen_toy_dataset(500, 11);
    ClassifierModel h = build_mlp_classifier(2, {32, 32}, 2, 12);
    ClassifierTrainConfig cc;
    cc.epochs = 50;
    cc.learning_rate = 3e-3;
    cc.seed = 13;
    train_classifier(h, toy, cc);
    CHECK(evaluate_accuracy(h, nullptr, toy) >= 0.99);
}

TEST_CASE("unet") {
    const UNetLayout layout{1, 4, 2};
    ParamSet ps = build_unet(layout, 3);
    Rng rng(4);
    const Tensor x = random_tensor({1, 8, 8}, rng, 0.0, 1.0);
    {
        Tape t;
        const Var out = unet_forward(layout, ps.bind(t), t.constant(x));
        CHECK(out.shape() == x.shape());
        CHECK(max_abs(out.value().data()) == 0.0);
    }
    // With a live head every encoder parameter receives gradient.
    for (auto& v : ps.at("unet.head.w").data()) v = rng.uniform(-0.5, 0.5);
    ps.set_trainable(true);
    ps.zero_grad();
    {
        Tape t;
        t.backward(dtlab::testing::weighted_sum(t, unet_forward(layout, ps.bind(t), t.constant(x)), 5));
    }
    for (std::size_t i = 0; i < ps.size(); ++i) {
        if (ps.name(i).rfind("unet.enc", 0) != 0) continue;
        CAPTURE(ps.name(i));
        CHECK(max_abs(ps[i].grad()) > 0.0);
    }
    CHECK_THROWS_AS(
        {
            Tape t;
            unet_forward(layout, ps.bind(t), t.constant(Tensor({1, 6, 6})));
        },
        DimensionError);
}

TEST_CASE("locnet") {
    ParamSet ps = build_locnet({1, 8, 8}, 5);
    Rng rng(6);
    const Tensor x = random_tensor({1, 8, 8}, rng, 0.0, 1.0);
    auto theta = [&](Tape& t) { return locnet_forward(ps.bind(t), t.constant(x)); };
    {
        Tape t;
        const Var th = theta(t);
        CHECK(th.value().numel() == 6);
        CHECK(th.value().vec() == std::vector<double>{1, 0, 0, 0, 1, 0});
    }
    // One gradient step toward a rotated target lowers the squared error.
    const Tensor target = affine_from_rst(0.3, 1, 0, 0).tensor().reshaped({6});
    auto loss = [&](Tape& t) {
        const Var th = ops::reshape(theta(t), {6});
        const Var d = ops::sub(th, t.constant(target));
        return ops::sum(ops::mul(d, d));
    };
    double before = 0.0;
    ps.set_trainable(true);
    ps.zero_grad();
    {
        Tape t;
        const Var l = loss(t);
        before = l.value().item();
        t.backward(l);
    }
    for (Tensor* p : ps.pointers()) {
        for (std::size_t j = 0; j < p->numel(); ++j) (*p)[j] -= 1e-2 * p->grad()[j];
    }
    Tape t;
    CHECK(loss(t).value().item() < before);
}

TEST_CASE("defense forward") {
    Rng rng(7);
    for (const bool use_unet : {true, false}) {
        DefenseOptions o;
        o.use_unet = use_unet;
        const DefenseModel d = build_defense({1, 12, 12}, o, 8);
        for (int i = 0; i < 10; ++i) {
            const Tensor x = random_tensor({1, 12, 12}, rng, 0.0, 1.0);
            CHECK(d.apply(x) == x);
        }
        const DefenseModel p = build_defense({2}, o, 9);
        const Tensor pt = random_tensor({2}, rng, 0.0, 1.0);
        CHECK(p.apply(pt) == pt);
    }

    // Gradient of a downstream loss reaches every unet and locnet tensor.
    DefenseModel d = build_defense({1, 12, 12}, DefenseOptions{}, 10);
    dtlab::testing::perturb_defense(d, rng, 0.2);
    const ClassifierModel h = build_cnn_classifier({1, 12, 12}, {4}, 3, 11);
    for (Tensor* p : d.trainable()) p->zero_grad();
    {
        Tape t;
        const int y[1] = {2};
        const Var x = t.constant(random_tensor({1, 12, 12}, rng, 0.0, 1.0));
        t.backward(ops::softmax_cross_entropy(h.forward(t, d.forward_trainable(t, x)), y));
    }
    for (std::size_t i = 0; i < d.unet.size(); ++i) {
        CAPTURE(d.unet.name(i));
        CHECK(max_abs(d.unet[i].grad()) > 0.0);
    }
    for (std::size_t i = 0; i < d.locnet.size(); ++i) {
        CAPTURE(d.locnet.name(i));
        CHECK(max_abs(d.locnet[i].grad()) > 0.0);
    }
}

TEST_CASE("single layer") {
    Rng rng(12);
    const Tensor k = random_tensor({3, 1, 3, 3}, rng);
    CHECK(max_abs(single_layer_forward(k, Tensor({1, 8, 8}), 2).data()) == 0.0);

    // Nonnegative input, all-ones kernel: pooled local sums.
    const Tensor x = random_tensor({1, 6, 6}, rng, 0.0, 1.0);
    const Tensor out = single_layer_forward(Tensor({1, 1, 3, 3}, 1.0), x, 2);
    CHECK(out.shape() == Shape{1, 2, 2});
    for (std::size_t oi = 0; oi < 2; ++oi) {
        for (std::size_t oj = 0; oj < 2; ++oj) {
            double acc = 0.0;
            for (std::size_t a = 0; a < 2; ++a) {
                for (std::size_t b = 0; b < 2; ++b) {
                    for (std::size_t u = 0; u < 3; ++u) {
                        for (std::size_t v = 0; v < 3; ++v) acc += x[(2 * oi + a + u) * 6 + 2 * oj + b + v];
                    }
                }
            }
            CHECK(out[oi * 2 + oj] == doctest::Approx(acc / 4).epsilon(1e-13));
        }
    }

    Tape t;
    const Tensor composed = ops::avg_pool2d(ops::relu(ops::conv2d(t.constant(x), t.constant(k))), 2).value();
    CHECK(single_layer_forward(k, x, 2) == composed);
}
