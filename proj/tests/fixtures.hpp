#pragma once

#include "dtlab/defense.hpp"

namespace dtlab::testing {

// Trained once per test binary and shared.
struct ToyFixture {
    Dataset train, test;
    ClassifierModel h;
};

inline const ToyFixture& toy_fixture() {
    static const ToyFixture f = [] {
        ToyFixture t;
        t.train = gen_toy_dataset(500, 101);
        t.test = gen_toy_dataset(250, 102);
        t.test.split = Split::Test;
        t.h = build_mlp_classifier(2, {32, 32}, 2, 103);
        ClassifierTrainConfig cc;
        cc.epochs = 50;
        cc.learning_rate = 3e-3;
        cc.seed = 104;
        train_classifier(t.h, t.train, cc);
        return t;
    }();
    return f;
}

struct ShapesFixture {
    Dataset train, test;
    ClassifierModel h;
};

inline const ShapesFixture& shapes_fixture() {
    static const ShapesFixture f = [] {
        ShapesFixture s;
        s.train = gen_shapes_dataset(4000, 28, 201, Split::Train);
        s.test = gen_shapes_dataset(300, 28, 202, Split::Test);
        s.h = build_cnn_classifier({1, 28, 28}, {16, 32}, 3, 203);
        ClassifierTrainConfig cc;
        cc.epochs = 4;
        cc.batch_size = 16;
        cc.learning_rate = 5e-3;
        cc.seed = 204;
        train_classifier(s.h, s.train, cc);
        return s;
    }();
    return f;
}

}  // namespace dtlab::testing
