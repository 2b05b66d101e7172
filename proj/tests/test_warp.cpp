#include <doctest.h>

#include <cmath>
#include <numbers>

#include "dtlab/errors.hpp"
#include "support.hpp"

using namespace dtlab;
using dtlab::testing::random_tensor;
using dtlab::testing::weighted_sum;

namespace {

constexpr double kPi = std::numbers::pi;

void check_theta(const AffineParams& a, std::array<double, 6> expected) {
    for (std::size_t i = 0; i < 6; ++i) CHECK(a.theta[i] == doctest::Approx(expected[i]).epsilon(1e-15));
}

// Smooth Gaussian blob, symmetric about the image center.
Tensor blob(std::size_t n, double sigma) {
    Tensor img({1, n, n});
    const double c = (static_cast<double>(n) - 1.0) / 2.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            const double di = (static_cast<double>(i) - c) / sigma, dj = (static_cast<double>(j) - c) / sigma;
            img[i * n + j] = std::exp(-0.5 * (di * di + dj * dj));
        }
    }
    return img;
}

}  // namespace

TEST_CASE("affine_from_rst") {
    check_theta(affine_from_rst(0, 1, 0, 0), {1, 0, 0, 0, 1, 0});
    const AffineParams q = affine_from_rst(kPi / 2, 1, 0, 0);
    CHECK(std::abs(q.theta[0]) < 1e-15);
    CHECK(q.theta[1] == -1.0);
    CHECK(q.theta[3] == 1.0);
    CHECK(std::abs(q.theta[4]) < 1e-15);
    check_theta(affine_from_rst(0, 2, 0.5, 0), {2, 0, 0.5, 0, 2, 0});
    CHECK_THROWS_AS(affine_from_rst(0, 0, 0, 0), DomainError);
    CHECK_THROWS_AS(affine_from_rst(0, -1, 0, 0), DomainError);
}

TEST_CASE("affine_grid") {
    const SampleGrid g = affine_grid(AffineParams::identity(), 2, 2);
    CHECK(g.coords.vec() == std::vector<double>{-1, -1, 1, -1, -1, 1, 1, 1});

    const SampleGrid id = identity_grid(5, 7);
    const SampleGrid shifted = affine_grid(affine_from_rst(0, 1, 0.5, 0), 5, 7);
    for (std::size_t p = 0; p < 35; ++p) {
        CHECK(shifted.coords[2 * p] == doctest::Approx(id.coords[2 * p] + 0.5).epsilon(1e-15));
        CHECK(shifted.coords[2 * p + 1] == id.coords[2 * p + 1]);
    }
    CHECK(id.coords[0] == -1.0);
    CHECK(id.coords[69] == 1.0);
    CHECK_THROWS_AS(identity_grid(1, 4), DomainError);
    CHECK_THROWS_AS(affine_grid(AffineParams::identity(), 4, 1), DomainError);

    Rng rng(1);
    dtlab::testing::FdStats s;
    for (int i = 0; i < 5; ++i) {
        dtlab::testing::merge(
            s, dtlab::testing::fd_check(
                   [](Tape& t, const std::vector<Var>& v) { return weighted_sum(t, ops::affine_grid(v[0], 4, 5), 2); },
                   {random_tensor({2, 3}, rng)}, {0}, 20, rng));
    }
    CHECK(s.worst < 1e-6);
}

TEST_CASE("grid_sample") {
    Rng rng(2);
    const Tensor img = random_tensor({2, 6, 5}, rng);
    CHECK(grid_sample(img, identity_grid(6, 5)) == img);

    const Tensor sq = Tensor::from({1, 2, 2}, {0, 1, 2, 3});
    const SampleGrid center{Tensor({1, 1, 2}, 0.0)};
    CHECK(grid_sample(sq, center).item() == 1.5);

    // Convex combination plus zero padding stays within [min(0, min), max(0, max)].
    const Tensor pos = random_tensor({1, 6, 6}, rng, 0.2, 0.9);
    SampleGrid wild{random_tensor({9, 9, 2}, rng, -1.6, 1.6)};
    const Tensor out = grid_sample(pos, wild);
    for (double v : out.data()) {
        CHECK(v >= 0.0);
        CHECK(v <= 0.9);
    }

    dtlab::testing::FdStats s;
    for (int i = 0; i < 5; ++i) {
        dtlab::testing::merge(
            s, dtlab::testing::fd_check(
                   [](Tape& t, const std::vector<Var>& v) { return weighted_sum(t, ops::grid_sample(v[0], v[1]), 3); },
                   {random_tensor({2, 5, 5}, rng), random_tensor({4, 6, 2}, rng, -1.2, 1.2)}, {0, 1}, 20, rng));
    }
    CHECK(s.checked >= 90);
    CHECK(s.worst < 1e-4);
}

TEST_CASE("warp_image") {
    Rng rng(4);
    const Tensor img = random_tensor({1, 9, 9}, rng, 0.0, 1.0);
    CHECK(warp_image(img, AffineParams::identity()) == img);

    const Tensor smooth = blob(28, 5.0);
    const Tensor there = warp_image(smooth, affine_from_rst(0.4, 1, 0, 0));
    const Tensor back = warp_image(there, affine_from_rst(-0.4, 1, 0, 0));
    double mean_abs = 0.0;
    for (std::size_t i = 0; i < smooth.numel(); ++i) mean_abs += std::abs(back[i] - smooth[i]);
    mean_abs /= static_cast<double>(smooth.numel());
    CHECK(mean_abs < 0.05);

    // Half-turn of an image equals the image flipped along both axes.
    const Tensor flipped = warp_image(img, affine_from_rst(kPi, 1, 0, 0));
    double worst = 0.0;
    for (std::size_t i = 0; i < 9; ++i) {
        for (std::size_t j = 0; j < 9; ++j) worst = std::max(worst, std::abs(flipped[i * 9 + j] - img[(8 - i) * 9 + 8 - j]));
    }
    CHECK(worst < 1e-12);
    CHECK(max_abs_diff(warp_image(smooth, affine_from_rst(kPi, 1, 0, 0)).data(), smooth.data()) < 1e-12);
}

TEST_CASE("point_affine") {
    Rng rng(5);
    const Tensor pts = random_tensor({6, 2}, rng);
    CHECK(point_affine(pts, AffineParams::identity()) == pts);
    const Tensor r = point_affine(Tensor::from({1, 2}, {1, 0}), affine_from_rst(kPi / 2, 1, 0, 0));
    CHECK(std::abs(r[0]) < 1e-15);
    CHECK(r[1] == doctest::Approx(1.0).epsilon(1e-15));

    const AffineParams a = random_affine(rng, AffineRanges{});
    const AffineParams b = random_affine(rng, AffineRanges{});
    const Tensor twice = point_affine(point_affine(pts, a), b);
    CHECK(max_abs_diff(twice.data(), point_affine(pts, compose(b, a)).data()) < 1e-12);

    dtlab::testing::FdStats s;
    for (int i = 0; i < 5; ++i) {
        dtlab::testing::merge(
            s, dtlab::testing::fd_check(
                   [](Tape& t, const std::vector<Var>& v) { return weighted_sum(t, ops::point_affine(v[0], v[1]), 6); },
                   {random_tensor({5, 2}, rng), random_tensor({2, 3}, rng)}, {0, 1}, 20, rng));
    }
    CHECK(s.worst < 1e-8);
}

TEST_CASE("random_affine") {
    Rng rng(6);
    AffineRanges none;
    none.max_angle = 0;
    none.scale_lo = none.scale_hi = 1;
    none.max_shift = 0;
    CHECK(random_affine(rng, none) == AffineParams::identity());

    AffineRanges inverted;
    inverted.scale_lo = 1.3;
    inverted.scale_hi = 1.1;
    CHECK_THROWS_AS(random_affine(rng, inverted), DomainError);
    AffineRanges negative;
    negative.max_angle = -0.1;
    CHECK_THROWS_AS(random_affine(rng, negative), DomainError);

    Rng r1(42), r2(42);
    for (int i = 0; i < 20; ++i) CHECK(random_affine(r1, AffineRanges{}) == random_affine(r2, AffineRanges{}));

    // Recover (alpha, s, du, dv) from theta and compare moments with the uniform law.
    const AffineRanges ranges;
    const int n = 10000;
    double sa = 0, ss = 0, su = 0, sv = 0;
    Rng r(7);
    for (int i = 0; i < n; ++i) {
        const AffineParams p = random_affine(r, ranges);
        sa += std::atan2(p.theta[3], p.theta[0]);
        ss += std::hypot(p.theta[0], p.theta[3]);
        su += p.theta[2];
        sv += p.theta[5];
    }
    auto within = [&](double sum, double mean, double half_width) {
        const double sigma = half_width / std::sqrt(3.0) / std::sqrt(static_cast<double>(n));
        return std::abs(sum / n - mean) < 3 * sigma;
    };
    CHECK(within(sa, 0.0, ranges.max_angle));
    CHECK(within(ss, 1.0, 0.2));
    CHECK(within(su, 0.0, ranges.max_shift));
    CHECK(within(sv, 0.0, ranges.max_shift));
}

TEST_CASE("flow total variation") {
    Tape t;
    CHECK(ops::flow_total_variation(t.constant(Tensor({4, 5, 2}, 0.3))).value().item() == 0.0);
    Rng rng(8);
    CHECK(ops::flow_total_variation(t.constant(random_tensor({4, 5, 2}, rng))).value().item() > 0.0);
}
