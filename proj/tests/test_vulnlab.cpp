#include <doctest.h>

#include "dtlab/errors.hpp"
#include "dtlab/vulnlab.hpp"
#include "fixtures.hpp"
#include "support.hpp"

using namespace dtlab;
using dtlab::testing::random_tensor;
using dtlab::testing::shapes_fixture;

namespace {

const std::vector<AdvRecord>& pgd_records() {
    static const std::vector<AdvRecord> records = [] {
        const auto& s = shapes_fixture();
        return generate_attack_set(s.h, s.test.head(40), {AttackSpec::pgd(8.0 / 255.0, 10, true, 3)}).records;
    }();
    return records;
}

}  // namespace

TEST_CASE("random affine search") {
    const auto& s = shapes_fixture();
    const auto& records = pgd_records();

    AffineRanges none;
    none.max_angle = 0;
    none.scale_lo = none.scale_hi = 1;
    none.max_shift = 0;
    const SearchResult identity = random_affine_search(s.h, records, 1, none, 1);
    std::size_t already = 0, clean_ok = 0;
    for (const auto& r : records) {
        already += s.h.predict(r.x_adv) == r.y ? 1 : 0;
        clean_ok += s.h.predict(r.x) == r.y ? 1 : 0;
    }
    CHECK(identity.recovered_fraction_adv == doctest::Approx(static_cast<double>(already) / records.size()));
    CHECK(identity.accuracy_clean_after == doctest::Approx(static_cast<double>(clean_ok) / records.size()));

    const std::vector<int> budgets = {1, 4, 16, 64};
    const auto curve = random_affine_search_curve(s.h, records, budgets, AffineRanges{}, 9);
    REQUIRE(curve.size() == budgets.size());
    for (std::size_t i = 0; i < curve.size(); ++i) {
        const SearchResult single = random_affine_search(s.h, records, budgets[i], AffineRanges{}, 9);
        CHECK(single.recovered_fraction_adv == curve[i].recovered_fraction_adv);
        CHECK(single.per_sample_attempts == curve[i].per_sample_attempts);
        CHECK(curve[i].budget == budgets[i]);
        CHECK(curve[i].recovered_fraction_adv >= 0.0);
        CHECK(curve[i].recovered_fraction_adv <= 1.0);
        for (int a : curve[i].per_sample_attempts) {
            CHECK(a >= 1);
            CHECK(a <= budgets[i]);
        }
        if (i > 0) CHECK(curve[i].recovered_fraction_adv >= curve[i - 1].recovered_fraction_adv);
    }
    // Attempts for a smaller budget are the larger budget's attempts, capped.
    for (std::size_t j = 0; j < records.size(); ++j) {
        CHECK(curve[1].per_sample_attempts[j] == std::min(curve[3].per_sample_attempts[j], 4));
    }

    CHECK_THROWS_AS(random_affine_search(s.h, records, 0, AffineRanges{}, 1), DomainError);
}

TEST_CASE("magnitude sweep") {
    const auto& s = shapes_fixture();
    for (SweepAxis axis : {SweepAxis::Rotation, SweepAxis::Translation, SweepAxis::Scale}) {
        CAPTURE(to_string(axis));
        CHECK(sweep_transform(axis, axis == SweepAxis::Scale ? 1.0 : 0.0) == AffineParams::identity());
        CHECK(sweep_axis_from_string(to_string(axis)) == axis);
        const auto grid = default_sweep_grid(axis);
        const std::size_t zero = grid.size() / 2;
        CHECK(grid[zero] == (axis == SweepAxis::Scale ? 1.0 : 0.0));

        for (std::size_t i = 0; i < 5; ++i) {
            const Tensor& x = s.test.samples[i];
            const auto points = magnitude_sweep(s.h, x, s.test.labels[i], axis, grid);
            REQUIRE(points.size() == grid.size());
            CHECK(points[zero].predicted == s.h.predict(x));
            if (s.h.predict(x) == s.test.labels[i]) CHECK(points[zero].correct);
        }
    }
    CHECK(default_sweep_grid(SweepAxis::Rotation).size() == 61);
    CHECK(default_sweep_grid(SweepAxis::Translation).size() == 41);
    CHECK(default_sweep_grid(SweepAxis::Scale).front() == 0.5);
    CHECK(default_sweep_grid(SweepAxis::Scale).back() == 1.5);
    CHECK_THROWS(sweep_axis_from_string("shear"));
    CHECK_THROWS(magnitude_sweep(s.h, s.test.samples[0], 0, SweepAxis::Rotation, {}));
}

TEST_CASE("bound check") {
    const auto& s = shapes_fixture();
    Rng rng(5);
    const Tensor& x = s.test.samples[0];
    const Tensor k = random_tensor({4, 1, 3, 3}, rng, -0.5, 0.5);

    const BoundReport same = theorem1_bound_check(k, x, x, AffineParams::identity(), 2);
    CHECK(same.lhs == 0.0);
    CHECK(same.holds);

    Tensor x_adv = x;
    for (auto& v : x_adv.data()) v = std::clamp(v + rng.uniform(-0.03, 0.03), 0.0, 1.0);
    const BoundReport zero = theorem1_bound_check(Tensor({4, 1, 3, 3}), x, x_adv, random_affine(rng, AffineRanges{}), 2);
    CHECK(zero.lhs == 0.0);
    CHECK(zero.rhs == doctest::Approx(max_abs_diff(x_adv.data(), x.data())));
    CHECK(zero.holds);

    const BoundReport r = theorem1_bound_check(k, x, x_adv, random_affine(rng, AffineRanges{}), 2);
    CHECK(r.S == 28 * 28);
    CHECK(r.L_est == doctest::Approx(kernel_l1_mass(k)));
    CHECK(r.x_inf == max_abs(x.data()));
    CHECK(r.rhs == doctest::Approx(r.L_est * r.S * r.x_inf + r.z_inf));
    CHECK(r.holds == (r.lhs <= r.rhs));

    // The constant is pluggable; a zero constant leaves only the perturbation term.
    const BoundReport tight =
        theorem1_bound_check(k, x, x_adv, AffineParams::identity(), 2, [](const Tensor&) { return 0.0; });
    CHECK(tight.rhs == tight.z_inf);
    CHECK(tight.holds == (tight.lhs <= tight.rhs));
}
