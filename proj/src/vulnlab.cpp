#include "dtlab/vulnlab.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "dtlab/errors.hpp"
#include "dtlab/rng.hpp"

namespace dtlab {

namespace {

constexpr int kSearchChunk = 32;

// 1-based index of the first transform that restores the label, or 0.
int first_success(const ClassifierModel& h, const Tensor& x, int y, int budget, const AffineRanges& ranges,
                  std::uint64_t stream_seed) {
    Rng rng(stream_seed);
    for (int done = 0; done < budget;) {
        const int n = std::min(kSearchChunk, budget - done);
        std::vector<Tensor> warped;
        warped.reserve(static_cast<std::size_t>(n));
        for (int k = 0; k < n; ++k) warped.push_back(warp_image(x, random_affine(rng, ranges)));
        const std::vector<int> pred = h.predict_batch(stack(warped));
        for (int k = 0; k < n; ++k) {
            if (pred[static_cast<std::size_t>(k)] == y) return done + k + 1;
        }
        done += n;
    }
    return 0;
}

}  // namespace

std::vector<SearchResult> random_affine_search_curve(const ClassifierModel& h, const std::vector<AdvRecord>& records,
                                                     const std::vector<int>& budgets, const AffineRanges& ranges,
                                                     std::uint64_t seed) {
    if (budgets.empty()) throw ContractError("random_affine_search: no budgets given");
    for (int b : budgets) {
        if (b < 1) throw DomainError("random_affine_search: budget must be >= 1, got " + std::to_string(b));
    }
    ranges.validate();
    const int max_budget = *std::max_element(budgets.begin(), budgets.end());
    std::vector<int> adv_hit(records.size()), clean_hit(records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
        const std::uint64_t s = mix_seed(seed, i);
        adv_hit[i] = first_success(h, records[i].x_adv, records[i].y, max_budget, ranges, s);
        clean_hit[i] = first_success(h, records[i].x, records[i].y, max_budget, ranges, s);
    }
    const double n = static_cast<double>(std::max<std::size_t>(records.size(), 1));
    std::vector<SearchResult> out;
    for (int b : budgets) {
        SearchResult r;
        r.budget = b;
        std::size_t adv_ok = 0, clean_ok = 0;
        for (std::size_t i = 0; i < records.size(); ++i) {
            const bool a = adv_hit[i] != 0 && adv_hit[i] <= b;
            adv_ok += a ? 1 : 0;
            clean_ok += (clean_hit[i] != 0 && clean_hit[i] <= b) ? 1 : 0;
            r.per_sample_attempts.push_back(a ? adv_hit[i] : b);
        }
        r.recovered_fraction_adv = static_cast<double>(adv_ok) / n;
        r.accuracy_clean_after = static_cast<double>(clean_ok) / n;
        out.push_back(std::move(r));
    }
    return out;
}

SearchResult random_affine_search(const ClassifierModel& h, const std::vector<AdvRecord>& records, int budget,
                                  const AffineRanges& ranges, std::uint64_t seed) {
    return random_affine_search_curve(h, records, {budget}, ranges, seed).front();
}

std::string to_string(SweepAxis axis) {
    switch (axis) {
        case SweepAxis::Rotation: return "rotation";
        case SweepAxis::Translation: return "translation";
        case SweepAxis::Scale: return "scale";
    }
    return "?";
}

SweepAxis sweep_axis_from_string(const std::string& name) {
    if (name == "rotation") return SweepAxis::Rotation;
    if (name == "translation") return SweepAxis::Translation;
    if (name == "scale") return SweepAxis::Scale;
    throw DomainError("unknown sweep axis '" + name + "' (expected rotation, translation or scale)");
}

AffineParams sweep_transform(SweepAxis axis, double magnitude) {
    switch (axis) {
        case SweepAxis::Rotation: return affine_from_rst(magnitude * std::numbers::pi / 180.0, 1.0, 0.0, 0.0);
        case SweepAxis::Translation: return affine_from_rst(0.0, 1.0, magnitude, 0.0);
        case SweepAxis::Scale: return affine_from_rst(0.0, magnitude, 0.0, 0.0);
    }
    return AffineParams::identity();
}

std::vector<double> linear_grid(double lo, double hi, std::size_t n) {
    if (n == 0) throw DomainError("linear_grid: need at least one point");
    if (n == 1) return {lo};
    std::vector<double> g(n);
    for (std::size_t i = 0; i < n; ++i) {
        g[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
    }
    // Symmetric grids should hit the untransformed magnitude exactly.
    if (n % 2 == 1 && lo == -hi) g[n / 2] = 0.0;
    return g;
}

std::vector<double> default_sweep_grid(SweepAxis axis) {
    switch (axis) {
        case SweepAxis::Rotation: return linear_grid(-90.0, 90.0, 61);
        case SweepAxis::Translation: return linear_grid(-0.5, 0.5, 41);
        case SweepAxis::Scale: return linear_grid(0.5, 1.5, 41);
    }
    return {};
}

std::vector<SweepPoint> magnitude_sweep(const ClassifierModel& h, const Tensor& x, int y, SweepAxis axis,
                                        const std::vector<double>& grid) {
    if (grid.empty()) throw ContractError("magnitude_sweep: grid is empty");
    std::vector<SweepPoint> out;
    out.reserve(grid.size());
    for (double m : grid) {
        const int p = h.predict(warp_image(x, sweep_transform(axis, m)));
        out.push_back({m, p, p == y});
    }
    return out;
}

double kernel_l1_mass(const Tensor& kernel) {
    double s = 0.0;
    for (double v : kernel.data()) s += std::abs(v);
    return s;
}

BoundReport theorem1_bound_check(const Tensor& kernel, const Tensor& x, const Tensor& x_adv, const AffineParams& f,
                                 int pool_window, const KernelConstant& constant) {
    if (x.shape() != x_adv.shape()) {
        throw DimensionError("bound check: clean input " + shape_string(x.shape()) + " vs adversarial input " +
                             shape_string(x_adv.shape()));
    }
    if (x.ndim() != 3) throw DimensionError("bound check: expected C x H x W input, got " + shape_string(x.shape()));
    const Tensor warped = single_layer_forward(kernel, warp_image(x_adv, f), pool_window);
    const Tensor clean = single_layer_forward(kernel, x, pool_window);
    BoundReport r;
    for (std::size_t i = 0; i < warped.numel(); ++i) r.lhs += std::abs(warped[i] - clean[i]);
    r.L_est = constant(kernel);
    r.S = x.dim(1) * x.dim(2);
    r.x_inf = max_abs(x.data());
    r.z_inf = max_abs_diff(x_adv.data(), x.data());
    r.rhs = r.L_est * static_cast<double>(r.S) * r.x_inf + r.z_inf;
    r.holds = r.lhs <= r.rhs;
    return r;
}

}  // namespace dtlab
