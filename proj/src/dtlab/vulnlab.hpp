#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "dtlab/attacks.hpp"
#include "dtlab/warp.hpp"
#include "dtlab/zoo.hpp"

namespace dtlab {

struct SearchResult {
    int budget = 1;
    double recovered_fraction_adv = 0.0;
    double accuracy_clean_after = 0.0;
    // Transforms tried per adversarial sample, capped at the budget.
    std::vector<int> per_sample_attempts;
};

// Draws random affine transforms for each record (stream mix_seed(seed, i))
// until the warped adversarial input is classified as its label or the
// budget runs out. Clean inputs go through the same procedure.
SearchResult random_affine_search(const ClassifierModel& h, const std::vector<AdvRecord>& records, int budget,
                                  const AffineRanges& ranges, std::uint64_t seed);

// Same search evaluated at several budgets from one pass over the largest;
// identical to calling random_affine_search per budget.
std::vector<SearchResult> random_affine_search_curve(const ClassifierModel& h, const std::vector<AdvRecord>& records,
                                                     const std::vector<int>& budgets, const AffineRanges& ranges,
                                                     std::uint64_t seed);

enum class SweepAxis { Rotation, Translation, Scale };

std::string to_string(SweepAxis axis);
SweepAxis sweep_axis_from_string(const std::string& name);

// Rotation magnitudes are in degrees, translation is a horizontal shift in
// normalized coordinates, scale is the zoom factor.
AffineParams sweep_transform(SweepAxis axis, double magnitude);
std::vector<double> default_sweep_grid(SweepAxis axis);
// Evenly spaced grid of n points over [lo, hi], endpoints included.
std::vector<double> linear_grid(double lo, double hi, std::size_t n);

struct SweepPoint {
    double magnitude = 0.0;
    int predicted = 0;
    bool correct = false;
};

std::vector<SweepPoint> magnitude_sweep(const ClassifierModel& h, const Tensor& x, int y, SweepAxis axis,
                                        const std::vector<double>& grid);

// Lipschitz-style constant of the single conv layer for a given kernel.
using KernelConstant = std::function<double(const Tensor& kernel)>;
double kernel_l1_mass(const Tensor& kernel);

struct BoundReport {
    double lhs = 0.0;
    double L_est = 0.0;
    std::size_t S = 0;
    double x_inf = 0.0;
    double z_inf = 0.0;
    double rhs = 0.0;
    bool holds = false;
};

// Compares the single-layer response to a warped adversarial input against
// the clean response, and the bound L*S*|x|inf + |z|inf with z = x_adv - x.
BoundReport theorem1_bound_check(const Tensor& kernel, const Tensor& x, const Tensor& x_adv, const AffineParams& f,
                                 int pool_window, const KernelConstant& constant = kernel_l1_mass);

}  // namespace dtlab
