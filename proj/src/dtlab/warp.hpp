#pragma once

#include <array>
#include <numbers>

#include "dtlab/rng.hpp"
#include "dtlab/tape.hpp"

namespace dtlab {

// Row-major 2x3 affine matrix acting on normalized (u, v, 1) coordinates.
struct AffineParams {
    std::array<double, 6> theta{1.0, 0.0, 0.0, 0.0, 1.0, 0.0};

    static AffineParams identity() { return {}; }
    Tensor tensor() const;
    static AffineParams from_tensor(const Tensor& t);
    bool is_finite() const;

    friend bool operator==(const AffineParams&, const AffineParams&) = default;
};

// Rotation by alpha (radians), isotropic scale s, translation (du, dv).
AffineParams affine_from_rst(double alpha, double s, double du, double dv);

// Augmented-matrix product: applying the result equals applying `first`, then `second`.
AffineParams compose(const AffineParams& second, const AffineParams& first);

// Normalized source coordinates per output pixel, H x W x 2 in (u, v) order.
struct SampleGrid {
    Tensor coords;
};

SampleGrid identity_grid(std::size_t h, std::size_t w);
SampleGrid affine_grid(const AffineParams& theta, std::size_t h, std::size_t w);
Tensor grid_sample(const Tensor& img, const SampleGrid& grid);
Tensor warp_image(const Tensor& img, const AffineParams& theta);
Tensor point_affine(const Tensor& points, const AffineParams& theta);

struct AffineRanges {
    double max_angle = std::numbers::pi / 6.0;  // radians
    double scale_lo = 0.8;
    double scale_hi = 1.2;
    double max_shift = 0.1;

    void validate() const;
};

// Draws alpha, s, du, dv independently and uniformly, in that order.
AffineParams random_affine(Rng& rng, const AffineRanges& ranges);

namespace ops {

// theta: 2 x 3 (or 6) -> H x W x 2; N x 2 x 3 (or N x 6) -> N x H x W x 2.
// Pixel 0 maps to -1 and pixel W-1 to +1.
Var affine_grid(Var theta, std::size_t h, std::size_t w);

// Bilinear sampling with zero padding outside the image. img: C x H x W with
// grid Ho x Wo x 2, or N x C x H x W with grid N x Ho x Wo x 2.
Var grid_sample(Var img, Var grid);

// points: N x 2. theta: 2 x 3 shared by all points, or N x 2 x 3 per point.
Var point_affine(Var points, Var theta);

Var warp_image(Var img, Var theta);

// Sum over horizontally and vertically adjacent pixels of
// sqrt(|flow_p - flow_q|^2 + eta) - sqrt(eta). flow: H x W x 2.
Var flow_total_variation(Var flow);

}  // namespace ops

}  // namespace dtlab
