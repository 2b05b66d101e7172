#include "dtlab/warp.hpp"

#include <cmath>

#include "dtlab/errors.hpp"
#include "dtlab/ops.hpp"

namespace dtlab {

Tensor AffineParams::tensor() const {
    return Tensor({2, 3}, std::vector<double>(theta.begin(), theta.end()));
}

AffineParams AffineParams::from_tensor(const Tensor& t) {
    if (t.numel() != 6) throw DimensionError("affine parameters need 6 values, got " + shape_string(t.shape()));
    AffineParams p;
    for (std::size_t i = 0; i < 6; ++i) p.theta[i] = t[i];
    return p;
}

bool AffineParams::is_finite() const {
    for (double v : theta) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

AffineParams affine_from_rst(double alpha, double s, double du, double dv) {
    if (!(s > 0.0)) throw DomainError("affine_from_rst: scale must be positive, got " + std::to_string(s));
    const double c = std::cos(alpha);
    const double sn = std::sin(alpha);
    return AffineParams{{s * c, -s * sn, du, s * sn, s * c, dv}};
}

AffineParams compose(const AffineParams& second, const AffineParams& first) {
    const auto& a = second.theta;
    const auto& b = first.theta;
    return AffineParams{{
        a[0] * b[0] + a[1] * b[3],
        a[0] * b[1] + a[1] * b[4],
        a[0] * b[2] + a[1] * b[5] + a[2],
        a[3] * b[0] + a[4] * b[3],
        a[3] * b[1] + a[4] * b[4],
        a[3] * b[2] + a[4] * b[5] + a[5],
    }};
}

void AffineRanges::validate() const {
    if (!(max_angle >= 0.0) || !(max_shift >= 0.0)) {
        throw DomainError("affine ranges: angle and shift bounds must be non-negative");
    }
    if (!(scale_lo > 0.0) || !(scale_lo <= scale_hi)) {
        throw DomainError("affine ranges: need 0 < scale_lo <= scale_hi, got [" + std::to_string(scale_lo) + ", " +
                          std::to_string(scale_hi) + "]");
    }
}

AffineParams random_affine(Rng& rng, const AffineRanges& r) {
    r.validate();
    const double alpha = rng.uniform(-r.max_angle, r.max_angle);
    const double s = rng.uniform(r.scale_lo, r.scale_hi);
    const double du = rng.uniform(-r.max_shift, r.max_shift);
    const double dv = rng.uniform(-r.max_shift, r.max_shift);
    return affine_from_rst(alpha, s, du, dv);
}

namespace {

double normalized_coord(std::size_t i, std::size_t n) {
    return -1.0 + 2.0 * static_cast<double>(i) / static_cast<double>(n - 1);
}

// Snaps sampling positions that are within rounding noise of a pixel centre,
// so that identity warps reproduce the input exactly.
double snap(double x) {
    const double r = std::nearbyint(x);
    return std::abs(x - r) <= 1e-9 ? r : x;
}

struct Bilinear {
    long x0, y0;
    double wx, wy;
    bool any_inside;
};

Bilinear locate(double u, double v, std::size_t h, std::size_t w) {
    if (!std::isfinite(u) || !std::isfinite(v)) throw DomainError("grid_sample: non-finite sampling coordinate");
    const double x = snap((u + 1.0) * 0.5 * static_cast<double>(w - 1));
    const double y = snap((v + 1.0) * 0.5 * static_cast<double>(h - 1));
    Bilinear b{0, 0, 0.0, 0.0, false};
    if (x <= -1.0 || y <= -1.0 || x >= static_cast<double>(w) || y >= static_cast<double>(h)) return b;
    const double fx = std::floor(x);
    const double fy = std::floor(y);
    b.x0 = static_cast<long>(fx);
    b.y0 = static_cast<long>(fy);
    b.wx = x - fx;
    b.wy = y - fy;
    b.any_inside = true;
    return b;
}

}  // namespace

namespace ops {

Var affine_grid(Var theta, std::size_t h, std::size_t w) {
    if (theta.tape == nullptr) throw ContractError("affine_grid: unbound Var");
    Tape& t = *theta.tape;
    if (h < 2 || w < 2) {
        throw DomainError("affine_grid: output must be at least 2 x 2, got " + std::to_string(h) + " x " +
                          std::to_string(w));
    }
    const Tensor& tv = theta.value();
    bool batched = false;
    std::size_t n = 1;
    if (tv.numel() == 6 && (tv.ndim() == 1 || (tv.ndim() == 2 && tv.dim(0) == 2))) {
        batched = false;
    } else if ((tv.ndim() == 3 && tv.dim(1) == 2 && tv.dim(2) == 3) || (tv.ndim() == 2 && tv.dim(1) == 6)) {
        batched = true;
        n = tv.dim(0);
    } else {
        throw DimensionError("affine_grid: theta must be 2 x 3 or N x 2 x 3, got " + shape_string(tv.shape()));
    }
    for (double v : tv.data()) {
        if (!std::isfinite(v)) throw DomainError("affine_grid: non-finite theta entry");
    }
    Tensor out(batched ? Shape{n, h, w, 2} : Shape{h, w, 2});
    for (std::size_t b = 0; b < n; ++b) {
        const double* th = tv.data().data() + 6 * b;
        double* g = out.data().data() + b * h * w * 2;
        for (std::size_t i = 0; i < h; ++i) {
            const double v = normalized_coord(i, h);
            for (std::size_t j = 0; j < w; ++j) {
                const double u = normalized_coord(j, w);
                g[(i * w + j) * 2 + 0] = th[0] * u + th[1] * v + th[2];
                g[(i * w + j) * 2 + 1] = th[3] * u + th[4] * v + th[5];
            }
        }
    }
    return t.record(std::move(out), {theta}, [n, h, w](const BackwardCtx& ctx) {
        auto gt = ctx.in_grad[0];
        for (std::size_t b = 0; b < n; ++b) {
            const double* g = ctx.out_grad.data() + b * h * w * 2;
            double* d = gt.data() + 6 * b;
            for (std::size_t i = 0; i < h; ++i) {
                const double v = normalized_coord(i, h);
                for (std::size_t j = 0; j < w; ++j) {
                    const double u = normalized_coord(j, w);
                    const double gu = g[(i * w + j) * 2 + 0];
                    const double gv = g[(i * w + j) * 2 + 1];
                    d[0] += gu * u;
                    d[1] += gu * v;
                    d[2] += gu;
                    d[3] += gv * u;
                    d[4] += gv * v;
                    d[5] += gv;
                }
            }
        }
    });
}

Var grid_sample(Var img, Var grid) {
    if (img.tape == nullptr || img.tape != grid.tape) throw ContractError("grid_sample: operands on different tapes");
    Tape& t = *img.tape;
    const Tensor& iv = img.value();
    const Tensor& gv = grid.value();
    const bool batched = iv.ndim() == 4;
    if (!(iv.ndim() == 3 || batched) || gv.ndim() != iv.ndim() || gv.shape().back() != 2 ||
        (batched && gv.dim(0) != iv.dim(0))) {
        throw DimensionError("grid_sample: image " + shape_string(iv.shape()) + " and grid " +
                             shape_string(gv.shape()) + " are incompatible");
    }
    const std::size_t n = batched ? iv.dim(0) : 1;
    const std::size_t off = batched ? 1 : 0;
    const std::size_t c = iv.dim(off);
    const std::size_t h = iv.dim(off + 1);
    const std::size_t w = iv.dim(off + 2);
    const std::size_t ho = gv.dim(off);
    const std::size_t wo = gv.dim(off + 1);
    if (h < 2 || w < 2) throw DimensionError("grid_sample: image must be at least 2 x 2");

    Tensor out(batched ? Shape{n, c, ho, wo} : Shape{c, ho, wo});
    const auto hs = static_cast<long>(h);
    const auto ws = static_cast<long>(w);
    auto fetch = [&](const double* plane, long y, long x) {
        return (y >= 0 && y < hs && x >= 0 && x < ws) ? plane[y * ws + x] : 0.0;
    };
    for (std::size_t b = 0; b < n; ++b) {
        const double* g = gv.data().data() + b * ho * wo * 2;
        for (std::size_t p = 0; p < ho * wo; ++p) {
            const Bilinear s = locate(g[2 * p], g[2 * p + 1], h, w);
            for (std::size_t ch = 0; ch < c; ++ch) {
                double val = 0.0;
                if (s.any_inside) {
                    const double* plane = iv.data().data() + (b * c + ch) * h * w;
                    const double a = fetch(plane, s.y0, s.x0);
                    const double bb = fetch(plane, s.y0, s.x0 + 1);
                    const double cc = fetch(plane, s.y0 + 1, s.x0);
                    const double dd = fetch(plane, s.y0 + 1, s.x0 + 1);
                    val = (1.0 - s.wy) * (1.0 - s.wx) * a + (1.0 - s.wy) * s.wx * bb + s.wy * (1.0 - s.wx) * cc +
                          s.wy * s.wx * dd;
                }
                out[(b * c + ch) * ho * wo + p] = val;
            }
        }
    }

    return t.record(std::move(out), {img, grid},
                    [&t, ii = img.id, ig = grid.id, n, c, h, w, ho, wo](const BackwardCtx& ctx) {
                        const Tensor& iv = t.value(ii);
                        const Tensor& gv = t.value(ig);
                        auto gimg = ctx.in_grad[0];
                        auto ggrid = ctx.in_grad[1];
                        const auto hs = static_cast<long>(h);
                        const auto ws = static_cast<long>(w);
                        auto inside = [&](long y, long x) { return y >= 0 && y < hs && x >= 0 && x < ws; };
                        const double sx = 0.5 * static_cast<double>(w - 1);
                        const double sy = 0.5 * static_cast<double>(h - 1);
                        for (std::size_t b = 0; b < n; ++b) {
                            const double* g = gv.data().data() + b * ho * wo * 2;
                            for (std::size_t p = 0; p < ho * wo; ++p) {
                                const Bilinear s = locate(g[2 * p], g[2 * p + 1], h, w);
                                if (!s.any_inside) continue;
                                double dx = 0.0;
                                double dy = 0.0;
                                for (std::size_t ch = 0; ch < c; ++ch) {
                                    const double go = ctx.out_grad[(b * c + ch) * ho * wo + p];
                                    if (go == 0.0) continue;
                                    const std::size_t base = (b * c + ch) * h * w;
                                    const long ys[2] = {s.y0, s.y0 + 1};
                                    const long xs[2] = {s.x0, s.x0 + 1};
                                    double v[2][2];
                                    for (int a = 0; a < 2; ++a) {
                                        for (int e = 0; e < 2; ++e) {
                                            v[a][e] = inside(ys[a], xs[e])
                                                          ? iv[base + static_cast<std::size_t>(ys[a] * ws + xs[e])]
                                                          : 0.0;
                                        }
                                    }
                                    if (!gimg.empty()) {
                                        const double wts[2][2] = {{(1.0 - s.wy) * (1.0 - s.wx), (1.0 - s.wy) * s.wx},
                                                                  {s.wy * (1.0 - s.wx), s.wy * s.wx}};
                                        for (int a = 0; a < 2; ++a) {
                                            for (int e = 0; e < 2; ++e) {
                                                if (inside(ys[a], xs[e])) {
                                                    gimg[base + static_cast<std::size_t>(ys[a] * ws + xs[e])] +=
                                                        go * wts[a][e];
                                                }
                                            }
                                        }
                                    }
                                    dx += go * ((1.0 - s.wy) * (v[0][1] - v[0][0]) + s.wy * (v[1][1] - v[1][0]));
                                    dy += go * ((1.0 - s.wx) * (v[1][0] - v[0][0]) + s.wx * (v[1][1] - v[0][1]));
                                }
                                if (!ggrid.empty()) {
                                    ggrid[b * ho * wo * 2 + 2 * p] += dx * sx;
                                    ggrid[b * ho * wo * 2 + 2 * p + 1] += dy * sy;
                                }
                            }
                        }
                    });
}

Var point_affine(Var points, Var theta) {
    if (points.tape == nullptr || points.tape != theta.tape) {
        throw ContractError("point_affine: operands on different tapes");
    }
    Tape& t = *points.tape;
    const Tensor& pv = points.value();
    const Tensor& tv = theta.value();
    const bool single = pv.ndim() == 1;
    if (!(single || pv.ndim() == 2) || pv.shape().back() != 2) {
        throw DimensionError("point_affine: points must be N x 2, got " + shape_string(pv.shape()));
    }
    const std::size_t n = single ? 1 : pv.dim(0);
    bool per_point = false;
    if (tv.numel() == 6 && tv.ndim() <= 2 && (tv.ndim() == 1 || tv.dim(0) == 2)) {
        per_point = false;
    } else if (tv.numel() == 6 * n && tv.ndim() >= 2 && tv.dim(0) == n) {
        per_point = true;
    } else {
        throw DimensionError("point_affine: theta " + shape_string(tv.shape()) + " for " + std::to_string(n) +
                             " points");
    }
    Tensor out(pv.shape());
    for (std::size_t i = 0; i < n; ++i) {
        const double* th = tv.data().data() + (per_point ? 6 * i : 0);
        const double u = pv[2 * i];
        const double v = pv[2 * i + 1];
        out[2 * i] = th[0] * u + th[1] * v + th[2];
        out[2 * i + 1] = th[3] * u + th[4] * v + th[5];
    }
    return t.record(std::move(out), {points, theta},
                    [&t, ip = points.id, it = theta.id, n, per_point](const BackwardCtx& ctx) {
                        const Tensor& pv = t.value(ip);
                        const Tensor& tv = t.value(it);
                        auto gp = ctx.in_grad[0];
                        auto gt = ctx.in_grad[1];
                        for (std::size_t i = 0; i < n; ++i) {
                            const std::size_t to = per_point ? 6 * i : 0;
                            const double gu = ctx.out_grad[2 * i];
                            const double gv = ctx.out_grad[2 * i + 1];
                            if (!gp.empty()) {
                                gp[2 * i] += gu * tv[to + 0] + gv * tv[to + 3];
                                gp[2 * i + 1] += gu * tv[to + 1] + gv * tv[to + 4];
                            }
                            if (!gt.empty()) {
                                const double u = pv[2 * i];
                                const double v = pv[2 * i + 1];
                                gt[to + 0] += gu * u;
                                gt[to + 1] += gu * v;
                                gt[to + 2] += gu;
                                gt[to + 3] += gv * u;
                                gt[to + 4] += gv * v;
                                gt[to + 5] += gv;
                            }
                        }
                    });
}

Var warp_image(Var img, Var theta) {
    const Shape& s = img.shape();
    if (s.size() < 3) throw DimensionError("warp_image: expected an image, got " + shape_string(s));
    return grid_sample(img, affine_grid(theta, s[s.size() - 2], s[s.size() - 1]));
}

Var flow_total_variation(Var flow) {
    if (flow.tape == nullptr) throw ContractError("flow_total_variation: unbound Var");
    Tape& t = *flow.tape;
    const Tensor& fv = flow.value();
    if (fv.ndim() != 3 || fv.dim(2) != 2) {
        throw DimensionError("flow_total_variation: flow must be H x W x 2, got " + shape_string(fv.shape()));
    }
    constexpr double eta = 1e-12;
    const double base = std::sqrt(eta);
    const std::size_t h = fv.dim(0);
    const std::size_t w = fv.dim(1);
    double total = 0.0;
    auto visit = [&](auto&& fn) {
        for (std::size_t i = 0; i < h; ++i) {
            for (std::size_t j = 0; j < w; ++j) {
                const std::size_t p = (i * w + j) * 2;
                if (j + 1 < w) fn(p, p + 2);
                if (i + 1 < h) fn(p, p + 2 * w);
            }
        }
    };
    visit([&](std::size_t p, std::size_t q) {
        const double du = fv[p] - fv[q];
        const double dv = fv[p + 1] - fv[q + 1];
        total += std::sqrt(du * du + dv * dv + eta) - base;
    });
    return t.record(Tensor::scalar(total), {flow}, [&t, id = flow.id, visit, eta](const BackwardCtx& ctx) {
        const Tensor& fv = t.value(id);
        auto g = ctx.in_grad[0];
        const double up = ctx.out_grad[0];
        visit([&](std::size_t p, std::size_t q) {
            const double du = fv[p] - fv[q];
            const double dv = fv[p + 1] - fv[q + 1];
            const double r = std::sqrt(du * du + dv * dv + eta);
            g[p] += up * du / r;
            g[q] -= up * du / r;
            g[p + 1] += up * dv / r;
            g[q + 1] -= up * dv / r;
        });
    });
}

}  // namespace ops

SampleGrid affine_grid(const AffineParams& theta, std::size_t h, std::size_t w) {
    Tape tape;
    return SampleGrid{ops::affine_grid(tape.constant(theta.tensor()), h, w).value()};
}

SampleGrid identity_grid(std::size_t h, std::size_t w) { return affine_grid(AffineParams::identity(), h, w); }

Tensor grid_sample(const Tensor& img, const SampleGrid& grid) {
    Tape tape;
    return ops::grid_sample(tape.parameter(img), tape.parameter(grid.coords)).value();
}

Tensor warp_image(const Tensor& img, const AffineParams& theta) {
    Tape tape;
    return ops::warp_image(tape.parameter(img), tape.constant(theta.tensor())).value();
}

Tensor point_affine(const Tensor& points, const AffineParams& theta) {
    Tape tape;
    return ops::point_affine(tape.parameter(points), tape.constant(theta.tensor())).value();
}

}  // namespace dtlab
