#include "dtlab/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>

#include "dtlab/errors.hpp"

namespace dtlab::ops {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

Tape& tape_of(Var a) {
    if (a.tape == nullptr) throw ContractError("Var is not bound to a tape");
    return *a.tape;
}

Tape& tape_of(Var a, Var b) {
    if (a.tape != b.tape) throw ContractError("operands live on different tapes");
    return tape_of(a);
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        throw DimensionError(std::string(op) + ": shapes " + shape_string(a.shape()) + " and " +
                             shape_string(b.shape()) + " differ");
    }
}

// N, C, H, W view of an image tensor.
struct ImageDims {
    std::size_t n, c, h, w;
    bool batched;
};

ImageDims image_dims(const char* op, const Tensor& t) {
    if (t.ndim() == 3) return {1, t.dim(0), t.dim(1), t.dim(2), false};
    if (t.ndim() == 4) return {t.dim(0), t.dim(1), t.dim(2), t.dim(3), true};
    throw DimensionError(std::string(op) + ": expected C x H x W or N x C x H x W, got " +
                         shape_string(t.shape()));
}

Shape image_shape(const ImageDims& d, std::size_t c, std::size_t h, std::size_t w) {
    if (d.batched) return {d.n, c, h, w};
    return {c, h, w};
}

void im2col(const double* x, std::size_t c, std::size_t h, std::size_t w, std::size_t k, int stride, int pad,
            std::size_t ho, std::size_t wo, double* cols) {
    const auto hs = static_cast<long>(h);
    const auto ws = static_cast<long>(w);
    std::size_t row = 0;
    for (std::size_t ci = 0; ci < c; ++ci) {
        const double* plane = x + ci * h * w;
        for (std::size_t ki = 0; ki < k; ++ki) {
            for (std::size_t kj = 0; kj < k; ++kj, ++row) {
                double* dst = cols + row * ho * wo;
                for (std::size_t oi = 0; oi < ho; ++oi) {
                    const long yi = static_cast<long>(oi) * stride - pad + static_cast<long>(ki);
                    for (std::size_t oj = 0; oj < wo; ++oj) {
                        const long xj = static_cast<long>(oj) * stride - pad + static_cast<long>(kj);
                        dst[oi * wo + oj] =
                            (yi >= 0 && yi < hs && xj >= 0 && xj < ws) ? plane[yi * ws + xj] : 0.0;
                    }
                }
            }
        }
    }
}

void col2im_add(const double* cols, std::size_t c, std::size_t h, std::size_t w, std::size_t k, int stride,
                int pad, std::size_t ho, std::size_t wo, double* dx) {
    const auto hs = static_cast<long>(h);
    const auto ws = static_cast<long>(w);
    std::size_t row = 0;
    for (std::size_t ci = 0; ci < c; ++ci) {
        double* plane = dx + ci * h * w;
        for (std::size_t ki = 0; ki < k; ++ki) {
            for (std::size_t kj = 0; kj < k; ++kj, ++row) {
                const double* src = cols + row * ho * wo;
                for (std::size_t oi = 0; oi < ho; ++oi) {
                    const long yi = static_cast<long>(oi) * stride - pad + static_cast<long>(ki);
                    if (yi < 0 || yi >= hs) continue;
                    for (std::size_t oj = 0; oj < wo; ++oj) {
                        const long xj = static_cast<long>(oj) * stride - pad + static_cast<long>(kj);
                        if (xj >= 0 && xj < ws) plane[yi * ws + xj] += src[oi * wo + oj];
                    }
                }
            }
        }
    }
}

}  // namespace

Var add(Var a, Var b) {
    Tape& t = tape_of(a, b);
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    require_same_shape("add", av, bv);
    Tensor out(av.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = av[i] + bv[i];
    return t.record(std::move(out), {a, b}, [](const BackwardCtx& ctx) {
        for (auto g : ctx.in_grad) {
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += ctx.out_grad[i];
        }
    });
}

Var sub(Var a, Var b) {
    Tape& t = tape_of(a, b);
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    require_same_shape("sub", av, bv);
    Tensor out(av.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = av[i] - bv[i];
    return t.record(std::move(out), {a, b}, [](const BackwardCtx& ctx) {
        auto ga = ctx.in_grad[0];
        auto gb = ctx.in_grad[1];
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += ctx.out_grad[i];
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= ctx.out_grad[i];
    });
}

Var mul(Var a, Var b) {
    Tape& t = tape_of(a, b);
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    require_same_shape("mul", av, bv);
    Tensor out(av.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = av[i] * bv[i];
    return t.record(std::move(out), {a, b}, [&t, ia = a.id, ib = b.id](const BackwardCtx& ctx) {
        const Tensor& av = t.value(ia);
        const Tensor& bv = t.value(ib);
        auto ga = ctx.in_grad[0];
        auto gb = ctx.in_grad[1];
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += ctx.out_grad[i] * bv[i];
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += ctx.out_grad[i] * av[i];
    });
}

Var scale(Var a, double s) {
    Tape& t = tape_of(a);
    const Tensor& av = a.value();
    Tensor out(av.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = av[i] * s;
    return t.record(std::move(out), {a}, [s](const BackwardCtx& ctx) {
        auto g = ctx.in_grad[0];
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += ctx.out_grad[i] * s;
    });
}

Var reshape(Var a, Shape shape) {
    Tape& t = tape_of(a);
    Tensor out = a.value().reshaped(std::move(shape));
    return t.record(std::move(out), {a}, [](const BackwardCtx& ctx) {
        auto g = ctx.in_grad[0];
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += ctx.out_grad[i];
    });
}

Var sum(Var a) {
    Tape& t = tape_of(a);
    double s = 0.0;
    for (double v : a.value().data()) s += v;
    return t.record(Tensor::scalar(s), {a}, [](const BackwardCtx& ctx) {
        auto g = ctx.in_grad[0];
        for (double& gi : g) gi += ctx.out_grad[0];
    });
}

Var mean(Var a) {
    return scale(sum(a), 1.0 / static_cast<double>(a.value().numel()));
}

Var matmul(Var a, Var b) {
    Tape& t = tape_of(a, b);
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    if (av.ndim() != 2 || bv.ndim() != 2 || av.dim(1) != bv.dim(0)) {
        throw DimensionError("matmul: cannot multiply " + shape_string(av.shape()) + " by " +
                             shape_string(bv.shape()));
    }
    const auto m = static_cast<Eigen::Index>(av.dim(0));
    const auto k = static_cast<Eigen::Index>(av.dim(1));
    const auto n = static_cast<Eigen::Index>(bv.dim(1));
    Tensor out({av.dim(0), bv.dim(1)});
    MatMap(out.data().data(), m, n).noalias() =
        ConstMatMap(av.data().data(), m, k) * ConstMatMap(bv.data().data(), k, n);
    return t.record(std::move(out), {a, b}, [&t, ia = a.id, ib = b.id, m, k, n](const BackwardCtx& ctx) {
        ConstMatMap g(ctx.out_grad.data(), m, n);
        if (!ctx.in_grad[0].empty()) {
            MatMap(ctx.in_grad[0].data(), m, k).noalias() +=
                g * ConstMatMap(t.value(ib).data().data(), k, n).transpose();
        }
        if (!ctx.in_grad[1].empty()) {
            MatMap(ctx.in_grad[1].data(), k, n).noalias() +=
                ConstMatMap(t.value(ia).data().data(), m, k).transpose() * g;
        }
    });
}

Var linear(Var x, Var weight, Var bias) {
    Tape& t = tape_of(x, weight);
    tape_of(x, bias);
    const Tensor& xv = x.value();
    const Tensor& wv = weight.value();
    const Tensor& bv = bias.value();
    if (wv.ndim() != 2 || bv.ndim() != 1 || bv.dim(0) != wv.dim(0)) {
        throw DimensionError("linear: weight " + shape_string(wv.shape()) + " and bias " +
                             shape_string(bv.shape()) + " disagree");
    }
    const bool batched = xv.ndim() == 2;
    if (!(xv.ndim() == 1 || batched) || xv.shape().back() != wv.dim(1)) {
        throw DimensionError("linear: input " + shape_string(xv.shape()) + " does not match weight " +
                             shape_string(wv.shape()));
    }
    const auto rows = static_cast<Eigen::Index>(batched ? xv.dim(0) : 1);
    const auto k = static_cast<Eigen::Index>(wv.dim(1));
    const auto n = static_cast<Eigen::Index>(wv.dim(0));
    Tensor out(batched ? Shape{xv.dim(0), wv.dim(0)} : Shape{wv.dim(0)});
    MatMap y(out.data().data(), rows, n);
    y.noalias() = ConstMatMap(xv.data().data(), rows, k) * ConstMatMap(wv.data().data(), n, k).transpose();
    for (Eigen::Index r = 0; r < rows; ++r) {
        for (Eigen::Index j = 0; j < n; ++j) y(r, j) += bv[static_cast<std::size_t>(j)];
    }
    return t.record(std::move(out), {x, weight, bias},
                    [&t, ix = x.id, iw = weight.id, rows, k, n](const BackwardCtx& ctx) {
                        ConstMatMap g(ctx.out_grad.data(), rows, n);
                        if (!ctx.in_grad[0].empty()) {
                            MatMap(ctx.in_grad[0].data(), rows, k).noalias() +=
                                g * ConstMatMap(t.value(iw).data().data(), n, k);
                        }
                        if (!ctx.in_grad[1].empty()) {
                            MatMap(ctx.in_grad[1].data(), n, k).noalias() +=
                                g.transpose() * ConstMatMap(t.value(ix).data().data(), rows, k);
                        }
                        if (!ctx.in_grad[2].empty()) {
                            auto gb = ctx.in_grad[2];
                            for (Eigen::Index r = 0; r < rows; ++r) {
                                for (Eigen::Index j = 0; j < n; ++j) gb[static_cast<std::size_t>(j)] += g(r, j);
                            }
                        }
                    });
}

Var conv2d(Var x, Var weight, int stride, int pad) {
    Tape& t = tape_of(x, weight);
    const Tensor& xv = x.value();
    const Tensor& wv = weight.value();
    const ImageDims d = image_dims("conv2d", xv);
    if (wv.ndim() != 4 || wv.dim(1) != d.c || wv.dim(2) != wv.dim(3)) {
        throw DimensionError("conv2d: kernel " + shape_string(wv.shape()) + " does not fit input " +
                             shape_string(xv.shape()));
    }
    if (stride < 1 || pad < 0) throw DomainError("conv2d: stride must be >= 1 and pad >= 0");
    const std::size_t k = wv.dim(2);
    const std::size_t cout = wv.dim(0);
    const std::size_t hp = d.h + 2 * static_cast<std::size_t>(pad);
    const std::size_t wp = d.w + 2 * static_cast<std::size_t>(pad);
    if (k > hp || k > wp) {
        throw DimensionError("conv2d: kernel " + shape_string(wv.shape()) + " larger than padded input " +
                             shape_string(xv.shape()));
    }
    const auto s = static_cast<std::size_t>(stride);
    if ((hp - k) % s != 0 || (wp - k) % s != 0) {
        throw DimensionError("conv2d: stride " + std::to_string(stride) + " does not tile input " +
                             shape_string(xv.shape()) + " with kernel " + shape_string(wv.shape()));
    }
    const std::size_t ho = (hp - k) / s + 1;
    const std::size_t wo = (wp - k) / s + 1;
    const std::size_t ckk = d.c * k * k;
    const std::size_t plane = ho * wo;

    Tensor out(image_shape(d, cout, ho, wo));
    std::vector<double> cols(ckk * plane);
    ConstMatMap wmat(wv.data().data(), static_cast<Eigen::Index>(cout), static_cast<Eigen::Index>(ckk));
    for (std::size_t n = 0; n < d.n; ++n) {
        im2col(xv.data().data() + n * d.c * d.h * d.w, d.c, d.h, d.w, k, stride, pad, ho, wo, cols.data());
        MatMap(out.data().data() + n * cout * plane, static_cast<Eigen::Index>(cout),
               static_cast<Eigen::Index>(plane))
            .noalias() = wmat * ConstMatMap(cols.data(), static_cast<Eigen::Index>(ckk),
                                            static_cast<Eigen::Index>(plane));
    }

    return t.record(std::move(out), {x, weight},
                    [&t, ix = x.id, iw = weight.id, d, k, cout, ho, wo, ckk, plane, stride,
                     pad](const BackwardCtx& ctx) {
                        const Tensor& xv = t.value(ix);
                        const Tensor& wv = t.value(iw);
                        const auto ec = static_cast<Eigen::Index>(cout);
                        const auto eckk = static_cast<Eigen::Index>(ckk);
                        const auto eplane = static_cast<Eigen::Index>(plane);
                        ConstMatMap wmat(wv.data().data(), ec, eckk);
                        std::vector<double> cols(ckk * plane);
                        std::vector<double> dcols(ckk * plane);
                        for (std::size_t n = 0; n < d.n; ++n) {
                            ConstMatMap g(ctx.out_grad.data() + n * cout * plane, ec, eplane);
                            if (!ctx.in_grad[1].empty()) {
                                im2col(xv.data().data() + n * d.c * d.h * d.w, d.c, d.h, d.w, k, stride, pad, ho,
                                       wo, cols.data());
                                MatMap(ctx.in_grad[1].data(), ec, eckk).noalias() +=
                                    g * ConstMatMap(cols.data(), eckk, eplane).transpose();
                            }
                            if (!ctx.in_grad[0].empty()) {
                                MatMap(dcols.data(), eckk, eplane).noalias() = wmat.transpose() * g;
                                col2im_add(dcols.data(), d.c, d.h, d.w, k, stride, pad, ho, wo,
                                           ctx.in_grad[0].data() + n * d.c * d.h * d.w);
                            }
                        }
                    });
}

Var add_channel_bias(Var x, Var bias) {
    Tape& t = tape_of(x, bias);
    const Tensor& xv = x.value();
    const Tensor& bv = bias.value();
    const ImageDims d = image_dims("add_channel_bias", xv);
    if (bv.ndim() != 1 || bv.dim(0) != d.c) {
        throw DimensionError("add_channel_bias: bias " + shape_string(bv.shape()) + " for input " +
                             shape_string(xv.shape()));
    }
    const std::size_t plane = d.h * d.w;
    Tensor out = xv;
    for (std::size_t n = 0; n < d.n; ++n) {
        for (std::size_t c = 0; c < d.c; ++c) {
            double* p = out.data().data() + (n * d.c + c) * plane;
            for (std::size_t i = 0; i < plane; ++i) p[i] += bv[c];
        }
    }
    return t.record(std::move(out), {x, bias}, [d, plane](const BackwardCtx& ctx) {
        auto gx = ctx.in_grad[0];
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += ctx.out_grad[i];
        auto gb = ctx.in_grad[1];
        if (gb.empty()) return;
        for (std::size_t n = 0; n < d.n; ++n) {
            for (std::size_t c = 0; c < d.c; ++c) {
                const double* g = ctx.out_grad.data() + (n * d.c + c) * plane;
                double acc = 0.0;
                for (std::size_t i = 0; i < plane; ++i) acc += g[i];
                gb[c] += acc;
            }
        }
    });
}

Var conv2d(Var x, Var weight, Var bias, int stride, int pad) {
    return add_channel_bias(conv2d(x, weight, stride, pad), bias);
}

Var relu(Var x) {
    Tape& t = tape_of(x);
    const Tensor& xv = x.value();
    Tensor out(xv.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = xv[i] > 0.0 ? xv[i] : 0.0;
    return t.record(std::move(out), {x}, [&t, ix = x.id](const BackwardCtx& ctx) {
        const Tensor& xv = t.value(ix);
        auto g = ctx.in_grad[0];
        for (std::size_t i = 0; i < g.size(); ++i) {
            if (xv[i] > 0.0) g[i] += ctx.out_grad[i];
        }
    });
}

namespace {

ImageDims pooled_dims(const char* op, const Tensor& xv, int window) {
    const ImageDims d = image_dims(op, xv);
    if (window < 1) throw DomainError(std::string(op) + ": window must be >= 1");
    const auto w = static_cast<std::size_t>(window);
    if (d.h % w != 0 || d.w % w != 0) {
        throw DimensionError(std::string(op) + ": window " + std::to_string(window) + " does not divide " +
                             shape_string(xv.shape()));
    }
    return d;
}

}  // namespace

Var avg_pool2d(Var x, int window) {
    Tape& t = tape_of(x);
    const Tensor& xv = x.value();
    const ImageDims d = pooled_dims("avg_pool2d", xv, window);
    const auto k = static_cast<std::size_t>(window);
    const std::size_t ho = d.h / k;
    const std::size_t wo = d.w / k;
    const double inv = 1.0 / static_cast<double>(k * k);
    Tensor out(image_shape(d, d.c, ho, wo));
    for (std::size_t p = 0; p < d.n * d.c; ++p) {
        const double* src = xv.data().data() + p * d.h * d.w;
        double* dst = out.data().data() + p * ho * wo;
        for (std::size_t i = 0; i < ho; ++i) {
            for (std::size_t j = 0; j < wo; ++j) {
                double acc = 0.0;
                for (std::size_t a = 0; a < k; ++a) {
                    for (std::size_t b = 0; b < k; ++b) acc += src[(i * k + a) * d.w + j * k + b];
                }
                dst[i * wo + j] = acc * inv;
            }
        }
    }
    return t.record(std::move(out), {x}, [d, k, ho, wo, inv](const BackwardCtx& ctx) {
        auto gx = ctx.in_grad[0];
        for (std::size_t p = 0; p < d.n * d.c; ++p) {
            const double* g = ctx.out_grad.data() + p * ho * wo;
            double* dst = gx.data() + p * d.h * d.w;
            for (std::size_t i = 0; i < ho; ++i) {
                for (std::size_t j = 0; j < wo; ++j) {
                    const double gi = g[i * wo + j] * inv;
                    for (std::size_t a = 0; a < k; ++a) {
                        for (std::size_t b = 0; b < k; ++b) dst[(i * k + a) * d.w + j * k + b] += gi;
                    }
                }
            }
        }
    });
}

Var max_pool2d(Var x, int window) {
    Tape& t = tape_of(x);
    const Tensor& xv = x.value();
    const ImageDims d = pooled_dims("max_pool2d", xv, window);
    const auto k = static_cast<std::size_t>(window);
    const std::size_t ho = d.h / k;
    const std::size_t wo = d.w / k;
    Tensor out(image_shape(d, d.c, ho, wo));
    std::vector<std::size_t> argmax(out.numel());
    for (std::size_t p = 0; p < d.n * d.c; ++p) {
        const std::size_t base = p * d.h * d.w;
        for (std::size_t i = 0; i < ho; ++i) {
            for (std::size_t j = 0; j < wo; ++j) {
                std::size_t best = base + (i * k) * d.w + j * k;
                for (std::size_t a = 0; a < k; ++a) {
                    for (std::size_t b = 0; b < k; ++b) {
                        const std::size_t idx = base + (i * k + a) * d.w + j * k + b;
                        if (xv[idx] > xv[best]) best = idx;
                    }
                }
                const std::size_t o = p * ho * wo + i * wo + j;
                out[o] = xv[best];
                argmax[o] = best;
            }
        }
    }
    return t.record(std::move(out), {x}, [argmax = std::move(argmax)](const BackwardCtx& ctx) {
        auto gx = ctx.in_grad[0];
        for (std::size_t o = 0; o < argmax.size(); ++o) gx[argmax[o]] += ctx.out_grad[o];
    });
}

Var upsample_nearest2d(Var x, int factor) {
    Tape& t = tape_of(x);
    const Tensor& xv = x.value();
    const ImageDims d = image_dims("upsample_nearest2d", xv);
    if (factor < 1) throw DomainError("upsample_nearest2d: factor must be >= 1");
    const auto f = static_cast<std::size_t>(factor);
    const std::size_t ho = d.h * f;
    const std::size_t wo = d.w * f;
    Tensor out(image_shape(d, d.c, ho, wo));
    for (std::size_t p = 0; p < d.n * d.c; ++p) {
        const double* src = xv.data().data() + p * d.h * d.w;
        double* dst = out.data().data() + p * ho * wo;
        for (std::size_t i = 0; i < ho; ++i) {
            for (std::size_t j = 0; j < wo; ++j) dst[i * wo + j] = src[(i / f) * d.w + j / f];
        }
    }
    return t.record(std::move(out), {x}, [d, f, ho, wo](const BackwardCtx& ctx) {
        auto gx = ctx.in_grad[0];
        for (std::size_t p = 0; p < d.n * d.c; ++p) {
            const double* g = ctx.out_grad.data() + p * ho * wo;
            double* dst = gx.data() + p * d.h * d.w;
            for (std::size_t i = 0; i < ho; ++i) {
                for (std::size_t j = 0; j < wo; ++j) dst[(i / f) * d.w + j / f] += g[i * wo + j];
            }
        }
    });
}

Var concat_channels(Var a, Var b) {
    Tape& t = tape_of(a, b);
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    const ImageDims da = image_dims("concat_channels", av);
    const ImageDims db = image_dims("concat_channels", bv);
    if (da.batched != db.batched || da.n != db.n || da.h != db.h || da.w != db.w) {
        throw DimensionError("concat_channels: cannot join " + shape_string(av.shape()) + " and " +
                             shape_string(bv.shape()));
    }
    const std::size_t plane = da.h * da.w;
    const std::size_t na = da.c * plane;
    const std::size_t nb = db.c * plane;
    Tensor out(image_shape(da, da.c + db.c, da.h, da.w));
    for (std::size_t n = 0; n < da.n; ++n) {
        std::copy_n(av.data().data() + n * na, na, out.data().data() + n * (na + nb));
        std::copy_n(bv.data().data() + n * nb, nb, out.data().data() + n * (na + nb) + na);
    }
    return t.record(std::move(out), {a, b}, [n_batch = da.n, na, nb](const BackwardCtx& ctx) {
        auto ga = ctx.in_grad[0];
        auto gb = ctx.in_grad[1];
        for (std::size_t n = 0; n < n_batch; ++n) {
            const double* g = ctx.out_grad.data() + n * (na + nb);
            if (!ga.empty()) {
                for (std::size_t i = 0; i < na; ++i) ga[n * na + i] += g[i];
            }
            if (!gb.empty()) {
                for (std::size_t i = 0; i < nb; ++i) gb[n * nb + i] += g[na + i];
            }
        }
    });
}

Var softmax_cross_entropy(Var logits, std::span<const int> labels) {
    Tape& t = tape_of(logits);
    const Tensor& lv = logits.value();
    if (lv.ndim() != 1 && lv.ndim() != 2) {
        throw DimensionError("softmax_cross_entropy: logits must be B x C or C, got " + shape_string(lv.shape()));
    }
    const std::size_t b = lv.ndim() == 2 ? lv.dim(0) : 1;
    const std::size_t c = lv.shape().back();
    if (labels.size() != b) {
        throw DimensionError("softmax_cross_entropy: " + std::to_string(labels.size()) + " labels for batch of " +
                             std::to_string(b));
    }
    std::vector<double> probs(b * c);
    double loss = 0.0;
    for (std::size_t r = 0; r < b; ++r) {
        const int y = labels[r];
        if (y < 0 || static_cast<std::size_t>(y) >= c) {
            throw IndexError("softmax_cross_entropy: label " + std::to_string(y) + " outside [0, " +
                             std::to_string(c) + ")");
        }
        const double* z = lv.data().data() + r * c;
        const double zmax = *std::max_element(z, z + c);
        double denom = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
            probs[r * c + j] = std::exp(z[j] - zmax);
            denom += probs[r * c + j];
        }
        for (std::size_t j = 0; j < c; ++j) probs[r * c + j] /= denom;
        loss += -(z[y] - zmax - std::log(denom));
    }
    const double inv_b = 1.0 / static_cast<double>(b);
    std::vector<int> ys(labels.begin(), labels.end());
    return t.record(Tensor::scalar(loss * inv_b), {logits},
                    [probs = std::move(probs), ys = std::move(ys), b, c, inv_b](const BackwardCtx& ctx) {
                        auto g = ctx.in_grad[0];
                        const double up = ctx.out_grad[0] * inv_b;
                        for (std::size_t r = 0; r < b; ++r) {
                            for (std::size_t j = 0; j < c; ++j) {
                                const double onehot = static_cast<int>(j) == ys[r] ? 1.0 : 0.0;
                                g[r * c + j] += (probs[r * c + j] - onehot) * up;
                            }
                        }
                    });
}

}  // namespace dtlab::ops
