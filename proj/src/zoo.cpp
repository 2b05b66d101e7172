#include "dtlab/zoo.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "dtlab/errors.hpp"
#include "dtlab/ops.hpp"
#include "dtlab/rng.hpp"
#include "dtlab/warp.hpp"

namespace dtlab {

Tensor& ParamSet::add(std::string name, Tensor value) {
    if (std::find(names_.begin(), names_.end(), name) != names_.end()) {
        throw ContractError("duplicate parameter name '" + name + "'");
    }
    value.set_requires_grad(true);
    names_.push_back(std::move(name));
    tensors_.push_back(std::move(value));
    return tensors_.back();
}

Tensor& ParamSet::at(const std::string& name) {
    auto it = std::find(names_.begin(), names_.end(), name);
    if (it == names_.end()) throw IndexError("no parameter named '" + name + "'");
    return tensors_[static_cast<std::size_t>(it - names_.begin())];
}

const Tensor& ParamSet::at(const std::string& name) const { return const_cast<ParamSet*>(this)->at(name); }

std::size_t ParamSet::num_values() const {
    std::size_t n = 0;
    for (const auto& t : tensors_) n += t.numel();
    return n;
}

std::vector<Tensor*> ParamSet::pointers() {
    std::vector<Tensor*> out;
    for (auto& t : tensors_) out.push_back(&t);
    return out;
}

void ParamSet::set_trainable(bool on) {
    for (auto& t : tensors_) t.set_requires_grad(on);
}

void ParamSet::zero_grad() {
    for (auto& t : tensors_) t.zero_grad();
}

std::uint64_t ParamSet::fingerprint() const {
    std::uint64_t h = 1469598103934665603ULL;
    auto feed = [&h](const void* p, std::size_t n) {
        const auto* b = static_cast<const unsigned char*>(p);
        for (std::size_t i = 0; i < n; ++i) {
            h ^= b[i];
            h *= 1099511628211ULL;
        }
    };
    for (std::size_t i = 0; i < tensors_.size(); ++i) {
        feed(names_[i].data(), names_[i].size());
        for (auto d : tensors_[i].shape()) feed(&d, sizeof d);
        feed(tensors_[i].data().data(), tensors_[i].numel() * sizeof(double));
    }
    return h;
}

std::vector<Var> ParamSet::bind(Tape& tape) {
    std::vector<Var> out;
    out.reserve(tensors_.size());
    for (auto& t : tensors_) out.push_back(tape.parameter(t));
    return out;
}

std::vector<Var> ParamSet::bind(Tape& tape) const {
    std::vector<Var> out;
    out.reserve(tensors_.size());
    for (const auto& t : tensors_) out.push_back(tape.parameter(t));
    return out;
}

namespace {

Tensor he_normal(Shape shape, std::size_t fan_in, Rng& rng) {
    Tensor t(std::move(shape));
    const double sd = std::sqrt(2.0 / static_cast<double>(fan_in));
    for (double& v : t.data()) v = rng.normal(0.0, sd);
    return t;
}

std::size_t add_conv(ParamSet& ps, const std::string& name, std::size_t cin, std::size_t cout, std::size_t k,
                     Rng& rng) {
    ps.add(name + ".w", he_normal({cout, cin, k, k}, cin * k * k, rng));
    ps.add(name + ".b", Tensor({cout}));
    return ps.size() - 2;
}

std::size_t add_linear(ParamSet& ps, const std::string& name, std::size_t in, std::size_t out, Rng& rng) {
    ps.add(name + ".w", he_normal({out, in}, in, rng));
    ps.add(name + ".b", Tensor({out}));
    return ps.size() - 2;
}

}  // namespace

std::size_t argmax(std::span<const double> v) {
    return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

Var ClassifierModel::run(Tape& /*tape*/, Var x, const std::vector<Var>& p) const {
    const Shape& xs = x.shape();
    const bool batched = xs.size() == input_shape.size() + 1;
    if (!batched && xs != input_shape) {
        throw DimensionError("classifier expects input " + shape_string(input_shape) + ", got " + shape_string(xs));
    }
    if (batched && !std::equal(input_shape.begin(), input_shape.end(), xs.begin() + 1)) {
        throw DimensionError("classifier expects batches of " + shape_string(input_shape) + ", got " +
                             shape_string(xs));
    }
    Var h = x;
    for (const LayerSpec& l : layers) {
        switch (l.kind) {
            case LayerKind::Conv:
                h = ops::conv2d(h, p[l.weight], p[l.bias], l.stride, l.pad);
                break;
            case LayerKind::Linear:
                h = ops::linear(h, p[l.weight], p[l.bias]);
                break;
            case LayerKind::Relu:
                h = ops::relu(h);
                break;
            case LayerKind::MaxPool:
                h = ops::max_pool2d(h, l.window);
                break;
            case LayerKind::AvgPool:
                h = ops::avg_pool2d(h, l.window);
                break;
            case LayerKind::Flatten: {
                const Shape& s = h.shape();
                if (batched) {
                    h = ops::reshape(h, {s[0], shape_numel(s) / s[0]});
                } else {
                    h = ops::reshape(h, {shape_numel(s)});
                }
                break;
            }
        }
    }
    return h;
}

Var ClassifierModel::forward(Tape& tape, Var x) const { return run(tape, x, params.bind(tape)); }

Var ClassifierModel::forward_trainable(Tape& tape, Var x) { return run(tape, x, params.bind(tape)); }

Tensor ClassifierModel::logits(const Tensor& x) const {
    Tape tape;
    return forward(tape, tape.parameter(x)).value();
}

int ClassifierModel::predict(const Tensor& x) const { return static_cast<int>(argmax(logits(x).data())); }

std::vector<int> ClassifierModel::predict_batch(const Tensor& batch) const {
    const Tensor z = logits(batch);
    std::vector<int> out(batch.dim(0));
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = static_cast<int>(argmax(z.data().subspan(i * num_classes, num_classes)));
    }
    return out;
}

ClassifierModel build_mlp_classifier(std::size_t input_dim, const std::vector<std::size_t>& hidden,
                                     std::size_t num_classes, std::uint64_t seed) {
    if (hidden.empty()) throw ContractError("build_mlp_classifier: hidden layer list is empty");
    if (input_dim == 0 || num_classes < 2) throw DomainError("build_mlp_classifier: bad input or class count");
    Rng rng(seed);
    ClassifierModel m;
    m.arch = "mlp";
    m.input_shape = {input_dim};
    m.num_classes = num_classes;
    std::size_t in = input_dim;
    for (std::size_t i = 0; i < hidden.size(); ++i) {
        const std::size_t w = add_linear(m.params, "fc" + std::to_string(i), in, hidden[i], rng);
        m.layers.push_back({LayerKind::Linear, 2, 1, 0, w, w + 1});
        m.layers.push_back({LayerKind::Relu});
        in = hidden[i];
    }
    const std::size_t w = add_linear(m.params, "head", in, num_classes, rng);
    m.layers.push_back({LayerKind::Linear, 2, 1, 0, w, w + 1});
    return m;
}

ClassifierModel build_cnn_classifier(const Shape& input_shape, const std::vector<std::size_t>& channels,
                                     std::size_t num_classes, std::uint64_t seed) {
    if (channels.empty()) throw ContractError("build_cnn_classifier: channel list is empty");
    if (input_shape.size() != 3) {
        throw DimensionError("build_cnn_classifier: input must be C x H x W, got " + shape_string(input_shape));
    }
    if (num_classes < 2) throw DomainError("build_cnn_classifier: need at least two classes");
    Rng rng(seed);
    ClassifierModel m;
    m.arch = "cnn";
    m.input_shape = input_shape;
    m.num_classes = num_classes;
    std::size_t c = input_shape[0];
    std::size_t h = input_shape[1];
    std::size_t w = input_shape[2];
    for (std::size_t i = 0; i < channels.size(); ++i) {
        if (h % 2 != 0 || w % 2 != 0) {
            throw DimensionError("build_cnn_classifier: block " + std::to_string(i) + " cannot pool a " +
                                 std::to_string(h) + " x " + std::to_string(w) + " map");
        }
        const std::size_t p = add_conv(m.params, "conv" + std::to_string(i), c, channels[i], 3, rng);
        m.layers.push_back({LayerKind::Conv, 2, 1, 1, p, p + 1});
        m.layers.push_back({LayerKind::Relu});
        m.layers.push_back({LayerKind::MaxPool, 2});
        c = channels[i];
        h /= 2;
        w /= 2;
    }
    m.layers.push_back({LayerKind::Flatten});
    const std::size_t p = add_linear(m.params, "head", c * h * w, num_classes, rng);
    m.layers.push_back({LayerKind::Linear, 2, 1, 0, p, p + 1});
    return m;
}

ClassifierModel build_linear_classifier(Tensor weight, Tensor bias) {
    if (weight.ndim() != 2 || bias.ndim() != 1 || bias.dim(0) != weight.dim(0)) {
        throw DimensionError("build_linear_classifier: weight " + shape_string(weight.shape()) + " and bias " +
                             shape_string(bias.shape()) + " disagree");
    }
    ClassifierModel m;
    m.arch = "linear";
    m.input_shape = {weight.dim(1)};
    m.num_classes = weight.dim(0);
    m.params.add("head.w", std::move(weight));
    m.params.add("head.b", std::move(bias));
    m.layers.push_back({LayerKind::Linear, 2, 1, 0, 0, 1});
    return m;
}

ParamSet build_unet(const UNetLayout& layout, std::uint64_t seed) {
    if (layout.depth < 1) throw DomainError("build_unet: depth must be >= 1");
    if (layout.in_channels == 0 || layout.base_width == 0) throw DomainError("build_unet: zero width");
    Rng rng(seed);
    ParamSet ps;
    const std::size_t bw = layout.base_width;
    std::size_t cin = layout.in_channels;
    for (std::size_t d = 0; d < layout.depth; ++d) {
        add_conv(ps, "unet.enc" + std::to_string(d), cin, bw << d, 3, rng);
        cin = bw << d;
    }
    add_conv(ps, "unet.mid", cin, bw << layout.depth, 3, rng);
    for (std::size_t d = layout.depth; d-- > 0;) {
        add_conv(ps, "unet.dec" + std::to_string(d), (bw << (d + 1)) + (bw << d), bw << d, 3, rng);
    }
    ps.add("unet.head.w", Tensor({layout.in_channels, bw, 1, 1}));
    ps.add("unet.head.b", Tensor({layout.in_channels}));
    return ps;
}

Var unet_forward(const UNetLayout& layout, const std::vector<Var>& p, Var x) {
    const Shape& s = x.shape();
    const std::size_t h = s[s.size() - 2];
    const std::size_t w = s[s.size() - 1];
    const std::size_t f = std::size_t{1} << layout.depth;
    if (h % f != 0 || w % f != 0) {
        throw DimensionError("unet: spatial size " + std::to_string(h) + " x " + std::to_string(w) +
                             " is not divisible by 2^" + std::to_string(layout.depth));
    }
    std::size_t k = 0;
    std::vector<Var> skips;
    Var cur = x;
    for (std::size_t d = 0; d < layout.depth; ++d) {
        cur = ops::relu(ops::conv2d(cur, p[k], p[k + 1], 1, 1));
        k += 2;
        skips.push_back(cur);
        cur = ops::max_pool2d(cur, 2);
    }
    cur = ops::relu(ops::conv2d(cur, p[k], p[k + 1], 1, 1));
    k += 2;
    for (std::size_t d = layout.depth; d-- > 0;) {
        cur = ops::concat_channels(ops::upsample_nearest2d(cur, 2), skips[d]);
        cur = ops::relu(ops::conv2d(cur, p[k], p[k + 1], 1, 1));
        k += 2;
    }
    return ops::conv2d(cur, p[k], p[k + 1], 1, 0);
}

namespace {

void add_identity_theta_head(ParamSet& ps, std::size_t in) {
    ps.add("loc.fc1.w", Tensor({6, in}));
    ps.add("loc.fc1.b", Tensor({6}, std::vector<double>{1.0, 0.0, 0.0, 0.0, 1.0, 0.0}));
}

constexpr std::size_t kLocChannels = 8;
constexpr std::size_t kLocHidden = 32;

}  // namespace

ParamSet build_locnet(const Shape& in_shape, std::uint64_t seed) {
    Rng rng(seed);
    ParamSet ps;
    if (in_shape.size() == 1) {
        add_linear(ps, "loc.fc0", in_shape[0], kLocHidden, rng);
        add_identity_theta_head(ps, kLocHidden);
        return ps;
    }
    if (in_shape.size() != 3) {
        throw DimensionError("build_locnet: input must be a vector or C x H x W, got " + shape_string(in_shape));
    }
    std::size_t h = in_shape[1];
    std::size_t w = in_shape[2];
    add_conv(ps, "loc.conv0", in_shape[0], kLocChannels, 3, rng);
    add_conv(ps, "loc.conv1", kLocChannels, kLocChannels, 3, rng);
    for (int i = 0; i < 2; ++i) {
        if (h % 2 == 0 && w % 2 == 0) {
            h /= 2;
            w /= 2;
        }
    }
    add_linear(ps, "loc.fc0", kLocChannels * h * w, kLocHidden, rng);
    add_identity_theta_head(ps, kLocHidden);
    return ps;
}

Var locnet_forward(const std::vector<Var>& p, Var x) {
    if (p.size() == 4) {
        return ops::linear(ops::relu(ops::linear(x, p[0], p[1])), p[2], p[3]);
    }
    const bool batched = x.shape().size() == 4;
    Var h = x;
    for (std::size_t i = 0; i < 2; ++i) {
        h = ops::relu(ops::conv2d(h, p[2 * i], p[2 * i + 1], 1, 1));
        const Shape& s = h.shape();
        if (s[s.size() - 2] % 2 == 0 && s[s.size() - 1] % 2 == 0) h = ops::max_pool2d(h, 2);
    }
    const Shape& s = h.shape();
    h = batched ? ops::reshape(h, {s[0], shape_numel(s) / s[0]}) : ops::reshape(h, {shape_numel(s)});
    return ops::linear(ops::relu(ops::linear(h, p[4], p[5])), p[6], p[7]);
}

namespace {

ParamSet build_point_perturber(std::size_t dim, std::size_t hidden, Rng& rng) {
    ParamSet ps;
    add_linear(ps, "unet.fc0", dim, hidden, rng);
    add_linear(ps, "unet.fc1", hidden, hidden, rng);
    ps.add("unet.head.w", Tensor({dim, hidden}));
    ps.add("unet.head.b", Tensor({dim}));
    return ps;
}

Var point_perturber_forward(const std::vector<Var>& p, Var x) {
    Var h = ops::relu(ops::linear(x, p[0], p[1]));
    h = ops::relu(ops::linear(h, p[2], p[3]));
    return ops::linear(h, p[4], p[5]);
}

}  // namespace

DefenseModel build_defense(const Shape& input_shape, const DefenseOptions& opts, std::uint64_t seed) {
    DefenseModel d;
    d.input_shape = input_shape;
    d.opts = opts;
    if (input_shape.size() == 1) {
        if (input_shape[0] != 2) throw DimensionError("point defense works on 2-D points only");
        d.domain = DefenseDomain::Points;
        Rng rng(mix_seed(seed, 1));
        if (opts.use_unet) d.unet = build_point_perturber(2, opts.point_hidden, rng);
    } else if (input_shape.size() == 3) {
        d.domain = DefenseDomain::Image;
        if (opts.use_unet) {
            const std::size_t f = std::size_t{1} << opts.depth;
            if (input_shape[1] % f != 0 || input_shape[2] % f != 0) {
                throw DimensionError("defense: image " + shape_string(input_shape) + " not divisible by 2^" +
                                     std::to_string(opts.depth));
            }
            d.unet = build_unet({input_shape[0], opts.base_width, opts.depth}, mix_seed(seed, 1));
        }
    } else {
        throw DimensionError("defense input must be a point or an image, got " + shape_string(input_shape));
    }
    d.locnet = build_locnet(input_shape, mix_seed(seed, 2));
    return d;
}

Var DefenseModel::run(Tape& /*tape*/, Var x, const std::vector<Var>& pu, const std::vector<Var>& pl) const {
    Var r = x;
    if (opts.use_unet) {
        Var delta = domain == DefenseDomain::Points
                        ? point_perturber_forward(pu, x)
                        : unet_forward({input_shape[0], opts.base_width, opts.depth}, pu, x);
        r = opts.residual_unet ? ops::add(x, delta) : delta;
    }
    Var theta = locnet_forward(pl, r);
    if (domain == DefenseDomain::Points) return ops::point_affine(r, theta);
    return ops::warp_image(r, theta);
}

Var DefenseModel::forward(Tape& tape, Var x) const {
    return run(tape, x, unet.bind(tape), locnet.bind(tape));
}

Var DefenseModel::forward_trainable(Tape& tape, Var x) {
    return run(tape, x, unet.bind(tape), locnet.bind(tape));
}

Tensor DefenseModel::apply(const Tensor& x) const {
    Tape tape;
    return forward(tape, tape.parameter(x)).value();
}

std::vector<Tensor*> DefenseModel::trainable() {
    std::vector<Tensor*> out = unet.pointers();
    for (Tensor* t : locnet.pointers()) out.push_back(t);
    return out;
}

std::uint64_t DefenseModel::fingerprint() const { return unet.fingerprint() ^ (locnet.fingerprint() * 31); }

Var single_layer_forward(Var kernel, Var x, int pool_window) {
    return ops::avg_pool2d(ops::relu(ops::conv2d(x, kernel, 1, 0)), pool_window);
}

Tensor single_layer_forward(const Tensor& kernel, const Tensor& x, int pool_window) {
    Tape tape;
    return single_layer_forward(tape.parameter(kernel), tape.parameter(x), pool_window).value();
}

}  // namespace dtlab
