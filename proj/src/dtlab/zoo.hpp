#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "dtlab/tape.hpp"

namespace dtlab {

// Ordered, uniquely named parameter tensors. Element addresses are stable
// once construction is finished, which lets tapes refer to them directly.
class ParamSet {
public:
    Tensor& add(std::string name, Tensor value);

    std::size_t size() const noexcept { return tensors_.size(); }
    bool empty() const noexcept { return tensors_.empty(); }
    Tensor& operator[](std::size_t i) { return tensors_.at(i); }
    const Tensor& operator[](std::size_t i) const { return tensors_.at(i); }
    const std::string& name(std::size_t i) const { return names_.at(i); }
    Tensor& at(const std::string& name);
    const Tensor& at(const std::string& name) const;

    std::size_t num_values() const;
    std::vector<Tensor*> pointers();
    void set_trainable(bool on);
    void zero_grad();
    // FNV-1a over names, shapes and raw value bytes.
    std::uint64_t fingerprint() const;

    // Binds every tensor to the tape; the const overload never tracks gradients.
    std::vector<Var> bind(Tape& tape);
    std::vector<Var> bind(Tape& tape) const;

private:
    std::vector<std::string> names_;
    std::vector<Tensor> tensors_;
};

enum class LayerKind { Conv, Linear, Relu, MaxPool, AvgPool, Flatten };

struct LayerSpec {
    static constexpr std::size_t none = std::numeric_limits<std::size_t>::max();

    LayerKind kind = LayerKind::Relu;
    int window = 2;
    int stride = 1;
    int pad = 0;
    std::size_t weight = none;
    std::size_t bias = none;
};

class ClassifierModel {
public:
    std::string arch;
    Shape input_shape;
    std::size_t num_classes = 0;
    std::vector<LayerSpec> layers;
    ParamSet params;

    // x has input_shape, or a leading batch axis on top of it.
    Var forward(Tape& tape, Var x) const;
    Var forward_trainable(Tape& tape, Var x);

    Tensor logits(const Tensor& x) const;
    int predict(const Tensor& x) const;
    std::vector<int> predict_batch(const Tensor& batch) const;

private:
    Var run(Tape& tape, Var x, const std::vector<Var>& p) const;
};

ClassifierModel build_mlp_classifier(std::size_t input_dim, const std::vector<std::size_t>& hidden,
                                     std::size_t num_classes, std::uint64_t seed);
// conv3x3 -> relu -> maxpool2 per entry of `channels`, then a linear head.
ClassifierModel build_cnn_classifier(const Shape& input_shape, const std::vector<std::size_t>& channels,
                                     std::size_t num_classes, std::uint64_t seed);
// Single affine layer: logits = weight * x + bias.
ClassifierModel build_linear_classifier(Tensor weight, Tensor bias);

std::size_t argmax(std::span<const double> v);

struct UNetLayout {
    std::size_t in_channels = 1;
    std::size_t base_width = 8;
    std::size_t depth = 2;
};

// Encoder/decoder with concatenated skips and a zero-initialized 1x1 head.
ParamSet build_unet(const UNetLayout& layout, std::uint64_t seed);
Var unet_forward(const UNetLayout& layout, const std::vector<Var>& p, Var x);

// Small conv stack ending in a 6-way linear layer with zero weight and an
// identity-affine bias.
ParamSet build_locnet(const Shape& in_shape, std::uint64_t seed);
Var locnet_forward(const std::vector<Var>& p, Var x);

enum class DefenseDomain { Image, Points };

struct DefenseOptions {
    bool use_unet = true;
    bool residual_unet = true;
    std::size_t base_width = 8;
    std::size_t depth = 2;
    std::size_t point_hidden = 32;
};

// The defense transformer: optional (residual) U-Net perturbation followed by
// an affine warp whose parameters come from the localization network.
class DefenseModel {
public:
    DefenseDomain domain = DefenseDomain::Image;
    Shape input_shape;
    DefenseOptions opts;
    ParamSet unet;
    ParamSet locnet;

    Var forward(Tape& tape, Var x) const;
    Var forward_trainable(Tape& tape, Var x);
    Tensor apply(const Tensor& x) const;

    std::vector<Tensor*> trainable();
    std::size_t num_values() const { return unet.num_values() + locnet.num_values(); }
    std::uint64_t fingerprint() const;

private:
    Var run(Tape& tape, Var x, const std::vector<Var>& pu, const std::vector<Var>& pl) const;
};

DefenseModel build_defense(const Shape& input_shape, const DefenseOptions& opts, std::uint64_t seed);

// avg_pool(relu(conv(x, kernel))) with stride 1 and no padding.
Var single_layer_forward(Var kernel, Var x, int pool_window);
Tensor single_layer_forward(const Tensor& kernel, const Tensor& x, int pool_window);

}  // namespace dtlab
