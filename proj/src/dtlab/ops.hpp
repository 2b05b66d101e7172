#pragma once

#include <span>
#include <vector>

#include "dtlab/tape.hpp"

// Differentiable building blocks. Image ops accept either C x H x W or a
// batched N x C x H x W input and return the same rank they were given.
namespace dtlab::ops {

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
Var reshape(Var a, Shape shape);

Var sum(Var a);
Var mean(Var a);

// Plain matrix product of M x K and K x N.
Var matmul(Var a, Var b);
// x: B x K (or K), weight: N x K, bias: N. Returns x * weight^T + bias.
Var linear(Var x, Var weight, Var bias);

// Cross-correlation with zero padding. weight: C_out x C_in x k x k.
Var conv2d(Var x, Var weight, int stride = 1, int pad = 0);
Var conv2d(Var x, Var weight, Var bias, int stride = 1, int pad = 0);
Var add_channel_bias(Var x, Var bias);

Var relu(Var x);
Var avg_pool2d(Var x, int window);
// Ties go to the first element in row-major window order.
Var max_pool2d(Var x, int window);
Var upsample_nearest2d(Var x, int factor);
// Concatenates along the channel axis.
Var concat_channels(Var a, Var b);

// Mean over the batch of -log softmax(logits)[label]. logits: B x C or C.
Var softmax_cross_entropy(Var logits, std::span<const int> labels);

}  // namespace dtlab::ops
