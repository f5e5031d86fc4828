#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>

#include "cobnet/mask.hpp"
#include "cobnet/tensor.hpp"

namespace cobnet {

// Differentiable operations. Every function records itself on the active
// Graph when at least one input requires grad.

/// Stride-1 convolution of a c_in×h×w input with a c_out×c_in×k×k weight,
/// k ∈ {1, 3}. The 3×3 case zero-pads by one so h×w is preserved.
Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias);

/// Bin (i, j) averages rows [floor(i·h/out_h), ceil((i+1)·h/out_h)) and the
/// analogous columns. Bins overlap when the sizes do not divide.
Tensor adaptive_avg_pool(const Tensor& input, std::size_t out_h, std::size_t out_w);

/// Corner-aligned bilinear interpolation: source row = i·(h−1)/(out_h−1),
/// or the centre row when out_h == 1.
Tensor bilinear_resize(const Tensor& input, std::size_t out_h, std::size_t out_w);

Tensor sigmoid(const Tensor& input);
Tensor relu(const Tensor& input);

/// Mean over pixels of −log softmax(logits)[target]; channel 0 is background.
Tensor softmax_cross_entropy(const Tensor& logits, const Mask& target);

enum class ElementwiseKind { mul, add, sub, one_minus };

// Shapes must match, except that a 1×h×w operand broadcasts over the
// channels of a c×h×w operand.
Tensor elementwise(const Tensor& a, const Tensor& b, ElementwiseKind kind);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor one_minus(const Tensor& a);

Tensor concat_channels(std::span<const Tensor> parts);
Tensor concat_channels(std::initializer_list<Tensor> parts);
Tensor slice_channels(const Tensor& input, std::size_t begin, std::size_t count);

Tensor sum(const Tensor& input);
Tensor scale(const Tensor& input, double factor);

}  // namespace cobnet
