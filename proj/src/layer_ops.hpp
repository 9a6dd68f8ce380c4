#pragma once

// Per-layer kernels shared by the network engine, the trainer and LRP.

#include "apemkit/network.hpp"

namespace apemkit::detail {

Shape output_shape(const Layer& layer, const Shape& in);

Tensor layer_forward(const Layer& layer, const Tensor& in, const Shape& out_shape);

/// Gradient w.r.t. the layer input given the gradient at its output.
Tensor layer_backward(const Layer& layer, const Tensor& in, Tensor grad_out,
                      ReluBackward mode);

/// Accumulates parameter gradients (dense / conv only).
void layer_parameter_gradients(const Layer& layer, const Tensor& in, const Tensor& grad_out,
                               Tensor& grad_weight, Tensor& grad_bias);

/// Transposed application of the linear part: W^T g for dense,
/// the input-side correlation for conv.
Tensor dense_transpose(const DenseLayer& layer, const Tensor& grad_out);
Tensor conv_transpose(const Conv2dLayer& layer, const Shape& in_shape, const Tensor& grad_out);

/// Flat index of the first maximal cell of each pooling window.
std::vector<std::size_t> maxpool_argmax(const MaxPool2dLayer& layer, const Tensor& in,
                                        const Shape& out_shape);

}  // namespace apemkit::detail
