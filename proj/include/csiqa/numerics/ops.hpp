#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "csiqa/numerics/tensor.hpp"

// Differentiable primitives. Every function records a backward closure on the
// active GradTape when at least one input requires a gradient.
namespace csiqa::nn {

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

// a[m x n] + bias[n], bias repeated over rows.
Tensor add_bias(const Tensor& a, const Tensor& bias);
Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double value);
// a * s where s is a one-element tensor (learnable scale factors).
Tensor scale_by(const Tensor& a, const Tensor& s);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

Tensor softmax(const Tensor& x, std::size_t axis);
// Normalizes over the last axis, then applies gain and bias (each of that length).
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-9);

// 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3)))
Tensor gelu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor relu(const Tensor& x);

Tensor reshape(const Tensor& a, Shape shape);
Tensor narrow(const Tensor& a, std::size_t axis, std::size_t start, std::size_t length);
Tensor concat(std::span<const Tensor> parts, std::size_t axis);
// out.flat[i] = a.flat[index[i]]; gradient is scattered back with accumulation.
Tensor gather(const Tensor& a, std::vector<std::size_t> index, Shape out_shape);

// Cross-correlation of x[Cin x H x W] with w[Cout x Cin x kh x kw], zero padding.
// bias may be undefined.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, std::size_t stride,
              std::size_t padding);

// Mean squared error between two tensors of equal shape.
Tensor mse(const Tensor& prediction, const Tensor& target);

}  // namespace csiqa::nn
