#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "umt/rng.hpp"
#include "umt/tensor.hpp"

// Differentiable tensor operations. Matrix operations take rank-2 tensors;
// elementwise operations accept any shape.
namespace umt::ops {

/// (m x k) * (k x n). Throws ShapeError naming both shapes on mismatch.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
/// Adds a length-n vector (shape {n} or {1, n}) to every row of an m x n matrix.
Tensor add_row(const Tensor& a, const Tensor& row);

Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
/// log(1 + exp(a)), evaluated without overflow.
Tensor softplus(const Tensor& a);

/// Max-stabilised softmax along `axis`. Non-finite inputs raise NumericError.
Tensor softmax(const Tensor& a, std::size_t axis);

inline constexpr double kLayerNormEpsilon = 1e-5;

/// Normalises each row of an m x n matrix to zero mean and unit (population)
/// variance, then applies the per-column affine gain and bias.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias);

/// Inverted dropout. Identity when `training` is false or `rate` is zero;
/// `rng` is only touched in training mode with a positive rate.
Tensor dropout(const Tensor& x, double rate, Rng& rng, bool training);

Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t count);
Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t count);
Tensor concat_cols(const std::vector<Tensor>& parts);
/// Rows of `a` at `indices`, in order (repeats allowed).
Tensor gather_rows(const Tensor& a, std::span<const std::size_t> indices);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

}  // namespace umt::ops
