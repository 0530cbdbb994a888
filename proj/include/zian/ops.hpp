// Copyright 2026 The ZIAN Landmark Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include "zian/tensor.hpp"

#include <span>
#include <vector>

namespace zian {

// Elementwise. `add` broadcasts `b` when its shape is a suffix of `a`'s.
template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> scale(const Tensor<T>& a, T factor);
template <typename T> Tensor<T> relu(const Tensor<T>& x);

template <typename T> Tensor<T> sum(const Tensor<T>& x);
template <typename T> Tensor<T> mean(const Tensor<T>& x);

// Layout.
template <typename T> Tensor<T> reshape(const Tensor<T>& x, Shape shape);
template <typename T> Tensor<T> permute(const Tensor<T>& x, const std::vector<int>& order);
template <typename T> Tensor<T> concat(std::span<const Tensor<T>> xs, int axis);
template <typename T> Tensor<T> concat_channels(std::span<const Tensor<T>> xs);
/// Stacks `count` references of `x` along a new leading axis.
template <typename T> Tensor<T> repeat_batch(const Tensor<T>& x, std::int64_t count);
/// Selects index `i` of the leading axis, dropping it.
template <typename T> Tensor<T> select_batch(const Tensor<T>& x, std::int64_t i);

/// Cross-correlation of NCHW `input` with OCkk `weight`. `bias` may be
/// undefined.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias,
                 int stride, int padding);

/// Train mode normalizes with batch statistics over N,H,W and updates the
/// running buffers in place (unbiased variance, `momentum` weight on the new
/// value). Eval mode normalizes with the running buffers.
template <typename T>
Tensor<T> batchnorm2d(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                      Tensor<T>& running_mean, Tensor<T>& running_var, bool training,
                      double momentum = 0.1, double eps = 1e-5);

/// Normalizes over the last axis.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     double eps = 1e-5);

/// 2-D x 2-D, batched 3-D x 3-D, or one 3-D operand with a shared 2-D operand.
template <typename T> Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

template <typename T> Tensor<T> softmax(const Tensor<T>& x, int axis);

template <typename T>
Tensor<T> bilinear_resize(const Tensor<T>& x, int out_h, int out_w, bool align_corners = false);

enum class Padding { Zeros, Border };

/// Axis-aligned source-coordinate map: src = scale * dst + offset, in pixel
/// centres of the source grid.
struct AxisMap {
    double scale = 1.0;
    double offset = 0.0;
};

/// Bilinear sampling of NCHW `x` on an axis-aligned affine grid. `rows` and
/// `cols` hold either one map shared by the batch or one map per batch item.
template <typename T>
Tensor<T> resample(const Tensor<T>& x, int out_h, int out_w, std::span<const AxisMap> rows,
                   std::span<const AxisMap> cols, Padding padding);

template <typename T> Tensor<T> mse_loss(const Tensor<T>& pred, const Tensor<T>& target);

/// Throws NumericError naming `where` if any element is NaN or infinite.
template <typename T> void require_finite(const Tensor<T>& x, const char* where);

}  // namespace zian
