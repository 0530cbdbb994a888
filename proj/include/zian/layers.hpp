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

#include "zian/ops.hpp"
#include "zian/tensor.hpp"

#include <cstdint>
#include <random>
#include <string>

namespace zian {

using Rng = std::mt19937_64;

/// Independent stream for a named sub-component, so adding a layer does not
/// shift the initialization of the others.
Rng derive_rng(std::uint64_t seed, std::uint64_t salt);
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt);

template <typename T>
std::vector<T> normal_values(std::size_t count, double stddev, Rng& rng);

template <typename T>
struct Conv2d {
    Tensor<T> weight;  // O x C x k x k
    Tensor<T> bias;    // O, or undefined
    int stride = 1;
    int padding = 0;

    /// He-normal initialization with fan-in C*k*k; bias starts at zero.
    static Conv2d make(int in_channels, int out_channels, int kernel, int stride, int padding,
                       bool with_bias, Rng& rng);

    Tensor<T> operator()(const Tensor<T>& x) const { return conv2d(x, weight, bias, stride, padding); }
    void collect(const std::string& prefix, ParameterList<T>& out) const;
};

template <typename T>
struct BatchNorm2d {
    Tensor<T> gamma;
    Tensor<T> beta;
    Tensor<T> running_mean;
    Tensor<T> running_var;

    static BatchNorm2d make(int channels);

    Tensor<T> forward(const Tensor<T>& x, bool training) const;
    void collect(const std::string& prefix, ParameterList<T>& out) const;
};

/// conv (no bias) -> batchnorm -> relu
template <typename T>
struct ConvBnRelu {
    Conv2d<T> conv;
    BatchNorm2d<T> bn;

    static ConvBnRelu make(int in_channels, int out_channels, int kernel, int stride, Rng& rng);

    Tensor<T> forward(const Tensor<T>& x, bool training) const;
    void collect(const std::string& prefix, ParameterList<T>& out) const;
};

/// x[..., in] * W[in x out] + b
template <typename T>
struct Linear {
    Tensor<T> weight;
    Tensor<T> bias;  // undefined when built without bias

    static Linear make(int in_features, int out_features, Rng& rng, bool with_bias = true);

    Tensor<T> operator()(const Tensor<T>& x) const {
        return bias.defined() ? add(matmul(x, weight), bias) : matmul(x, weight);
    }
    void collect(const std::string& prefix, ParameterList<T>& out) const;
};

template <typename T>
struct LayerNorm {
    Tensor<T> gamma;
    Tensor<T> beta;

    static LayerNorm make(int features);

    Tensor<T> operator()(const Tensor<T>& x) const { return layer_norm(x, gamma, beta); }
    void collect(const std::string& prefix, ParameterList<T>& out) const;
};

template <typename T>
std::size_t count_trainable(const ParameterList<T>& params);

template <typename T>
void zero_grads(const ParameterList<T>& params);

}  // namespace zian
