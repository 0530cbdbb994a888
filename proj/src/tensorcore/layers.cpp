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

#include "zian/layers.hpp"

#include <cmath>

namespace zian {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

Rng derive_rng(std::uint64_t seed, std::uint64_t salt) { return Rng(mix_seed(seed, salt)); }

template <typename T>
std::vector<T> normal_values(std::size_t count, double stddev, Rng& rng) {
    std::normal_distribution<double> dist(0.0, stddev);
    std::vector<T> v(count);
    for (auto& x : v)
        x = static_cast<T>(dist(rng));
    return v;
}

template <typename T>
Conv2d<T> Conv2d<T>::make(int in_channels, int out_channels, int kernel, int stride, int padding,
                          bool with_bias, Rng& rng) {
    Conv2d c;
    const auto fan_in = static_cast<double>(in_channels * kernel * kernel);
    const Shape shape{out_channels, in_channels, kernel, kernel};
    c.weight = Tensor<T>::parameter(
        shape, normal_values<T>(static_cast<std::size_t>(shape_numel(shape)), std::sqrt(2.0 / fan_in), rng));
    if (with_bias)
        c.bias = Tensor<T>::parameter({out_channels}, std::vector<T>(static_cast<std::size_t>(out_channels)));
    c.stride = stride;
    c.padding = padding;
    return c;
}

template <typename T>
void Conv2d<T>::collect(const std::string& prefix, ParameterList<T>& out) const {
    out.push_back({prefix + ".weight", weight, true});
    if (bias.defined())
        out.push_back({prefix + ".bias", bias, true});
}

template <typename T>
BatchNorm2d<T> BatchNorm2d<T>::make(int channels) {
    const auto n = static_cast<std::size_t>(channels);
    BatchNorm2d b;
    b.gamma = Tensor<T>::parameter({channels}, std::vector<T>(n, T(1)));
    b.beta = Tensor<T>::parameter({channels}, std::vector<T>(n, T(0)));
    b.running_mean = Tensor<T>({channels}, T(0));
    b.running_var = Tensor<T>({channels}, T(1));
    return b;
}

template <typename T>
Tensor<T> BatchNorm2d<T>::forward(const Tensor<T>& x, bool training) const {
    auto rm = running_mean;
    auto rv = running_var;
    return batchnorm2d(x, gamma, beta, rm, rv, training);
}

template <typename T>
void BatchNorm2d<T>::collect(const std::string& prefix, ParameterList<T>& out) const {
    out.push_back({prefix + ".gamma", gamma, true});
    out.push_back({prefix + ".beta", beta, true});
    out.push_back({prefix + ".running_mean", running_mean, false});
    out.push_back({prefix + ".running_var", running_var, false});
}

template <typename T>
ConvBnRelu<T> ConvBnRelu<T>::make(int in_channels, int out_channels, int kernel, int stride, Rng& rng) {
    return {Conv2d<T>::make(in_channels, out_channels, kernel, stride, kernel / 2, false, rng),
            BatchNorm2d<T>::make(out_channels)};
}

template <typename T>
Tensor<T> ConvBnRelu<T>::forward(const Tensor<T>& x, bool training) const {
    return relu(bn.forward(conv(x), training));
}

template <typename T>
void ConvBnRelu<T>::collect(const std::string& prefix, ParameterList<T>& out) const {
    conv.collect(prefix + ".conv", out);
    bn.collect(prefix + ".bn", out);
}

template <typename T>
Linear<T> Linear<T>::make(int in_features, int out_features, Rng& rng, bool with_bias) {
    Linear l;
    const Shape shape{in_features, out_features};
    l.weight = Tensor<T>::parameter(
        shape, normal_values<T>(static_cast<std::size_t>(shape_numel(shape)),
                                1.0 / std::sqrt(static_cast<double>(in_features)), rng));
    if (with_bias)
        l.bias = Tensor<T>::parameter({out_features}, std::vector<T>(static_cast<std::size_t>(out_features)));
    return l;
}

template <typename T>
void Linear<T>::collect(const std::string& prefix, ParameterList<T>& out) const {
    out.push_back({prefix + ".weight", weight, true});
    if (bias.defined())
        out.push_back({prefix + ".bias", bias, true});
}

template <typename T>
LayerNorm<T> LayerNorm<T>::make(int features) {
    const auto n = static_cast<std::size_t>(features);
    return {Tensor<T>::parameter({features}, std::vector<T>(n, T(1))),
            Tensor<T>::parameter({features}, std::vector<T>(n, T(0)))};
}

template <typename T>
void LayerNorm<T>::collect(const std::string& prefix, ParameterList<T>& out) const {
    out.push_back({prefix + ".gamma", gamma, true});
    out.push_back({prefix + ".beta", beta, true});
}

template <typename T>
std::size_t count_trainable(const ParameterList<T>& params) {
    std::size_t n = 0;
    for (const auto& p : params)
        if (p.trainable)
            n += p.tensor.size();
    return n;
}

template <typename T>
void zero_grads(const ParameterList<T>& params) {
    for (const auto& p : params)
        if (p.trainable) {
            auto t = p.tensor;
            t.zero_grad();
        }
}

template std::vector<float> normal_values(std::size_t, double, Rng&);
template std::vector<double> normal_values(std::size_t, double, Rng&);
template struct Conv2d<float>;
template struct Conv2d<double>;
template struct BatchNorm2d<float>;
template struct BatchNorm2d<double>;
template struct ConvBnRelu<float>;
template struct ConvBnRelu<double>;
template struct Linear<float>;
template struct Linear<double>;
template struct LayerNorm<float>;
template struct LayerNorm<double>;
template std::size_t count_trainable(const ParameterList<float>&);
template std::size_t count_trainable(const ParameterList<double>&);
template void zero_grads(const ParameterList<float>&);
template void zero_grads(const ParameterList<double>&);

}  // namespace zian
