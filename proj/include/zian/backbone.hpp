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

#include "zian/layers.hpp"

#include <cstdint>
#include <stdexcept>
#include <vector>

namespace zian {

class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct BackboneConfig {
    /// Width of each stage; stage 0 runs at input resolution, every later
    /// stage halves it.
    std::vector<int> channels{16, 32, 32};
    int feature_channels = 32;
    int output_stride = 4;
    int in_channels = 3;

    int num_stages() const { return static_cast<int>(channels.size()); }
    /// Throws ConfigError describing the first inconsistency.
    void validate() const;
};

template <typename T>
struct BackboneOutput {
    Tensor<T> features;  // N x C x H/s x W/s
    Tensor<T> logits;    // N x 1 x H/s x W/s, undefined without a head
};

/// conv-bn-relu pyramid with one extra stride-2 level that is upsampled and
/// merged back at the output stride, followed by a 1x1 heatmap head.
template <typename T>
class Backbone {
public:
    static Backbone build(const BackboneConfig& cfg, std::uint64_t seed, bool with_head = true);

    BackboneOutput<T> forward(const Tensor<T>& image, bool training) const;

    void collect(const std::string& prefix, ParameterList<T>& out) const;
    std::size_t parameter_count() const;

    const BackboneConfig& config() const { return m_cfg; }
    bool has_head() const { return m_head.weight.defined(); }
    /// Throws DimensionError unless both sides are positive multiples of the
    /// output stride.
    void check_input(std::int64_t height, std::int64_t width) const;

private:
    BackboneConfig m_cfg;
    std::vector<ConvBnRelu<T>> m_stages;
    ConvBnRelu<T> m_down;
    ConvBnRelu<T> m_fuse;
    Conv2d<T> m_head;
};

}  // namespace zian
