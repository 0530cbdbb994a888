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


#include "zian/backbone.hpp"

#include <string>

namespace zian {

void BackboneConfig::validate() const {
    if (channels.empty())
        throw ConfigError("backbone: at least one stage is required");
    for (int c : channels)
        if (c < 1)
            throw ConfigError("backbone: stage widths must be >= 1");
    if (feature_channels < 1)
        throw ConfigError("backbone: feature_channels must be >= 1");
    if (in_channels < 1)
        throw ConfigError("backbone: in_channels must be >= 1");
    const int implied = 1 << (num_stages() - 1);
    if (output_stride != implied)
        throw ConfigError("backbone: output_stride " + std::to_string(output_stride) + " does not match " +
                          std::to_string(num_stages()) + " stages (stride " + std::to_string(implied) + ")");
}

template <typename T>
Backbone<T> Backbone<T>::build(const BackboneConfig& cfg, std::uint64_t seed, bool with_head) {
    cfg.validate();
    Backbone b;
    b.m_cfg = cfg;
    std::uint64_t salt = 0;
    int prev = cfg.in_channels;
    for (int i = 0; i < cfg.num_stages(); ++i) {
        auto rng = derive_rng(seed, salt++);
        b.m_stages.push_back(ConvBnRelu<T>::make(prev, cfg.channels[static_cast<std::size_t>(i)], 3, i == 0 ? 1 : 2, rng));
        prev = cfg.channels[static_cast<std::size_t>(i)];
    }
    auto rd = derive_rng(seed, 100);
    b.m_down = ConvBnRelu<T>::make(prev, prev, 3, 2, rd);
    auto rf = derive_rng(seed, 101);
    b.m_fuse = ConvBnRelu<T>::make(2 * prev, cfg.feature_channels, 3, 1, rf);
    if (with_head) {
        auto rh = derive_rng(seed, 102);
        b.m_head = Conv2d<T>::make(cfg.feature_channels, 1, 1, 1, 0, true, rh);
    }
    return b;
}

template <typename T>
void Backbone<T>::check_input(std::int64_t height, std::int64_t width) const {
    const auto s = m_cfg.output_stride;
    if (height < s || height % s != 0)
        throw DimensionError("backbone_forward", "H (must be a positive multiple of " + std::to_string(s) + ")", s,
                             height);
    if (width < s || width % s != 0)
        throw DimensionError("backbone_forward", "W (must be a positive multiple of " + std::to_string(s) + ")", s,
                             width);
}

template <typename T>
BackboneOutput<T> Backbone<T>::forward(const Tensor<T>& image, bool training) const {
    if (image.rank() != 4)
        throw DimensionError("backbone_forward", "rank", 4, image.rank());
    if (image.dim(1) != m_cfg.in_channels)
        throw DimensionError("backbone_forward", "C", m_cfg.in_channels, image.dim(1));
    check_input(image.dim(2), image.dim(3));

    Tensor<T> x = image;
    for (const auto& stage : m_stages)
        x = stage.forward(x, training);
    const auto h = static_cast<int>(x.dim(2)), w = static_cast<int>(x.dim(3));
    const auto coarse = bilinear_resize(m_down.forward(x, training), h, w);
    const std::vector<Tensor<T>> merged{x, coarse};
    BackboneOutput<T> out;
    out.features = m_fuse.forward(concat_channels<T>(merged), training);
    if (has_head())
        out.logits = m_head(out.features);
    return out;
}

template <typename T>
void Backbone<T>::collect(const std::string& prefix, ParameterList<T>& out) const {
    for (std::size_t i = 0; i < m_stages.size(); ++i)
        m_stages[i].collect(prefix + ".stage" + std::to_string(i), out);
    m_down.collect(prefix + ".down", out);
    m_fuse.collect(prefix + ".fuse", out);
    if (has_head())
        m_head.collect(prefix + ".head", out);
}

template <typename T>
std::size_t Backbone<T>::parameter_count() const {
    ParameterList<T> params;
    collect("b", params);
    return count_trainable(params);
}

template class Backbone<float>;
template class Backbone<double>;

}  // namespace zian
