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

#include "zian/backbone.hpp"
#include "zian/layers.hpp"

#include <span>
#include <utility>

namespace zian {

struct AttentionConfig {
    bool enable_co_attention = true;
    bool enable_self_attention = true;
    int inducing_tokens = 16;  // M
    int model_dim = 64;        // D
    int heads = 4;
    /// Co-attention runs on features downsampled by this factor and is
    /// upsampled back afterwards.
    int co_attention_resample = 4;

    void validate() const;
};

template <typename T>
struct CoAttentionSummaries {
    Tensor<T> z_a;     // N x C x H x W
    Tensor<T> z_b;
    Tensor<T> attn_a;  // softmax(S) over columns, N x HW x HW
    Tensor<T> attn_b;  // softmax(S^T) over columns
};

/// S = V_b^T W V_a per batch item, Z_a = V_a softmax(S), Z_b = V_b softmax(S^T),
/// with the softmax normalizing each column.
template <typename T>
CoAttentionSummaries<T> co_attention_summaries(const Tensor<T>& v_a, const Tensor<T>& v_b, const Tensor<T>& w);

template <typename T>
struct CoAttention {
    Tensor<T> w;  // C x C
    ConvBnRelu<T> mix_a;
    ConvBnRelu<T> mix_b;
    int resample = 4;

    /// W starts as I / sqrt(C).
    static CoAttention make(int channels, int resample, Rng& rng);

    /// Returns (V'_a, V'_b) with the input shapes.
    std::pair<Tensor<T>, Tensor<T>> forward(const Tensor<T>& v_a, const Tensor<T>& v_b, bool training) const;
    void collect(const std::string& prefix, ParameterList<T>& out) const;
};

template <typename T>
struct MultiHeadAttention {
    Linear<T> q, k, v, o;
    int heads = 1;

    static MultiHeadAttention make(int dim, int heads, Rng& rng);

    /// query: N x Lq x D, context: N x Lk x D -> N x Lq x D
    Tensor<T> operator()(const Tensor<T>& query, const Tensor<T>& context) const;
    void collect(const std::string& prefix, ParameterList<T>& out) const;
};

/// Squeezed block (M inducing tokens summarize the feature tokens, which then
/// read the summaries back) followed by an expanded block (positional
/// embedding, multi-head self-attention, 2x feed-forward). Pre-norm residual
/// form throughout.
template <typename T>
struct SelfAttentionFusion {
    Conv2d<T> input_proj;  // in_channels -> D, 1x1
    Tensor<T> inducing;    // M x D
    LayerNorm<T> sab_norm_i, sab_norm_x, sab_norm_q, sab_norm_h;
    MultiHeadAttention<T> sab_squeeze, sab_expand;
    Tensor<T> position;    // HW x D, zero at init
    LayerNorm<T> eab_norm_attn, eab_norm_ffn;
    MultiHeadAttention<T> eab_attn;
    Linear<T> ffn_in, ffn_out;
    int grid_h = 0, grid_w = 0;

    static SelfAttentionFusion make(int in_channels, int grid_h, int grid_w, const AttentionConfig& cfg, Rng& rng);

    bool inducing_exceeds_tokens() const { return inducing.dim(0) > grid_h * grid_w; }

    /// Channel-concatenates `inputs` (each N x C_i x h x w) and returns
    /// N x D x h x w.
    Tensor<T> forward(std::span<const Tensor<T>> inputs) const;
    /// The token part alone: N x HW x D -> N x HW x D.
    Tensor<T> forward_tokens(const Tensor<T>& tokens) const;
    void collect(const std::string& prefix, ParameterList<T>& out) const;
};

/// Two 3x3 conv-bn-relu at `width` and a final 1x1 conv to one channel.
template <typename T>
struct FineHead {
    ConvBnRelu<T> conv1, conv2;
    Conv2d<T> out;

    static FineHead make(int in_channels, int width, Rng& rng);

    Tensor<T> forward(const Tensor<T>& x, bool training) const;
    void collect(const std::string& prefix, ParameterList<T>& out) const;
};

/// 1x1 conv C -> 1.
template <typename T>
Tensor<T> roi_heatmap_head(const Tensor<T>& features, const Conv2d<T>& head);

}  // namespace zian
