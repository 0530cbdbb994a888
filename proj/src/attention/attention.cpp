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


#include "zian/attention.hpp"

#include <cmath>
#include <string>

namespace zian {

void AttentionConfig::validate() const {
    if (inducing_tokens < 1)
        throw ConfigError("attention: M must be >= 1");
    if (model_dim < 1 || heads < 1)
        throw ConfigError("attention: D and heads must be >= 1");
    if (model_dim % heads != 0)
        throw ConfigError("attention: D=" + std::to_string(model_dim) + " is not divisible by heads=" +
                          std::to_string(heads));
    if (co_attention_resample < 1)
        throw ConfigError("attention: co_attention_resample must be >= 1");
}

template <typename T>
CoAttentionSummaries<T> co_attention_summaries(const Tensor<T>& v_a, const Tensor<T>& v_b, const Tensor<T>& w) {
    if (v_a.rank() != 4)
        throw DimensionError("co_attention", "rank", 4, v_a.rank());
    for (int ax = 0; ax < 4; ++ax)
        if (v_b.rank() != 4 || v_b.dim(ax) != v_a.dim(ax))
            throw DimensionError("co_attention", "V_b axis " + std::to_string(ax), v_a.dim(ax),
                                 v_b.rank() == 4 ? v_b.dim(ax) : v_b.rank());
    const auto n = v_a.dim(0), c = v_a.dim(1), h = v_a.dim(2), wd = v_a.dim(3);
    if (w.rank() != 2 || w.dim(0) != c || w.dim(1) != c)
        throw DimensionError("co_attention", "W", c, w.rank() == 2 ? w.dim(0) : w.rank());
    const auto a = reshape(v_a, {n, c, h * wd});
    const auto b = reshape(v_b, {n, c, h * wd});
    // rows of S index positions of V_b, columns positions of V_a
    const auto s = matmul(permute(b, {0, 2, 1}), matmul(w, a));
    CoAttentionSummaries<T> out;
    out.attn_a = softmax(s, 1);
    out.attn_b = softmax(permute(s, {0, 2, 1}), 1);
    out.z_a = reshape(matmul(a, out.attn_a), {n, c, h, wd});
    out.z_b = reshape(matmul(b, out.attn_b), {n, c, h, wd});
    return out;
}

template <typename T>
CoAttention<T> CoAttention<T>::make(int channels, int resample, Rng& rng) {
    CoAttention ca;
    std::vector<T> eye(static_cast<std::size_t>(channels * channels), T(0));
    const T diag = static_cast<T>(1.0 / std::sqrt(static_cast<double>(channels)));
    for (int i = 0; i < channels; ++i)
        eye[static_cast<std::size_t>(i * channels + i)] = diag;
    ca.w = Tensor<T>::parameter({channels, channels}, std::move(eye));
    ca.mix_a = ConvBnRelu<T>::make(2 * channels, channels, 3, 1, rng);
    ca.mix_b = ConvBnRelu<T>::make(2 * channels, channels, 3, 1, rng);
    ca.resample = resample;
    return ca;
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> CoAttention<T>::forward(const Tensor<T>& v_a, const Tensor<T>& v_b,
                                                        bool training) const {
    if (v_a.shape() != v_b.shape())
        throw DimensionError("co_attention", "V_b shape " + shape_string(v_b.shape()) + " differs from V_a shape " +
                                                 shape_string(v_a.shape()));
    const auto h = static_cast<int>(v_a.dim(2)), w_ = static_cast<int>(v_a.dim(3));
    Tensor<T> a = v_a, b = v_b;
    if (resample > 1) {
        const int sh = std::max(1, h / resample), sw = std::max(1, w_ / resample);
        a = bilinear_resize(v_a, sh, sw);
        b = bilinear_resize(v_b, sh, sw);
    }
    const auto z = co_attention_summaries(a, b, w);
    const std::vector<Tensor<T>> xa{z.z_a, a}, xb{z.z_b, b};
    auto out_a = mix_a.forward(concat_channels<T>(xa), training);
    auto out_b = mix_b.forward(concat_channels<T>(xb), training);
    if (resample > 1) {
        out_a = bilinear_resize(out_a, h, w_);
        out_b = bilinear_resize(out_b, h, w_);
    }
    return {out_a, out_b};
}

template <typename T>
void CoAttention<T>::collect(const std::string& prefix, ParameterList<T>& out) const {
    out.push_back({prefix + ".w", w, true});
    mix_a.collect(prefix + ".mix_a", out);
    mix_b.collect(prefix + ".mix_b", out);
}

template <typename T>
MultiHeadAttention<T> MultiHeadAttention<T>::make(int dim, int heads, Rng& rng) {
    if (heads < 1 || dim % heads != 0)
        throw ConfigError("attention: D=" + std::to_string(dim) + " is not divisible by heads=" + std::to_string(heads));
    MultiHeadAttention m;
    m.q = Linear<T>::make(dim, dim, rng);
    // a key bias only shifts every score of a query equally, which softmax ignores
    m.k = Linear<T>::make(dim, dim, rng, false);
    m.v = Linear<T>::make(dim, dim, rng);
    m.o = Linear<T>::make(dim, dim, rng);
    m.heads = heads;
    return m;
}

template <typename T>
Tensor<T> MultiHeadAttention<T>::operator()(const Tensor<T>& query, const Tensor<T>& context) const {
    const auto n = query.dim(0), lq = query.dim(1), lk = context.dim(1), d = query.dim(2);
    const std::int64_t hd = heads, dh = d / hd;
    auto split = [&](const Tensor<T>& x, std::int64_t len) {
        return reshape(permute(reshape(x, {n, len, hd, dh}), {0, 2, 1, 3}), {n * hd, len, dh});
    };
    const auto qh = split(q(query), lq);
    const auto kh = split(k(context), lk);
    const auto vh = split(v(context), lk);
    const auto scores = scale(matmul(qh, permute(kh, {0, 2, 1})), static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh))));
    const auto ctx = matmul(softmax(scores, 2), vh);
    return o(reshape(permute(reshape(ctx, {n, hd, lq, dh}), {0, 2, 1, 3}), {n, lq, d}));
}

template <typename T>
void MultiHeadAttention<T>::collect(const std::string& prefix, ParameterList<T>& out) const {
    q.collect(prefix + ".q", out);
    k.collect(prefix + ".k", out);
    v.collect(prefix + ".v", out);
    o.collect(prefix + ".o", out);
}

template <typename T>
SelfAttentionFusion<T> SelfAttentionFusion<T>::make(int in_channels, int grid_h, int grid_w,
                                                    const AttentionConfig& cfg, Rng& rng) {
    cfg.validate();
    const int d = cfg.model_dim;
    SelfAttentionFusion f;
    f.input_proj = Conv2d<T>::make(in_channels, d, 1, 1, 0, true, rng);
    f.inducing = Tensor<T>::parameter(
        {cfg.inducing_tokens, d},
        normal_values<T>(static_cast<std::size_t>(cfg.inducing_tokens * d), 1.0, rng));
    f.sab_norm_i = LayerNorm<T>::make(d);
    f.sab_norm_x = LayerNorm<T>::make(d);
    f.sab_norm_q = LayerNorm<T>::make(d);
    f.sab_norm_h = LayerNorm<T>::make(d);
    f.sab_squeeze = MultiHeadAttention<T>::make(d, cfg.heads, rng);
    f.sab_expand = MultiHeadAttention<T>::make(d, cfg.heads, rng);
    f.position = Tensor<T>::parameter({grid_h * grid_w, d}, std::vector<T>(static_cast<std::size_t>(grid_h * grid_w * d)));
    f.eab_norm_attn = LayerNorm<T>::make(d);
    f.eab_norm_ffn = LayerNorm<T>::make(d);
    f.eab_attn = MultiHeadAttention<T>::make(d, cfg.heads, rng);
    f.ffn_in = Linear<T>::make(d, 2 * d, rng);
    f.ffn_out = Linear<T>::make(2 * d, d, rng);
    f.grid_h = grid_h;
    f.grid_w = grid_w;
    return f;
}

template <typename T>
Tensor<T> SelfAttentionFusion<T>::forward_tokens(const Tensor<T>& tokens) const {
    if (tokens.rank() != 3 || tokens.dim(1) != position.dim(0) || tokens.dim(2) != position.dim(1))
        throw DimensionError("self_attention_fusion", "tokens", position.dim(0) * position.dim(1),
                             tokens.rank() == 3 ? tokens.dim(1) * tokens.dim(2) : tokens.rank());
    Tensor<T> x = tokens;
    // squeezed block
    const auto ind = repeat_batch(inducing, x.dim(0));
    const auto summary = add(ind, sab_squeeze(sab_norm_i(ind), sab_norm_x(x)));
    x = add(x, sab_expand(sab_norm_q(x), sab_norm_h(summary)));
    // expanded block
    x = add(x, position);
    const auto xn = eab_norm_attn(x);
    x = add(x, eab_attn(xn, xn));
    x = add(x, ffn_out(relu(ffn_in(eab_norm_ffn(x)))));
    return x;
}

template <typename T>
Tensor<T> SelfAttentionFusion<T>::forward(std::span<const Tensor<T>> inputs) const {
    for (const auto& t : inputs) {
        if (t.rank() != 4)
            throw DimensionError("self_attention_fusion", "rank", 4, t.rank());
        if (t.dim(2) != grid_h)
            throw DimensionError("self_attention_fusion", "H", grid_h, t.dim(2));
        if (t.dim(3) != grid_w)
            throw DimensionError("self_attention_fusion", "W", grid_w, t.dim(3));
    }
    const auto proj = input_proj(concat_channels<T>(inputs));
    const auto n = proj.dim(0), d = proj.dim(1), l = static_cast<std::int64_t>(grid_h) * grid_w;
    const auto tokens = permute(reshape(proj, {n, d, l}), {0, 2, 1});
    const auto out = reshape(permute(forward_tokens(tokens), {0, 2, 1}), {n, d, grid_h, grid_w});
    require_finite(out, "self_attention_fusion");
    return out;
}

template <typename T>
void SelfAttentionFusion<T>::collect(const std::string& prefix, ParameterList<T>& out) const {
    input_proj.collect(prefix + ".input_proj", out);
    out.push_back({prefix + ".inducing", inducing, true});
    sab_norm_i.collect(prefix + ".sab.norm_i", out);
    sab_norm_x.collect(prefix + ".sab.norm_x", out);
    sab_norm_q.collect(prefix + ".sab.norm_q", out);
    sab_norm_h.collect(prefix + ".sab.norm_h", out);
    sab_squeeze.collect(prefix + ".sab.squeeze", out);
    sab_expand.collect(prefix + ".sab.expand", out);
    out.push_back({prefix + ".eab.position", position, true});
    eab_norm_attn.collect(prefix + ".eab.norm_attn", out);
    eab_norm_ffn.collect(prefix + ".eab.norm_ffn", out);
    eab_attn.collect(prefix + ".eab.attn", out);
    ffn_in.collect(prefix + ".eab.ffn_in", out);
    ffn_out.collect(prefix + ".eab.ffn_out", out);
}

template <typename T>
FineHead<T> FineHead<T>::make(int in_channels, int width, Rng& rng) {
    return {ConvBnRelu<T>::make(in_channels, width, 3, 1, rng), ConvBnRelu<T>::make(width, width, 3, 1, rng),
            Conv2d<T>::make(width, 1, 1, 1, 0, true, rng)};
}

template <typename T>
Tensor<T> FineHead<T>::forward(const Tensor<T>& x, bool training) const {
    return out(conv2.forward(conv1.forward(x, training), training));
}

template <typename T>
void FineHead<T>::collect(const std::string& prefix, ParameterList<T>& params) const {
    conv1.collect(prefix + ".conv1", params);
    conv2.collect(prefix + ".conv2", params);
    out.collect(prefix + ".out", params);
}

template <typename T>
Tensor<T> roi_heatmap_head(const Tensor<T>& features, const Conv2d<T>& head) {
    if (!head.weight.defined() || head.weight.dim(0) != 1)
        throw DimensionError("roi_heatmap_head", "O", 1, head.weight.defined() ? head.weight.dim(0) : 0);
    return head(features);
}

#define ZIAN_INSTANTIATE_ATTENTION(T)                                                                      \
    template CoAttentionSummaries<T> co_attention_summaries(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&); \
    template struct CoAttention<T>;                                                                       \
    template struct MultiHeadAttention<T>;                                                                \
    template struct SelfAttentionFusion<T>;                                                               \
    template struct FineHead<T>;                                                                          \
    template Tensor<T> roi_heatmap_head(const Tensor<T>&, const Conv2d<T>&);

ZIAN_INSTANTIATE_ATTENTION(float)
ZIAN_INSTANTIATE_ATTENTION(double)

}  // namespace zian
