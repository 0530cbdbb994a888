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


#include "zian/model.hpp"

#include <algorithm>
#include <cmath>

namespace zian {

std::string to_string(Ablation a) {
    switch (a) {
    case Ablation::BackboneOnly: return "backbone-only";
    case Ablation::OneRoi: return "1roi";
    case Ablation::OneRoiSa: return "1roi+sa";
    case Ablation::MultiRoiSa: return "mr+sa";
    case Ablation::Full: return "full";
    }
    return "?";
}

Ablation parse_ablation(const std::string& name) {
    for (auto a : {Ablation::BackboneOnly, Ablation::OneRoi, Ablation::OneRoiSa, Ablation::MultiRoiSa, Ablation::Full})
        if (name == to_string(a))
            return a;
    throw ConfigError("unknown ablation '" + name + "' (expected backbone-only, 1roi, 1roi+sa, mr+sa or full)");
}

void ModelConfig::apply_ablation(Ablation a) {
    use_rois = a != Ablation::BackboneOnly;
    const bool multi = a == Ablation::MultiRoiSa || a == Ablation::Full;
    if (multi) {
        if (roi.scales.size() < 2)
            roi.scales = {1.0, 2.0};
    } else {
        roi.scales.resize(1);
        if (roi.scales.empty())
            roi.scales = {1.0};
    }
    attention.enable_self_attention = a == Ablation::OneRoiSa || multi;
    attention.enable_co_attention = a == Ablation::Full;
}

void ModelConfig::validate() const {
    backbone.validate();
    attention.validate();
    if (backbone.in_channels != 3)
        throw ConfigError("model: backbone in_channels must be 3 for RGB inputs");
    if (coarse_downsample < 1 || input_side % coarse_downsample != 0)
        throw ConfigError("model: input_side must be divisible by coarse_downsample");
    if (coarse_side() % backbone.output_stride != 0)
        throw ConfigError("model: coarse input side " + std::to_string(coarse_side()) +
                          " is not a multiple of the output stride " + std::to_string(backbone.output_stride));
    if (!(delta > 0.0))
        throw ConfigError("model: delta must be positive");
    if (loss.alpha < 0.0 || loss.beta < 0.0 || loss.gamma < 0.0)
        throw ConfigError("model: loss weights must be >= 0");
    if (!use_rois) {
        if (attention.enable_co_attention || attention.enable_self_attention)
            throw ConfigError("model: attention requires ROIs (ablation backbone-only)");
        return;
    }
    if (roi.scales.empty())
        throw ConfigError("model: at least one ROI scale is required");
    for (std::size_t i = 0; i < roi.scales.size(); ++i) {
        if (!(roi.scales[i] > 0.0))
            throw ConfigError("model: ROI scales must be positive");
        if (i > 0 && !(roi.scales[i] > roi.scales[i - 1]))
            throw ConfigError("model: ROI scales must be strictly increasing");
    }
    if (roi.base_side < 1)
        throw ConfigError("model: roi base side must be >= 1");
    if (roi.fine_input_side < backbone.output_stride || roi.fine_input_side % backbone.output_stride != 0)
        throw ConfigError("model: fine_input_side must be a multiple of the output stride");
    if (attention.enable_co_attention && roi.scales.size() != 2)
        throw ConfigError("model: co-attention pairs two ROIs, but " + std::to_string(roi.scales.size()) +
                          " ROI scale(s) are configured");
    // a single co-attention token makes the softmax constant and W inert
    if (attention.enable_co_attention && roi_grid_side() / attention.co_attention_resample < 2)
        throw ConfigError("model: co-attention grid " + std::to_string(roi_grid_side()) + " / " +
                          std::to_string(attention.co_attention_resample) + " leaves fewer than 2x2 tokens");
}

CoordFrame roi_frame(Point center, double side, int out_side) {
    const double s = side / out_side;
    return {s, s, center.u - 0.5 * side + 0.5 * s - 0.5, center.v - 0.5 * side + 0.5 * s - 0.5};
}

Point crop_center(Point peak) { return {std::floor(peak.u + 0.5), std::floor(peak.v + 0.5)}; }

template <typename T>
std::vector<RoiCrop<T>> crop_rois(const Tensor<T>& images, const std::vector<Point>& centers, const RoiSpec& spec) {
    if (images.rank() != 4)
        throw DimensionError("crop_rois", "rank", 4, images.rank());
    const auto n = static_cast<std::size_t>(images.dim(0));
    if (centers.size() != n)
        throw DimensionError("crop_rois", "centers", images.dim(0), static_cast<std::int64_t>(centers.size()));
    const double h = static_cast<double>(images.dim(2)), w = static_cast<double>(images.dim(3));
    std::vector<RoiCrop<T>> out;
    for (double scale : spec.scales) {
        const double side = spec.base_side * scale;
        RoiCrop<T> crop;
        std::vector<AxisMap> rows, cols;
        for (const auto& c : centers) {
            if (!std::isfinite(c.u) || !std::isfinite(c.v))
                throw NumericError("crop_rois: non-finite crop center");
            const auto f = roi_frame(c, side, spec.fine_input_side);
            crop.frames.push_back(f);
            rows.push_back({f.scale_v, f.offset_v});
            cols.push_back({f.scale_u, f.offset_u});
            const double u0 = c.u - 0.5 * side, v0 = c.v - 0.5 * side;
            crop.off_image.push_back(u0 + side <= 0.0 || v0 + side <= 0.0 || u0 >= w || v0 >= h);
        }
        crop.images = resample<T>(images, spec.fine_input_side, spec.fine_input_side, rows, cols, Padding::Zeros);
        out.push_back(std::move(crop));
    }
    return out;
}

template <typename T>
Tensor<T> crop_coarse_features(const Tensor<T>& features, const CoordFrame& feature_frame,
                               const std::vector<CoordFrame>& roi_frames, int out_h, int out_w) {
    if (features.rank() != 4)
        throw DimensionError("crop_coarse_features", "rank", 4, features.rank());
    if (roi_frames.size() != static_cast<std::size_t>(features.dim(0)))
        throw DimensionError("crop_coarse_features", "frames", features.dim(0),
                             static_cast<std::int64_t>(roi_frames.size()));
    if (out_h < 1 || out_w < 1)
        throw DimensionError("crop_coarse_features", "out", 1, std::min(out_h, out_w));
    std::vector<AxisMap> rows, cols;
    for (const auto& f : roi_frames) {
        if (!(f.scale_u > 0.0) || !(f.scale_v > 0.0) || !std::isfinite(f.offset_u) || !std::isfinite(f.offset_v))
            throw std::invalid_argument("crop_coarse_features: degenerate ROI frame");
        // ROI cell -> model input -> coarse feature cell
        rows.push_back({f.scale_v / feature_frame.scale_v, (f.offset_v - feature_frame.offset_v) / feature_frame.scale_v});
        cols.push_back({f.scale_u / feature_frame.scale_u, (f.offset_u - feature_frame.offset_u) / feature_frame.scale_u});
    }
    return resample<T>(features, out_h, out_w, rows, cols, Padding::Border);
}

template <typename T>
Heatmap<T> HeadOutput<T>::heatmap(std::size_t item) const {
    const auto h = logits.dim(2), w = logits.dim(3);
    const auto d = logits.data();
    std::vector<T> v(d.begin() + static_cast<std::ptrdiff_t>(item * h * w),
                     d.begin() + static_cast<std::ptrdiff_t>((item + 1) * h * w));
    return {Tensor<T>({1, 1, h, w}, std::move(v)), frames.at(item)};
}

namespace {

template <typename T>
Peak head_peak(const HeadOutput<T>& head, std::size_t item) {
    const auto h = head.logits.dim(2), w = head.logits.dim(3);
    return find_peak(head.logits.data().data() + item * static_cast<std::size_t>(h * w), h, w, head.frames.at(item));
}

}  // namespace

template <typename T>
void decode_predictions(ZianOutputs<T>& out) {
    const auto n = static_cast<std::size_t>(out.coarse.logits.dim(0));
    out.coarse_pred.assign(n, {});
    out.pred.assign(n, {});
    out.fell_back.assign(n, false);
    for (std::size_t i = 0; i < n; ++i) {
        out.coarse_pred[i] = head_peak(out.coarse, i).original;
        out.pred[i] = out.coarse_pred[i];
        if (out.fine.defined()) {
            const auto p = head_peak(out.fine, i);
            if (p.degenerate)
                out.fell_back[i] = true;
            else
                out.pred[i] = p.original;
        }
    }
}

template <typename T>
ZianModel<T> ZianModel<T>::build(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    ZianModel m;
    m.m_cfg = cfg;
    m.m_coarse = Backbone<T>::build(cfg.backbone, mix_seed(seed, 1));
    if (!cfg.use_rois)
        return m;
    const int c = cfg.backbone.feature_channels;
    for (std::size_t i = 0; i < cfg.roi.scales.size(); ++i) {
        m.m_roi_backbones.push_back(Backbone<T>::build(cfg.backbone, mix_seed(seed, 10 + i), false));
        auto rng = derive_rng(seed, 20 + i);
        m.m_roi_heads.push_back(Conv2d<T>::make(c, 1, 1, 1, 0, true, rng));
    }
    const int g = cfg.roi_grid_side();
    if (cfg.attention.enable_co_attention) {
        auto rng = derive_rng(seed, 30);
        m.m_co = CoAttention<T>::make(c, cfg.attention.co_attention_resample, rng);
    }
    int fine_in = c * static_cast<int>(cfg.roi.scales.size());
    if (cfg.attention.enable_self_attention) {
        auto rng = derive_rng(seed, 31);
        m.m_fusion = SelfAttentionFusion<T>::make(fine_in + c, g, g, cfg.attention, rng);
        fine_in = cfg.attention.model_dim;
    }
    auto rng = derive_rng(seed, 32);
    m.m_fine = FineHead<T>::make(fine_in, cfg.attention.enable_self_attention ? cfg.attention.model_dim : c, rng);
    return m;
}

template <typename T>
CoordFrame ZianModel<T>::coarse_frame() const {
    return frame_compose(strided_frame(m_cfg.coarse_downsample), strided_frame(m_cfg.backbone.output_stride));
}

template <typename T>
ZianOutputs<T> ZianModel<T>::forward(const Tensor<T>& images, bool training, const std::vector<Point>* centers) const {
    if (images.rank() != 4 || images.dim(2) != m_cfg.input_side || images.dim(3) != m_cfg.input_side)
        throw DimensionError("zian_forward", "input must be N x 3 x " + std::to_string(m_cfg.input_side) + " x " +
                                                 std::to_string(m_cfg.input_side) + ", got " +
                                                 shape_string(images.shape()));
    require_finite(images, "model input");
    const auto n = static_cast<std::size_t>(images.dim(0));
    ZianOutputs<T> out;

    const int cs = m_cfg.coarse_side();
    const auto coarse_in = m_cfg.coarse_downsample > 1 ? bilinear_resize(images, cs, cs) : images;
    const auto coarse = m_coarse.forward(coarse_in, training);
    require_finite(coarse.logits, "coarse network");
    out.coarse.logits = coarse.logits;
    out.coarse.frames.assign(n, coarse_frame());

    if (!m_cfg.use_rois) {
        decode_predictions(out);
        return out;
    }

    if (centers) {
        if (centers->size() != n)
            throw DimensionError("zian_forward", "centers", static_cast<std::int64_t>(n),
                                 static_cast<std::int64_t>(centers->size()));
        out.centers = *centers;
    } else {
        // the crop position is a discrete choice; no gradient flows through it
        for (std::size_t i = 0; i < n; ++i)
            out.centers.push_back(crop_center(head_peak(out.coarse, i).original));
    }
    const auto crops = crop_rois(images, out.centers, m_cfg.roi);
    out.off_image.assign(n, false);
    std::vector<Tensor<T>> feats;
    std::vector<std::vector<CoordFrame>> feat_frames;
    const auto stride = strided_frame(m_cfg.backbone.output_stride);
    for (std::size_t s = 0; s < crops.size(); ++s) {
        out.roi_image_frames.push_back(crops[s].frames);
        for (std::size_t i = 0; i < n; ++i)
            out.off_image[i] = out.off_image[i] || crops[s].off_image[i];
        auto f = m_roi_backbones[s].forward(crops[s].images, training).features;
        require_finite(f, ("roi backbone " + std::to_string(s)).c_str());
        feats.push_back(std::move(f));
        std::vector<CoordFrame> ff;
        for (const auto& fr : crops[s].frames)
            ff.push_back(frame_compose(fr, stride));
        feat_frames.push_back(std::move(ff));
    }

    if (m_co) {
        auto [a, b] = m_co->forward(feats[0], feats[1], training);
        require_finite(a, "co-attention");
        require_finite(b, "co-attention");
        feats[0] = a;
        feats[1] = b;
    }
    for (std::size_t s = 0; s < feats.size(); ++s)
        out.rois.push_back({roi_heatmap_head(feats[s], m_roi_heads[s]), feat_frames[s]});

    Tensor<T> fine_in;
    if (m_fusion) {
        const int g = m_cfg.roi_grid_side();
        auto inputs = feats;
        inputs.push_back(crop_coarse_features(coarse.features, coarse_frame(), feat_frames[0], g, g));
        fine_in = m_fusion->forward(inputs);
    } else {
        fine_in = feats.size() == 1 ? feats[0] : concat_channels<T>(feats);
    }
    out.fine.logits = m_fine->forward(fine_in, training);
    require_finite(out.fine.logits, "fine head");
    // the fine heatmap lives on the x1 ROI feature grid
    out.fine.frames = feat_frames[0];
    decode_predictions(out);
    return out;
}

template <typename T>
ParameterList<T> ZianModel<T>::parameters() const {
    ParameterList<T> p;
    m_coarse.collect("coarse", p);
    for (std::size_t i = 0; i < m_roi_backbones.size(); ++i) {
        m_roi_backbones[i].collect("roi" + std::to_string(i) + ".backbone", p);
        m_roi_heads[i].collect("roi" + std::to_string(i) + ".head", p);
    }
    if (m_co)
        m_co->collect("coattn", p);
    if (m_fusion)
        m_fusion->collect("fusion", p);
    if (m_fine)
        m_fine->collect("fine", p);
    return p;
}

template <typename T>
Tensor<T> render_targets(const HeadOutput<T>& head, const std::vector<Point>& landmarks, double delta) {
    const auto n = head.logits.dim(0), h = head.logits.dim(2), w = head.logits.dim(3);
    if (static_cast<std::int64_t>(landmarks.size()) != n)
        throw DimensionError("zian_loss", "landmarks", n, static_cast<std::int64_t>(landmarks.size()));
    Tensor<T> t({n, 1, h, w});
    auto d = t.mutable_data();
    for (std::int64_t i = 0; i < n; ++i)
        render_gaussian(head.frames.at(static_cast<std::size_t>(i)), landmarks[static_cast<std::size_t>(i)],
                        static_cast<int>(h), static_cast<int>(w), delta, d.data() + i * h * w);
    return t;
}

template <typename T>
Tensor<T> combine_losses(const Tensor<T>& coarse, const std::vector<Tensor<T>>& rois, const Tensor<T>& fine,
                         const LossWeights& w) {
    Tensor<T> total = scale(coarse, static_cast<T>(w.alpha));
    for (const auto& r : rois)
        total = add(total, scale(r, static_cast<T>(w.beta)));
    if (fine.defined())
        total = add(total, scale(fine, static_cast<T>(w.gamma)));
    return total;
}

template <typename T>
LossTerms<T> zian_loss(const ZianOutputs<T>& out, const std::vector<Point>& landmarks, const LossWeights& w,
                       double delta) {
    LossTerms<T> terms;
    const auto lc = mse_loss(out.coarse.logits, render_targets(out.coarse, landmarks, delta));
    terms.coarse = static_cast<double>(lc.item());
    std::vector<Tensor<T>> lr;
    for (const auto& r : out.rois) {
        lr.push_back(mse_loss(r.logits, render_targets(r, landmarks, delta)));
        terms.roi_sum += static_cast<double>(lr.back().item());
    }
    Tensor<T> lf;
    if (out.fine.defined()) {
        lf = mse_loss(out.fine.logits, render_targets(out.fine, landmarks, delta));
        terms.fine = static_cast<double>(lf.item());
    }
    terms.total = combine_losses(lc, lr, lf, w);
    return terms;
}

template <typename T>
Tensor<T> stack_inputs(const std::vector<Prepared>& inputs, std::size_t begin, std::size_t end) {
    if (begin >= end || end > inputs.size())
        throw std::invalid_argument("stack_inputs: bad range");
    const int side = inputs[begin].side;
    const std::size_t per = 3 * static_cast<std::size_t>(side) * static_cast<std::size_t>(side);
    std::vector<T> v;
    v.reserve(per * (end - begin));
    for (std::size_t i = begin; i < end; ++i) {
        if (inputs[i].side != side || inputs[i].pixels.size() != per)
            throw DimensionError("stack_inputs", "side", side, inputs[i].side);
        v.insert(v.end(), inputs[i].pixels.begin(), inputs[i].pixels.end());
    }
    return Tensor<T>({static_cast<std::int64_t>(end - begin), 3, side, side}, std::move(v));
}

template <typename T>
std::vector<Prediction> predict_prepared(const ZianModel<T>& model, const std::vector<Prepared>& inputs, int batch) {
    NoGradGuard no_grad;
    std::vector<Prediction> out;
    const std::size_t b = static_cast<std::size_t>(std::max(1, batch));
    for (std::size_t s = 0; s < inputs.size(); s += b) {
        const std::size_t e = std::min(inputs.size(), s + b);
        const auto o = model.forward(stack_inputs<T>(inputs, s, e), false);
        for (std::size_t i = s; i < e; ++i) {
            const auto& to_raw = inputs[i].to_raw;
            out.push_back({to_raw.to_original(o.pred[i - s]), to_raw.to_original(o.coarse_pred[i - s]),
                           o.fell_back[i - s]});
        }
    }
    return out;
}

template <typename T>
Prediction predict(const ZianModel<T>& model, const Sample& raw, const PreprocessConfig& pre) {
    const std::vector<Prepared> in{preprocess_chain(raw, Mode::Eval, pre)};
    return predict_prepared(model, in).front();
}

#define ZIAN_INSTANTIATE_MODEL(T)                                                                              \
    template std::vector<RoiCrop<T>> crop_rois(const Tensor<T>&, const std::vector<Point>&, const RoiSpec&);    \
    template Tensor<T> crop_coarse_features(const Tensor<T>&, const CoordFrame&, const std::vector<CoordFrame>&, \
                                            int, int);                                                         \
    template struct HeadOutput<T>;                                                                             \
    template void decode_predictions(ZianOutputs<T>&);                                                         \
    template class ZianModel<T>;                                                                               \
    template Tensor<T> render_targets(const HeadOutput<T>&, const std::vector<Point>&, double);                \
    template Tensor<T> combine_losses(const Tensor<T>&, const std::vector<Tensor<T>>&, const Tensor<T>&,         \
                                      const LossWeights&);                                                     \
    template LossTerms<T> zian_loss(const ZianOutputs<T>&, const std::vector<Point>&, const LossWeights&, double); \
    template Tensor<T> stack_inputs<T>(const std::vector<Prepared>&, std::size_t, std::size_t);                 \
    template std::vector<Prediction> predict_prepared(const ZianModel<T>&, const std::vector<Prepared>&, int);  \
    template Prediction predict(const ZianModel<T>&, const Sample&, const PreprocessConfig&);

ZIAN_INSTANTIATE_MODEL(float)
ZIAN_INSTANTIATE_MODEL(double)

}  // namespace zian
