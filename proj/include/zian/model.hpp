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

#include "zian/attention.hpp"
#include "zian/backbone.hpp"
#include "zian/data.hpp"
#include "zian/heatmap.hpp"

#include <optional>
#include <string>
#include <vector>

namespace zian {

/// Structural presets, from the plain coarse network up to the full model.
enum class Ablation { BackboneOnly, OneRoi, OneRoiSa, MultiRoiSa, Full };

std::string to_string(Ablation a);
/// Accepts backbone-only, 1roi, 1roi+sa, mr+sa, full.
Ablation parse_ablation(const std::string& name);

struct LossWeights {
    double alpha = 1.0;   // coarse
    double beta = 0.25;   // each ROI head
    double gamma = 1.0;   // fine
};

struct RoiSpec {
    std::vector<double> scales{1.0, 2.0};
    int base_side = 32;        // side of the x1 window, model-input pixels
    int fine_input_side = 32;  // every window is resampled to this side
};

struct ModelConfig {
    BackboneConfig backbone;
    AttentionConfig attention;
    bool use_rois = true;
    RoiSpec roi;
    int input_side = 256;
    /// The coarse network sees the input downsampled by this factor.
    int coarse_downsample = 4;
    LossWeights loss;
    double delta = 2.0;

    /// Sets use_rois, scales and both attention switches for `a`.
    void apply_ablation(Ablation a);
    void validate() const;
    int coarse_side() const { return input_side / coarse_downsample; }
    int roi_grid_side() const { return roi.fine_input_side / backbone.output_stride; }
};

/// Frame of a `side` x `side` window centered at `center` (model-input
/// pixels, columns [center - side/2, center + side/2)) sampled onto an
/// `out_side` grid.
CoordFrame roi_frame(Point center, double side, int out_side);

/// Crop center used for a coarse peak: the peak rounded to a pixel.
Point crop_center(Point peak);

template <typename T>
struct RoiCrop {
    Tensor<T> images;                // N x C x F x F
    std::vector<CoordFrame> frames;  // per item, ROI grid -> model input
    std::vector<bool> off_image;     // window entirely outside the image
};

/// One crop per scale; windows are zero-padded outside the image.
template <typename T>
std::vector<RoiCrop<T>> crop_rois(const Tensor<T>& images, const std::vector<Point>& centers, const RoiSpec& spec);

/// Bilinearly samples `features` (grid frame `feature_frame`) at the cells of
/// each item's `roi_frames`, clamping to the border.
template <typename T>
Tensor<T> crop_coarse_features(const Tensor<T>& features, const CoordFrame& feature_frame,
                               const std::vector<CoordFrame>& roi_frames, int out_h, int out_w);

template <typename T>
struct HeadOutput {
    Tensor<T> logits;                // N x 1 x h x w
    std::vector<CoordFrame> frames;  // per item, grid -> model input

    bool defined() const { return logits.defined(); }
    Heatmap<T> heatmap(std::size_t item) const;
};

template <typename T>
struct ZianOutputs {
    HeadOutput<T> coarse;
    std::vector<HeadOutput<T>> rois;
    HeadOutput<T> fine;
    std::vector<Point> centers;                    // crop centers, model-input pixels
    std::vector<std::vector<CoordFrame>> roi_image_frames;  // [scale][item]
    std::vector<bool> off_image;
    std::vector<Point> coarse_pred;  // model-input pixels
    std::vector<Point> pred;         // final prediction, model-input pixels
    std::vector<bool> fell_back;     // flat fine heatmap, coarse used instead
};

/// Fills coarse_pred/pred/fell_back from the head logits.
template <typename T>
void decode_predictions(ZianOutputs<T>& out);

template <typename T>
class ZianModel {
public:
    static ZianModel build(const ModelConfig& cfg, std::uint64_t seed);

    /// `images`: N x 3 x S x S model inputs. `centers` overrides the crop
    /// centers otherwise taken from the coarse peaks.
    ZianOutputs<T> forward(const Tensor<T>& images, bool training,
                           const std::vector<Point>* centers = nullptr) const;

    ParameterList<T> parameters() const;
    const ModelConfig& config() const { return m_cfg; }
    CoordFrame coarse_frame() const;

private:
    ModelConfig m_cfg;
    Backbone<T> m_coarse;
    std::vector<Backbone<T>> m_roi_backbones;
    std::vector<Conv2d<T>> m_roi_heads;
    std::optional<CoAttention<T>> m_co;
    std::optional<SelfAttentionFusion<T>> m_fusion;
    std::optional<FineHead<T>> m_fine;
};

template <typename T>
struct LossTerms {
    Tensor<T> total;
    double coarse = 0.0;
    double roi_sum = 0.0;
    double fine = 0.0;
};

/// Gaussian targets for every item of a head, rendered in each item's frame.
template <typename T>
Tensor<T> render_targets(const HeadOutput<T>& head, const std::vector<Point>& landmarks, double delta);

/// alpha * coarse + beta * sum(rois) + gamma * fine; an undefined fine term
/// is left out.
template <typename T>
Tensor<T> combine_losses(const Tensor<T>& coarse, const std::vector<Tensor<T>>& rois, const Tensor<T>& fine,
                         const LossWeights& w);

/// `landmarks` are in model-input pixels.
template <typename T>
LossTerms<T> zian_loss(const ZianOutputs<T>& out, const std::vector<Point>& landmarks, const LossWeights& w,
                       double delta);

struct Prediction {
    Point raw;         // final prediction, raw-image pixels
    Point coarse_raw;  // coarse-head prediction, raw-image pixels
    bool fell_back = false;
};

/// Runs prepared inputs through the model in eval mode (no gradients) in
/// chunks of `batch` and maps the predictions back to raw pixels.
template <typename T>
std::vector<Prediction> predict_prepared(const ZianModel<T>& model, const std::vector<Prepared>& inputs,
                                         int batch = 16);

/// Eval-mode preprocessing, forward, and mapping back to raw pixels.
template <typename T>
Prediction predict(const ZianModel<T>& model, const Sample& raw, const PreprocessConfig& pre);

/// Packs prepared inputs into an N x 3 x S x S tensor.
template <typename T>
Tensor<T> stack_inputs(const std::vector<Prepared>& inputs, std::size_t begin, std::size_t end);

}  // namespace zian
