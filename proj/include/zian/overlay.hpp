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

#include "zian/heatmap.hpp"

#include <opencv2/core.hpp>

#include <filesystem>

namespace zian {

struct OverlayResult {
    cv::Mat image;         // CV_8UC3, BGR
    Point pred_drawn;      // prediction after clamping into the image
    bool pred_clamped = false;
};

/// Heatmap grid as a CV_32F matrix.
template <typename T>
cv::Mat heatmap_to_mat(const Heatmap<T>& hm);

/// Blends `heat` (grid mapped to image pixels by `heat_to_image`) over
/// `image` (CV_8UC3 or CV_32FC3, RGB), then draws the ground truth as a red
/// cross and the prediction as a green circle. A prediction outside the
/// image is drawn at the nearest border pixel next to a yellow triangle.
/// An empty `heat` skips the blend.
OverlayResult compose_overlay(const cv::Mat& image, const cv::Mat& heat, const CoordFrame& heat_to_image, Point gt,
                              Point pred, double alpha = 0.45);

/// compose_overlay written to `path`; the format follows the extension.
OverlayResult render_overlay(const std::filesystem::path& path, const cv::Mat& image, const cv::Mat& heat,
                             const CoordFrame& heat_to_image, Point gt, Point pred, double alpha = 0.45);

}  // namespace zian
