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


#include "zian/overlay.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace zian {

template <typename T>
cv::Mat heatmap_to_mat(const Heatmap<T>& hm) {
    const auto h = hm.height(), w = hm.width();
    cv::Mat m(h, w, CV_32F);
    const auto d = hm.grid.data();
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c)
            m.at<float>(r, c) = static_cast<float>(d[static_cast<std::size_t>(r * w + c)]);
    return m;
}

OverlayResult compose_overlay(const cv::Mat& image, const cv::Mat& heat, const CoordFrame& heat_to_image, Point gt,
                              Point pred, double alpha) {
    if (image.empty() || image.channels() != 3)
        throw std::invalid_argument("overlay: expected a 3-channel image");
    cv::Mat base;
    if (image.depth() == CV_8U)
        base = image.clone();
    else
        image.convertTo(base, CV_8UC3, 255.0);
    cv::cvtColor(base, base, cv::COLOR_RGB2BGR);

    if (!heat.empty()) {
        cv::Mat heat32;
        heat.convertTo(heat32, CV_32F);
        double lo = 0, hi = 0;
        cv::minMaxLoc(heat32, &lo, &hi);
        const double span = hi > lo ? hi - lo : 1.0;
        cv::Mat map_u(base.rows, base.cols, CV_32F), map_v(base.rows, base.cols, CV_32F);
        for (int y = 0; y < base.rows; ++y)
            for (int x = 0; x < base.cols; ++x) {
                const auto g = heat_to_image.from_original({static_cast<double>(x), static_cast<double>(y)});
                map_u.at<float>(y, x) = static_cast<float>(g.u);
                map_v.at<float>(y, x) = static_cast<float>(g.v);
            }
        cv::Mat up;
        cv::remap((heat32 - lo) / span, up, map_u, map_v, cv::INTER_LINEAR, cv::BORDER_CONSTANT, cv::Scalar(0));
        cv::Mat up8, color;
        up.convertTo(up8, CV_8U, 255.0);
        cv::applyColorMap(up8, color, cv::COLORMAP_JET);
        for (int y = 0; y < base.rows; ++y)
            for (int x = 0; x < base.cols; ++x) {
                const double w = alpha * std::clamp(static_cast<double>(up.at<float>(y, x)), 0.0, 1.0);
                auto& px = base.at<cv::Vec3b>(y, x);
                const auto& cp = color.at<cv::Vec3b>(y, x);
                for (int k = 0; k < 3; ++k)
                    px[k] = cv::saturate_cast<uchar>((1.0 - w) * px[k] + w * cp[k]);
            }
    }

    OverlayResult out;
    const double max_u = base.cols - 1.0, max_v = base.rows - 1.0;
    out.pred_drawn = {std::clamp(pred.u, 0.0, max_u), std::clamp(pred.v, 0.0, max_v)};
    out.pred_clamped = out.pred_drawn.u != pred.u || out.pred_drawn.v != pred.v;
    const int size = std::max(7, std::min(base.cols, base.rows) / 40);
    const auto pixel = [](Point p) { return cv::Point(static_cast<int>(std::lround(p.u)), static_cast<int>(std::lround(p.v))); };
    cv::drawMarker(base, pixel(gt), cv::Scalar(0, 0, 255), cv::MARKER_CROSS, size, 1);
    cv::circle(base, pixel(out.pred_drawn), size / 2, cv::Scalar(0, 255, 0), 1, cv::LINE_AA);
    if (out.pred_clamped)
        cv::drawMarker(base, pixel(out.pred_drawn), cv::Scalar(0, 255, 255), cv::MARKER_TRIANGLE_UP, size, 1);
    out.image = base;
    return out;
}

OverlayResult render_overlay(const std::filesystem::path& path, const cv::Mat& image, const cv::Mat& heat,
                             const CoordFrame& heat_to_image, Point gt, Point pred, double alpha) {
    auto out = compose_overlay(image, heat, heat_to_image, gt, pred, alpha);
    if (path.has_parent_path())
        std::filesystem::create_directories(path.parent_path());
    bool ok = false;
    try {
        ok = cv::imwrite(path.string(), out.image);
    } catch (const cv::Exception& e) {
        throw std::runtime_error("overlay: cannot write " + path.string() + ": " + e.what());
    }
    if (!ok)
        throw std::runtime_error("overlay: cannot write " + path.string());
    return out;
}

template cv::Mat heatmap_to_mat(const Heatmap<float>&);
template cv::Mat heatmap_to_mat(const Heatmap<double>&);

}  // namespace zian
