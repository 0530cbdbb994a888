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


#include "zian/heatmap.hpp"

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace zian {

CoordFrame frame_compose(const CoordFrame& outer, const CoordFrame& inner) {
    return {outer.scale_u * inner.scale_u, outer.scale_v * inner.scale_v,
            outer.offset_u + outer.scale_u * inner.offset_u, outer.offset_v + outer.scale_v * inner.offset_v};
}

Point frame_apply(const CoordFrame& frame, Point grid) { return frame.to_original(grid); }

CoordFrame frame_invert(const CoordFrame& frame) {
    if (!(frame.scale_u > 0.0) || !(frame.scale_v > 0.0))
        throw std::invalid_argument("frame_invert: scales must be positive");
    return {1.0 / frame.scale_u, 1.0 / frame.scale_v, -frame.offset_u / frame.scale_u,
            -frame.offset_v / frame.scale_v};
}

CoordFrame strided_frame(int stride) {
    if (stride < 1)
        throw std::invalid_argument("strided_frame: stride must be >= 1");
    const double s = stride;
    return CoordFrame::uniform(s, 0.5 * (s - 1.0), 0.5 * (s - 1.0));
}

template <typename T>
bool render_gaussian(const CoordFrame& frame, Point landmark, int height, int width, double delta, T* out) {
    if (height < 1 || width < 1)
        throw DimensionError("gaussian_target", "H/W", 1, std::min(height, width));
    if (!(delta > 0.0))
        throw std::invalid_argument("gaussian_target: delta must be positive");
    const Point g = frame.from_original(landmark);
    const double inv = 1.0 / (2.0 * delta * delta);
    // separable: exp(-(du^2+dv^2)k) = exp(-du^2 k) * exp(-dv^2 k)
    std::vector<double> gu(static_cast<std::size_t>(width)), gv(static_cast<std::size_t>(height));
    for (int x = 0; x < width; ++x)
        gu[static_cast<std::size_t>(x)] = std::exp(-(x - g.u) * (x - g.u) * inv);
    for (int y = 0; y < height; ++y)
        gv[static_cast<std::size_t>(y)] = std::exp(-(y - g.v) * (y - g.v) * inv);
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x)
            out[static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)] =
                static_cast<T>(gv[static_cast<std::size_t>(y)] * gu[static_cast<std::size_t>(x)]);
    return g.u < -0.5 || g.v < -0.5 || g.u >= width - 0.5 || g.v >= height - 0.5;
}

template <typename T>
Heatmap<T> gaussian_target(const CoordFrame& frame, Point landmark, int height, int width, double delta) {
    Heatmap<T> hm;
    hm.frame = frame;
    Tensor<T> grid({1, 1, std::max(height, 1), std::max(width, 1)});
    hm.off_grid = render_gaussian(frame, landmark, height, width, delta, grid.mutable_data().data());
    hm.grid = std::move(grid);
    return hm;
}

template <typename T>
Heatmap<T> gaussian_target(double u0, double v0, int height, int width, double delta) {
    return gaussian_target<T>(CoordFrame::identity(), Point{u0, v0}, height, width, delta);
}

template <typename T>
Peak find_peak(const T* values, std::int64_t height, std::int64_t width, const CoordFrame& frame) {
    if (height < 1 || width < 1)
        throw DimensionError("peak_coords", "H/W", 1, std::min(height, width));
    const std::size_t n = static_cast<std::size_t>(height * width);
    std::size_t best = 0;
    bool all_equal = true;
    for (std::size_t i = 1; i < n; ++i) {
        if (values[i] != values[0])
            all_equal = false;
        if (values[i] > values[best])  // strict: earlier index wins ties
            best = i;
    }
    Peak p;
    p.degenerate = all_equal;
    p.row = static_cast<std::int64_t>(best) / width;
    p.col = static_cast<std::int64_t>(best) % width;
    p.original = frame.to_original({static_cast<double>(p.col), static_cast<double>(p.row)});
    return p;
}

template <typename T>
Peak peak_coords(const Heatmap<T>& hm) {
    if (!hm.grid.defined())
        throw std::invalid_argument("peak_coords: empty heatmap");
    return find_peak(hm.grid.data().data(), hm.height(), hm.width(), hm.frame);
}

template <typename T>
void write_heatmap_png(const std::filesystem::path& path, const Heatmap<T>& hm) {
    const int h = static_cast<int>(hm.height()), w = static_cast<int>(hm.width());
    cv::Mat img(h, w, CV_16UC1);
    const auto d = hm.grid.data();
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const double v = std::clamp(static_cast<double>(d[static_cast<std::size_t>(y * w + x)]), 0.0, 1.0);
            img.at<std::uint16_t>(y, x) = static_cast<std::uint16_t>(std::lround(v * 65535.0));
        }
    if (!cv::imwrite(path.string(), img))
        throw std::runtime_error("write_heatmap_png: cannot write " + path.string());
}

#define ZIAN_INSTANTIATE_HEATMAP(T)                                                                       \
    template bool render_gaussian<T>(const CoordFrame&, Point, int, int, double, T*);                    \
    template Heatmap<T> gaussian_target<T>(const CoordFrame&, Point, int, int, double);                  \
    template Heatmap<T> gaussian_target<T>(double, double, int, int, double);                            \
    template Peak find_peak<T>(const T*, std::int64_t, std::int64_t, const CoordFrame&);                 \
    template Peak peak_coords<T>(const Heatmap<T>&);                                                     \
    template void write_heatmap_png<T>(const std::filesystem::path&, const Heatmap<T>&);

ZIAN_INSTANTIATE_HEATMAP(float)
ZIAN_INSTANTIATE_HEATMAP(double)

}  // namespace zian
