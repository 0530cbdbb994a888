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

#include "zian/tensor.hpp"

#include <cstdint>
#include <filesystem>

namespace zian {

/// A position in pixel coordinates: u is the column, v the row, and pixel
/// centers sit on integers.
struct Point {
    double u = 0.0;
    double v = 0.0;

    bool operator==(const Point&) const = default;
};

/// Affine map from a processing grid to original-image pixels:
/// original = offset + scale * grid, independently per axis.
struct CoordFrame {
    double scale_u = 1.0;
    double scale_v = 1.0;
    double offset_u = 0.0;
    double offset_v = 0.0;

    static CoordFrame identity() { return {}; }
    static CoordFrame uniform(double scale, double offset_u, double offset_v) {
        return {scale, scale, offset_u, offset_v};
    }

    Point to_original(Point grid) const { return {offset_u + scale_u * grid.u, offset_v + scale_v * grid.v}; }
    Point from_original(Point p) const { return {(p.u - offset_u) / scale_u, (p.v - offset_v) / scale_v}; }

    bool operator==(const CoordFrame&) const = default;
};

/// Frame of `inner` grid cells expressed in the coordinates that `outer` maps
/// to original pixels: original = outer(inner(g)).
CoordFrame frame_compose(const CoordFrame& outer, const CoordFrame& inner);
Point frame_apply(const CoordFrame& frame, Point grid);
CoordFrame frame_invert(const CoordFrame& frame);

/// Frame of the output grid of a stride-s layer stack over an input grid
/// with pixel centers on integers (cell i covers input pixels [s*i, s*i+s)).
CoordFrame strided_frame(int stride);

template <typename T>
struct Heatmap {
    Tensor<T> grid;  // 1 x 1 x H x W
    CoordFrame frame;
    /// Set by gaussian_target when the landmark lies off the grid.
    bool off_grid = false;

    std::int64_t height() const { return grid.dim(2); }
    std::int64_t width() const { return grid.dim(3); }
};

/// G(u,v) = exp(-((u-u0)^2 + (v-v0)^2) / (2 delta^2)) at every integer cell
/// of an H x W grid, with (u0, v0) given in grid cells. Peak amplitude is 1
/// for on-grid landmarks; no normalization.
template <typename T>
Heatmap<T> gaussian_target(double u0, double v0, int height, int width, double delta = 2.0);

/// Same target with the landmark given in original pixels and mapped into
/// `frame`; the returned heatmap carries that frame.
template <typename T>
Heatmap<T> gaussian_target(const CoordFrame& frame, Point landmark, int height, int width, double delta = 2.0);

/// Writes a gaussian target for `landmark` into `out` (H*W values).
template <typename T>
bool render_gaussian(const CoordFrame& frame, Point landmark, int height, int width, double delta, T* out);

struct Peak {
    std::int64_t row = 0;
    std::int64_t col = 0;
    Point original;
    /// Every cell had the same value; (row, col) is then the grid origin.
    bool degenerate = false;
};

/// Argmax over an H x W grid (ties: smallest row-major index) mapped through
/// `frame`.
template <typename T>
Peak find_peak(const T* values, std::int64_t height, std::int64_t width, const CoordFrame& frame);

template <typename T>
Peak peak_coords(const Heatmap<T>& hm);

/// Saves the grid as a 16-bit grayscale image, values clamped to [0,1] and
/// scaled by 65535.
template <typename T>
void write_heatmap_png(const std::filesystem::path& path, const Heatmap<T>& hm);

}  // namespace zian
