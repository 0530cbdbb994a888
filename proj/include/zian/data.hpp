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
#include "zian/layers.hpp"

#include <opencv2/core.hpp>

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace zian {

enum class SampleSource { Synthetic, Manifest };

struct Sample {
    std::string id;
    SampleSource source = SampleSource::Synthetic;
    /// H x W, CV_8UC3 or CV_32FC3 with values in [0,1]; channel order RGB.
    cv::Mat image;
    Point landmark;  // raw pixels, u = column, v = row
    bool has_landmark = true;

    int width() const { return image.cols; }
    int height() const { return image.rows; }
    bool landmark_inside() const {
        return has_landmark && landmark.u >= 0.0 && landmark.v >= 0.0 && landmark.u <= width() - 1.0 &&
               landmark.v <= height() - 1.0;
    }
};

/// Image as CV_32FC3 in [0,1].
cv::Mat to_float_image(const cv::Mat& image);
/// Planar 3 x H x W copy of a CV_32FC3 image.
std::vector<float> to_planar(const cv::Mat& image);

// ---------------------------------------------------------------------------
// synthetic data

struct SyntheticConfig {
    int side = 384;
    /// Landmark position along the segment from the first to the second
    /// structure center.
    double fraction = 0.5;
    /// Landmarks are uniform over the central box covering this fraction of
    /// each side.
    double central_fraction = 0.6;
    double radius_min = 28.0;
    double radius_max = 40.0;
    /// Minimum background gap between the two structure edges.
    double min_gap = 48.0;
    double max_gap = 80.0;
    double edge_softness = 3.0;
    double contrast = 0.25;
    double background_amplitude = 0.06;
    double noise_sigma = 0.02;

    void validate() const;
};

struct SyntheticTruth {
    Point landmark;
    Point center_a, center_b;
    double radius_a = 0.0, radius_b = 0.0;
};

/// Geometry of a sample (landmark, structure centers and radii) without
/// rendering it.
SyntheticTruth synthetic_layout(std::uint64_t seed, const SyntheticConfig& cfg);
Sample generate_synthetic_sample(std::uint64_t seed, const SyntheticConfig& cfg, SyntheticTruth* truth = nullptr);

// ---------------------------------------------------------------------------
// geometry

/// p' = [a b; c d] p + t
struct Affine2D {
    double a = 1.0, b = 0.0, c = 0.0, d = 1.0, tu = 0.0, tv = 0.0;

    Point apply(Point p) const { return {a * p.u + b * p.v + tu, c * p.u + d * p.v + tv}; }
    Affine2D inverse() const;
    /// (this * other)(p) = this(other(p))
    Affine2D then_after(const Affine2D& other) const;
    static Affine2D from_frame(const CoordFrame& f) { return {f.scale_u, 0.0, 0.0, f.scale_v, f.offset_u, f.offset_v}; }
};

/// Samples `src` at dst pixel positions mapped through `dst_to_src`, bilinear,
/// zero outside. Output is CV_32FC3.
cv::Mat warp_image(const cv::Mat& src, const Affine2D& dst_to_src, int out_width, int out_height);

// ---------------------------------------------------------------------------
// augmentation

struct AugmentRanges {
    double flip_probability = 0.5;
    double shift_fraction = 0.05;  // of the side, each direction
    double scale_min = 0.9;
    double scale_max = 1.1;
    double rotation_degrees = 10.0;
};

struct AugmentParams {
    bool flip = false;
    double shift_u = 0.0;  // pixels
    double shift_v = 0.0;
    double scale = 1.0;
    double rotation_degrees = 0.0;
};

/// Forward map of an augmentation on a W x H image: optional horizontal flip
/// (u -> W-1-u), then scale and rotation about the image center, then shift.
Affine2D augment_transform(const AugmentParams& p, int width, int height);

/// Draws parameters within `ranges`, redrawing (up to a bound) while the
/// transformed landmark would leave the image. `rejected` counts redraws.
AugmentParams draw_augment(Rng& rng, const AugmentRanges& ranges, int width, int height, Point landmark,
                           int* rejected = nullptr);

Sample augment(const Sample& s, const AugmentParams& p);

// ---------------------------------------------------------------------------
// preprocessing

enum class Mode { Train, Eval };

/// Resize -> center crop -> crop, with the full-scale sides 1064/1024/896
/// divided by `factor`. The model input is the crop; the coarse network sees
/// it downsampled by 4.
struct PreprocessConfig {
    double factor = 3.5;
    int crop_retries = 16;

    int resize_side() const;
    int center_crop_side() const;
    int crop_side() const;
    int coarse_side() const { return crop_side() / 4; }
    void validate() const;
};

struct Prepared {
    std::string id;
    std::vector<float> pixels;  // 3 x side x side
    int side = 0;
    /// Landmark in model-input pixels.
    Point landmark;
    bool has_landmark = true;
    /// Model-input pixels -> pixels of the (possibly augmented) raw image.
    CoordFrame to_raw;
    int crop_u = 0, crop_v = 0;  // offsets inside the center crop
    /// Raw landmark after augmentation, when augmentation was applied.
    Point raw_landmark;
};

/// Composite frame from model-input pixels to raw pixels for a W x H raw
/// image and crop offsets inside the center crop.
CoordFrame preprocess_frame(const PreprocessConfig& cfg, int raw_width, int raw_height, int crop_u, int crop_v);

/// Eval mode uses the centered crop and ignores `rng`; train mode draws the
/// crop offset, redrawing while the landmark falls outside. When `augment_map`
/// is given (raw -> augmented raw) it is folded into the same resampling.
Prepared preprocess_chain(const Sample& raw, Mode mode, const PreprocessConfig& cfg, Rng* rng = nullptr,
                          const Affine2D* augment_map = nullptr);

// ---------------------------------------------------------------------------
// bilateral split

struct BilateralSplit {
    Sample left;   // columns [0, W/2)
    Sample right;  // columns [W/2, W), mirrored
    bool landmark_in_right = false;
};

/// Landmarks with u <= W/2 - 0.5 (the centerline included) go left; right
/// landmarks map to u' = W-1-u.
BilateralSplit split_bilateral(const Sample& s);
cv::Mat merge_bilateral(const BilateralSplit& split);

// ---------------------------------------------------------------------------
// manifests

class ManifestError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct ManifestEntry {
    std::string id;
    std::filesystem::path path;  // resolved against the manifest directory
    Point landmark;
    int row = 0;                 // 1-based line number in the file
};

/// Header `id,path,u,v`; images are decoded only when loaded.
class ManifestDataset {
public:
    explicit ManifestDataset(std::vector<ManifestEntry> entries) : m_entries(std::move(entries)) {}

    std::size_t size() const { return m_entries.size(); }
    bool empty() const { return m_entries.empty(); }
    const ManifestEntry& entry(std::size_t i) const { return m_entries.at(i); }
    Sample load(std::size_t i) const;

private:
    std::vector<ManifestEntry> m_entries;
};

ManifestDataset load_manifest(const std::filesystem::path& path);
/// Decodes 8/16-bit gray or color images to CV_32FC3 RGB in [0,1].
cv::Mat read_image(const std::filesystem::path& path);

/// Writes PNG images plus manifest.csv for `count` synthetic samples with
/// seeds seed, seed+1, ...; returns the manifest path.
std::filesystem::path export_synthetic_set(const std::filesystem::path& dir, int count, std::uint64_t seed,
                                           const SyntheticConfig& cfg);

}  // namespace zian
