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


#include "zian/data.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

namespace zian {

cv::Mat to_float_image(const cv::Mat& image) {
    if (image.empty())
        throw std::invalid_argument("to_float_image: empty image");
    if (image.type() == CV_32FC3)
        return image;
    if (image.type() != CV_8UC3)
        throw std::invalid_argument("to_float_image: expected CV_8UC3 or CV_32FC3");
    cv::Mat out;
    image.convertTo(out, CV_32FC3, 1.0 / 255.0);
    return out;
}

std::vector<float> to_planar(const cv::Mat& image) {
    if (image.type() != CV_32FC3)
        throw std::invalid_argument("to_planar: expected CV_32FC3");
    const std::size_t hw = static_cast<std::size_t>(image.rows) * static_cast<std::size_t>(image.cols);
    std::vector<float> out(3 * hw);
    for (int y = 0; y < image.rows; ++y) {
        const auto* row = image.ptr<cv::Vec3f>(y);
        for (int x = 0; x < image.cols; ++x) {
            const std::size_t i = static_cast<std::size_t>(y) * static_cast<std::size_t>(image.cols) + static_cast<std::size_t>(x);
            out[i] = row[x][0];
            out[hw + i] = row[x][1];
            out[2 * hw + i] = row[x][2];
        }
    }
    return out;
}

// ---------------------------------------------------------------------------

void SyntheticConfig::validate() const {
    if (side < 32)
        throw std::invalid_argument("synthetic: side must be >= 32");
    if (!(fraction >= 0.0 && fraction <= 1.0))
        throw std::invalid_argument("synthetic: fraction must lie in [0,1]");
    if (!(central_fraction > 0.0 && central_fraction <= 1.0))
        throw std::invalid_argument("synthetic: central_fraction must lie in (0,1]");
    if (!(radius_min > 0.0 && radius_max >= radius_min))
        throw std::invalid_argument("synthetic: bad radius range");
    if (!(min_gap >= 0.0 && max_gap >= min_gap))
        throw std::invalid_argument("synthetic: bad gap range");
}

SyntheticTruth synthetic_layout(std::uint64_t seed, const SyntheticConfig& cfg) {
    cfg.validate();
    auto rng = derive_rng(seed, 0x5eed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };
    const double side = cfg.side;

    SyntheticTruth t;
    const double lo = 0.5 * (1.0 - cfg.central_fraction) * side;
    const double hi = 0.5 * (1.0 + cfg.central_fraction) * side;
    t.landmark = {uniform(lo, hi), uniform(lo, hi)};
    t.radius_a = uniform(cfg.radius_min, cfg.radius_max);
    t.radius_b = uniform(cfg.radius_min, cfg.radius_max);
    const double dist = t.radius_a + t.radius_b + uniform(cfg.min_gap, cfg.max_gap);
    // redraw the direction until both centers fall on the image
    for (int attempt = 0; attempt < 64; ++attempt) {
        const double theta = uniform(0.0, 2.0 * std::numbers::pi);
        const double du = std::cos(theta) * dist, dv = std::sin(theta) * dist;
        t.center_a = {t.landmark.u - cfg.fraction * du, t.landmark.v - cfg.fraction * dv};
        t.center_b = {t.landmark.u + (1.0 - cfg.fraction) * du, t.landmark.v + (1.0 - cfg.fraction) * dv};
        auto inside = [&](Point p) { return p.u >= 0 && p.v >= 0 && p.u <= side - 1 && p.v <= side - 1; };
        if (inside(t.center_a) && inside(t.center_b))
            break;
    }
    return t;
}

Sample generate_synthetic_sample(std::uint64_t seed, const SyntheticConfig& cfg, SyntheticTruth* truth) {
    const auto t = synthetic_layout(seed, cfg);
    auto rng = derive_rng(seed, 0xb9);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };
    const int n = cfg.side;

    // background: sum of low-frequency plane waves, evaluated separably via
    // sin(a + b) = sin(a)cos(b) + cos(a)sin(b)
    cv::Mat g(n, n, CV_64F, cv::Scalar(uniform(0.38, 0.52)));
    std::vector<double> su(static_cast<std::size_t>(n)), cu(static_cast<std::size_t>(n));
    for (int k = 0; k < 3; ++k) {
        const double freq = uniform(0.5, 2.5) * 2.0 * std::numbers::pi / n;
        const double dir = uniform(0.0, 2.0 * std::numbers::pi), phase = uniform(0.0, 2.0 * std::numbers::pi);
        const double ku = freq * std::cos(dir), kv = freq * std::sin(dir);
        for (int x = 0; x < n; ++x) {
            su[static_cast<std::size_t>(x)] = cfg.background_amplitude * std::sin(ku * x + phase);
            cu[static_cast<std::size_t>(x)] = cfg.background_amplitude * std::cos(ku * x + phase);
        }
        for (int y = 0; y < n; ++y) {
            const double cb = std::cos(kv * y), sb = std::sin(kv * y);
            auto* row = g.ptr<double>(y);
            for (int x = 0; x < n; ++x)
                row[x] += su[static_cast<std::size_t>(x)] * cb + cu[static_cast<std::size_t>(x)] * sb;
        }
    }

    // two soft-edged disks; the logistic edge is negligible beyond ~15 softness widths
    const double polarity = unit(rng) < 0.5 ? 1.0 : -1.0;
    for (const auto& [c, r] : {std::pair{t.center_a, t.radius_a}, std::pair{t.center_b, t.radius_b}}) {
        const double reach = r + 15.0 * cfg.edge_softness;
        const int y0 = std::max(0, static_cast<int>(std::floor(c.v - reach)));
        const int y1 = std::min(n - 1, static_cast<int>(std::ceil(c.v + reach)));
        const int x0 = std::max(0, static_cast<int>(std::floor(c.u - reach)));
        const int x1 = std::min(n - 1, static_cast<int>(std::ceil(c.u + reach)));
        for (int y = y0; y <= y1; ++y) {
            auto* row = g.ptr<double>(y);
            for (int x = x0; x <= x1; ++x) {
                const double d = std::hypot(x - c.u, y - c.v);
                row[x] += polarity * cfg.contrast / (1.0 + std::exp((d - r) / cfg.edge_softness));
            }
        }
    }

    cv::Mat noise(n, n, CV_32FC3);
    cv::RNG cvrng(mix_seed(seed, 0x7a));
    cvrng.fill(noise, cv::RNG::NORMAL, 0.0, cfg.noise_sigma);
    const double gains[3] = {1.0, 0.85, 0.7};
    cv::Mat img(n, n, CV_8UC3);
    for (int y = 0; y < n; ++y) {
        const auto* grow = g.ptr<double>(y);
        const auto* nrow = noise.ptr<cv::Vec3f>(y);
        auto* out = img.ptr<cv::Vec3b>(y);
        for (int x = 0; x < n; ++x)
            for (int ch = 0; ch < 3; ++ch) {
                const double v = std::clamp(grow[x] * gains[ch] + nrow[x][ch], 0.0, 1.0);
                out[x][ch] = static_cast<unsigned char>(std::lround(v * 255.0));
            }
    }
    if (truth)
        *truth = t;
    Sample s;
    s.id = "synth_" + std::to_string(seed);
    s.source = SampleSource::Synthetic;
    s.image = img;
    s.landmark = t.landmark;
    return s;
}

// ---------------------------------------------------------------------------

Affine2D Affine2D::inverse() const {
    const double det = a * d - b * c;
    if (det == 0.0)
        throw std::invalid_argument("Affine2D::inverse: singular map");
    Affine2D r{d / det, -b / det, -c / det, a / det, 0.0, 0.0};
    r.tu = -(r.a * tu + r.b * tv);
    r.tv = -(r.c * tu + r.d * tv);
    return r;
}

Affine2D Affine2D::then_after(const Affine2D& o) const {
    return {a * o.a + b * o.c, a * o.b + b * o.d, c * o.a + d * o.c, c * o.b + d * o.d,
            a * o.tu + b * o.tv + tu, c * o.tu + d * o.tv + tv};
}

cv::Mat warp_image(const cv::Mat& src, const Affine2D& m, int out_width, int out_height) {
    const cv::Mat f = to_float_image(src);
    const cv::Matx23d map(m.a, m.b, m.tu, m.c, m.d, m.tv);
    cv::Mat out;
    cv::warpAffine(f, out, map, cv::Size(out_width, out_height), cv::INTER_LINEAR | cv::WARP_INVERSE_MAP,
                   cv::BORDER_CONSTANT, cv::Scalar::all(0));
    return out;
}

// ---------------------------------------------------------------------------

Affine2D augment_transform(const AugmentParams& p, int width, int height) {
    const double cu = 0.5 * (width - 1), cv_ = 0.5 * (height - 1);
    const Affine2D flip = p.flip ? Affine2D{-1.0, 0.0, 0.0, 1.0, width - 1.0, 0.0} : Affine2D{};
    const double th = p.rotation_degrees * std::numbers::pi / 180.0;
    const double cs = std::cos(th) * p.scale, sn = std::sin(th) * p.scale;
    // q = c + sR(p - c) + shift
    Affine2D rs{cs, -sn, sn, cs, 0.0, 0.0};
    rs.tu = cu - (cs * cu - sn * cv_) + p.shift_u;
    rs.tv = cv_ - (sn * cu + cs * cv_) + p.shift_v;
    return rs.then_after(flip);
}

AugmentParams draw_augment(Rng& rng, const AugmentRanges& r, int width, int height, Point landmark, int* rejected) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };
    for (int attempt = 0; attempt < 32; ++attempt) {
        AugmentParams p;
        p.flip = unit(rng) < r.flip_probability;
        p.shift_u = uniform(-r.shift_fraction, r.shift_fraction) * width;
        p.shift_v = uniform(-r.shift_fraction, r.shift_fraction) * height;
        p.scale = uniform(r.scale_min, r.scale_max);
        p.rotation_degrees = uniform(-r.rotation_degrees, r.rotation_degrees);
        const Point q = augment_transform(p, width, height).apply(landmark);
        if (q.u >= 0.0 && q.v >= 0.0 && q.u <= width - 1.0 && q.v <= height - 1.0)
            return p;
        if (rejected)
            ++*rejected;
    }
    return {};
}

Sample augment(const Sample& s, const AugmentParams& p) {
    const auto fwd = augment_transform(p, s.width(), s.height());
    Sample out = s;
    out.image = warp_image(s.image, fwd.inverse(), s.width(), s.height());
    out.landmark = fwd.apply(s.landmark);
    return out;
}

// ---------------------------------------------------------------------------

namespace {

constexpr double kResizeSide = 1064.0;
constexpr double kCenterCropSide = 1024.0;
constexpr double kCropSide = 896.0;

int scaled_side(double full, double factor) { return static_cast<int>(std::lround(full / factor)); }

}  // namespace

int PreprocessConfig::resize_side() const { return scaled_side(kResizeSide, factor); }
int PreprocessConfig::center_crop_side() const { return scaled_side(kCenterCropSide, factor); }
int PreprocessConfig::crop_side() const { return scaled_side(kCropSide, factor); }

void PreprocessConfig::validate() const {
    if (!(factor >= 1.0))
        throw std::invalid_argument("preprocess: factor must be >= 1");
    if (crop_side() % 16 != 0)
        throw std::invalid_argument("preprocess: crop side " + std::to_string(crop_side()) +
                                    " must be a multiple of 16 (x1/4 coarse input at stride 4)");
}

CoordFrame preprocess_frame(const PreprocessConfig& cfg, int raw_width, int raw_height, int crop_u, int crop_v) {
    const double r = cfg.resize_side();
    const int center_off = (cfg.resize_side() - cfg.center_crop_side()) / 2;
    const double su = raw_width / r, sv = raw_height / r;
    // model pixel x sits at resized pixel x + offsets; half-pixel resize back to raw
    return {su, sv, (crop_u + center_off + 0.5) * su - 0.5, (crop_v + center_off + 0.5) * sv - 0.5};
}

Prepared preprocess_chain(const Sample& raw, Mode mode, const PreprocessConfig& cfg, Rng* rng,
                          const Affine2D* augment_map) {
    cfg.validate();
    if (raw.image.empty())
        throw std::invalid_argument("preprocess_chain: empty image");
    const int side = cfg.crop_side();
    const int slack = cfg.center_crop_side() - side;
    Prepared out;
    out.id = raw.id;
    out.side = side;
    out.has_landmark = raw.has_landmark;
    out.raw_landmark = augment_map ? augment_map->apply(raw.landmark) : raw.landmark;

    int cu = slack / 2, cv_ = slack / 2;
    if (mode == Mode::Train) {
        if (!rng)
            throw std::invalid_argument("preprocess_chain: train mode needs an rng");
        std::uniform_int_distribution<int> pick(0, slack);
        for (int attempt = 0; attempt < std::max(1, cfg.crop_retries); ++attempt) {
            cu = pick(*rng);
            cv_ = pick(*rng);
            if (!raw.has_landmark)
                break;
            const auto p = preprocess_frame(cfg, raw.width(), raw.height(), cu, cv_).from_original(out.raw_landmark);
            if (p.u >= 0.0 && p.v >= 0.0 && p.u <= side - 1.0 && p.v <= side - 1.0)
                break;
        }
    }
    out.crop_u = cu;
    out.crop_v = cv_;
    out.to_raw = preprocess_frame(cfg, raw.width(), raw.height(), cu, cv_);
    out.landmark = out.to_raw.from_original(out.raw_landmark);

    Affine2D dst_to_src = Affine2D::from_frame(out.to_raw);
    if (augment_map)
        dst_to_src = augment_map->inverse().then_after(dst_to_src);
    out.pixels = to_planar(warp_image(raw.image, dst_to_src, side, side));
    return out;
}

// ---------------------------------------------------------------------------

BilateralSplit split_bilateral(const Sample& s) {
    const int w = s.width();
    if (w < 2)
        throw std::invalid_argument("split_bilateral: width must be >= 2");
    const int half = w / 2;
    BilateralSplit out;
    out.left = s;
    out.right = s;
    out.left.id = s.id + "_L";
    out.right.id = s.id + "_R";
    out.left.image = s.image.colRange(0, half).clone();
    cv::flip(s.image.colRange(half, w), out.right.image, 1);
    out.landmark_in_right = s.has_landmark && s.landmark.u > half - 0.5;
    out.left.has_landmark = s.has_landmark && !out.landmark_in_right;
    out.right.has_landmark = out.landmark_in_right;
    if (out.landmark_in_right)
        out.right.landmark = {w - 1.0 - s.landmark.u, s.landmark.v};
    return out;
}

cv::Mat merge_bilateral(const BilateralSplit& split) {
    cv::Mat right;
    cv::flip(split.right.image, right, 1);
    cv::Mat out;
    cv::hconcat(split.left.image, right, out);
    return out;
}

// ---------------------------------------------------------------------------

namespace {

std::string trim(std::string s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos)
        return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

double parse_coord(const std::string& text, const char* name, const std::filesystem::path& path, int row) {
    double v = 0.0;
    const auto* end = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(text.data(), end, v);
    if (ec != std::errc() || ptr != end || !std::isfinite(v))
        throw ManifestError(path.string() + ": row " + std::to_string(row) + ": non-numeric " + name + " '" + text +
                            "'");
    return v;
}

}  // namespace

ManifestDataset load_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in)
        throw ManifestError("cannot open manifest: " + path.string());
    const auto base = path.parent_path();
    std::vector<ManifestEntry> entries;
    std::string line;
    int row = 0;
    bool header_seen = false;
    while (std::getline(in, line)) {
        ++row;
        line = trim(line);
        if (line.empty())
            continue;
        std::vector<std::string> fields;
        std::stringstream ss(line);
        std::string f;
        while (std::getline(ss, f, ','))
            fields.push_back(trim(f));
        if (!line.empty() && line.back() == ',')
            fields.emplace_back();
        if (!header_seen) {
            if (fields != std::vector<std::string>{"id", "path", "u", "v"})
                throw ManifestError(path.string() + ": row " + std::to_string(row) + ": expected header 'id,path,u,v'");
            header_seen = true;
            continue;
        }
        if (fields.size() != 4)
            throw ManifestError(path.string() + ": row " + std::to_string(row) + ": expected 4 fields, got " +
                                std::to_string(fields.size()));
        if (fields[0].empty() || fields[1].empty())
            throw ManifestError(path.string() + ": row " + std::to_string(row) + ": empty id or path");
        ManifestEntry e;
        e.id = fields[0];
        e.path = std::filesystem::path(fields[1]).is_absolute() ? std::filesystem::path(fields[1]) : base / fields[1];
        e.landmark = {parse_coord(fields[2], "u", path, row), parse_coord(fields[3], "v", path, row)};
        e.row = row;
        entries.push_back(std::move(e));
    }
    return ManifestDataset(std::move(entries));
}

cv::Mat read_image(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path))
        throw ManifestError("image not found: " + path.string());
    const cv::Mat raw = cv::imread(path.string(), cv::IMREAD_ANYDEPTH | cv::IMREAD_ANYCOLOR);
    if (raw.empty())
        throw ManifestError("cannot decode image: " + path.string());
    double scale = 1.0;
    switch (raw.depth()) {
    case CV_8U: scale = 1.0 / 255.0; break;
    case CV_16U: scale = 1.0 / 65535.0; break;
    case CV_32F: break;
    default: throw ManifestError("unsupported pixel depth in " + path.string());
    }
    cv::Mat f;
    raw.convertTo(f, CV_32F, scale);
    cv::Mat rgb;
    switch (f.channels()) {
    case 1: cv::cvtColor(f, rgb, cv::COLOR_GRAY2RGB); break;
    case 3: cv::cvtColor(f, rgb, cv::COLOR_BGR2RGB); break;
    case 4: cv::cvtColor(f, rgb, cv::COLOR_BGRA2RGB); break;
    default: throw ManifestError("unsupported channel count in " + path.string());
    }
    return rgb;
}

Sample ManifestDataset::load(std::size_t i) const {
    const auto& e = m_entries.at(i);
    Sample s;
    s.id = e.id;
    s.source = SampleSource::Manifest;
    try {
        s.image = read_image(e.path);
    } catch (const ManifestError& err) {
        throw ManifestError("row " + std::to_string(e.row) + ": " + err.what());
    }
    s.landmark = e.landmark;
    return s;
}

std::filesystem::path export_synthetic_set(const std::filesystem::path& dir, int count, std::uint64_t seed,
                                           const SyntheticConfig& cfg) {
    if (count < 0)
        throw std::invalid_argument("export_synthetic_set: negative count");
    std::filesystem::create_directories(dir / "images");
    const auto manifest = dir / "manifest.csv";
    std::ofstream out(manifest);
    if (!out)
        throw ManifestError("cannot write manifest: " + manifest.string());
    out << "id,path,u,v\n";
    for (int i = 0; i < count; ++i) {
        const auto s = generate_synthetic_sample(seed + static_cast<std::uint64_t>(i), cfg);
        const auto rel = std::filesystem::path("images") / (s.id + ".png");
        cv::Mat bgr;
        cv::cvtColor(s.image, bgr, cv::COLOR_RGB2BGR);
        if (!cv::imwrite((dir / rel).string(), bgr))
            throw ManifestError("cannot write image: " + (dir / rel).string());
        char buf[128];
        std::snprintf(buf, sizeof(buf), ",%.17g,%.17g\n", s.landmark.u, s.landmark.v);
        out << s.id << ',' << rel.generic_string() << buf;
    }
    if (!out)
        throw ManifestError("failed writing manifest: " + manifest.string());
    return manifest;
}

}  // namespace zian
