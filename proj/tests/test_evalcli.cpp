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


#include "test_util.hpp"
#include "zian/checkpoint.hpp"
#include "zian/experiment.hpp"
#include "zian/gradcheck_suite.hpp"
#include "zian/overlay.hpp"

#include "json.hpp"

#include <gtest/gtest.h>
#include <opencv2/imgcodecs.hpp>

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

namespace zian {
namespace {

std::string slurp(const std::filesystem::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

TEST(Metrics, AvgL2Examples) {
    const std::vector<Point> a{{1, 2}, {3, 4}};
    EXPECT_EQ(avg_l2(a, a), 0.0);
    EXPECT_DOUBLE_EQ(avg_l2({{3, 4}}, {{0, 0}}), 5.0);
    EXPECT_DOUBLE_EQ(avg_l2({{3, 4}, {5, 12}}, {{0, 0}, {0, 0}}), 9.0);
    EXPECT_THROW(avg_l2(a, {{0, 0}}), MetricError);
    EXPECT_THROW(avg_l2({}, {}), MetricError);
}

TEST(Metrics, SdrExamples) {
    const std::vector<Point> gts{{0, 0}, {0, 0}};
    EXPECT_DOUBLE_EQ(sdr(gts, gts, 5), 100.0);
    EXPECT_DOUBLE_EQ(sdr({{4, 0}, {0, 6}}, gts, 5), 50.0);
    // boundary counts as a success
    EXPECT_DOUBLE_EQ(sdr({{3, 4}, {0, 6}}, gts, 5), 50.0);
    EXPECT_THROW(sdr(gts, gts, 0.0), MetricError);
    EXPECT_THROW(sdr(gts, {{0, 0}}, 5), MetricError);
    EXPECT_EQ(default_sdr_thresholds(), (std::vector<double>{5, 10, 20}));
}

TEST(Metrics, InvariantsOnRandomSets) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> d(-30, 30);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<Point> p(17), g(17);
        for (std::size_t i = 0; i < p.size(); ++i) {
            p[i] = {d(rng), d(rng)};
            g[i] = {d(rng), d(rng)};
        }
        double prev = 0.0;
        for (double t = 1; t <= 80; t += 3) {
            const double s = sdr(p, g, t);
            EXPECT_GE(s, prev);
            EXPECT_LE(s, 100.0);
            prev = s;
        }
        const double base = avg_l2(p, g);
        auto p2 = p, g2 = g;
        std::reverse(p2.begin(), p2.end());
        std::reverse(g2.begin(), g2.end());
        EXPECT_NEAR(avg_l2(p2, g2), base, 1e-12);
        for (auto& x : p2)
            x = {x.u + 7.25, x.v - 3.5};
        for (auto& x : g2)
            x = {x.u + 7.25, x.v - 3.5};
        EXPECT_NEAR(avg_l2(p2, g2), base, 1e-9);
    }
}

TEST(Config, DefaultsAndErrors) {
    const auto cfg = parse_config("");
    EXPECT_EQ(cfg.train.epochs, 30);
    EXPECT_DOUBLE_EQ(cfg.train.lr, 2e-4);
    EXPECT_EQ(cfg.train.schedule, Schedule::LrDrop);
    EXPECT_EQ(cfg.ablation, Ablation::Full);
    EXPECT_EQ(cfg.resolved_model().input_side, 256);
    EXPECT_THROW(parse_config("[experiment]\nepochs = 0\n"), ConfigError);
    EXPECT_THROW(parse_config("[experiment]\nepoch = 3\n"), ConfigError);
    EXPECT_THROW(parse_config("[optimizer]\nlr = 3\n"), ConfigError);
    EXPECT_THROW(parse_config("[experiment]\nlr = fast\n"), ConfigError);
    EXPECT_THROW(parse_config("[model]\nablation = 2roi\n"), ConfigError);
    EXPECT_THROW(parse_config("[data]\nsource = manifest\n"), ConfigError);
    const auto c2 = parse_config("[experiment]\nschedule = weight_decay\nprecision = f64\n[model]\nablation = 1roi\n"
                                 "roi_scales = 1, 2\n[backbone]\nchannels = 8,16,16\n");
    EXPECT_EQ(c2.train.schedule, Schedule::WeightDecay);
    EXPECT_EQ(c2.train.precision, Precision::F64);
    EXPECT_EQ(c2.resolved_model().roi.scales, (std::vector<double>{1.0}));
    EXPECT_EQ(c2.model.backbone.channels, (std::vector<int>{8, 16, 16}));
}

TEST(Config, CanonicalTextRoundTrips) {
    auto cfg = parse_config("[experiment]\nseed = 7\nlr = 0.00123\n[synthetic]\ncontrast = 0.3\n");
    const auto text = canonical_config_text(cfg);
    EXPECT_EQ(canonical_config_text(parse_config(text)), text);
    EXPECT_EQ(config_hash(parse_config(text)), config_hash(cfg));
    cfg.output_dir = "elsewhere";
    EXPECT_EQ(config_hash(cfg), config_hash(parse_config(text)));
}

// Replaces one value in canonical text with a different valid one.
std::vector<std::string> alternatives(const std::string& key, const std::string& value) {
    if (value == "true")
        return {"false"};
    if (value == "false")
        return {"true"};
    if (key == "precision")
        return {"f64"};
    if (key == "schedule")
        return {"weight_decay"};
    if (key == "ablation")
        return {"mr+sa"};
    if (key == "source" || key == "train_manifest" || key == "eval_manifest")
        return {};
    if (key == "channels")
        return {"16,32,48"};
    if (key == "desk_factor")
        return {"7"};
    if (key == "output_stride")  // tied to the number of stages
        return {};
    if (key == "roi_scales")
        return {"1,3"};
    if (key == "sdr_thresholds")
        return {"5,10,25"};
    const double v = std::stod(value);
    if (value.find_first_of(".e") == std::string::npos)
        return {std::to_string(static_cast<long long>(v) + 1), std::to_string(static_cast<long long>(v) * 2),
                std::to_string(static_cast<long long>(v) - 1)};
    char a[40], b[40], c[40];
    std::snprintf(a, sizeof(a), "%.17g", v * 1.05);
    std::snprintf(b, sizeof(b), "%.17g", v * 0.95);
    std::snprintf(c, sizeof(c), "%.17g", v + 0.01);
    return {a, b, c};
}

TEST(Config, HashChangesWithEveryField) {
    const auto base = parse_config("");
    const auto text = canonical_config_text(base);
    const auto hash = config_hash(base);
    std::istringstream lines(text);
    std::string line;
    int mutated = 0, skipped = 0;
    std::size_t offset = 0;
    while (std::getline(lines, line)) {
        const auto eq = line.find(" = ");
        if (eq != std::string::npos) {
            const auto key = line.substr(0, eq), value = line.substr(eq + 3);
            bool done = false;
            for (const auto& alt : alternatives(key, value)) {
                auto changed = text;
                changed.replace(offset + eq + 3, value.size(), alt);
                try {
                    const auto cfg = parse_config(changed);
                    EXPECT_NE(config_hash(cfg), hash) << key;
                    done = true;
                    break;
                } catch (const std::invalid_argument&) {
                }
            }
            (done ? mutated : skipped) += 1;
            if (!done) {
                EXPECT_TRUE(key == "source" || key == "train_manifest" || key == "eval_manifest" || key == "output_stride")
                    << key;
            }
        }
        offset += line.size() + 1;
    }
    EXPECT_GT(mutated, 40);
    EXPECT_EQ(skipped, 4);
}

TEST(Config, Sha256KnownVector) {
    EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Report, JsonAndTable) {
    EvalReport r;
    r.config_hash = "abc";
    r.ablation = "full";
    r.avg_l2 = 4.5;
    r.sdr = {{5.0, 40.0}, {10.0, 80.0}, {20.0, 100.0}};
    r.samples.push_back({"s0", {1, 2}, {3, 4}, {5, 6}, 2.8, 5.6, false});
    const auto j = nlohmann::json::parse(report_json(r));
    EXPECT_EQ(j["avg_l2"].get<double>(), 4.5);
    EXPECT_EQ(j["sdr"]["10"].get<double>(), 80.0);
    EXPECT_EQ(j["samples"][0]["id"], "s0");
    const auto t = report_table(r);
    EXPECT_NE(t.find("AVG L2"), std::string::npos);
    EXPECT_NE(t.find("SDR 20px"), std::string::npos);
    EXPECT_NE(t.find("4.500"), std::string::npos);
}

cv::Mat gray_image(int w, int h) { return cv::Mat(h, w, CV_8UC3, cv::Scalar(90, 90, 90)); }

TEST(Overlay, ConcentricWhenPredictionMatches) {
    const auto r = compose_overlay(gray_image(120, 80), cv::Mat(), CoordFrame::identity(), {50, 40}, {50, 40});
    EXPECT_FALSE(r.pred_clamped);
    EXPECT_EQ(r.image.at<cv::Vec3b>(40, 50), cv::Vec3b(0, 0, 255));
    // the circle crosses the four axes at the same distance from the cross
    int right = 0, left = 0;
    for (int d = 1; d < 10 && !right; ++d)
        right = r.image.at<cv::Vec3b>(40, 50 + d)[1] > 150 && r.image.at<cv::Vec3b>(40, 50 + d)[2] < 100 ? d : 0;
    for (int d = 1; d < 10 && !left; ++d)
        left = r.image.at<cv::Vec3b>(40, 50 - d)[1] > 150 && r.image.at<cv::Vec3b>(40, 50 - d)[2] < 100 ? d : 0;
    EXPECT_GT(right, 0);
    EXPECT_EQ(left, right);
}

TEST(Overlay, OutOfBoundsPredictionIsClamped) {
    const auto r = compose_overlay(gray_image(60, 40), cv::Mat(), CoordFrame::identity(), {10, 10}, {-25, 17.2});
    EXPECT_TRUE(r.pred_clamped);
    EXPECT_EQ(r.pred_drawn.u, 0.0);
    EXPECT_EQ(r.pred_drawn.v, 17.2);
    bool yellow = false;
    for (int y = 10; y < 25; ++y)
        for (int x = 0; x < 8; ++x)
            yellow = yellow || r.image.at<cv::Vec3b>(y, x) == cv::Vec3b(0, 255, 255);
    EXPECT_TRUE(yellow);
}

TEST(Overlay, HeatmapBlendAndDecodeRoundTrip) {
    cv::Mat img(48, 64, CV_32FC3, cv::Scalar(0.2, 0.4, 0.6));
    cv::Mat heat = cv::Mat::zeros(3, 4, CV_32F);
    heat.at<float>(1, 2) = 1.0f;
    const auto dir = test::scratch_dir("overlay");
    const auto path = dir / "o.png";
    const auto r = render_overlay(path, img, heat, CoordFrame::uniform(16, 7.5, 7.5), {40, 24}, {41, 25});
    const auto back = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
    ASSERT_EQ(back.rows, 48);
    ASSERT_EQ(back.cols, 64);
    EXPECT_EQ(cv::norm(back, r.image, cv::NORM_INF), 0.0);
    // hot cell tinted, far corner left at the base color (BGR of the RGB input)
    EXPECT_NE(r.image.at<cv::Vec3b>(20, 36), cv::Vec3b(153, 102, 51));
    EXPECT_EQ(r.image.at<cv::Vec3b>(2, 2), cv::Vec3b(153, 102, 51));
    EXPECT_THROW(render_overlay(path / "x.png", img, heat, CoordFrame::identity(), {1, 1}, {1, 1}),
                 std::runtime_error);
}

ExperimentConfig tiny_experiment(const std::filesystem::path& out) {
    auto cfg = parse_config(R"(
[experiment]
seed = 5
epochs = 2
batch_size = 4
lr = 0.001
lr_drop_epoch = 1
[data]
train_count = 8
eval_count = 4
desk_factor = 14
[synthetic]
side = 96
radius_min = 7
radius_max = 10
min_gap = 12
max_gap = 20
[model]
roi_base_side = 16
fine_input_side = 16
[backbone]
channels = 4,6,6
feature_channels = 6
[attention]
model_dim = 8
heads = 2
inducing_tokens = 4
co_attention_resample = 2
)");
    cfg.output_dir = out;
    return cfg;
}

TEST(Experiment, DeterministicRunsAndReports) {
    const auto dir = test::scratch_dir("experiment");
    const auto a = run_experiment(tiny_experiment(dir / "a"));
    const auto b = run_experiment(tiny_experiment(dir / "b"));
    EXPECT_EQ(slurp(a.loss_log), slurp(b.loss_log));
    EXPECT_EQ(slurp(a.checkpoint), slurp(b.checkpoint));
    EXPECT_EQ(a.report.avg_l2, b.report.avg_l2);
    // 8 samples / batch 4 over 2 epochs, plus the header line
    const auto log = slurp(a.loss_log);
    EXPECT_EQ(std::count(log.begin(), log.end(), '\n'), 5);
    EXPECT_NE(log.find(" 0.0001 "), std::string::npos);  // dropped lr in epoch 1
    double prev = 0;
    for (const auto& [t, v] : a.report.sdr) {
        EXPECT_GE(v, prev);
        prev = v;
    }
    EXPECT_EQ(a.report.samples.size(), 4u);
    EXPECT_TRUE(std::filesystem::exists(dir / "a" / "report.json"));
    EXPECT_TRUE(std::filesystem::exists(dir / "a" / "report.txt"));
    EXPECT_TRUE(std::filesystem::exists(dir / "a" / "last_good.ckpt"));

    const auto cfg = tiny_experiment(dir / "a");
    const auto again = evaluate_checkpoint(cfg, a.checkpoint, load_split(cfg.data, true));
    EXPECT_EQ(again.avg_l2, a.report.avg_l2);
    const auto ck = load_checkpoint(a.checkpoint);
    EXPECT_EQ(ck.header.config_hash, config_hash(cfg));
    EXPECT_EQ(config_hash(parse_config(ck.header.config_text)), ck.header.config_hash);
}

TEST(Experiment, NonFiniteLossAbortsAndKeepsCheckpoint) {
    const auto dir = test::scratch_dir("experiment_nan");
    auto cfg = tiny_experiment(dir);
    cfg.train.precision = Precision::F64;
    cfg.train.lr = 1e300;
    cfg.train.epochs = 3;
    EXPECT_THROW(run_experiment(cfg), TrainingAborted);
    const auto ck = load_checkpoint(dir / "last_good.ckpt");
    EXPECT_EQ(ck.header.precision, "f64");
    EXPECT_FALSE(std::filesystem::exists(dir / "model.ckpt"));
    EXPECT_NE(slurp(dir / "loss.log").find("# aborted"), std::string::npos);
}

TEST(GradCheckSuite, NamesAreUniqueAndLookupWorks) {
    std::set<std::string> names;
    for (const auto& c : gradcheck_cases())
        EXPECT_TRUE(names.insert(c.name).second) << c.name;
    EXPECT_TRUE(names.count("zian_forward"));
    EXPECT_TRUE(names.count("co_attention"));
    EXPECT_THROW(find_gradcheck_case("nope"), std::invalid_argument);
    const auto s = run_gradcheck_case(find_gradcheck_case("softmax_axis1"), 3, 1e-4);
    EXPECT_TRUE(s.passed());
}

}  // namespace
}  // namespace zian
