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


// Acceptance suite: one PASS/FAIL line per criterion.
//
//   acceptance [--only N] [--runs-dir DIR] [--epochs E] [--threads T]
//
// --epochs shortens the ablation training for local iteration; the
// criterion is only judged at the configured 30 epochs.

#include "zian/attention.hpp"
#include "zian/experiment.hpp"
#include "zian/gradcheck_suite.hpp"
#include "zian/ops.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <random>
#include <sstream>
#include <thread>

namespace {

using namespace zian;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Verdict {
    bool pass = true;
    std::string detail;
};

void fail(Verdict& v, const std::string& why) {
    if (v.pass)
        v.detail = why;
    v.pass = false;
}

std::string fmt(const char* f, double a) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), f, a);
    return buf;
}

// ---------------------------------------------------------------------------
// 1. gradient suite

Verdict criterion_gradients() {
    constexpr double kTol = 1e-4;
    constexpr int kSeeds = 20;
    constexpr double kBudget = 300.0;
    Verdict v;
    const auto t0 = Clock::now();
    double worst = 0.0;
    std::string worst_name;
    for (const auto& c : gradcheck_cases()) {
        const auto s = run_gradcheck_case(c, kSeeds, kTol);
        std::printf("  %-24s max rel %.3e over %d seeds (%zu elements, %zu skipped at kinks)\n", s.name.c_str(),
                    s.max_rel_error, kSeeds, s.checked, s.skipped_nonsmooth);
        if (s.max_rel_error > worst) {
            worst = s.max_rel_error;
            worst_name = s.name;
        }
        if (!s.passed())
            fail(v, s.name + " failed on " + std::to_string(s.failed_seeds) + " seed(s), max rel " +
                        fmt("%.3e", s.max_rel_error) + " in " + s.worst_input);
    }
    const double t = seconds_since(t0);
    if (t > kBudget)
        fail(v, "took " + fmt("%.1f", t) + " s > 300 s");
    if (v.pass)
        v.detail = std::to_string(gradcheck_cases().size()) + " ops x 20 seeds, worst " + fmt("%.2e", worst) + " (" +
                   worst_name + ") <= 1e-4, " + fmt("%.1f", t) + " s";
    return v;
}

// ---------------------------------------------------------------------------
// 2. formula fidelity

double direct_gaussian(double u, double v, double u0, double v0, double delta) {
    return std::exp(-((u - u0) * (u - u0) + (v - v0) * (v - v0)) / (2.0 * delta * delta));
}

double direct_head_mse(const HeadOutput<double>& head, const std::vector<Point>& lms, double delta) {
    const auto n = head.logits.dim(0), h = head.logits.dim(2), w = head.logits.dim(3);
    const auto d = head.logits.data();
    double acc = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
        const auto& f = head.frames[static_cast<std::size_t>(i)];
        const auto& lm = lms[static_cast<std::size_t>(i)];
        // landmark in grid units, computed from the frame definition
        const double gu = (lm.u - f.offset_u) / f.scale_u, gv = (lm.v - f.offset_v) / f.scale_v;
        for (std::int64_t r = 0; r < h; ++r)
            for (std::int64_t c = 0; c < w; ++c) {
                const double t = direct_gaussian(static_cast<double>(c), static_cast<double>(r), gu, gv, delta);
                const double e = d[static_cast<std::size_t>((i * h + r) * w + c)] - t;
                acc += e * e;
            }
    }
    return acc / static_cast<double>(n * h * w);
}

Verdict criterion_formulas() {
    Verdict v;
    double worst_g = 0.0;
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> pos(-3.0, 36.0);
    for (int trial = 0; trial < 50; ++trial) {
        const double u0 = trial == 0 ? 16.0 : pos(rng), v0 = trial == 0 ? 16.0 : pos(rng);
        const auto hm = gaussian_target<double>(u0, v0, 33, 33, 2.0);
        const auto d = hm.grid.data();
        for (int r = 0; r < 33; ++r)
            for (int c = 0; c < 33; ++c)
                worst_g = std::max(worst_g, std::abs(d[static_cast<std::size_t>(r * 33 + c)] - direct_gaussian(c, r, u0, v0, 2.0)));
    }
    if (worst_g > 1e-12)
        fail(v, "gaussian_target deviates by " + fmt("%.3e", worst_g));

    // loss: a small full model, weights (1, 0.25, 1)
    ModelConfig cfg;
    cfg.apply_ablation(Ablation::Full);
    cfg.backbone.channels = {4, 6, 6};
    cfg.backbone.feature_channels = 6;
    cfg.attention.model_dim = 8;
    cfg.attention.heads = 2;
    cfg.attention.inducing_tokens = 4;
    cfg.attention.co_attention_resample = 2;
    cfg.input_side = 64;
    cfg.roi.base_side = 16;
    cfg.roi.fine_input_side = 16;
    double worst_l = 0.0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto model = ZianModel<double>::build(cfg, seed);
        Rng r = derive_rng(seed, 77);
        std::uniform_real_distribution<double> px(0.0, 1.0), lm(4.0, 60.0);
        std::vector<double> img(3 * 64 * 64 * 3);
        for (auto& x : img)
            x = px(r);
        const auto out = model.forward(Tensor<double>({3, 3, 64, 64}, img), false);
        std::vector<Point> lms;
        for (int i = 0; i < 3; ++i)
            lms.push_back({lm(r), lm(r)});
        const LossWeights w{1.0, 0.25, 1.0};
        const double got = zian_loss(out, lms, w, 2.0).total.item();
        double want = 1.0 * direct_head_mse(out.coarse, lms, 2.0) + 1.0 * direct_head_mse(out.fine, lms, 2.0);
        for (const auto& roi : out.rois)
            want += 0.25 * direct_head_mse(roi, lms, 2.0);
        worst_l = std::max(worst_l, std::abs(got - want));
    }
    if (worst_l > 1e-12)
        fail(v, "zian_loss deviates by " + fmt("%.3e", worst_l));
    if (v.pass)
        v.detail = "gaussian max dev " + fmt("%.1e", worst_g) + " on 33x33 (50 centers), loss max dev " +
                   fmt("%.1e", worst_l) + " (10 models)";
    return v;
}

// ---------------------------------------------------------------------------
// 3. co-attention invariants

Verdict criterion_co_attention() {
    Verdict v;
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> d(-3.0, 3.0);
    double worst_col = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        const int c = 1 + trial % 5, h = 2 + trial % 3, w = 3 + trial % 2;
        std::vector<float> va(static_cast<std::size_t>(2 * c * h * w)), eye(static_cast<std::size_t>(c * c), 0.0f);
        for (auto& x : va)
            x = static_cast<float>(d(rng));
        for (int i = 0; i < c; ++i)
            eye[static_cast<std::size_t>(i * c + i)] = 1.0f;
        const Tensor<float> a({2, c, h, w}, va);
        const auto z = co_attention_summaries(a, a, Tensor<float>({c, c}, eye));
        const auto za = z.z_a.data(), zb = z.z_b.data();
        if (!std::equal(za.begin(), za.end(), zb.begin()))
            fail(v, "Z_a != Z_b for V_a = V_b, W = I");
        const int hw = h * w;
        for (const auto* attn : {&z.attn_a, &z.attn_b})
            for (int n = 0; n < 2; ++n)
                for (int col = 0; col < hw; ++col) {
                    double s = 0.0;
                    for (int row = 0; row < hw; ++row)
                        s += attn->at({n, row, col});
                    worst_col = std::max(worst_col, std::abs(s - 1.0));
                }
    }
    if (worst_col > 1e-6)
        fail(v, "softmax column sum off by " + fmt("%.3e", worst_col));

    // C = 1, HW = 2 by hand: S_ij = b_i w a_j, column softmax over i
    const double a[2] = {0.5, -1.0}, b[2] = {2.0, 0.3}, wv = 0.7;
    double za_hand[2], zb_hand[2];
    for (int j = 0; j < 2; ++j) {
        const double e0 = std::exp(b[0] * wv * a[j]), e1 = std::exp(b[1] * wv * a[j]);
        za_hand[j] = (a[0] * e0 + a[1] * e1) / (e0 + e1);
        const double f0 = std::exp(b[j] * wv * a[0]), f1 = std::exp(b[j] * wv * a[1]);
        zb_hand[j] = (b[0] * f0 + b[1] * f1) / (f0 + f1);
    }
    const auto z = co_attention_summaries(Tensor<double>({1, 1, 1, 2}, {a[0], a[1]}),
                                          Tensor<double>({1, 1, 1, 2}, {b[0], b[1]}), Tensor<double>({1, 1}, {wv}));
    double worst_hand = 0.0;
    for (int j = 0; j < 2; ++j) {
        worst_hand = std::max(worst_hand, std::abs(z.z_a.data()[static_cast<std::size_t>(j)] - za_hand[j]));
        worst_hand = std::max(worst_hand, std::abs(z.z_b.data()[static_cast<std::size_t>(j)] - zb_hand[j]));
    }
    if (worst_hand > 1e-12)
        fail(v, "hand case deviates by " + fmt("%.3e", worst_hand));
    if (v.pass)
        v.detail = "Z_a == Z_b bitwise (20 cases), column sums within " + fmt("%.1e", worst_col) +
                   ", hand case within " + fmt("%.1e", worst_hand);
    return v;
}

// ---------------------------------------------------------------------------
// 4. geometry audit

bool dyadic_round_trip(std::mt19937_64& rng) {
    std::uniform_int_distribution<int> e(-4, 4), k(-4096, 4096);
    const CoordFrame f = CoordFrame::uniform(std::ldexp(1.0, e(rng)), k(rng) / 64.0, k(rng) / 64.0);
    const CoordFrame g{std::ldexp(1.0, e(rng)), std::ldexp(1.0, e(rng)), k(rng) / 32.0, k(rng) / 32.0};
    const Point p{k(rng) / 16.0, k(rng) / 16.0};
    const auto q = f.from_original(f.to_original(p));
    const auto composed = frame_compose(f, g);
    const auto direct = f.to_original(g.to_original(p));
    const auto via = composed.to_original(p);
    const auto back = frame_invert(composed).to_original(via);
    return q.u == p.u && q.v == p.v && direct.u == via.u && direct.v == via.v && back.u == p.u && back.v == p.v;
}

Verdict criterion_geometry() {
    Verdict v;
    PreprocessConfig pre;
    RoiSpec spec;  // x1 / x2 windows of 32 / 64 px onto 32 px
    const auto stride = strided_frame(4);
    const CoordFrame coarse = frame_compose(strided_frame(4), strided_frame(4));
    SyntheticConfig syn;
    std::mt19937_64 rng(21);
    std::uniform_int_distribution<int> side(300, 420);
    std::uniform_real_distribution<double> jitter(-8.0, 8.0);
    double worst_ratio = 0.0;
    int audited = 0;
    for (int i = 0; i < 1000; ++i) {
        syn.side = side(rng);
        const auto raw = generate_synthetic_sample(50'000 + static_cast<std::uint64_t>(i), syn);
        Rng srng = derive_rng(9, static_cast<std::uint64_t>(i));
        Prepared p;
        Point target = raw.landmark;
        if (i % 2) {
            const auto params = draw_augment(srng, AugmentRanges{}, raw.width(), raw.height(), raw.landmark);
            const auto map = augment_transform(params, raw.width(), raw.height());
            p = preprocess_chain(raw, Mode::Train, pre, &srng, &map);
            target = p.raw_landmark;
        } else {
            p = preprocess_chain(raw, i % 4 ? Mode::Train : Mode::Eval, pre, &srng);
        }
        // a coarse estimate near the landmark picks the ROI centers
        const Point center = crop_center({p.landmark.u + jitter(rng), p.landmark.v + jitter(rng)});
        const auto img = stack_inputs<float>({p}, 0, 1);
        const auto crops = crop_rois(img, {center}, spec);
        std::vector<std::pair<std::string, CoordFrame>> heads{{"coarse", coarse}};
        for (std::size_t s = 0; s < crops.size(); ++s)
            heads.push_back({"roi x" + std::to_string(static_cast<int>(spec.scales[s])),
                             frame_compose(crops[s].frames[0], stride)});
        heads.push_back({"fine", heads[1].second});
        for (const auto& [name, frame] : heads) {
            const int n = name == "coarse" ? pre.coarse_side() / 4 : spec.fine_input_side / 4;
            const auto hm = gaussian_target<double>(frame, p.landmark, n, n, 2.0);
            if (hm.off_grid) {
                fail(v, "sample " + std::to_string(i) + ": landmark off the " + name + " grid");
                continue;
            }
            const auto peak = peak_coords(hm);
            const auto back = p.to_raw.to_original(peak.original);
            const double cell_u = frame.scale_u * p.to_raw.scale_u, cell_v = frame.scale_v * p.to_raw.scale_v;
            const double ratio = std::max(std::abs(back.u - target.u) / (0.5 * cell_u),
                                          std::abs(back.v - target.v) / (0.5 * cell_v));
            worst_ratio = std::max(worst_ratio, ratio);
            if (ratio > 1.0 + 1e-9)
                fail(v, "sample " + std::to_string(i) + " " + name + " head: error " + fmt("%.3f", ratio) +
                            " half-cells");
            ++audited;
        }
    }
    int exact = 0;
    for (int i = 0; i < 1000; ++i)
        exact += dyadic_round_trip(rng) ? 1 : 0;
    if (exact != 1000)
        fail(v, std::to_string(1000 - exact) + " dyadic frame round trips were inexact");
    if (v.pass)
        v.detail = std::to_string(audited) + " head peaks within " + fmt("%.3f", worst_ratio) +
                   " half-cells of the raw landmark; 1000/1000 dyadic round trips exact";
    return v;
}

// ---------------------------------------------------------------------------
// 5. ablation ordering on synthetic data

struct RunRecord {
    Ablation ablation;
    std::uint64_t seed;
    double avg_l2 = 0.0;
    double coarse_avg_l2 = 0.0;
    double seconds = 0.0;
    std::string error;
};

Verdict criterion_ablation(const std::filesystem::path& runs_dir, int epochs, unsigned threads) {
    Verdict v;
    const auto base = load_config(ZIAN_SOURCE_DIR "/configs/desk.ini");
    const std::vector<Ablation> ladder{Ablation::BackboneOnly, Ablation::OneRoi, Ablation::OneRoiSa,
                                       Ablation::MultiRoiSa, Ablation::Full};
    const std::vector<std::uint64_t> seeds{1, 2, 3};
    std::vector<RunRecord> runs;
    for (auto a : ladder)
        for (auto s : seeds)
            runs.push_back(RunRecord{a, s, 0.0, 0.0, 0.0, {}});

    const auto t0 = Clock::now();
    std::atomic<std::size_t> next{0};
    std::mutex print;
    const auto worker = [&] {
        for (std::size_t i; (i = next++) < runs.size();) {
            auto& r = runs[i];
            auto cfg = base;
            cfg.ablation = r.ablation;
            cfg.train.seed = r.seed;
            cfg.train.epochs = epochs;
            cfg.output_dir = runs_dir / (to_string(r.ablation) + "_seed" + std::to_string(r.seed));
            try {
                const auto res = run_experiment(cfg);
                r.avg_l2 = res.report.avg_l2;
                r.coarse_avg_l2 = res.report.coarse_avg_l2;
                r.seconds = res.train_seconds;
            } catch (const std::exception& e) {
                r.error = e.what();
            }
            std::lock_guard lock(print);
            std::printf("  %-14s seed %llu  AVG L2 %8.3f  coarse head %8.3f  %6.1f s%s\n", to_string(r.ablation).c_str(),
                        static_cast<unsigned long long>(r.seed), r.avg_l2, r.coarse_avg_l2, r.seconds,
                        r.error.empty() ? "" : ("  ERROR " + r.error).c_str());
            std::fflush(stdout);
        }
    };
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t)
        pool.emplace_back(worker);
    for (auto& t : pool)
        t.join();
    const double wall = seconds_since(t0);

    // constant-center baseline on the same held-out set
    const auto held_out = load_split(base.data, true);
    std::vector<Point> center, gts;
    for (const auto& s : held_out) {
        center.push_back({(s.width() - 1) / 2.0, (s.height() - 1) / 2.0});
        gts.push_back(s.landmark);
    }
    const double baseline = avg_l2(center, gts);

    nlohmann::ordered_json record;
    record["epochs"] = epochs;
    record["baseline_avg_l2"] = baseline;
    std::printf("  constant-center baseline AVG L2 %.3f\n", baseline);
    std::vector<double> means;
    double full_fine = 0.0, full_coarse = 0.0;
    for (auto a : ladder) {
        double m = 0.0, mc = 0.0;
        for (const auto& r : runs) {
            if (r.ablation != a)
                continue;
            if (!r.error.empty())
                fail(v, to_string(a) + " seed " + std::to_string(r.seed) + " failed: " + r.error);
            m += r.avg_l2 / static_cast<double>(seeds.size());
            mc += r.coarse_avg_l2 / static_cast<double>(seeds.size());
            record["runs"].push_back({{"ablation", to_string(a)},
                                      {"seed", r.seed},
                                      {"avg_l2", r.avg_l2},
                                      {"coarse_avg_l2", r.coarse_avg_l2},
                                      {"train_seconds", r.seconds}});
        }
        means.push_back(m);
        record["mean_avg_l2"][to_string(a)] = m;
        std::printf("  mean %-14s AVG L2 %8.3f  coarse head %8.3f\n", to_string(a).c_str(), m, mc);
        if (!(m < baseline))
            fail(v, "(a) " + to_string(a) + " mean " + fmt("%.3f", m) + " does not beat the baseline " +
                        fmt("%.3f", baseline));
        if (a == Ablation::Full) {
            full_fine = m;
            full_coarse = mc;
        }
    }
    if (!(means.back() <= means.front()))
        fail(v, "(b) full " + fmt("%.3f", means.back()) + " > backbone-only " + fmt("%.3f", means.front()));
    if (!(full_fine <= full_coarse))
        fail(v, "(c) full model fine head " + fmt("%.3f", full_fine) + " > coarse head " + fmt("%.3f", full_coarse));

    // runs are single-threaded and independent, so their core time spread
    // over four cores bounds the four-core wall time
    double core_seconds = 0.0;
    for (const auto& r : runs)
        core_seconds += r.seconds;
    const double four_core = core_seconds / 4.0;
    record["wall_seconds"] = wall;
    record["train_core_seconds"] = core_seconds;
    record["four_core_estimate_seconds"] = four_core;
    std::ofstream(runs_dir / "ablation_results.json") << record.dump(2) << "\n";
    if (epochs != 30)
        fail(v, "shortened run (" + std::to_string(epochs) + " epochs) is not a verdict");
    if (four_core > 1800.0)
        fail(v, "four-core estimate " + fmt("%.0f", four_core) + " s > 1800 s");
    if (v.pass) {
        std::ostringstream os;
        os << "baseline " << fmt("%.2f", baseline) << " > every config; full " << fmt("%.2f", means.back())
           << " <= backbone-only " << fmt("%.2f", means.front()) << "; full fine " << fmt("%.2f", full_fine)
           << " <= coarse " << fmt("%.2f", full_coarse) << "; " << fmt("%.0f", core_seconds) << " core-s ("
           << fmt("%.0f", four_core) << " s on 4 cores)";
        v.detail = os.str();
    }
    return v;
}

// ---------------------------------------------------------------------------
// 6. metrics against a brute-force reimplementation

Verdict criterion_metrics() {
    Verdict v;
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> d(-40.0, 40.0);
    std::uniform_int_distribution<int> len(1, 64);
    double worst = 0.0;
    for (int set = 0; set < 100; ++set) {
        const int n = len(rng);
        std::vector<Point> p, g;
        for (int i = 0; i < n; ++i) {
            p.push_back({d(rng), d(rng)});
            g.push_back({d(rng), d(rng)});
        }
        double total = 0.0;
        std::vector<double> dist;
        for (int i = 0; i < n; ++i) {
            const double du = p[i].u - g[i].u, dv = p[i].v - g[i].v;
            dist.push_back(std::sqrt(du * du + dv * dv));
            total += dist.back();
        }
        worst = std::max(worst, std::abs(avg_l2(p, g) - total / n));
        double prev = -1.0;
        for (double t : {0.5, 5.0, 10.0, 20.0, 35.0, 60.0, 200.0}) {
            int hits = 0;
            for (double e : dist)
                hits += e <= t ? 1 : 0;
            const double s = sdr(p, g, t);
            worst = std::max(worst, std::abs(s - 100.0 * hits / n));
            if (s < prev)
                fail(v, "sdr decreased with threshold in set " + std::to_string(set));
            prev = s;
        }
    }
    if (worst > 1e-12)
        fail(v, "metric deviates by " + fmt("%.3e", worst));
    if (v.pass)
        v.detail = "100 sets, max dev " + fmt("%.1e", worst) + ", sdr monotone over 7 thresholds";
    return v;
}

// ---------------------------------------------------------------------------
// 7. determinism

std::string slurp(const std::filesystem::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

Verdict criterion_determinism(const std::filesystem::path& runs_dir) {
    Verdict v;
    auto cfg = load_config(ZIAN_SOURCE_DIR "/configs/desk.ini");
    cfg.train.epochs = 2;
    cfg.data.train_count = 64;
    cfg.data.eval_count = 16;
    std::vector<std::filesystem::path> dirs{runs_dir / "determinism_a", runs_dir / "determinism_b"};
    for (const auto& d : dirs) {
        std::filesystem::remove_all(d);
        cfg.output_dir = d;
        run_experiment(cfg);
    }
    for (const char* f : {"loss.log", "model.ckpt", "last_good.ckpt", "report.json"}) {
        const auto a = slurp(dirs[0] / f), b = slurp(dirs[1] / f);
        if (a.empty() || a != b)
            fail(v, std::string(f) + " differs between runs");
    }
    if (v.pass)
        v.detail = "full ablation, 2 epochs: loss.log, model.ckpt, last_good.ckpt, report.json bitwise identical";
    return v;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"acceptance suite"};
    int only = 0, epochs = 30;
    unsigned threads = std::clamp(std::thread::hardware_concurrency(), 1u, 4u);
    std::filesystem::path runs_dir = "acceptance_runs";
    app.add_option("--only", only, "run a single criterion (1-7)")->check(CLI::Range(0, 7));
    app.add_option("--epochs", epochs, "ablation epochs")->check(CLI::PositiveNumber);
    app.add_option("--threads", threads, "parallel ablation runs")->check(CLI::Range(1u, 64u));
    app.add_option("--runs-dir", runs_dir, "where ablation runs are written");
    CLI11_PARSE(app, argc, argv);
    std::filesystem::create_directories(runs_dir);

    const std::vector<std::pair<const char*, std::function<Verdict()>>> criteria{
        {"gradient suite", criterion_gradients},
        {"formula fidelity", criterion_formulas},
        {"co-attention invariants", criterion_co_attention},
        {"geometry audit", criterion_geometry},
        {"synthetic ablation ordering", [&] { return criterion_ablation(runs_dir, epochs, threads); }},
        {"metric correctness", criterion_metrics},
        {"determinism", [&] { return criterion_determinism(runs_dir); }},
    };
    std::vector<std::string> lines;
    bool all = true;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        if (only && static_cast<int>(i) + 1 != only)
            continue;
        std::printf("criterion %zu: %s\n", i + 1, criteria[i].first);
        std::fflush(stdout);
        const auto t0 = Clock::now();
        Verdict v;
        try {
            v = criteria[i].second();
        } catch (const std::exception& e) {
            v = {false, std::string("exception: ") + e.what()};
        }
        char line[1024];
        std::snprintf(line, sizeof(line), "%s %zu %s: %s [%.1f s]", v.pass ? "PASS" : "FAIL", i + 1, criteria[i].first,
                      v.detail.c_str(), seconds_since(t0));
        std::printf("%s\n", line);
        std::fflush(stdout);
        lines.push_back(line);
        all = all && v.pass;
    }
    std::printf("\nsummary\n");
    for (const auto& l : lines)
        std::printf("%s\n", l.c_str());
    return all ? 0 : 1;
}
