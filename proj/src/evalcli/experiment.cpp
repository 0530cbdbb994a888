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


#include "zian/experiment.hpp"

#include "zian/checkpoint.hpp"
#include "zian/optim.hpp"

#include "json.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <optional>

namespace zian {

namespace {

constexpr const char* precision_tag(Precision p) { return p == Precision::F32 ? "f32" : "f64"; }

std::vector<Sample> bilateral_halves(const ManifestDataset& ds) {
    std::vector<Sample> out;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        auto split = split_bilateral(ds.load(i));
        auto half = split.landmark_in_right ? std::move(split.right) : std::move(split.left);
        half.id += split.landmark_in_right ? "_R" : "_L";
        out.push_back(std::move(half));
    }
    return out;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os || !(os << text))
        throw std::runtime_error("cannot write " + path.string());
}

// Portable shuffle; std::shuffle's draw order is implementation-defined.
void shuffle_indices(std::vector<std::size_t>& idx, Rng& rng) {
    for (std::size_t i = idx.size(); i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(rng() % i);
        std::swap(idx[i - 1], idx[j]);
    }
}

template <typename T>
ExperimentResult run_typed(const ExperimentConfig& cfg, const RunOptions& options) {
    const auto model_cfg = cfg.resolved_model();
    const auto& tc = cfg.train;
    auto model = ZianModel<T>::build(model_cfg, tc.seed);
    const auto params = model.parameters();

    const auto train = load_split(cfg.data, false);
    const auto held_out = load_split(cfg.data, true);
    if (train.empty())
        throw ConfigError("experiment: empty training split");

    std::filesystem::create_directories(cfg.output_dir);
    ExperimentResult result;
    result.checkpoint = cfg.output_dir / "model.ckpt";
    result.loss_log = cfg.output_dir / "loss.log";
    const auto last_good = cfg.output_dir / "last_good.ckpt";
    const CheckpointHeader header{precision_tag(tc.precision), tc.seed, config_hash(cfg), canonical_config_text(cfg)};
    write_text(cfg.output_dir / "config.ini", header.config_text);

    std::FILE* log = std::fopen(result.loss_log.c_str(), "wb");
    if (!log)
        throw std::runtime_error("cannot write " + result.loss_log.string());
    std::fprintf(log, "# epoch step lr total coarse roi_sum fine\n");

    AdamState<T> adam;
    Rng order_rng = derive_rng(tc.seed, 0x0d3e);
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    save_checkpoint(last_good, header, params);

    const auto t0 = std::chrono::steady_clock::now();
    int step = 0;
    for (int epoch = 0; epoch < tc.epochs; ++epoch) {
        const bool dropped = epoch >= tc.lr_drop_epoch;
        adam.lr = tc.lr * (dropped && tc.schedule == Schedule::LrDrop ? tc.lr_drop_factor : 1.0);
        adam.weight_decay = dropped && tc.schedule == Schedule::WeightDecay ? tc.lr_drop_factor : 0.0;
        shuffle_indices(order, order_rng);
        for (std::size_t b = 0; b < order.size(); b += static_cast<std::size_t>(tc.batch_size)) {
            const std::size_t e = std::min(order.size(), b + static_cast<std::size_t>(tc.batch_size));
            std::vector<Prepared> batch;
            std::vector<Point> landmarks;
            for (std::size_t k = b; k < e; ++k) {
                const auto& s = train[order[k]];
                // per-sample stream: independent of batch composition
                Rng rng = derive_rng(mix_seed(tc.seed, static_cast<std::uint64_t>(epoch) + 1), order[k]);
                if (cfg.data.augment) {
                    const auto p = draw_augment(rng, cfg.data.augment_ranges, s.width(), s.height(), s.landmark);
                    const auto map = augment_transform(p, s.width(), s.height());
                    batch.push_back(preprocess_chain(s, Mode::Train, cfg.data.preprocess, &rng, &map));
                } else {
                    batch.push_back(preprocess_chain(s, Mode::Train, cfg.data.preprocess, &rng));
                }
                landmarks.push_back(batch.back().landmark);
            }
            for (const auto& p : params)
                if (p.trainable) {
                    auto t = p.tensor;
                    t.zero_grad();
                }
            const auto abort = [&](const std::string& why) {
                std::fprintf(log, "# aborted: %s\n", why.c_str());
                std::fclose(log);
                throw TrainingAborted("training aborted at epoch " + std::to_string(epoch) + " step " +
                                      std::to_string(step) + " (" + why + "); last good checkpoint kept at " +
                                      last_good.string());
            };
            std::optional<LossTerms<T>> loss;
            try {
                const auto out = model.forward(stack_inputs<T>(batch, 0, batch.size()), true);
                loss = zian_loss(out, landmarks, model_cfg.loss, model_cfg.delta);
            } catch (const NumericError& e) {
                abort(e.what());
            }
            const double total = static_cast<double>(loss->total.item());
            std::fprintf(log, "%d %d %.9g %.9g %.9g %.9g %.9g\n", epoch, step, adam.lr, total, loss->coarse,
                         loss->roi_sum, loss->fine);
            if (!std::isfinite(total))
                abort("non-finite loss");
            loss->total.backward();
            adam_step(params, adam);
            if (options.on_step)
                options.on_step(epoch, step, total);
            ++step;
        }
        std::fflush(log);
        save_checkpoint(last_good, header, params);
        if (!options.quiet)
            std::fprintf(stderr, "epoch %d/%d done\n", epoch + 1, tc.epochs);
    }
    std::fclose(log);
    result.train_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    save_checkpoint(result.checkpoint, header, params);

    result.report = evaluate_model(model, cfg, held_out);
    write_report(result.report, cfg.output_dir);
    return result;
}

template <typename T>
EvalReport evaluate_from(const ExperimentConfig& cfg, const Checkpoint& ck, const std::vector<Sample>& samples) {
    auto model = ZianModel<T>::build(cfg.resolved_model(), cfg.train.seed);
    apply_checkpoint(ck, model.parameters());
    return evaluate_model(model, cfg, samples);
}

}  // namespace

std::vector<Sample> load_split(const DataConfig& cfg, bool held_out) {
    std::vector<Sample> out;
    if (cfg.source == DataSource::Synthetic) {
        const int n = held_out ? cfg.eval_count : cfg.train_count;
        const std::uint64_t base = cfg.data_seed + (held_out ? DataConfig::kHeldOutSeedOffset : 0);
        for (int i = 0; i < n; ++i)
            out.push_back(generate_synthetic_sample(base + static_cast<std::uint64_t>(i), cfg.synthetic));
        return out;
    }
    const auto& path = held_out ? cfg.eval_manifest : cfg.train_manifest;
    if (path.empty())
        return out;
    const auto ds = load_manifest(path);
    if (cfg.bilateral)
        return bilateral_halves(ds);
    for (std::size_t i = 0; i < ds.size(); ++i)
        out.push_back(ds.load(i));
    return out;
}

template <typename T>
EvalReport evaluate_model(const ZianModel<T>& model, const ExperimentConfig& cfg, const std::vector<Sample>& samples) {
    if (samples.empty())
        throw MetricError("evaluate: no samples");
    EvalReport r;
    r.config_hash = config_hash(cfg);
    r.ablation = to_string(cfg.ablation);
    std::vector<Prepared> prepared;
    for (const auto& s : samples)
        prepared.push_back(preprocess_chain(s, Mode::Eval, cfg.data.preprocess));
    const auto preds = predict_prepared(model, prepared);
    std::vector<Point> gts, fine, coarse;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        SampleResult s;
        s.id = samples[i].id;
        s.gt = samples[i].landmark;
        s.pred = preds[i].raw;
        s.coarse_pred = preds[i].coarse_raw;
        s.error = std::hypot(s.pred.u - s.gt.u, s.pred.v - s.gt.v);
        s.coarse_error = std::hypot(s.coarse_pred.u - s.gt.u, s.coarse_pred.v - s.gt.v);
        s.fell_back = preds[i].fell_back;
        r.fallbacks += s.fell_back ? 1 : 0;
        gts.push_back(s.gt);
        fine.push_back(s.pred);
        coarse.push_back(s.coarse_pred);
        r.samples.push_back(std::move(s));
    }
    r.avg_l2 = avg_l2(fine, gts);
    r.coarse_avg_l2 = avg_l2(coarse, gts);
    for (double t : cfg.sdr_thresholds)
        r.sdr[t] = sdr(fine, gts, t);
    return r;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg, const RunOptions& options) {
    cfg.validate();
    return cfg.train.precision == Precision::F32 ? run_typed<float>(cfg, options) : run_typed<double>(cfg, options);
}

EvalReport evaluate_checkpoint(const ExperimentConfig& cfg, const std::filesystem::path& checkpoint,
                               const std::vector<Sample>& samples) {
    cfg.validate();
    const auto ck = load_checkpoint(checkpoint);
    return cfg.train.precision == Precision::F32 ? evaluate_from<float>(cfg, ck, samples)
                                                 : evaluate_from<double>(cfg, ck, samples);
}

std::string report_json(const EvalReport& r) {
    nlohmann::ordered_json j;
    j["config_hash"] = r.config_hash;
    j["ablation"] = r.ablation;
    j["avg_l2"] = r.avg_l2;
    j["coarse_avg_l2"] = r.coarse_avg_l2;
    j["fallbacks"] = r.fallbacks;
    auto& sdr_j = j["sdr"];
    sdr_j = nlohmann::ordered_json::object();
    for (const auto& [t, v] : r.sdr) {
        char key[32];
        std::snprintf(key, sizeof(key), "%g", t);
        sdr_j[key] = v;
    }
    auto& rows = j["samples"];
    rows = nlohmann::ordered_json::array();
    for (const auto& s : r.samples)
        rows.push_back({{"id", s.id},
                        {"gt", {s.gt.u, s.gt.v}},
                        {"pred", {s.pred.u, s.pred.v}},
                        {"coarse_pred", {s.coarse_pred.u, s.coarse_pred.v}},
                        {"error", s.error},
                        {"coarse_error", s.coarse_error},
                        {"fell_back", s.fell_back}});
    return j.dump(2) + "\n";
}

std::string report_table(const EvalReport& r) {
    std::string head = "Method           AVG L2", line;
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%-16s %6.3f", r.ablation.c_str(), r.avg_l2);
    line = buf;
    for (const auto& [t, v] : r.sdr) {
        char col[32];
        const int width = std::snprintf(col, sizeof(col), "  SDR %gpx", t);
        head += col;
        std::snprintf(buf, sizeof(buf), "%*.2f", width, v);
        line += buf;
    }
    std::snprintf(buf, sizeof(buf), "coarse head AVG L2 %.3f, fine fallbacks %zu/%zu\n", r.coarse_avg_l2, r.fallbacks,
                  r.samples.size());
    return head + "\n" + line + "\n" + buf + "config " + r.config_hash + "\n";
}

void write_report(const EvalReport& r, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    write_text(dir / "report.json", report_json(r));
    write_text(dir / "report.txt", report_table(r));
}

template EvalReport evaluate_model(const ZianModel<float>&, const ExperimentConfig&, const std::vector<Sample>&);
template EvalReport evaluate_model(const ZianModel<double>&, const ExperimentConfig&, const std::vector<Sample>&);

}  // namespace zian
