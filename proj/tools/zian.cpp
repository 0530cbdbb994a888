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


// Command-line front end: train, eval, infer, synth, gradcheck.

#include "zian/checkpoint.hpp"
#include "zian/experiment.hpp"
#include "zian/gradcheck_suite.hpp"
#include "zian/overlay.hpp"

#include "CLI11.hpp"

#include <cstdio>
#include <iostream>

namespace {

using namespace zian;

int cmd_train(const std::filesystem::path& config, const std::string& out, bool verbose) {
    auto cfg = load_config(config);
    if (!out.empty())
        cfg.output_dir = out;
    RunOptions opt;
    opt.quiet = !verbose;
    const auto r = run_experiment(cfg, opt);
    std::cout << report_table(r.report);
    std::printf("trained in %.1f s; checkpoint %s\n", r.train_seconds, r.checkpoint.c_str());
    return 0;
}

int cmd_eval(const std::filesystem::path& config, const std::filesystem::path& checkpoint,
             const std::filesystem::path& manifest, const std::string& out) {
    auto cfg = load_config(config);
    cfg.data.source = DataSource::Manifest;
    cfg.data.eval_manifest = manifest;
    const auto samples = load_split(cfg.data, true);
    const auto report = evaluate_checkpoint(cfg, checkpoint, samples);
    std::cout << report_table(report);
    if (!out.empty())
        write_report(report, out);
    return 0;
}

template <typename T>
int infer_typed(const ExperimentConfig& cfg, const Checkpoint& ck, const std::filesystem::path& image,
                const std::string& overlay) {
    auto model = ZianModel<T>::build(cfg.resolved_model(), cfg.train.seed);
    apply_checkpoint(ck, model.parameters());
    Sample s;
    s.id = image.stem().string();
    s.source = SampleSource::Manifest;
    s.image = read_image(image);
    s.has_landmark = false;
    const auto prepared = preprocess_chain(s, Mode::Eval, cfg.data.preprocess);
    NoGradGuard no_grad;
    const auto out = model.forward(stack_inputs<T>({prepared}, 0, 1), false);
    const auto pred = prepared.to_raw.to_original(out.pred[0]);
    const auto coarse = prepared.to_raw.to_original(out.coarse_pred[0]);
    std::printf("%s u=%.3f v=%.3f (coarse u=%.3f v=%.3f)%s\n", s.id.c_str(), pred.u, pred.v, coarse.u, coarse.v,
                out.fell_back[0] ? " [fine heatmap flat, coarse used]" : "");
    if (!overlay.empty()) {
        const auto& head = out.fine.defined() ? out.fine : out.coarse;
        const auto hm = head.heatmap(0);
        // no ground truth: the cross sits on the prediction
        render_overlay(overlay, s.image, heatmap_to_mat(hm), frame_compose(prepared.to_raw, hm.frame), pred, pred);
        std::printf("overlay written to %s\n", overlay.c_str());
    }
    return 0;
}

int cmd_infer(const std::filesystem::path& checkpoint, const std::filesystem::path& image,
              const std::string& overlay) {
    const auto ck = load_checkpoint(checkpoint);
    const auto cfg = parse_config(ck.header.config_text);
    return cfg.train.precision == Precision::F32 ? infer_typed<float>(cfg, ck, image, overlay)
                                                 : infer_typed<double>(cfg, ck, image, overlay);
}

int cmd_synth(int count, const std::filesystem::path& out, std::uint64_t seed, int side) {
    SyntheticConfig cfg;
    cfg.side = side;
    const auto manifest = export_synthetic_set(out, count, seed, cfg);
    std::printf("wrote %d samples; manifest %s\n", count, manifest.c_str());
    return 0;
}

int cmd_gradcheck(const std::string& op, int seeds, double tol, bool list) {
    if (list) {
        for (const auto& c : gradcheck_cases())
            std::printf("%s\n", c.name.c_str());
        return 0;
    }
    std::vector<const GradCheckCase*> cases;
    if (op.empty())
        for (const auto& c : gradcheck_cases())
            cases.push_back(&c);
    else
        cases.push_back(&find_gradcheck_case(op));
    int failed = 0;
    double total = 0.0;
    for (const auto* c : cases) {
        const auto s = run_gradcheck_case(*c, seeds, tol);
        total += s.seconds;
        failed += s.passed() ? 0 : 1;
        std::printf("%-24s %s  max rel %.3e (seed %llu, %s)  checked %zu  skipped %zu  %.2f s\n", s.name.c_str(),
                    s.passed() ? "PASS" : "FAIL", s.max_rel_error, static_cast<unsigned long long>(s.worst_seed),
                    s.worst_input.c_str(), s.checked, s.skipped_nonsmooth, s.seconds);
    }
    std::printf("%zu ops, %d failed, %.1f s\n", cases.size(), failed, total);
    return failed ? 1 : 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"ZIAN landmark localization toolkit"};
    app.require_subcommand(1);

    std::filesystem::path config, checkpoint, manifest, image, synth_out;
    std::string out, overlay, op;
    bool verbose = false, list = false;
    int count = 0, side = 384, seeds = 20;
    std::uint64_t seed = 0;
    double tol = 1e-4;

    auto* train = app.add_subcommand("train", "train and evaluate one configuration");
    train->add_option("--config", config, "experiment config file")->required()->check(CLI::ExistingFile);
    train->add_option("--out", out, "output directory (overrides the config)");
    train->add_flag("-v,--verbose", verbose, "print progress per epoch");

    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a manifest");
    eval->add_option("--config", config, "experiment config file")->required()->check(CLI::ExistingFile);
    eval->add_option("--checkpoint", checkpoint, "model checkpoint")->required()->check(CLI::ExistingFile);
    eval->add_option("--manifest", manifest, "manifest with id,path,u,v")->required()->check(CLI::ExistingFile);
    eval->add_option("--out", out, "write report.json and report.txt here");

    auto* infer = app.add_subcommand("infer", "locate the landmark in one image");
    infer->add_option("--checkpoint", checkpoint, "model checkpoint")->required()->check(CLI::ExistingFile);
    infer->add_option("--image", image, "input image")->required()->check(CLI::ExistingFile);
    infer->add_option("--overlay", overlay, "write a heatmap overlay to this file");

    auto* synth = app.add_subcommand("synth", "export a synthetic data set");
    synth->add_option("--count", count, "number of samples")->required()->check(CLI::PositiveNumber);
    synth->add_option("--out", synth_out, "output directory")->required();
    synth->add_option("--seed", seed, "first sample seed");
    synth->add_option("--side", side, "image side in pixels")->check(CLI::Range(32, 4096));

    auto* grad = app.add_subcommand("gradcheck", "finite-difference gradient checks at 64-bit");
    grad->add_option("--op", op, "single op or block (default: all)");
    grad->add_option("--seeds", seeds, "seeds per op")->check(CLI::PositiveNumber);
    grad->add_option("--tol", tol, "max relative error");
    grad->add_flag("--list", list, "list op names");

    CLI11_PARSE(app, argc, argv);
    try {
        if (*train)
            return cmd_train(config, out, verbose);
        if (*eval)
            return cmd_eval(config, checkpoint, manifest, out);
        if (*infer)
            return cmd_infer(checkpoint, image, overlay);
        if (*synth)
            return cmd_synth(count, synth_out, seed, side);
        if (*grad)
            return cmd_gradcheck(op, seeds, tol, list);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 0;
}
