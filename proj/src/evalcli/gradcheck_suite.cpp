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


#include "zian/gradcheck_suite.hpp"

#include "zian/attention.hpp"
#include "zian/backbone.hpp"
#include "zian/model.hpp"
#include "zian/ops.hpp"

#include <chrono>
#include <random>
#include <stdexcept>

namespace zian {

namespace {

using T = double;

Tensor<T> uniform(Shape shape, Rng& rng, bool grad, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> d(lo, hi);
    std::vector<T> v(static_cast<std::size_t>(shape_numel(shape)));
    for (auto& x : v)
        x = d(rng);
    Tensor<T> t(std::move(shape), std::move(v));
    t.set_requires_grad(grad);
    return t;
}

// sum(out * R) with a fixed random R, so every output element carries a
// distinct weight.
Tensor<T> project(const Tensor<T>& out, std::uint64_t seed) {
    Rng rng = derive_rng(seed, 0x9a0);
    return sum(mul(out, uniform(out.shape(), rng, false)));
}

GradCheckOptions options(std::uint64_t seed, std::size_t sample = 0) {
    GradCheckOptions o;
    o.max_elements_per_input = sample;
    o.sample_seed = seed;
    return o;
}

using Build = std::function<Tensor<T>(const std::vector<Tensor<T>>&)>;

// Random inputs of the given shapes, loss = project(f(inputs)).
GradCheckResult check_inputs(std::uint64_t seed, const std::vector<Shape>& shapes, const Build& f,
                             std::size_t sample = 0) {
    Rng rng = derive_rng(seed, 0x1a);
    std::vector<Tensor<T>> xs;
    ParameterList<T> params;
    for (std::size_t i = 0; i < shapes.size(); ++i) {
        xs.push_back(uniform(shapes[i], rng, true));
        params.push_back({"x" + std::to_string(i), xs.back(), true});
    }
    return finite_difference_check([&] { return project(f(xs), seed); }, params, options(seed, sample));
}

ParameterList<T> trainable(const ParameterList<T>& all) {
    ParameterList<T> out;
    for (const auto& p : all)
        if (p.trainable)
            out.push_back(p);
    return out;
}

std::vector<GradCheckCase> build_cases() {
    std::vector<GradCheckCase> c;
    const auto unary = [&](const char* name, Shape shape, std::function<Tensor<T>(const Tensor<T>&)> f) {
        c.push_back({name, [shape, f](std::uint64_t s) {
                         return check_inputs(s, {shape}, [&](const auto& x) { return f(x[0]); });
                     }});
    };
    c.push_back({"add", [](std::uint64_t s) { return check_inputs(s, {{2, 3, 4}, {2, 3, 4}}, [](const auto& x) { return add(x[0], x[1]); }); }});
    c.push_back({"add_broadcast", [](std::uint64_t s) { return check_inputs(s, {{2, 3, 4}, {4}}, [](const auto& x) { return add(x[0], x[1]); }); }});
    c.push_back({"sub", [](std::uint64_t s) { return check_inputs(s, {{3, 5}, {3, 5}}, [](const auto& x) { return sub(x[0], x[1]); }); }});
    c.push_back({"mul", [](std::uint64_t s) { return check_inputs(s, {{3, 5}, {3, 5}}, [](const auto& x) { return mul(x[0], x[1]); }); }});
    unary("scale", {4, 3}, [](const auto& x) { return scale(x, T(-1.7)); });
    unary("relu", {5, 6}, [](const auto& x) { return relu(x); });
    unary("sum", {3, 4}, [](const auto& x) { return sum(x); });
    unary("mean", {3, 4}, [](const auto& x) { return mean(x); });
    unary("reshape", {2, 6}, [](const auto& x) { return reshape(x, {3, 4}); });
    unary("permute", {2, 3, 4}, [](const auto& x) { return permute(x, {2, 0, 1}); });
    unary("repeat_batch", {2, 3}, [](const auto& x) { return repeat_batch(x, 3); });
    unary("select_batch", {3, 2, 2}, [](const auto& x) { return select_batch(x, 1); });
    c.push_back({"concat", [](std::uint64_t s) {
                     return check_inputs(s, {{2, 3, 4}, {2, 1, 4}}, [](const auto& x) { return concat<T>(x, 1); });
                 }});
    c.push_back({"concat_channels", [](std::uint64_t s) {
                     return check_inputs(s, {{1, 2, 3, 3}, {1, 3, 3, 3}}, [](const auto& x) { return concat_channels<T>(x); });
                 }});
    c.push_back({"conv2d", [](std::uint64_t s) {
                     return check_inputs(s, {{2, 3, 6, 6}, {4, 3, 3, 3}, {4}},
                                         [](const auto& x) { return conv2d(x[0], x[1], x[2], 1, 1); });
                 }});
    c.push_back({"conv2d_stride2", [](std::uint64_t s) {
                     return check_inputs(s, {{2, 2, 7, 7}, {3, 2, 3, 3}, {3}},
                                         [](const auto& x) { return conv2d(x[0], x[1], x[2], 2, 1); });
                 }});
    c.push_back({"batchnorm2d_train", [](std::uint64_t s) {
                     return check_inputs(s, {{3, 2, 3, 3}, {2}, {2}}, [](const auto& x) {
                         Tensor<T> rm({2}, {0.0, 0.0}), rv({2}, {1.0, 1.0});
                         return batchnorm2d(x[0], x[1], x[2], rm, rv, true);
                     });
                 }});
    c.push_back({"batchnorm2d_eval", [](std::uint64_t s) {
                     return check_inputs(s, {{2, 2, 3, 3}, {2}, {2}}, [](const auto& x) {
                         Tensor<T> rm({2}, {0.3, -0.2}), rv({2}, {1.5, 0.7});
                         return batchnorm2d(x[0], x[1], x[2], rm, rv, false);
                     });
                 }});
    c.push_back({"layer_norm", [](std::uint64_t s) {
                     return check_inputs(s, {{2, 3, 5}, {5}, {5}}, [](const auto& x) { return layer_norm(x[0], x[1], x[2]); });
                 }});
    c.push_back({"matmul", [](std::uint64_t s) { return check_inputs(s, {{3, 4}, {4, 5}}, [](const auto& x) { return matmul(x[0], x[1]); }); }});
    c.push_back({"matmul_batched", [](std::uint64_t s) {
                     return check_inputs(s, {{2, 3, 4}, {2, 4, 2}}, [](const auto& x) { return matmul(x[0], x[1]); });
                 }});
    c.push_back({"matmul_shared", [](std::uint64_t s) {
                     return check_inputs(s, {{3, 4}, {2, 4, 2}}, [](const auto& x) { return matmul(x[0], x[1]); });
                 }});
    unary("softmax_axis1", {2, 4, 3}, [](const auto& x) { return softmax(x, 1); });
    unary("softmax_last", {3, 5}, [](const auto& x) { return softmax(x, -1); });
    unary("bilinear_up", {1, 2, 3, 4}, [](const auto& x) { return bilinear_resize(x, 7, 5); });
    unary("bilinear_down", {1, 2, 8, 8}, [](const auto& x) { return bilinear_resize(x, 3, 3); });
    unary("resample_zeros", {2, 1, 5, 5}, [](const auto& x) {
        const std::vector<AxisMap> rows{{0.7, -1.3}, {1.3, 0.4}}, cols{{0.9, 2.2}, {0.6, -0.8}};
        return resample<T>(x, 4, 6, rows, cols, Padding::Zeros);
    });
    unary("resample_border", {1, 2, 4, 4}, [](const auto& x) {
        const std::vector<AxisMap> rows{{0.8, -0.9}}, cols{{1.1, 0.35}};
        return resample<T>(x, 5, 5, rows, cols, Padding::Border);
    });
    c.push_back({"mse_loss", [](std::uint64_t s) {
                     return check_inputs(s, {{2, 1, 3, 3}, {2, 1, 3, 3}}, [](const auto& x) { return mse_loss(x[0], x[1]); });
                 }});
    c.push_back({"linear", [](std::uint64_t s) {
                     Rng rng = derive_rng(s, 2);
                     const auto lin = Linear<T>::make(4, 3, rng);
                     const auto x = uniform({2, 5, 4}, rng, true);
                     ParameterList<T> p{{"x", x, true}};
                     lin.collect("linear", p);
                     return finite_difference_check([&] { return project(lin(x), s); }, p, options(s));
                 }});
    c.push_back({"co_attention", [](std::uint64_t s) {
                     Rng rng = derive_rng(s, 3);
                     const auto ca = CoAttention<T>::make(2, 2, rng);
                     const auto a = uniform({2, 2, 4, 4}, rng, true), b = uniform({2, 2, 4, 4}, rng, true);
                     ParameterList<T> p{{"v_a", a, true}, {"v_b", b, true}};
                     ca.collect("coattn", p);
                     return finite_difference_check(
                         [&] {
                             const auto [x, y] = ca.forward(a, b, true);
                             return add(project(x, s), project(y, s + 1));
                         },
                         trainable(p), options(s));
                 }});
    c.push_back({"co_attention_summaries", [](std::uint64_t s) {
                     return check_inputs(s, {{1, 3, 2, 2}, {1, 3, 2, 2}, {3, 3}}, [](const auto& x) {
                         const auto z = co_attention_summaries(x[0], x[1], x[2]);
                         return concat_channels<T>(std::vector<Tensor<T>>{z.z_a, z.z_b});
                     });
                 }});
    c.push_back({"multihead_attention", [](std::uint64_t s) {
                     Rng rng = derive_rng(s, 4);
                     const auto mha = MultiHeadAttention<T>::make(4, 2, rng);
                     const auto q = uniform({2, 3, 4}, rng, true), ctx = uniform({2, 5, 4}, rng, true);
                     ParameterList<T> p{{"query", q, true}, {"context", ctx, true}};
                     mha.collect("mha", p);
                     return finite_difference_check([&] { return project(mha(q, ctx), s); }, p, options(s));
                 }});
    c.push_back({"self_attention_fusion", [](std::uint64_t s) {
                     Rng rng = derive_rng(s, 5);
                     AttentionConfig cfg;
                     cfg.inducing_tokens = 3;
                     cfg.model_dim = 4;
                     cfg.heads = 2;
                     const auto fusion = SelfAttentionFusion<T>::make(4, 2, 3, cfg, rng);
                     const auto a = uniform({2, 2, 2, 3}, rng, true), b = uniform({2, 2, 2, 3}, rng, true);
                     ParameterList<T> p{{"roi", a, true}, {"coarse", b, true}};
                     fusion.collect("fusion", p);
                     // zero-initialized embeddings would hide their own gradient path
                     auto pos = fusion.position;
                     for (auto& v : pos.mutable_data())
                         v = std::uniform_real_distribution<double>(-0.5, 0.5)(rng);
                     return finite_difference_check(
                         [&] { return project(fusion.forward(std::vector<Tensor<T>>{a, b}), s); }, p, options(s, 6));
                 }});
    c.push_back({"fine_head", [](std::uint64_t s) {
                     Rng rng = derive_rng(s, 6);
                     const auto head = FineHead<T>::make(3, 4, rng);
                     const auto x = uniform({2, 3, 4, 4}, rng, true);
                     ParameterList<T> p{{"x", x, true}};
                     head.collect("fine", p);
                     return finite_difference_check([&] { return project(head.forward(x, true), s); }, trainable(p),
                                                    options(s, 8));
                 }});
    c.push_back({"backbone", [](std::uint64_t s) {
                     BackboneConfig cfg;
                     cfg.channels = {2, 3, 3};
                     cfg.feature_channels = 2;
                     const auto bb = Backbone<T>::build(cfg, s);
                     Rng rng = derive_rng(s, 7);
                     const auto x = uniform({2, 3, 8, 8}, rng, true, 0.0, 1.0);
                     ParameterList<T> p{{"image", x, true}};
                     bb.collect("backbone", p);
                     return finite_difference_check(
                         [&] {
                             const auto o = bb.forward(x, true);
                             return add(project(o.features, s), project(o.logits, s + 1));
                         },
                         trainable(p), options(s, 6));
                 }});
    c.push_back({"zian_forward", [](std::uint64_t s) {
                     // C = 2 features; the coarse and ROI networks both see 16 x 16
                     // inputs. Every branch is enabled.
                     ModelConfig cfg;
                     cfg.apply_ablation(Ablation::Full);
                     cfg.backbone.channels = {2, 2, 2};
                     cfg.backbone.feature_channels = 2;
                     cfg.attention.model_dim = 4;
                     cfg.attention.heads = 2;
                     cfg.attention.inducing_tokens = 2;
                     cfg.attention.co_attention_resample = 2;
                     cfg.input_side = 64;
                     cfg.roi.base_side = 16;
                     cfg.roi.fine_input_side = 16;
                     const auto model = ZianModel<T>::build(cfg, s);
                     Rng rng = derive_rng(s, 8);
                     const auto x = uniform({2, 3, 64, 64}, rng, false, 0.0, 1.0);
                     std::uniform_real_distribution<double> pos(4.0, 59.0);
                     const std::vector<Point> centers{{std::round(pos(rng)), std::round(pos(rng))},
                                                      {std::round(pos(rng)), std::round(pos(rng))}};
                     const std::vector<Point> landmarks{{pos(rng), pos(rng)}, {pos(rng), pos(rng)}};
                     return finite_difference_check(
                         [&] { return zian_loss(model.forward(x, true, &centers), landmarks, cfg.loss, cfg.delta).total; },
                         trainable(model.parameters()), options(s, 2));
                 }});
    return c;
}

}  // namespace

const std::vector<GradCheckCase>& gradcheck_cases() {
    static const std::vector<GradCheckCase> cases = build_cases();
    return cases;
}

const GradCheckCase& find_gradcheck_case(const std::string& name) {
    std::string known;
    for (const auto& c : gradcheck_cases()) {
        if (c.name == name)
            return c;
        known += (known.empty() ? "" : ", ") + c.name;
    }
    throw std::invalid_argument("unknown gradcheck op '" + name + "'; known: " + known);
}

GradCheckSummary run_gradcheck_case(const GradCheckCase& c, int seeds, double tolerance) {
    GradCheckSummary s;
    s.name = c.name;
    s.seeds = seeds;
    const auto t0 = std::chrono::steady_clock::now();
    for (int i = 0; i < seeds; ++i) {
        const auto seed = static_cast<std::uint64_t>(i);
        const auto r = c.run(seed);
        s.checked += r.checked;
        s.skipped_nonsmooth += r.skipped_nonsmooth;
        if (!r.passed(tolerance))
            ++s.failed_seeds;
        if (r.max_rel_error > s.max_rel_error || i == 0) {
            s.max_rel_error = r.max_rel_error;
            s.worst_seed = seed;
            s.worst_input = r.worst_input;
        }
    }
    s.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return s;
}

}  // namespace zian
